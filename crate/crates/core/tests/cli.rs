use std::path::Path;
use std::process::{Command, Output};

use hpca::export::ModelExport;
use hpca::panel::{load_panel, PanelFormat};

fn hpca(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hpca")).args(args).current_dir(dir).output().unwrap()
}

const SPEC: &str = r#"{
  "sectors": [
    {"label": "Energy", "size": 6, "intra": {"equicorrelation": 0.5}},
    {"label": "Tech", "size": 8, "intra": {"equicorrelation": 0.35}},
    {"label": "Telecom", "size": 1, "intra": {"equicorrelation": 0.0}}
  ],
  "inter_factor_correlation": [[1.0, 0.4, 0.3], [0.4, 1.0, 0.5], [0.3, 0.5, 1.0]],
  "t": 400
}"#;

fn simulated(dir: &Path) {
    std::fs::write(dir.join("spec.json"), SPEC).unwrap();
    let out = hpca(
        &["simulate", "--spec", "spec.json", "--seed", "7", "--out", "panel.csv", "--sectors-out", "sectors.csv"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_seeded_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path());
    let first = std::fs::read(dir.path().join("panel.csv")).unwrap();
    let loaded = load_panel(first.as_slice(), PanelFormat::default()).unwrap();
    assert_eq!(loaded.panel.n_obs(), 400);
    assert_eq!(loaded.panel.n_assets(), 15);
    assert_eq!(loaded.dropped_rows, 0);

    simulated(dir.path());
    assert_eq!(std::fs::read(dir.path().join("panel.csv")).unwrap(), first);

    let other = hpca(&["simulate", "--spec", "spec.json", "--seed", "8", "--out", "other.csv"], dir.path());
    assert!(other.status.success());
    assert_ne!(std::fs::read(dir.path().join("other.csv")).unwrap(), first);
}

#[test]
fn fit_then_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path());
    let out = hpca(
        &["fit", "--panel", "panel.csv", "--sectors", "sectors.csv", "--out", "model", "--dense", "--eigenvectors", "4"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let export = ModelExport::read(&dir.path().join("model")).unwrap();
    assert_eq!(export.n_assets, 15);
    assert_eq!(export.sectors.len(), 3);
    assert_eq!(export.mu.len(), 3);
    assert_eq!(export.spectrum.len(), 15);
    let total: f64 = export.spectrum.iter().map(|e| e.eigenvalue).sum();
    assert!((total - 15.0).abs() < 1e-9);
    let dense = export.matrix.as_ref().unwrap();
    assert_eq!(dense.len(), 15);
    assert_eq!(export.spectrum[0].interpretation, "Multi-sector");

    let ev = std::fs::read_to_string(dir.path().join("model/eigenvectors.csv")).unwrap();
    let header = ev.lines().next().unwrap();
    assert_eq!(header, "asset,ev1,ev2,ev3,ev4");
    assert_eq!(ev.lines().count(), 16);

    let out = hpca(&["spectrum", "--model", "model", "--top", "5"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("1,"));
    assert!(lines[1].contains("Multi-sector"));
}

#[test]
fn compare_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path());
    let out = hpca(&["compare", "--panel", "panel.csv", "--sectors", "sectors.csv", "--top", "5", "--out", "cmp"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "top_eigenvalues.csv", "spectra.csv", "summary.txt"] {
        assert!(dir.path().join("cmp").join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cmp/report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 5);
    assert_eq!(report["n"], 15);
    let spectra = std::fs::read_to_string(dir.path().join("cmp/spectra.csv")).unwrap();
    assert_eq!(spectra.lines().count(), 16);
}

#[test]
fn residuals_for_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path());
    for method in ["pca", "hpca"] {
        let out = hpca(
            &["residuals", "--panel", "panel.csv", "--sectors", "sectors.csv", "--method", method, "--m", "3"],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["m"], 3);
        assert_eq!(v["source"], method);
        assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 15);
        assert_eq!(v["histogram"]["edges"], v["mp"]["grid"]);
    }
    let out = hpca(
        &["residuals", "--panel", "panel.csv", "--sectors", "sectors.csv", "--method", "hpca", "--out", "res"],
        dir.path(),
    );
    assert!(out.status.success());
    for f in ["report.json", "residual_eigenvalues.csv", "histogram.csv", "mp_density.csv"] {
        assert!(dir.path().join("res").join(f).exists(), "{f}");
    }
    let mp = std::fs::read_to_string(dir.path().join("res/mp_density.csv")).unwrap();
    assert_eq!(mp.lines().count(), 52);
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path());
    let missing = hpca(&["compare", "--panel", "nope.csv", "--sectors", "sectors.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(1));

    std::fs::write(dir.path().join("partial.csv"), "asset,sector\nENE001,Energy\n").unwrap();
    let unmapped = hpca(&["fit", "--panel", "panel.csv", "--sectors", "partial.csv", "--out", "m"], dir.path());
    assert_eq!(unmapped.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unmapped.stderr).contains("missing from the sector map"));

    std::fs::write(dir.path().join("flat.csv"), "date,A,B\nd1,1,0.5\nd2,2,0.5\nd3,0,0.5\n").unwrap();
    std::fs::write(dir.path().join("flat_map.csv"), "asset,sector\nA,x\nB,x\n").unwrap();
    let flat = hpca(&["fit", "--panel", "flat.csv", "--sectors", "flat_map.csv", "--out", "m"], dir.path());
    assert_eq!(flat.status.code(), Some(1));

    let too_many = hpca(
        &["residuals", "--panel", "panel.csv", "--sectors", "sectors.csv", "--method", "pca", "--m", "99"],
        dir.path(),
    );
    assert_eq!(too_many.status.code(), Some(1));
}

#[test]
fn exit_code_classification() {
    use hpca::rmt::RmtError;
    assert_eq!(hpca::Error::from(RmtError::RankDeficient(2)).exit_code(), 2);
    assert_eq!(hpca::Error::from(RmtError::RatioAboveOne(2.0)).exit_code(), 1);
    assert_eq!(hpca::Error::Input("x".into()).exit_code(), 1);
}
