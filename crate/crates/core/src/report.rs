//! PCA versus HPCA comparison tables.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::Spectrum;
use crate::model::{compare_eigenvectors, cumulative_variance, EigenLabel, EigenvectorComparison, HpcaModel, LabeledSpectrum, ModelError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("asset universes differ: {0}")]
    UniverseMismatch(String),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// 1-based rank.
    pub rank: usize,
    pub pca: f64,
    pub hpca: f64,
    pub label: EigenLabel,
    /// "Multi-sector" or the sector label.
    pub interpretation: String,
    pub eigenvector: EigenvectorComparison,
}

/// Smallest eigenvalues of both matrices and of the sector sub-spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub pca_min: f64,
    pub hpca_min: f64,
    pub sector_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub sectors: usize,
    pub top_k: usize,
    pub rows: Vec<ComparisonRow>,
    pub pca_eigenvalues: Vec<f64>,
    pub hpca_eigenvalues: Vec<f64>,
    pub hpca_labels: Vec<String>,
    pub cumulative_pca: Vec<f64>,
    pub cumulative_hpca: Vec<f64>,
    /// `(λ1_pca - μ1) / n`.
    pub rank1_explanatory_delta: f64,
    pub conditioning: Conditioning,
}

/// Side-by-side PCA and HPCA spectra over the same assets.
///
/// `pca_assets` names the rows of the PCA eigenvectors and must equal the
/// model's asset list.
pub fn build_comparison(
    pca_assets: &[String],
    pca: &Spectrum,
    model: &HpcaModel,
    hpca: &LabeledSpectrum,
    top_k: usize,
) -> Result<ComparisonReport, ReportError> {
    let n = model.n_assets();
    if pca_assets != model.assets.as_slice() {
        let first = pca_assets.iter().zip(&model.assets).position(|(a, b)| a != b);
        return Err(ReportError::UniverseMismatch(match first {
            Some(i) => format!("asset {i} is `{}` vs `{}`", pca_assets[i], model.assets[i]),
            None => format!("{} vs {} assets", pca_assets.len(), model.assets.len()),
        }));
    }
    if pca.len() != n || hpca.len() != n {
        return Err(ReportError::UniverseMismatch(format!(
            "spectra of length {} and {} for {n} assets",
            pca.len(),
            hpca.len()
        )));
    }
    let top_k = top_k.min(n);
    let rows = (0..top_k)
        .map(|r| {
            let e = &hpca.entries[r];
            Ok(ComparisonRow {
                rank: r + 1,
                pca: pca.values[r],
                hpca: e.value,
                label: e.label,
                interpretation: e.label.describe(&model.partition),
                eigenvector: compare_eigenvectors(pca.vector(r), e.vector.view())?,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let pca_eigenvalues = pca.values.to_vec();
    let hpca_eigenvalues = hpca.values();
    let conditioning = Conditioning {
        pca_min: pca_eigenvalues[n - 1],
        hpca_min: hpca_eigenvalues[n - 1],
        sector_min: model.min_sector_eigenvalue(),
    };
    Ok(ComparisonReport {
        n,
        sectors: model.n_sectors(),
        top_k,
        rows,
        cumulative_pca: cumulative_variance(&pca_eigenvalues, n),
        cumulative_hpca: cumulative_variance(&hpca_eigenvalues, n),
        rank1_explanatory_delta: (pca_eigenvalues[0] - hpca_eigenvalues[0]) / n as f64,
        hpca_labels: hpca.entries.iter().map(|e| e.label.describe(&model.partition)).collect(),
        pca_eigenvalues,
        hpca_eigenvalues,
        conditioning,
    })
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rank, both eigenvalues, interpretation and eigenvector statistics.
    pub fn write_top_table<W: Write>(&self, sink: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "rank",
            "pca",
            "hpca",
            "eigenportfolio",
            "rms_distance",
            "mean_difference",
            "mean_abs_entry",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.rank.to_string(),
                num(r.pca),
                num(r.hpca),
                r.interpretation.clone(),
                num(r.eigenvector.rms_distance),
                num(r.eigenvector.mean_difference),
                num(r.eigenvector.mean_abs_entry),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Every rank with both spectra and cumulative variance curves.
    pub fn write_spectra_table<W: Write>(&self, sink: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["rank", "pca", "hpca", "hpca_label", "cumulative_pca", "cumulative_hpca"])?;
        for k in 0..self.n {
            w.write_record([
                (k + 1).to_string(),
                num(self.pca_eigenvalues[k]),
                num(self.hpca_eigenvalues[k]),
                self.hpca_labels[k].clone(),
                num(self.cumulative_pca[k]),
                num(self.cumulative_hpca[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Short plain-text summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "assets: {}  sectors: {}", self.n, self.sectors);
        let _ = writeln!(s, "{:>5}  {:>12}  {:>12}  {:<28} {:>10}", "rank", "PCA", "HPCA", "eigenportfolio", "rms dist");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>5}  {:>12.4}  {:>12.4}  {:<28} {:>10.3e}",
                r.rank, r.pca, r.hpca, r.interpretation, r.eigenvector.rms_distance
            );
        }
        let _ = writeln!(s, "rank-1 explanatory delta (λ1 - μ1)/n: {:.4}%", 100.0 * self.rank1_explanatory_delta);
        let c = &self.conditioning;
        let _ = writeln!(
            s,
            "smallest eigenvalue: PCA {:.6e}, HPCA {:.6e}, sector spectra {:.6e}",
            c.pca_min, c.hpca_min, c.sector_min
        );
        s
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub(crate) fn num(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::sym_eig_sorted;
    use crate::panel::{correlation, standardize, ReturnsPanel};
    use crate::sector::SectorPartition;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn fixture(sizes: &[usize]) -> (Vec<String>, Spectrum, HpcaModel) {
        let n: usize = sizes.iter().sum();
        let t = 60;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let common: Vec<f64> = (0..t).map(|_| StandardNormal.sample(&mut rng)).collect();
        let values = Array2::from_shape_fn((t, n), |(i, _)| {
            common[i] + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let raw = ReturnsPanel::new(
            (0..t).map(|i| format!("d{i}")).collect(),
            (0..n).map(|j| format!("a{j}")).collect(),
            values,
        )
        .unwrap();
        let std = standardize(&raw).unwrap();
        let corr = correlation(&std);
        let pca = sym_eig_sorted(corr.values().view()).unwrap();
        let model = HpcaModel::fit(&std, &SectorPartition::contiguous(sizes).unwrap()).unwrap();
        (std.assets().to_vec(), pca, model)
    }

    #[test]
    fn single_sector_has_zero_deltas() {
        let (assets, pca, model) = fixture(&[6]);
        let hpca = model.spectrum().unwrap();
        let report = build_comparison(&assets, &pca, &model, &hpca, 4).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert_eq!(report.rank1_explanatory_delta, 0.0);
        for r in &report.rows {
            assert_eq!(r.pca, r.hpca);
            assert!(r.eigenvector.rms_distance < 1e-12);
        }
        assert_eq!(report.rows[0].interpretation, "Multi-sector");
        assert_eq!(report.rows[1].interpretation, "S1");
    }

    #[test]
    fn sums_and_determinism() {
        let (assets, pca, model) = fixture(&[3, 4, 1]);
        let hpca = model.spectrum().unwrap();
        let a = build_comparison(&assets, &pca, &model, &hpca, 5).unwrap();
        let b = build_comparison(&assets, &pca, &model, &hpca, 5).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!((a.pca_eigenvalues.iter().sum::<f64>() - 8.0).abs() < 1e-6);
        assert!((a.hpca_eigenvalues.iter().sum::<f64>() - 8.0).abs() < 1e-6);
        assert!((a.cumulative_hpca[7] - 1.0).abs() < 1e-6);

        let mut table = Vec::new();
        a.write_top_table(&mut table).unwrap();
        assert_eq!(String::from_utf8(table).unwrap().lines().count(), 6);
    }

    #[test]
    fn universe_mismatch() {
        let (mut assets, pca, model) = fixture(&[2, 2]);
        let hpca = model.spectrum().unwrap();
        assets[1] = "other".into();
        assert!(matches!(
            build_comparison(&assets, &pca, &model, &hpca, 2),
            Err(ReportError::UniverseMismatch(_))
        ));
    }

    #[test]
    fn explanatory_delta_formula() {
        // the published top eigenvalue pair over 434 names
        let delta: f64 = (138.87 - 137.19) / 434.0;
        assert!((100.0 * delta - 0.39).abs() < 0.005);
    }
}
