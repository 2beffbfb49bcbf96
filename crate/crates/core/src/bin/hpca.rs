use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hpca::export::{write_model_dir, ModelExport};
use hpca::model::HpcaModel;
use hpca::panel::{correlation, load_panel, standardize, write_panel, Delimiter, PanelFormat, StandardizedPanel};
use hpca::report::build_comparison;
use hpca::rmt::{self, DEFAULT_GRID};
use hpca::sector::{load_sector_map, SectorPartition};
use hpca::synth::{generate, sector_map_rows, MarketSpec};
use hpca::{sym_eig_sorted, Error, Result};

#[derive(Parser)]
#[command(name = "hpca", version, about = "Hierarchical PCA factor models and residual diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit sector models and the HPCA model, and export them.
    Fit {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        sectors: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Include the dense n x n HPCA matrix in the export.
        #[arg(long)]
        dense: bool,
        /// Number of leading eigenvectors written to eigenvectors.csv.
        #[arg(long, default_value_t = 10)]
        eigenvectors: usize,
    },
    /// Print the labeled HPCA eigenvalue table of an exported model.
    Spectrum {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 25)]
        top: usize,
    },
    /// Compare PCA and HPCA spectra and eigenvectors.
    Compare {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        sectors: PathBuf,
        #[arg(long, default_value_t = 25)]
        top: usize,
        /// Write report.json, top_eigenvalues.csv, spectra.csv and summary.txt here
        /// instead of printing JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Residual spectrum after removing the top m eigenportfolios, with the MP overlay.
    Residuals {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        sectors: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Number of eigenportfolios removed; defaults to the count above the MP edge.
        #[arg(long)]
        m: Option<usize>,
        /// Number of MP density samples (bins + 1).
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        /// Write report.json, residual_eigenvalues.csv, histogram.csv and mp_density.csv here
        /// instead of printing JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a synthetic panel from a JSON market spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the matching `asset,sector` map.
        #[arg(long)]
        sectors_out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Pca,
    Hpca,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn load_inputs(panel: &Path, sectors: &Path) -> Result<(StandardizedPanel, SectorPartition)> {
    let loaded = load_panel(open(panel)?, PanelFormat { delimiter: Delimiter::from_path(panel) })?;
    if loaded.dropped_rows > 0 {
        eprintln!("dropped {} incomplete rows", loaded.dropped_rows);
    }
    let std = standardize(&loaded.panel)?;
    let partition = load_sector_map(open(sectors)?, std.assets(), Delimiter::from_path(sectors))?;
    Ok((std, partition))
}

fn write_string(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { panel, sectors, out, dense, eigenvectors } => {
            let (std, partition) = load_inputs(&panel, &sectors)?;
            let model = HpcaModel::fit(&std, &partition)?;
            let spectrum = model.spectrum()?;
            write_model_dir(&out, &model, &spectrum, std.n_obs(), dense, eigenvectors)?;
            eprintln!(
                "fitted {} assets in {} sectors over {} observations -> {}",
                model.n_assets(),
                model.n_sectors(),
                std.n_obs(),
                out.display()
            );
        }
        Command::Spectrum { model, top } => {
            let export = ModelExport::read(&model)?;
            print!("{}", export.spectrum_table(top));
        }
        Command::Compare { panel, sectors, top, out } => {
            let (std, partition) = load_inputs(&panel, &sectors)?;
            let pca = sym_eig_sorted(correlation(&std).values().view())?;
            let model = HpcaModel::fit(&std, &partition)?;
            let hpca = model.spectrum()?;
            let report = build_comparison(std.assets(), &pca, &model, &hpca, top)?;
            match out {
                None => println!("{}", report.to_json()?),
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                    write_string(&dir.join("report.json"), &(report.to_json()? + "\n"))?;
                    report.write_top_table(create(&dir.join("top_eigenvalues.csv"))?)?;
                    report.write_spectra_table(create(&dir.join("spectra.csv"))?)?;
                    write_string(&dir.join("summary.txt"), &report.summary())?;
                    print!("{}", report.summary());
                }
            }
        }
        Command::Residuals { panel, sectors, method, m, grid, out } => {
            let (std, partition) = load_inputs(&panel, &sectors)?;
            let (n, t) = (std.n_assets(), std.n_obs());
            let mp = rmt::mp_density(n, t, grid)?;
            let residuals = match method {
                Method::Pca => {
                    let pca = sym_eig_sorted(correlation(&std).values().view())?;
                    let m = m.unwrap_or_else(|| rmt::count_above(pca.values.iter().copied(), mp.lambda_plus));
                    rmt::pca_residuals(&std, &pca, m)?
                }
                Method::Hpca => {
                    let model = HpcaModel::fit(&std, &partition)?;
                    let spectrum = model.spectrum()?;
                    let m = m.unwrap_or_else(|| rmt::count_above(spectrum.values(), mp.lambda_plus));
                    rmt::hpca_residuals(&std, &spectrum, m)?
                }
            };
            let report = rmt::residual_spectrum(&residuals, &mp)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Input(e.to_string()))?;
            match out {
                None => println!("{json}"),
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                    write_string(&dir.join("report.json"), &(json + "\n"))?;
                    write_residual_tables(&dir, &report)?;
                    println!(
                        "m = {}  leading residual eigenvalue {:.4}  (avg corr ~ {:.4})  above MP edge {:.4}: {}",
                        report.m,
                        report.leading_eigenvalue,
                        report.approx_average_correlation,
                        mp.lambda_plus,
                        report.count_above_plus
                    );
                }
            }
        }
        Command::Simulate { spec, seed, out, sectors_out } => {
            let mut spec: MarketSpec =
                serde_json::from_reader(open(&spec)?).map_err(|e| Error::Input(format!("{}: {e}", spec.display())))?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let market = generate(&spec)?;
            let mut w = create(&out)?;
            write_panel(&market.panel, &mut w, Delimiter::from_path(&out))?;
            w.flush().map_err(io_err(&out))?;
            if let Some(path) = sectors_out {
                let mut w = csv::Writer::from_writer(create(&path)?);
                let rows = std::iter::once(("asset".to_owned(), "sector".to_owned())).chain(sector_map_rows(&market));
                for (a, s) in rows {
                    w.write_record([a, s]).map_err(|e| Error::Input(e.to_string()))?;
                }
                w.flush().map_err(io_err(&path))?;
            }
            eprintln!("wrote {} x {} panel to {}", market.panel.n_obs(), market.panel.n_assets(), out.display());
        }
    }
    Ok(())
}

fn write_residual_tables(dir: &Path, report: &rmt::ResidualReport) -> Result<()> {
    let mut text = String::from("rank,eigenvalue\n");
    for (k, v) in report.eigenvalues.iter().enumerate() {
        text.push_str(&format!("{},{v:?}\n", k + 1));
    }
    write_string(&dir.join("residual_eigenvalues.csv"), &text)?;

    let h = &report.histogram;
    let density = h.density();
    let mut text = String::from("bin_start,bin_end,count,density\n");
    for (i, e) in h.edges.windows(2).enumerate() {
        text.push_str(&format!("{:?},{:?},{},{:?}\n", e[0], e[1], h.counts[i], density[i]));
    }
    text.push_str(&format!("below,{:?},{},\n", h.edges[0], h.below));
    text.push_str(&format!("above,{:?},{},\n", h.edges[h.edges.len() - 1], h.above));
    write_string(&dir.join("histogram.csv"), &text)?;

    let mut text = String::from("lambda,density\n");
    for (x, d) in report.mp.grid.iter().zip(&report.mp.density) {
        text.push_str(&format!("{x:?},{d:?}\n"));
    }
    write_string(&dir.join("mp_density.csv"), &text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
