//! Model export: a JSON document plus an eigenvector table.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::model::{EigenLabel, HpcaModel, LabeledSpectrum};
use crate::report::{num, ReportError};

pub const MODEL_FILE: &str = "model.json";
pub const EIGENVECTOR_FILE: &str = "eigenvectors.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorExport {
    pub label: String,
    pub assets: Vec<String>,
    /// Sector eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Sector eigenvectors, one inner vector per eigenvalue.
    pub eigenvectors: Vec<Vec<f64>>,
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub rank: usize,
    pub eigenvalue: f64,
    pub label: EigenLabel,
    pub interpretation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub n_assets: usize,
    pub n_obs: usize,
    pub assets: Vec<String>,
    pub sectors: Vec<SectorExport>,
    /// Factor correlation `ρ̄`, row-major.
    pub rho: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    /// Eigenvectors of `M`, one inner vector per `μ`.
    pub alpha: Vec<Vec<f64>>,
    pub spectrum: Vec<SpectrumEntry>,
    /// Dense HPCA matrix when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn columns(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.columns().into_iter().map(|c| c.to_vec()).collect()
}

impl ModelExport {
    pub fn new(model: &HpcaModel, spectrum: &LabeledSpectrum, n_obs: usize, dense: bool) -> Self {
        let sectors = model
            .sectors
            .iter()
            .map(|s| SectorExport {
                label: model.partition.label(s.sector).to_owned(),
                assets: s.members.iter().map(|&j| model.assets[j].clone()).collect(),
                eigenvalues: s.spectrum.values.to_vec(),
                eigenvectors: columns(&s.spectrum.vectors),
                betas: s.betas.to_vec(),
            })
            .collect();
        ModelExport {
            n_assets: model.n_assets(),
            n_obs,
            assets: model.assets.clone(),
            sectors,
            rho: rows(&model.rho.values),
            m: rows(&model.m.values),
            mu: model.m.spectrum.values.to_vec(),
            alpha: columns(&model.m.spectrum.vectors),
            spectrum: spectrum
                .entries
                .iter()
                .enumerate()
                .map(|(r, e)| SpectrumEntry {
                    rank: r + 1,
                    eigenvalue: e.value,
                    label: e.label,
                    interpretation: e.label.describe(&model.partition),
                })
                .collect(),
            matrix: dense.then(|| rows(&model.matrix)),
        }
    }

    pub fn read(dir: &Path) -> Result<Self, ReportError> {
        let file = File::open(dir.join(MODEL_FILE))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    /// Ranked table of the labeled spectrum (first `top` rows).
    pub fn spectrum_table(&self, top: usize) -> String {
        let mut out = String::from("rank,eigenvalue,eigenportfolio,label\n");
        for e in self.spectrum.iter().take(top) {
            out.push_str(&format!("{},{},{},{}\n", e.rank, num(e.eigenvalue), csv_field(&e.interpretation), e.label));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Asset column plus one column per requested eigenvector.
pub fn write_eigenvectors<W: Write>(
    sink: W,
    assets: &[String],
    spectrum: &LabeledSpectrum,
    count: usize,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(sink);
    let count = count.min(spectrum.len());
    let mut header = vec!["asset".to_owned()];
    header.extend((1..=count).map(|k| format!("ev{k}")));
    w.write_record(&header)?;
    for (j, asset) in assets.iter().enumerate() {
        let mut rec = vec![asset.clone()];
        rec.extend(spectrum.entries.iter().take(count).map(|e| num(e.vector[j])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write `model.json` and `eigenvectors.csv` into `dir`, creating it if needed.
pub fn write_model_dir(
    dir: &Path,
    model: &HpcaModel,
    spectrum: &LabeledSpectrum,
    n_obs: usize,
    dense: bool,
    eigenvectors: usize,
) -> Result<ModelExport, ReportError> {
    std::fs::create_dir_all(dir)?;
    let export = ModelExport::new(model, spectrum, n_obs, dense);
    let mut f = BufWriter::new(File::create(dir.join(MODEL_FILE))?);
    serde_json::to_writer_pretty(&mut f, &export)?;
    f.write_all(b"\n")?;
    f.flush()?;
    let ev = BufWriter::new(File::create(dir.join(EIGENVECTOR_FILE))?);
    write_eigenvectors(ev, &model.assets, spectrum, eigenvectors)?;
    Ok(export)
}
