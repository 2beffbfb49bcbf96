//! Per-sector one-factor PCA models.
//!
//! Each sector block of the standardized panel gets its own correlation
//! matrix and spectrum. The first sector eigenportfolio
//! `F_k = (1/sqrt(λ1)) Σ_i V1_i X_i` is the sector factor and the betas
//! `β_j = sqrt(λ1) V1_j` are the regression coefficients of each member on it.

use std::collections::HashMap;
use std::io::Read;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use thiserror::Error;

use crate::eigen::{sym_eig_sorted, EigenError, Spectrum};
use crate::panel::{gram_correlation, Delimiter, StandardizedPanel};

#[derive(Debug, Error)]
pub enum SectorError {
    #[error("sector {0} does not exist")]
    UnknownSector(usize),

    #[error("sector `{0}` has no assets")]
    EmptySector(String),

    #[error("asset index {asset} assigned to sector {sector}, but only {count} sectors exist")]
    BadAssignment { asset: usize, sector: usize, count: usize },

    #[error("asset `{0}` is missing from the sector map")]
    UnmappedAsset(String),

    #[error("asset `{0}` appears more than once in the sector map")]
    DuplicateMapping(String),

    #[error("sector map must have a header with columns `asset,sector`")]
    BadHeader,

    #[error("partition covers {partition} assets but the panel has {panel}")]
    SizeMismatch { partition: usize, panel: usize },

    #[error("vector length {got} does not match sector size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("factor series lengths differ: {0} vs {1}")]
    SeriesMismatch(usize, usize),

    #[error("sector {sector} has non-positive leading eigenvalue {value}")]
    NonPositiveLeading { sector: usize, value: f64 },

    #[error(transparent)]
    Eigen(#[from] EigenError),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Assignment of each asset to exactly one sector.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorPartition {
    labels: Vec<String>,
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
    /// Optional parent group per sector, reserved for deeper hierarchies.
    parents: Vec<Option<String>>,
}

impl SectorPartition {
    /// Build from sector labels and an asset-to-sector index map.
    pub fn new(labels: Vec<String>, assignment: Vec<usize>) -> Result<Self, SectorError> {
        let b = labels.len();
        let mut members = vec![Vec::new(); b];
        for (asset, &sector) in assignment.iter().enumerate() {
            if sector >= b {
                return Err(SectorError::BadAssignment { asset, sector, count: b });
            }
            members[sector].push(asset);
        }
        if let Some(k) = members.iter().position(Vec::is_empty) {
            return Err(SectorError::EmptySector(labels[k].clone()));
        }
        Ok(Self { parents: vec![None; b], labels, assignment, members })
    }

    /// Sectors are numbered in order of first appearance.
    pub fn from_asset_labels<S: AsRef<str>>(sector_of_asset: &[S]) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut labels = Vec::new();
        let assignment = sector_of_asset
            .iter()
            .map(|s| {
                let s = s.as_ref();
                *index.entry(s).or_insert_with(|| {
                    labels.push(s.to_owned());
                    labels.len() - 1
                })
            })
            .collect();
        Self::new(labels, assignment).expect("every discovered sector has a member")
    }

    /// Contiguous blocks of the given sizes, labeled `S1..Sb`.
    pub fn contiguous(sizes: &[usize]) -> Result<Self, SectorError> {
        let labels = (1..=sizes.len()).map(|k| format!("S{k}")).collect();
        let assignment = sizes.iter().enumerate().flat_map(|(k, &n)| std::iter::repeat_n(k, n)).collect();
        Self::new(labels, assignment)
    }

    pub fn with_parents(mut self, parents: Vec<Option<String>>) -> Self {
        assert_eq!(parents.len(), self.labels.len(), "one parent entry per sector");
        self.parents = parents;
        self
    }

    pub fn n_sectors(&self) -> usize {
        self.labels.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assignment.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    pub fn parents(&self) -> &[Option<String>] {
        &self.parents
    }

    /// Sector index of asset `j`.
    pub fn sector_of(&self, j: usize) -> usize {
        self.assignment[j]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Asset indices of sector `k`, ascending.
    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

/// Read an `asset,sector` map and resolve it against the panel's asset list.
///
/// Map rows naming assets outside the panel are skipped with a warning;
/// panel assets absent from the map are an error. Sectors are numbered by
/// first appearance in the file.
pub fn load_sector_map<R: Read>(
    source: R,
    assets: &[String],
    delimiter: Delimiter,
) -> Result<SectorPartition, SectorError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter.byte())
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (asset_col, sector_col) = match (col("asset"), col("sector")) {
        (Some(a), Some(s)) => (a, s),
        _ => return Err(SectorError::BadHeader),
    };

    let position: HashMap<&str, usize> = assets.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let mut sector_of: Vec<Option<String>> = vec![None; assets.len()];
    let mut order: Vec<String> = Vec::new();
    let mut unknown = 0usize;
    for record in reader.records() {
        let record = record?;
        let asset = record.get(asset_col).unwrap_or_default();
        let sector = record.get(sector_col).unwrap_or_default();
        let Some(&j) = position.get(asset) else {
            unknown += 1;
            continue;
        };
        if sector_of[j].is_some() {
            return Err(SectorError::DuplicateMapping(asset.to_owned()));
        }
        if !order.iter().any(|s| s == sector) {
            order.push(sector.to_owned());
        }
        sector_of[j] = Some(sector.to_owned());
    }
    if unknown > 0 {
        log::warn!("ignored {unknown} sector-map rows for assets not in the panel");
    }
    let mut assignment = Vec::with_capacity(assets.len());
    for (j, s) in sector_of.iter().enumerate() {
        let s = s.as_ref().ok_or_else(|| SectorError::UnmappedAsset(assets[j].clone()))?;
        assignment.push(order.iter().position(|o| o == s).expect("sector recorded on insert"));
    }
    SectorPartition::new(order, assignment)
}

/// One-factor PCA model of a single sector.
#[derive(Debug, Clone)]
pub struct SectorModel {
    pub sector: usize,
    /// Global asset indices of the members, ascending.
    pub members: Vec<usize>,
    /// Empirical sector correlation matrix (`n_k x n_k`).
    pub correlation: Array2<f64>,
    pub spectrum: Spectrum,
    /// `sqrt(λ1) * V1_j` for each member.
    pub betas: Array1<f64>,
    /// First sector eigenportfolio series, length `T`.
    pub factor: Array1<f64>,
}

impl SectorModel {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn leading_eigenvalue(&self) -> f64 {
        self.spectrum.values[0]
    }

    pub fn leading_vector(&self) -> ArrayView1<'_, f64> {
        self.spectrum.vector(0)
    }
}

/// Standardized eigenportfolio return series `(1/sqrt(λ)) Σ_i v_i X_i`.
///
/// `columns` selects the panel columns that `weights` refers to.
pub fn eigenportfolio_series(
    panel: &StandardizedPanel,
    columns: &[usize],
    weights: ArrayView1<'_, f64>,
    eigenvalue: f64,
) -> Array1<f64> {
    let x = panel.values();
    let scale = 1.0 / eigenvalue.sqrt();
    Array1::from_iter(x.rows().into_iter().map(|row| {
        let s: f64 = columns.iter().zip(weights.iter()).map(|(&j, &w)| w * row[j]).sum();
        s * scale
    }))
}

/// Fit the one-factor model of sector `k`.
pub fn fit_sector(panel: &StandardizedPanel, partition: &SectorPartition, k: usize) -> Result<SectorModel, SectorError> {
    if k >= partition.n_sectors() {
        return Err(SectorError::UnknownSector(k));
    }
    if partition.n_assets() != panel.n_assets() {
        return Err(SectorError::SizeMismatch { partition: partition.n_assets(), panel: panel.n_assets() });
    }
    let members = partition.members(k).to_vec();
    let block = panel.select(&members);
    let correlation = gram_correlation(block.values());
    let spectrum = sym_eig_sorted(correlation.view())?;
    let lead = spectrum.values[0];
    if !(lead > 0.0) {
        return Err(SectorError::NonPositiveLeading { sector: k, value: lead });
    }
    let v1 = spectrum.vector(0);
    let betas = v1.mapv(|v| lead.sqrt() * v);
    let factor = eigenportfolio_series(panel, &members, v1, lead);
    Ok(SectorModel { sector: k, members, correlation, spectrum, betas, factor })
}

/// Fit every sector; fits run in parallel and come back in sector order.
pub fn fit_sectors(panel: &StandardizedPanel, partition: &SectorPartition) -> Result<Vec<SectorModel>, SectorError> {
    (0..partition.n_sectors())
        .into_par_iter()
        .map(|k| fit_sector(panel, partition, k))
        .collect()
}

/// Zero-pad a sector-level vector into `R^n`.
pub fn embed(vector: ArrayView1<'_, f64>, partition: &SectorPartition, k: usize) -> Result<Array1<f64>, SectorError> {
    if k >= partition.n_sectors() {
        return Err(SectorError::UnknownSector(k));
    }
    let members = partition.members(k);
    if vector.len() != members.len() {
        return Err(SectorError::LengthMismatch { expected: members.len(), got: vector.len() });
    }
    let mut out = Array1::zeros(partition.n_assets());
    for (&j, &v) in members.iter().zip(vector.iter()) {
        out[j] = v;
    }
    Ok(out)
}

/// `T x b` matrix whose column `k` is the factor series of sector `k`.
pub fn factor_panel(models: &[SectorModel]) -> Result<Array2<f64>, SectorError> {
    let t = models.first().map_or(0, |m| m.factor.len());
    let mut out = Array2::zeros((t, models.len()));
    for (k, m) in models.iter().enumerate() {
        if m.factor.len() != t {
            return Err(SectorError::SeriesMismatch(t, m.factor.len()));
        }
        out.column_mut(k).assign(&m.factor);
    }
    Ok(out)
}
