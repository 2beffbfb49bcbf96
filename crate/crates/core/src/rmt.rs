//! Residual diagnostics against the Marchenko-Pastur law.
//!
//! Returns are regressed on a set of factor series ("defactoring"), the
//! residuals are re-standardized, and the spectrum of their correlation
//! matrix is compared with the Marchenko-Pastur density for the ratio
//! `γ = n / T`, whose support is `[(1 - sqrt γ)^2, (1 + sqrt γ)^2]`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{sym_eig_sorted, EigenError, Spectrum};
use crate::model::LabeledSpectrum;
use crate::panel::{gram_correlation, standardize_column, StandardizedPanel};
use crate::sector::eigenportfolio_series;

#[derive(Debug, Error)]
pub enum RmtError {
    #[error("aspect ratio n/T = {0} exceeds 1; rank-deficient case is not supported")]
    RatioAboveOne(f64),

    #[error("need n >= 1 and T >= 1, got n = {n}, T = {t}")]
    BadDimensions { n: usize, t: usize },

    #[error("density grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),

    #[error("factor column {0} is linearly dependent on the preceding columns")]
    RankDeficient(usize),

    #[error("factor matrix has {factors} rows but the panel has {panel}")]
    LengthMismatch { factors: usize, panel: usize },

    #[error("requested {requested} factors but only {available} eigenpairs exist")]
    TooManyFactors { requested: usize, available: usize },

    #[error("eigenportfolio {0} has non-positive eigenvalue {1}")]
    NonPositiveEigenvalue(usize, f64),

    #[error("no non-degenerate residual columns")]
    NoResiduals,

    #[error(transparent)]
    Eigen(#[from] EigenError),
}

const DEPENDENCE_TOL: f64 = 1e-10;

/// Upper edge `(1 + sqrt(n/T))^2` of the Marchenko-Pastur support.
pub fn mp_threshold(n: usize, t: usize) -> f64 {
    let g = (n as f64 / t as f64).sqrt();
    (1.0 + g) * (1.0 + g)
}

/// Lower edge `(1 - sqrt(n/T))^2`.
pub fn mp_lower(n: usize, t: usize) -> f64 {
    let g = (n as f64 / t as f64).sqrt();
    (1.0 - g) * (1.0 - g)
}

/// Marchenko-Pastur reference: support edges and density sampled on a uniform grid.
///
/// The grid points double as histogram bin edges, so a histogram built with
/// [`histogram`] lines up with the density samples exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpReference {
    pub n: usize,
    pub t: usize,
    pub gamma: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl MpReference {
    pub fn bin_width(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Density at an arbitrary point; zero outside the support.
    pub fn density_at(&self, lambda: f64) -> f64 {
        mp_pdf(lambda, self.gamma, self.lambda_minus, self.lambda_plus)
    }
}

fn mp_pdf(lambda: f64, gamma: f64, lo: f64, hi: f64) -> f64 {
    if lambda <= lo || lambda >= hi || lambda <= 0.0 {
        return 0.0;
    }
    ((hi - lambda) * (lambda - lo)).sqrt() / (2.0 * PI * gamma * lambda)
}

/// Default number of density samples: 51 points, i.e. 50 bins across the support.
pub const DEFAULT_GRID: usize = 51;

pub fn mp_density(n: usize, t: usize, grid_size: usize) -> Result<MpReference, RmtError> {
    if n == 0 || t == 0 {
        return Err(RmtError::BadDimensions { n, t });
    }
    if grid_size < 2 {
        return Err(RmtError::GridTooSmall(grid_size));
    }
    let gamma = n as f64 / t as f64;
    if gamma > 1.0 {
        return Err(RmtError::RatioAboveOne(gamma));
    }
    let lambda_plus = mp_threshold(n, t);
    let lambda_minus = mp_lower(n, t);
    let width = (lambda_plus - lambda_minus) / (grid_size - 1) as f64;
    let mut grid: Vec<f64> = (0..grid_size).map(|i| lambda_minus + width * i as f64).collect();
    grid[grid_size - 1] = lambda_plus;
    let density = grid.iter().map(|&x| mp_pdf(x, gamma, lambda_minus, lambda_plus)).collect();
    Ok(MpReference { n, t, gamma, lambda_plus, lambda_minus, grid, density })
}

/// Counts of values per grid bin plus the values falling outside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin edges; bin `i` is `[edges[i], edges[i+1])`, the last bin is closed.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub below: usize,
    pub above: usize,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.below + self.above
    }

    /// Fraction of values that landed inside the grid.
    pub fn inside_fraction(&self) -> f64 {
        self.counts.iter().sum::<usize>() as f64 / self.total().max(1) as f64
    }

    /// Counts normalized to a density (integrates to the inside fraction).
    pub fn density(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, e)| c as f64 / (total * (e[1] - e[0])))
            .collect()
    }
}

pub fn histogram(values: &[f64], edges: &[f64]) -> Histogram {
    let bins = edges.len().saturating_sub(1);
    let mut counts = vec![0usize; bins];
    let (mut below, mut above) = (0, 0);
    let (lo, hi) = (edges[0], edges[edges.len() - 1]);
    for &v in values {
        if v < lo {
            below += 1;
        } else if v > hi {
            above += 1;
        } else {
            // edges are sorted; partition_point gives the first edge > v
            let idx = edges.partition_point(|&e| e <= v).saturating_sub(1).min(bins - 1);
            counts[idx] += 1;
        }
    }
    Histogram { edges: edges.to_vec(), counts, below, above }
}

/// Where the factors used for defactoring came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorSource {
    Pca,
    Hpca,
    Custom,
}

/// Re-standardized least-squares residuals of every asset on a factor set.
#[derive(Debug, Clone)]
pub struct ResidualPanel {
    pub assets: Vec<String>,
    /// `T x n`; degenerate columns are all zero.
    pub values: Array2<f64>,
    /// Assets whose residual vanished (the asset lies in the factor span).
    pub degenerate: Vec<usize>,
    pub source: FactorSource,
    pub m: usize,
}

impl ResidualPanel {
    /// Standardized residuals of the non-degenerate assets.
    pub fn active_values(&self) -> Array2<f64> {
        let keep: Vec<usize> = (0..self.values.ncols()).filter(|j| !self.degenerate.contains(j)).collect();
        self.values.select(Axis(1), &keep)
    }

    pub fn n_active(&self) -> usize {
        self.values.ncols() - self.degenerate.len()
    }
}

/// Orthonormal basis of the centered factor columns (modified Gram-Schmidt, two passes).
fn factor_basis(factors: &Array2<f64>) -> Result<Vec<Array1<f64>>, RmtError> {
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(factors.ncols());
    for (k, col) in factors.columns().into_iter().enumerate() {
        let mean = col.sum() / col.len() as f64;
        let mut v = col.mapv(|x| x - mean);
        let norm0 = v.dot(&v).sqrt();
        if !(norm0 > 0.0) {
            return Err(RmtError::RankDeficient(k));
        }
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.scaled_add(-c, q);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm <= DEPENDENCE_TOL * norm0 {
            return Err(RmtError::RankDeficient(k));
        }
        v /= norm;
        basis.push(v);
    }
    Ok(basis)
}

fn project_out(mut x: ndarray::ArrayViewMut1<'_, f64>, basis: &[Array1<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&x);
            x.scaled_add(-c, q);
        }
    }
}

/// Residuals of each panel column on all factor columns, re-standardized.
///
/// Factors are centered first, so residuals have zero sample correlation with
/// every factor. An asset whose residual norm falls below `1e-10` of its
/// original norm is flagged degenerate and zeroed.
pub fn defactor(panel: &StandardizedPanel, factors: &Array2<f64>) -> Result<ResidualPanel, RmtError> {
    defactor_with_source(panel, factors, FactorSource::Custom)
}

fn defactor_with_source(
    panel: &StandardizedPanel,
    factors: &Array2<f64>,
    source: FactorSource,
) -> Result<ResidualPanel, RmtError> {
    if factors.ncols() > 0 && factors.nrows() != panel.n_obs() {
        return Err(RmtError::LengthMismatch { factors: factors.nrows(), panel: panel.n_obs() });
    }
    let basis = factor_basis(factors)?;
    let mut values = panel.values().clone();
    let degenerate: Vec<bool> = values
        .axis_iter_mut(Axis(1))
        .into_par_iter()
        .map(|mut col| {
            let norm0 = col.dot(&col).sqrt();
            project_out(col.view_mut(), &basis);
            let norm = col.dot(&col).sqrt();
            if norm <= DEPENDENCE_TOL * norm0 || !standardize_column(col.view_mut()) {
                col.fill(0.0);
                true
            } else {
                false
            }
        })
        .collect();
    let degenerate: Vec<usize> = degenerate.iter().enumerate().filter(|(_, d)| **d).map(|(j, _)| j).collect();
    if !degenerate.is_empty() {
        log::warn!("{} assets have vanishing residuals after defactoring", degenerate.len());
    }
    Ok(ResidualPanel { assets: panel.assets().to_vec(), values, degenerate, source, m: factors.ncols() })
}

/// Eigenportfolio series of the top `m` eigenpairs of a correlation spectrum.
pub fn pca_factors(panel: &StandardizedPanel, spectrum: &Spectrum, m: usize) -> Result<Array2<f64>, RmtError> {
    let pairs = (0..spectrum.len().min(m)).map(|k| (spectrum.values[k], spectrum.vector(k)));
    eigenportfolio_factors(panel, pairs, m, spectrum.len())
}

/// Eigenportfolio series of the top `m` HPCA eigenvectors.
pub fn hpca_factors(panel: &StandardizedPanel, spectrum: &LabeledSpectrum, m: usize) -> Result<Array2<f64>, RmtError> {
    let pairs = spectrum.entries.iter().take(m).map(|e| (e.value, e.vector.view()));
    eigenportfolio_factors(panel, pairs, m, spectrum.len())
}

fn eigenportfolio_factors<'a>(
    panel: &StandardizedPanel,
    pairs: impl Iterator<Item = (f64, ArrayView1<'a, f64>)>,
    m: usize,
    available: usize,
) -> Result<Array2<f64>, RmtError> {
    if m > available {
        return Err(RmtError::TooManyFactors { requested: m, available });
    }
    let all: Vec<usize> = (0..panel.n_assets()).collect();
    let mut out = Array2::zeros((panel.n_obs(), m));
    for (k, (value, vector)) in pairs.enumerate() {
        if !(value > 0.0) {
            return Err(RmtError::NonPositiveEigenvalue(k + 1, value));
        }
        out.column_mut(k).assign(&eigenportfolio_series(panel, &all, vector, value));
    }
    Ok(out)
}

/// Defactor against the top `m` PCA eigenportfolios.
pub fn pca_residuals(panel: &StandardizedPanel, spectrum: &Spectrum, m: usize) -> Result<ResidualPanel, RmtError> {
    let factors = pca_factors(panel, spectrum, m)?;
    defactor_with_source(panel, &factors, FactorSource::Pca)
}

/// Defactor against the top `m` HPCA eigenportfolios.
pub fn hpca_residuals(panel: &StandardizedPanel, spectrum: &LabeledSpectrum, m: usize) -> Result<ResidualPanel, RmtError> {
    let factors = hpca_factors(panel, spectrum, m)?;
    defactor_with_source(panel, &factors, FactorSource::Hpca)
}

/// Number of eigenvalues strictly above `threshold`; the default cutoff `m`.
pub fn count_above(eigenvalues: impl IntoIterator<Item = f64>, threshold: f64) -> usize {
    eigenvalues.into_iter().filter(|&v| v > threshold).count()
}

/// Spectrum of the residual correlation matrix compared with the MP reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub source: FactorSource,
    pub m: usize,
    pub n_active: usize,
    pub degenerate: usize,
    pub eigenvalues: Vec<f64>,
    pub histogram: Histogram,
    pub count_above_plus: usize,
    pub fraction_above_plus: f64,
    pub leading_eigenvalue: f64,
    /// Leading eigenvalue divided by the number of assets.
    pub approx_average_correlation: f64,
    pub mean_offdiag_correlation: f64,
    pub mp: MpReference,
}

pub fn residual_spectrum(residuals: &ResidualPanel, reference: &MpReference) -> Result<ResidualReport, RmtError> {
    let active = residuals.active_values();
    let n = active.ncols();
    if n == 0 {
        return Err(RmtError::NoResiduals);
    }
    let corr = gram_correlation(&active);
    let spectrum = sym_eig_sorted(corr.view())?;
    let eigenvalues = spectrum.values.to_vec();
    let hist = histogram(&eigenvalues, &reference.grid);
    let count_above_plus = count_above(eigenvalues.iter().copied(), reference.lambda_plus);
    let off_sum: f64 = corr.sum() - n as f64;
    let mean_offdiag_correlation = if n > 1 { off_sum / (n * (n - 1)) as f64 } else { 0.0 };
    let leading = eigenvalues[0];
    Ok(ResidualReport {
        source: residuals.source,
        m: residuals.m,
        n_active: n,
        degenerate: residuals.degenerate.len(),
        count_above_plus,
        fraction_above_plus: count_above_plus as f64 / n as f64,
        leading_eigenvalue: leading,
        approx_average_correlation: leading / n as f64,
        mean_offdiag_correlation,
        histogram: hist,
        eigenvalues,
        mp: reference.clone(),
    })
}
