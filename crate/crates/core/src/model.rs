//! The hierarchical correlation matrix and its closed-form spectrum.
//!
//! Within a sector block the HPCA matrix keeps the empirical correlations.
//! Across blocks it is `β_i β_j ρ̄(I(i), I(j))`, where `ρ̄` is the
//! correlation of the sector factors. Its eigenpairs are available without
//! a dense `n x n` solve:
//!
//! * the `b`-dimensional span of the embedded first sector eigenvectors is
//!   invariant; on it the matrix acts like `M(k, k') = sqrt(λ1_k) sqrt(λ1_k') ρ̄(k, k')`,
//!   so each eigenpair `(μ, α)` of `M` gives the eigenvector `Σ_p α_p W1_p`;
//! * every higher-order sector eigenpair `(λ_j,k, W_j,k)`, `j >= 2`, embedded by
//!   zero padding, is an eigenpair as is.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{apply_sign_convention, sym_eig_sorted, EigenError, Spectrum};
use crate::panel::{mean_std, StandardizedPanel};
use crate::sector::{embed, factor_panel, fit_sectors, SectorError, SectorModel, SectorPartition};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("factor column {0} has zero variance")]
    ZeroVarianceFactor(usize),

    #[error("need at least one sector factor and two observations, got {t}x{b}")]
    EmptyFactors { t: usize, b: usize },

    #[error("sector {sector} has non-positive leading eigenvalue {value}")]
    NonPositiveLeading { sector: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Sector(#[from] SectorError),

    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// `b x b` correlation matrix of the sector factor series.
#[derive(Debug, Clone, PartialEq)]
pub struct InterSectorCorrelation {
    pub values: Array2<f64>,
}

impl InterSectorCorrelation {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
}

/// Empirical correlation of the factor columns, with an exact unit diagonal.
pub fn inter_sector_corr(factors: &Array2<f64>) -> Result<InterSectorCorrelation, ModelError> {
    let (t, b) = factors.dim();
    if b == 0 || t < 2 {
        return Err(ModelError::EmptyFactors { t, b });
    }
    let mut cols = Vec::with_capacity(b);
    for (k, col) in factors.columns().into_iter().enumerate() {
        let (mean, sd) = mean_std(col);
        if !(sd > 0.0) {
            return Err(ModelError::ZeroVarianceFactor(k));
        }
        cols.push(col.mapv(|x| (x - mean) / sd));
    }
    let denom = (t - 1) as f64;
    let mut values = Array2::<f64>::eye(b);
    for i in 0..b {
        for j in 0..i {
            let c = (cols[i].dot(&cols[j]) / denom).clamp(-1.0, 1.0);
            values[[i, j]] = c;
            values[[j, i]] = c;
        }
    }
    Ok(InterSectorCorrelation { values })
}

/// Dense HPCA correlation matrix.
pub fn build_hpca_matrix(
    models: &[SectorModel],
    rho: &InterSectorCorrelation,
    partition: &SectorPartition,
) -> Result<Array2<f64>, ModelError> {
    let b = partition.n_sectors();
    if models.len() != b || rho.dim() != b {
        return Err(ModelError::Dimension(format!(
            "{} sector models and {}x{} factor correlation for {} sectors",
            models.len(),
            rho.dim(),
            rho.dim(),
            b
        )));
    }
    let n = partition.n_assets();
    // position of each asset inside its own sector
    let mut local = vec![0usize; n];
    for (k, m) in models.iter().enumerate() {
        if m.members != partition.members(k) {
            return Err(ModelError::Dimension(format!("sector model {k} does not match the partition")));
        }
        for (i, &j) in m.members.iter().enumerate() {
            local[j] = i;
        }
    }
    let beta: Vec<f64> = (0..n).map(|j| models[partition.sector_of(j)].betas[local[j]]).collect();
    let mut out = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let ki = partition.sector_of(i);
        for j in 0..n {
            let kj = partition.sector_of(j);
            out[[i, j]] = if ki == kj {
                models[ki].correlation[[local[i], local[j]]]
            } else {
                beta[i] * beta[j] * rho.values[[ki, kj]]
            };
        }
    }
    Ok(out)
}

/// The `b x b` matrix `sqrt(λ1_k) sqrt(λ1_k') ρ̄(k, k')` and its spectrum.
#[derive(Debug, Clone)]
pub struct MMatrix {
    pub values: Array2<f64>,
    pub spectrum: Spectrum,
}

pub fn build_m(models: &[SectorModel], rho: &InterSectorCorrelation) -> Result<MMatrix, ModelError> {
    let b = models.len();
    if rho.dim() != b {
        return Err(ModelError::Dimension(format!("{} sectors but {}x{} factor correlation", b, rho.dim(), rho.dim())));
    }
    let mut roots = Vec::with_capacity(b);
    for m in models {
        let lead = m.leading_eigenvalue();
        if !(lead > 0.0) {
            return Err(ModelError::NonPositiveLeading { sector: m.sector, value: lead });
        }
        roots.push(lead.sqrt());
    }
    let mut values = Array2::from_shape_fn((b, b), |(k, l)| roots[k] * roots[l] * rho.values[[k, l]]);
    // sqrt(λ)^2 can be off by an ulp; the diagonal is λ1 exactly
    for (k, m) in models.iter().enumerate() {
        values[[k, k]] = m.leading_eigenvalue();
    }
    let spectrum = sym_eig_sorted(values.view())?;
    Ok(MMatrix { values, spectrum })
}

/// Provenance of an HPCA eigenpair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EigenLabel {
    /// Eigenpair of `M`, lifted to the span of first sector eigenvectors. `rank` is 1-based.
    MultiSector { rank: usize },
    /// Eigenpair `order >= 2` of sector `sector` (0-based index).
    Sector { sector: usize, order: usize },
}

impl EigenLabel {
    pub fn is_multi_sector(&self) -> bool {
        matches!(self, EigenLabel::MultiSector { .. })
    }

    /// Display name: "Multi-sector" or the sector's label.
    pub fn describe(&self, partition: &SectorPartition) -> String {
        match self {
            EigenLabel::MultiSector { .. } => "Multi-sector".to_owned(),
            EigenLabel::Sector { sector, .. } => partition.label(*sector).to_owned(),
        }
    }

    fn tie_key(&self) -> (u8, usize, usize) {
        match *self {
            EigenLabel::MultiSector { rank } => (0, rank, 0),
            EigenLabel::Sector { sector, order } => (1, sector, order),
        }
    }
}

impl fmt::Display for EigenLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EigenLabel::MultiSector { rank } => write!(f, "multi-sector #{rank}"),
            EigenLabel::Sector { sector, order } => write!(f, "sector {sector} order {order}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledEigenpair {
    pub value: f64,
    pub vector: Array1<f64>,
    pub label: EigenLabel,
}

/// All `n` HPCA eigenpairs, sorted descending, multi-sector entries first on ties.
#[derive(Debug, Clone)]
pub struct LabeledSpectrum {
    pub entries: Vec<LabeledEigenpair>,
}

impl LabeledSpectrum {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }

    pub fn labels(&self) -> Vec<EigenLabel> {
        self.entries.iter().map(|e| e.label).collect()
    }

    /// Eigenvectors as the columns of an `n x n` matrix.
    pub fn vectors(&self) -> Array2<f64> {
        let n = self.entries.first().map_or(0, |e| e.vector.len());
        let mut out = Array2::zeros((n, self.entries.len()));
        for (k, e) in self.entries.iter().enumerate() {
            out.column_mut(k).assign(&e.vector);
        }
        out
    }
}

/// Fitted hierarchical model.
#[derive(Debug, Clone)]
pub struct HpcaModel {
    pub assets: Vec<String>,
    pub partition: SectorPartition,
    pub sectors: Vec<SectorModel>,
    pub rho: InterSectorCorrelation,
    pub m: MMatrix,
    /// Dense HPCA correlation matrix.
    pub matrix: Array2<f64>,
}

impl HpcaModel {
    /// Sector fits, factor correlation, `M` and the dense matrix from a standardized panel.
    pub fn fit(panel: &StandardizedPanel, partition: &SectorPartition) -> Result<Self, ModelError> {
        let sectors = fit_sectors(panel, partition)?;
        Self::from_sectors(panel.assets().to_vec(), partition.clone(), sectors)
    }

    pub fn from_sectors(
        assets: Vec<String>,
        partition: SectorPartition,
        sectors: Vec<SectorModel>,
    ) -> Result<Self, ModelError> {
        if assets.len() != partition.n_assets() {
            return Err(ModelError::Dimension(format!(
                "{} asset names for a partition of {} assets",
                assets.len(),
                partition.n_assets()
            )));
        }
        let factors = factor_panel(&sectors)?;
        let rho = inter_sector_corr(&factors)?;
        let m = build_m(&sectors, &rho)?;
        let matrix = build_hpca_matrix(&sectors, &rho, &partition)?;
        Ok(Self { assets, partition, sectors, rho, m, matrix })
    }

    pub fn n_assets(&self) -> usize {
        self.partition.n_assets()
    }

    pub fn n_sectors(&self) -> usize {
        self.partition.n_sectors()
    }

    /// Betas of all assets in global order.
    pub fn betas(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.n_assets());
        for m in &self.sectors {
            for (&j, &b) in m.members.iter().zip(m.betas.iter()) {
                out[j] = b;
            }
        }
        out
    }

    /// Smallest eigenvalue over every sector spectrum.
    pub fn min_sector_eigenvalue(&self) -> f64 {
        self.sectors
            .iter()
            .flat_map(|m| m.spectrum.values.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn spectrum(&self) -> Result<LabeledSpectrum, ModelError> {
        hpca_spectrum(self)
    }
}

/// Assemble the full labeled HPCA spectrum from `M` and the sector spectra.
pub fn hpca_spectrum(model: &HpcaModel) -> Result<LabeledSpectrum, ModelError> {
    let part = &model.partition;
    let b = part.n_sectors();
    let n = part.n_assets();

    let firsts: Vec<Array1<f64>> = model
        .sectors
        .iter()
        .map(|m| embed(m.leading_vector(), part, m.sector))
        .collect::<Result<_, _>>()?;

    let mut entries = Vec::with_capacity(n);
    for r in 0..b {
        let alpha = model.m.spectrum.vector(r);
        let mut v = Array1::<f64>::zeros(n);
        for (p, w) in firsts.iter().enumerate() {
            v.scaled_add(alpha[p], w);
        }
        apply_sign_convention(v.view_mut());
        entries.push(LabeledEigenpair {
            value: model.m.spectrum.values[r],
            vector: v,
            label: EigenLabel::MultiSector { rank: r + 1 },
        });
    }
    for m in &model.sectors {
        for j in 1..m.size() {
            entries.push(LabeledEigenpair {
                value: m.spectrum.values[j],
                vector: embed(m.spectrum.vector(j), part, m.sector)?,
                label: EigenLabel::Sector { sector: m.sector, order: j + 1 },
            });
        }
    }
    entries.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.label.tie_key().cmp(&b.label.tie_key())));
    Ok(LabeledSpectrum { entries })
}

/// Partial sums of the eigenvalues divided by `n`.
pub fn cumulative_variance(eigenvalues: &[f64], n: usize) -> Vec<f64> {
    let n = n as f64;
    eigenvalues
        .iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc / n)
        })
        .collect()
}

/// Entry-wise agreement of two unit eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenvectorComparison {
    /// Standard deviation of the entry-wise differences (centered RMS distance).
    pub rms_distance: f64,
    /// Mean entry-wise difference `a - b`.
    pub mean_difference: f64,
    /// Mean absolute entry of the two vectors.
    pub mean_abs_entry: f64,
    /// Whether `b` was negated to align it with `a`.
    pub flipped: bool,
}

/// Compare `a` and `b` after flipping `b` if their dot product is negative.
pub fn compare_eigenvectors(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<EigenvectorComparison, ModelError> {
    if a.len() != b.len() {
        return Err(ModelError::Dimension(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(ModelError::Dimension("empty vectors".to_owned()));
    }
    let n = a.len() as f64;
    let flipped = a.dot(&b) < 0.0;
    let sign = if flipped { -1.0 } else { 1.0 };
    let diffs: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - sign * y).collect();
    let mean_difference = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean_difference).powi(2)).sum::<f64>() / n;
    let mean_abs_entry = (a.iter().map(|x| x.abs()).sum::<f64>() + b.iter().map(|x| x.abs()).sum::<f64>()) / (2.0 * n);
    Ok(EigenvectorComparison { rms_distance: var.sqrt(), mean_difference, mean_abs_entry, flipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Two sectors of two perfectly correlated assets, factor correlation 0.5.
    fn four_asset_model() -> HpcaModel {
        let x = array![1.0, -1.0, 1.0, -1.0];
        let z = array![1.0, 1.0, -1.0, -1.0];
        let y = &x * 0.5 + &z * (0.75_f64).sqrt();
        let mut values = Array2::zeros((4, 4));
        for (j, col) in [&x, &x, &y, &y].into_iter().enumerate() {
            values.column_mut(j).assign(col);
        }
        let raw = crate::panel::ReturnsPanel::new(
            (0..4).map(|i| format!("d{i}")).collect(),
            (0..4).map(|j| format!("a{j}")).collect(),
            values,
        )
        .unwrap();
        let std = crate::panel::standardize(&raw).unwrap();
        HpcaModel::fit(&std, &SectorPartition::contiguous(&[2, 2]).unwrap()).unwrap()
    }

    #[test]
    fn inter_sector_corr_edge_cases() {
        let f = array![[1.0], [-1.0], [0.5]];
        assert_eq!(inter_sector_corr(&f).unwrap().values, array![[1.0]]);
        let same = array![[1.0, 1.0], [-1.0, -1.0], [0.5, 0.5]];
        let r = inter_sector_corr(&same).unwrap().values;
        assert!((r[[0, 1]] - 1.0).abs() < 1e-15);
        assert!(matches!(
            inter_sector_corr(&array![[1.0, 2.0], [1.0, 3.0]]),
            Err(ModelError::ZeroVarianceFactor(0))
        ));
    }

    #[test]
    fn four_asset_matrix_and_spectrum() {
        let model = four_asset_model();
        assert!((model.rho.values[[0, 1]] - 0.5).abs() < 1e-14);
        for i in 0..2 {
            for j in 2..4 {
                assert!((model.matrix[[i, j]] - 0.5).abs() < 1e-13);
            }
        }
        let s = model.spectrum().unwrap();
        let vals = s.values();
        let expected = [3.0, 1.0, 0.0, 0.0];
        for (v, e) in vals.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12, "{vals:?}");
        }
        assert_eq!(
            s.labels(),
            vec![
                EigenLabel::MultiSector { rank: 1 },
                EigenLabel::MultiSector { rank: 2 },
                EigenLabel::Sector { sector: 0, order: 2 },
                EigenLabel::Sector { sector: 1, order: 2 },
            ]
        );
        // dense oracle on the explicit matrix
        let dense = sym_eig_sorted(model.matrix.view()).unwrap();
        for (v, d) in vals.iter().zip(dense.values.iter()) {
            assert!((v - d).abs() < 1e-12);
        }
        let cv = cumulative_variance(&vals, 4);
        for (c, e) in cv.iter().zip([0.75, 1.0, 1.0, 1.0]) {
            assert!((c - e).abs() < 1e-12);
        }
    }

    #[test]
    fn m_matrix_closed_form() {
        let model = four_asset_model();
        let m = &model.m;
        assert_eq!(m.values[[0, 0]], model.sectors[0].leading_eigenvalue());
        assert!((m.values[[0, 1]] - 1.0).abs() < 1e-13);
        assert!((m.spectrum.values[0] - 3.0).abs() < 1e-13);
        assert!((m.spectrum.values[1] - 1.0).abs() < 1e-13);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.spectrum.vectors[[0, 0]] - h).abs() < 1e-13);
        assert!((m.spectrum.vectors[[1, 0]] - h).abs() < 1e-13);
    }

    #[test]
    fn uncorrelated_sectors_give_diagonal_m() {
        let x = array![1.0, -1.0, 1.0, -1.0];
        let z = array![1.0, 1.0, -1.0, -1.0];
        let mut values = Array2::zeros((4, 3));
        values.column_mut(0).assign(&z);
        values.column_mut(1).assign(&(&z * 2.0));
        values.column_mut(2).assign(&x);
        let raw = crate::panel::ReturnsPanel::new(
            (0..4).map(|i| format!("d{i}")).collect(),
            (0..3).map(|j| format!("a{j}")).collect(),
            values,
        )
        .unwrap();
        let std = crate::panel::standardize(&raw).unwrap();
        let model = HpcaModel::fit(&std, &SectorPartition::contiguous(&[2, 1]).unwrap()).unwrap();
        assert!(model.rho.values[[0, 1]].abs() < 1e-15);
        assert!(model.m.values[[0, 1]].abs() < 1e-14);
        assert!((model.m.spectrum.values[0] - 2.0).abs() < 1e-13);
        assert!((model.m.spectrum.values[1] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn tie_puts_multi_sector_first() {
        let mut entries = vec![
            (1.0_f64, EigenLabel::Sector { sector: 0, order: 2 }),
            (1.0, EigenLabel::MultiSector { rank: 2 }),
        ];
        entries.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.tie_key().cmp(&b.1.tie_key())));
        assert!(entries[0].1.is_multi_sector());
    }

    #[test]
    fn eigenvector_comparison() {
        let v = array![0.6, 0.8];
        let same = compare_eigenvectors(v.view(), v.view()).unwrap();
        assert_eq!(same.rms_distance, 0.0);
        assert_eq!(same.mean_difference, 0.0);
        assert!((same.mean_abs_entry - 0.7).abs() < 1e-15);
        let neg = v.mapv(|x| -x);
        let flipped = compare_eigenvectors(v.view(), neg.view()).unwrap();
        assert!(flipped.flipped);
        assert_eq!(flipped.rms_distance, 0.0);
        assert!(compare_eigenvectors(v.view(), array![1.0].view()).is_err());
    }

    #[test]
    fn eigenvector_comparison_recovers_noise_scale() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let n = 434;
        let sigma = 5e-3;
        let a = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, sigma).unwrap();
        let b = a.mapv(|x| x + noise.sample(&mut rng));
        let b = &b / b.dot(&b).sqrt();
        let c = compare_eigenvectors(a.view(), b.view()).unwrap();
        assert!((c.rms_distance / sigma - 1.0).abs() < 0.15, "{}", c.rms_distance);
    }

    #[test]
    fn cumulative_variance_of_identity() {
        let cv = cumulative_variance(&[1.0; 5], 5);
        for (k, c) in cv.iter().enumerate() {
            assert!((c - (k + 1) as f64 / 5.0).abs() < 1e-15);
        }
    }
}
