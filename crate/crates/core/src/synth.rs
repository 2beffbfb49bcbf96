//! Synthetic markets with a known hierarchical correlation structure.
//!
//! Each sector has a population correlation matrix `C_k` whose first
//! eigenpair defines betas `β = sqrt(λ1) V1`. Returns are drawn as
//! `X_j = β_j F_{I(j)} + ε_j` with factors `F ~ N(0, ρ̄*)` and
//! sector-local residuals `ε_k ~ N(0, C_k - β βᵀ)`, independent across
//! sectors. The population correlation of the draw is exactly the HPCA
//! matrix of the ground-truth blocks.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{sym_eig_sorted, EigenError};
use crate::panel::{PanelError, ReturnsPanel};
use crate::sector::{SectorError, SectorPartition};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid market spec: {0}")]
    Invalid(String),

    #[error("{what} is not positive semidefinite (smallest eigenvalue {min})")]
    NotPsd { what: String, min: f64 },

    #[error(transparent)]
    Eigen(#[from] EigenError),

    #[error(transparent)]
    Panel(#[from] PanelError),

    #[error(transparent)]
    Sector(#[from] SectorError),
}

const PSD_TOL: f64 = 1e-10;

/// Intra-sector correlation structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntraBlock {
    /// All off-diagonal entries equal.
    Equicorrelation(f64),
    /// Full `n_k x n_k` correlation matrix.
    Correlation(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorSpec {
    pub label: String,
    pub size: usize,
    pub intra: IntraBlock,
}

fn default_volatility() -> f64 {
    0.01
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2012, 2, 22).expect("valid date")
}

/// Description of a synthetic market, readable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub sectors: Vec<SectorSpec>,
    /// Population correlation of the sector factors, `b x b`.
    pub inter_factor_correlation: Vec<Vec<f64>>,
    /// Number of observations.
    pub t: usize,
    #[serde(default)]
    pub seed: u64,
    /// Per-period return scale applied to every asset.
    #[serde(default = "default_volatility")]
    pub volatility: f64,
    /// First date; subsequent rows skip weekends.
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
}

/// Sector names and sizes of an 11-sector equity universe (462 names).
pub const GICS_SECTORS: [(&str, usize); 11] = [
    ("Consumer Discretionary", 73),
    ("Consumer Staples", 56),
    ("Energy", 27),
    ("Financials", 59),
    ("Health Care", 51),
    ("Industrials", 57),
    ("Information Technology", 58),
    ("Materials", 23),
    ("Real Estate", 27),
    ("Telecommunication Services", 3),
    ("Utilities", 28),
];

impl MarketSpec {
    /// Equity-like market with the 11 GICS sector sizes.
    ///
    /// Sector equicorrelations range over 0.25..0.55 and the factor
    /// correlation is one-factor, `ρ̄*(k, k') = a_k a_k'` with `a_k` in 0.55..0.85.
    pub fn gics_like(t: usize, seed: u64) -> Self {
        let b = GICS_SECTORS.len();
        let intra = |k: usize| 0.25 + 0.3 * ((k * 7) % b) as f64 / (b - 1) as f64;
        let loading = |k: usize| 0.55 + 0.3 * ((k * 4) % b) as f64 / (b - 1) as f64;
        let inter = (0..b)
            .map(|k| (0..b).map(|l| if k == l { 1.0 } else { loading(k) * loading(l) }).collect())
            .collect();
        MarketSpec {
            sectors: GICS_SECTORS
                .iter()
                .enumerate()
                .map(|(k, &(label, size))| SectorSpec {
                    label: label.to_owned(),
                    size,
                    intra: IntraBlock::Equicorrelation(intra(k)),
                })
                .collect(),
            inter_factor_correlation: inter,
            t,
            seed,
            volatility: default_volatility(),
            start_date: default_start(),
        }
    }

    pub fn n_assets(&self) -> usize {
        self.sectors.iter().map(|s| s.size).sum()
    }

    pub fn partition(&self) -> Result<SectorPartition, SynthError> {
        let labels = self.sectors.iter().map(|s| s.label.clone()).collect();
        let assignment = self.sectors.iter().enumerate().flat_map(|(k, s)| std::iter::repeat_n(k, s.size)).collect();
        Ok(SectorPartition::new(labels, assignment)?)
    }

    fn intra_matrix(&self, k: usize) -> Result<Array2<f64>, SynthError> {
        let s = &self.sectors[k];
        match &s.intra {
            IntraBlock::Equicorrelation(rho) => {
                if !(-1.0..=1.0).contains(rho) {
                    return Err(SynthError::Invalid(format!("sector `{}` equicorrelation {rho} outside [-1, 1]", s.label)));
                }
                Ok(Array2::from_shape_fn((s.size, s.size), |(i, j)| if i == j { 1.0 } else { *rho }))
            }
            IntraBlock::Correlation(rows) => to_matrix(rows, s.size, &format!("sector `{}` correlation", s.label)),
        }
    }
}

fn to_matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<Array2<f64>, SynthError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(SynthError::Invalid(format!("{what} must be {n}x{n}")));
    }
    let m = Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]);
    check_correlation(&m, what)?;
    Ok(m)
}

fn check_correlation(m: &Array2<f64>, what: &str) -> Result<(), SynthError> {
    let n = m.nrows();
    for i in 0..n {
        if (m[[i, i]] - 1.0).abs() > 1e-12 {
            return Err(SynthError::Invalid(format!("{what} has diagonal entry {} at {i}", m[[i, i]])));
        }
        for j in 0..i {
            if (m[[i, j]] - m[[j, i]]).abs() > 1e-12 || !m[[i, j]].is_finite() {
                return Err(SynthError::Invalid(format!("{what} is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Population quantities behind a synthetic draw.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub partition: SectorPartition,
    /// Population HPCA correlation matrix, `n x n`.
    pub matrix: Array2<f64>,
    /// Population factor correlation `ρ̄*`.
    pub inter_factor: Array2<f64>,
    /// Population betas in global asset order.
    pub betas: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub panel: ReturnsPanel,
    pub truth: GroundTruth,
}

/// `L` with `L Lᵀ = A` built from the eigenpairs with positive eigenvalue.
fn psd_root(pairs: impl Iterator<Item = (f64, Array1<f64>)>, n: usize) -> Array2<f64> {
    let cols: Vec<Array1<f64>> = pairs.filter(|(v, _)| *v > 0.0).map(|(v, vec)| vec * v.sqrt()).collect();
    let mut out = Array2::zeros((n, cols.len()));
    for (k, c) in cols.iter().enumerate() {
        out.column_mut(k).assign(c);
    }
    out
}

fn business_days(start: NaiveDate, count: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d.format("%Y-%m-%d").to_string());
        }
        d += Duration::days(1);
    }
    out
}

/// Draw a panel from `spec`. Identical `(spec, seed)` gives identical output.
pub fn generate(spec: &MarketSpec) -> Result<SyntheticMarket, SynthError> {
    let b = spec.sectors.len();
    if b == 0 {
        return Err(SynthError::Invalid("no sectors".to_owned()));
    }
    if spec.t < 2 {
        return Err(SynthError::Invalid(format!("T = {} is below 2", spec.t)));
    }
    if let Some(s) = spec.sectors.iter().find(|s| s.size == 0) {
        return Err(SynthError::Invalid(format!("sector `{}` is empty", s.label)));
    }
    if !(spec.volatility > 0.0 && spec.volatility.is_finite()) {
        return Err(SynthError::Invalid(format!("volatility {} must be positive", spec.volatility)));
    }
    let inter = to_matrix(&spec.inter_factor_correlation, b, "inter-factor correlation")?;
    let inter_spec = sym_eig_sorted(inter.view())?;
    let min = inter_spec.values[b - 1];
    if min < -PSD_TOL {
        return Err(SynthError::NotPsd { what: "inter-factor correlation".to_owned(), min });
    }
    let factor_root = psd_root((0..b).map(|k| (inter_spec.values[k], inter_spec.vector(k).to_owned())), b);

    let partition = spec.partition()?;
    let n = spec.n_assets();
    let mut betas = Array1::zeros(n);
    let mut blocks = Vec::with_capacity(b);
    let mut residual_roots = Vec::with_capacity(b);
    for k in 0..b {
        let c = spec.intra_matrix(k)?;
        let s = sym_eig_sorted(c.view())?;
        let nk = c.nrows();
        let min = s.values[nk - 1];
        if min < -PSD_TOL {
            return Err(SynthError::NotPsd { what: format!("sector `{}` correlation", spec.sectors[k].label), min });
        }
        let lead = s.values[0];
        for (&j, &v) in partition.members(k).iter().zip(s.vector(0).iter()) {
            betas[j] = lead.sqrt() * v;
        }
        // C - ββᵀ keeps every eigenpair except the first
        residual_roots.push(psd_root((1..nk).map(|i| (s.values[i], s.vector(i).to_owned())), nk));
        blocks.push(c);
    }

    let mut matrix = Array2::zeros((n, n));
    for i in 0..n {
        let ki = partition.sector_of(i);
        for j in 0..n {
            let kj = partition.sector_of(j);
            matrix[[i, j]] = if ki == kj {
                let local = |x: usize| x - partition.members(ki)[0];
                blocks[ki][[local(i), local(j)]]
            } else {
                betas[i] * betas[j] * inter[[ki, kj]]
            };
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Array2::zeros((spec.t, n));
    let mut draw = |len: usize| -> Array1<f64> { Array1::from_iter((0..len).map(|_| StandardNormal.sample(&mut rng))) };
    for mut row in values.rows_mut() {
        let factors = factor_root.dot(&draw(factor_root.ncols()));
        for k in 0..b {
            let root = &residual_roots[k];
            let eps = root.dot(&draw(root.ncols()));
            for (i, &j) in partition.members(k).iter().enumerate() {
                row[j] = spec.volatility * (betas[j] * factors[k] + eps[i]);
            }
        }
    }

    let assets = spec
        .sectors
        .iter()
        .flat_map(|s| {
            let tag: String = s.label.split_whitespace().filter_map(|w| w.chars().next()).collect();
            (1..=s.size).map(move |i| format!("{}{:03}", tag.to_uppercase(), i))
        })
        .collect::<Vec<_>>();
    let assets = dedupe(assets);
    let panel = ReturnsPanel::new(business_days(spec.start_date, spec.t), assets, values)?;
    Ok(SyntheticMarket { panel, truth: GroundTruth { partition, matrix, inter_factor: inter, betas } })
}

/// Suffix repeated names so identifiers stay unique when sector initials collide.
fn dedupe(names: Vec<String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    names
        .into_iter()
        .map(|name| {
            let mut candidate = name.clone();
            let mut k = 2;
            while !seen.insert(candidate.clone()) {
                candidate = format!("{name}_{k}");
                k += 1;
            }
            candidate
        })
        .collect()
}

/// `asset,sector` rows matching the generated panel.
pub fn sector_map_rows(market: &SyntheticMarket) -> Vec<(String, String)> {
    let part = &market.truth.partition;
    market
        .panel
        .assets()
        .iter()
        .enumerate()
        .map(|(j, a)| (a.clone(), part.label(part.sector_of(j)).to_owned()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{correlation, standardize};

    fn two_singletons(rho: f64, t: usize, seed: u64) -> MarketSpec {
        MarketSpec {
            sectors: vec![
                SectorSpec { label: "A".into(), size: 1, intra: IntraBlock::Equicorrelation(0.0) },
                SectorSpec { label: "B".into(), size: 1, intra: IntraBlock::Equicorrelation(0.0) },
            ],
            inter_factor_correlation: vec![vec![1.0, rho], vec![rho, 1.0]],
            t,
            seed,
            volatility: 0.02,
            start_date: default_start(),
        }
    }

    #[test]
    fn singleton_pair_recovers_correlation() {
        let m = generate(&two_singletons(0.4, 100_000, 3)).unwrap();
        let c = correlation(&standardize(&m.panel).unwrap());
        assert!((c.values()[[0, 1]] - 0.4).abs() < 0.02);
        assert!((m.truth.matrix[[0, 1]] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn independent_block_is_white() {
        let spec = MarketSpec {
            sectors: vec![SectorSpec { label: "X".into(), size: 5, intra: IntraBlock::Equicorrelation(0.0) }],
            inter_factor_correlation: vec![vec![1.0]],
            t: 20_000,
            seed: 1,
            volatility: 0.01,
            start_date: default_start(),
        };
        let m = generate(&spec).unwrap();
        let c = correlation(&standardize(&m.panel).unwrap());
        for i in 0..5 {
            for j in 0..i {
                assert!(c.values()[[i, j]].abs() < 4.0 / (20_000f64).sqrt());
            }
        }
    }

    #[test]
    fn ground_truth_is_psd_and_deterministic() {
        let spec = MarketSpec::gics_like(50, 9);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.panel.n_assets(), 462);
        let s = sym_eig_sorted(a.truth.matrix.view()).unwrap();
        assert!(s.values[s.len() - 1] >= -1e-10);
        for i in 0..462 {
            assert_eq!(a.truth.matrix[[i, i]], 1.0);
        }
        assert_eq!(a.panel.dates()[0], "2012-02-22");
        // 2012-02-25 is a Saturday
        assert_eq!(a.panel.dates()[3], "2012-02-27");
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = two_singletons(0.4, 10, 0);
        spec.inter_factor_correlation = vec![vec![1.0, 0.5], vec![0.4, 1.0]];
        assert!(matches!(generate(&spec), Err(SynthError::Invalid(_))));

        let bad = MarketSpec {
            sectors: vec![
                SectorSpec { label: "A".into(), size: 1, intra: IntraBlock::Equicorrelation(0.0) },
                SectorSpec { label: "B".into(), size: 1, intra: IntraBlock::Equicorrelation(0.0) },
                SectorSpec { label: "C".into(), size: 1, intra: IntraBlock::Equicorrelation(0.0) },
            ],
            inter_factor_correlation: vec![vec![1.0, 0.9, -0.9], vec![0.9, 1.0, 0.9], vec![-0.9, 0.9, 1.0]],
            t: 10,
            seed: 0,
            volatility: 0.01,
            start_date: default_start(),
        };
        assert!(matches!(generate(&bad), Err(SynthError::NotPsd { .. })));

        let mut neg = two_singletons(0.0, 10, 0);
        neg.sectors[0].size = 3;
        neg.sectors[0].intra = IntraBlock::Equicorrelation(-0.9);
        assert!(matches!(generate(&neg), Err(SynthError::NotPsd { .. })));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = MarketSpec::gics_like(100, 4);
        let text = serde_json::to_string(&spec).unwrap();
        let back: MarketSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);

        let minimal = r#"{"sectors":[{"label":"A","size":2,"intra":{"equicorrelation":0.3}}],
                          "inter_factor_correlation":[[1.0]],"t":10}"#;
        let parsed: MarketSpec = serde_json::from_str(minimal).unwrap();
        assert_eq!(parsed.volatility, 0.01);
        assert_eq!(parsed.seed, 0);
    }
}
