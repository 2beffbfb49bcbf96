#![allow(dead_code)]

use hpca::eigen::{sym_eig_sorted, Spectrum};
use hpca::model::LabeledSpectrum;
use hpca::panel::{standardize, ReturnsPanel, StandardizedPanel};
use hpca::sector::SectorPartition;
use hpca::synth::{IntraBlock, MarketSpec, SectorSpec};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One-factor correlation `l lᵀ + diag(1 - l²)`.
pub fn one_factor_corr(loadings: &[f64]) -> Vec<Vec<f64>> {
    let n = loadings.len();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { loadings[i] * loadings[j] }).collect())
        .collect()
}

/// Random positively correlated market with `n <= max_n`, `b <= max_b`, `T` in `[5n, 10n]`.
pub fn random_spec(r: &mut ChaCha8Rng, max_n: usize, max_b: usize) -> MarketSpec {
    let b = r.random_range(1..=max_b);
    let cap = (max_n / b).max(1);
    let sectors = (0..b)
        .map(|k| {
            let size = r.random_range(1..=cap);
            let intra = if r.random_bool(0.5) {
                IntraBlock::Equicorrelation(r.random_range(0.1..0.7))
            } else {
                let l: Vec<f64> = (0..size).map(|_| r.random_range(0.2..0.9)).collect();
                IntraBlock::Correlation(one_factor_corr(&l))
            };
            SectorSpec { label: format!("S{}", k + 1), size, intra }
        })
        .collect::<Vec<_>>();
    let a: Vec<f64> = (0..b).map(|_| r.random_range(0.2..0.9)).collect();
    let n: usize = sectors.iter().map(|s| s.size).sum();
    let t = r.random_range(5 * n.max(1)..=10 * n.max(1)).max(10);
    MarketSpec {
        sectors,
        inter_factor_correlation: one_factor_corr(&a),
        t,
        seed: r.random(),
        volatility: 0.01,
        start_date: chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
    }
}

/// Arbitrary panel: a few common factors with random loadings plus noise,
/// under a random (non-contiguous) partition. `T` may be smaller than `n`.
pub fn random_panel_and_partition(r: &mut ChaCha8Rng) -> (StandardizedPanel, SectorPartition) {
    let n = r.random_range(1..=40);
    let t = r.random_range(3..=120);
    let factors = r.random_range(0..=3);
    let b = r.random_range(1..=n.min(8));
    let loads: Vec<Vec<f64>> = (0..n).map(|_| (0..factors).map(|_| r.random_range(-1.5..1.5)).collect()).collect();
    loop {
        let f: Vec<Vec<f64>> = (0..t).map(|_| (0..factors).map(|_| StandardNormal.sample(r)).collect()).collect();
        let values = Array2::from_shape_fn((t, n), |(i, j)| {
            let common: f64 = loads[j].iter().zip(&f[i]).map(|(l, x)| l * x).sum();
            let z: f64 = StandardNormal.sample(r);
            common + z
        });
        let raw = ReturnsPanel::new(
            (0..t).map(|i| format!("d{i}")).collect(),
            (0..n).map(|j| format!("a{j}")).collect(),
            values,
        )
        .unwrap();
        let Ok(std) = standardize(&raw) else { continue };
        // every sector gets one guaranteed member, the rest are random
        let mut assignment: Vec<usize> = (0..n).map(|j| if j < b { j } else { r.random_range(0..b) }).collect();
        for i in (1..n).rev() {
            let k = r.random_range(0..=i);
            assignment.swap(i, k);
        }
        let labels = (0..b).map(|k| format!("G{k}")).collect();
        return (std, SectorPartition::new(labels, assignment).unwrap());
    }
}

pub fn dense(matrix: &Array2<f64>) -> Spectrum {
    sym_eig_sorted(matrix.view()).unwrap()
}

/// Groups of consecutive indices whose eigenvalues are within `gap` of each other.
pub fn clusters(values: &[f64], gap: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        if k == values.len() || values[k - 1] - values[k] > gap {
            out.push(start..k);
            start = k;
        }
    }
    out
}

pub fn projector(vectors: &[Array1<f64>]) -> Array2<f64> {
    let n = vectors[0].len();
    let mut p = Array2::zeros((n, n));
    for v in vectors {
        for i in 0..n {
            for j in 0..n {
                p[[i, j]] += v[i] * v[j];
            }
        }
    }
    p
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Worst discrepancies between the analytic spectrum and a dense solve of the same matrix.
#[derive(Debug, Default, Clone, Copy)]
pub struct OracleGap {
    pub eigenvalue_rel: f64,
    pub vector: f64,
    pub projector: f64,
}

pub fn oracle_gap(matrix: &Array2<f64>, analytic: &LabeledSpectrum) -> OracleGap {
    let d = dense(matrix);
    let a_vals = analytic.values();
    let d_vals = d.values.to_vec();
    let scale = d_vals.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let mut gap = OracleGap::default();
    for (x, y) in a_vals.iter().zip(&d_vals) {
        gap.eigenvalue_rel = gap.eigenvalue_rel.max((x - y).abs() / y.abs().max(1.0));
    }
    for range in clusters(&d_vals, 1e-6 * scale) {
        if range.len() == 1 {
            let k = range.start;
            let a = &analytic.entries[k].vector;
            let b = d.vector(k);
            let sign = if a.dot(&b) < 0.0 { -1.0 } else { 1.0 };
            let diff = a.iter().zip(b.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - sign * y).abs()));
            gap.vector = gap.vector.max(diff);
        } else {
            let a: Vec<Array1<f64>> = range.clone().map(|k| analytic.entries[k].vector.clone()).collect();
            let b: Vec<Array1<f64>> = range.map(|k| d.vector(k).to_owned()).collect();
            gap.projector = gap.projector.max(max_abs_diff(&projector(&a), &projector(&b)));
        }
    }
    gap
}
