//! Hierarchical PCA (HPCA) factor models for sector-partitioned return panels.
//!
//! The pipeline standardizes a `T x n` return panel, fits a one-factor PCA
//! model inside every sector, correlates the sector factors, and builds a
//! correlation matrix that keeps the empirical intra-sector blocks and
//! replaces cross-sector entries by `β_i β_j ρ̄`. Its spectrum is assembled
//! analytically from the `b x b` matrix `M` and the sector spectra. Plain PCA
//! on the full empirical correlation matrix is the comparison baseline, and
//! residuals of either model can be checked against the Marchenko-Pastur law.
//!
//! ```
//! use hpca::{synth, panel, model::HpcaModel};
//!
//! let market = synth::generate(&synth::MarketSpec::gics_like(300, 1)).unwrap();
//! let std = panel::standardize(&market.panel).unwrap();
//! let model = HpcaModel::fit(&std, &market.truth.partition).unwrap();
//! let spectrum = model.spectrum().unwrap();
//! let total: f64 = spectrum.values().iter().sum();
//! assert!((total - 462.0).abs() < 1e-6);
//! ```

pub mod eigen;
pub mod error;
pub mod export;
pub mod model;
pub mod panel;
pub mod report;
pub mod rmt;
pub mod sector;
pub mod synth;

pub use eigen::{sym_eig_sorted, Spectrum};
pub use error::{Error, Result};
pub use model::{EigenLabel, HpcaModel, LabeledSpectrum};
pub use panel::{correlation, load_panel, standardize, CorrelationMatrix, ReturnsPanel, StandardizedPanel};
pub use sector::{SectorModel, SectorPartition};
