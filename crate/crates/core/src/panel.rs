//! Return panels: loading, standardization and empirical correlation.
//!
//! A panel is a `T x n` matrix of per-period returns with one row per date
//! and one column per asset. Every downstream computation works on the
//! standardized panel (zero mean, unit sample standard deviation with divisor
//! `T - 1`), so that Gram matrices divided by `T - 1` are correlation matrices.

use std::collections::HashSet;
use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use thiserror::Error;

/// Errors raised while loading or transforming a panel.
#[derive(Debug, Error)]
pub enum PanelError {
    #[error("malformed table: {0}")]
    Malformed(String),

    #[error("duplicate asset identifier `{0}`")]
    DuplicateAsset(String),

    #[error("need at least 2 complete rows, got {complete} ({dropped} dropped for missing values)")]
    TooFewRows { complete: usize, dropped: usize },

    #[error("panel has no asset columns")]
    NoAssets,

    #[error("non-numeric cell at data row {row}, column `{column}`: `{value}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite value at data row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },

    #[error("asset `{0}` has zero sample standard deviation")]
    DegenerateColumn(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Field delimiter of a tabular text stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delimiter {
    #[default]
    Comma,
    Tab,
}

impl Delimiter {
    pub fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }

    /// Tab for `.tsv`/`.tab` paths, comma otherwise.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => Delimiter::Tab,
            _ => Delimiter::Comma,
        }
    }
}

/// Description of the text table handed to [`load_panel`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PanelFormat {
    pub delimiter: Delimiter,
}

/// Matrix of asset returns, rows are dates and columns are assets.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    dates: Vec<String>,
    assets: Vec<String>,
    values: Array2<f64>,
}

impl ReturnsPanel {
    /// Build a panel, checking shape, uniqueness of asset names and finiteness.
    pub fn new(dates: Vec<String>, assets: Vec<String>, values: Array2<f64>) -> Result<Self, PanelError> {
        let (t, n) = values.dim();
        if dates.len() != t {
            return Err(PanelError::Shape(format!("{} dates for {} rows", dates.len(), t)));
        }
        if assets.len() != n {
            return Err(PanelError::Shape(format!("{} asset names for {} columns", assets.len(), n)));
        }
        if n == 0 {
            return Err(PanelError::NoAssets);
        }
        if t < 2 {
            return Err(PanelError::TooFewRows { complete: t, dropped: 0 });
        }
        check_unique(&assets)?;
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(PanelError::NonFinite { row: row + 1, column: assets[col].clone() });
        }
        Ok(Self { dates, assets, values })
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Number of observations `T`.
    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    /// Number of assets `n`.
    pub fn n_assets(&self) -> usize {
        self.values.ncols()
    }
}

/// Outcome of [`load_panel`]: the panel and how many incomplete rows were dropped.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: ReturnsPanel,
    pub dropped_rows: usize,
}

fn check_unique(assets: &[String]) -> Result<(), PanelError> {
    let mut seen = HashSet::with_capacity(assets.len());
    for a in assets {
        if !seen.insert(a.as_str()) {
            return Err(PanelError::DuplicateAsset(a.clone()));
        }
    }
    Ok(())
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "NaN" | "nan" | "N/A" | "null")
}

/// Read a header-bearing delimited table: first column dates, one column per asset.
///
/// Rows with any missing cell (blank, `NA`, `NaN`, `null`) are dropped and
/// counted. A cell that is present but not a number is a hard error.
pub fn load_panel<R: Read>(source: R, format: PanelFormat) -> Result<LoadedPanel, PanelError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter.byte())
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(source);

    let header = reader.headers()?.clone();
    if header.len() < 2 {
        return Err(PanelError::NoAssets);
    }
    let assets: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    check_unique(&assets)?;
    let n = assets.len();

    let mut dates = Vec::new();
    let mut flat = Vec::new();
    let mut dropped = 0usize;
    let mut row_buf = Vec::with_capacity(n);
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        row_buf.clear();
        let mut missing = false;
        for (j, cell) in record.iter().skip(1).enumerate() {
            if is_missing(cell) {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| PanelError::Parse {
                row,
                column: assets[j].clone(),
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(PanelError::NonFinite { row, column: assets[j].clone() });
            }
            row_buf.push(v);
        }
        if missing {
            dropped += 1;
            continue;
        }
        dates.push(record.get(0).unwrap_or_default().to_owned());
        flat.extend_from_slice(&row_buf);
    }

    let t = dates.len();
    if t < 2 {
        return Err(PanelError::TooFewRows { complete: t, dropped });
    }
    let values = Array2::from_shape_vec((t, n), flat).map_err(|e| PanelError::Malformed(e.to_string()))?;
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with missing values");
    }
    Ok(LoadedPanel { panel: ReturnsPanel { dates, assets, values }, dropped_rows: dropped })
}

/// Write a panel in the format [`load_panel`] reads.
pub fn write_panel<W: Write>(panel: &ReturnsPanel, sink: W, delimiter: Delimiter) -> Result<(), PanelError> {
    let mut writer = csv::WriterBuilder::new().delimiter(delimiter.byte()).from_writer(sink);
    let mut header = Vec::with_capacity(panel.n_assets() + 1);
    header.push("date".to_owned());
    header.extend(panel.assets.iter().cloned());
    writer.write_record(&header)?;
    let mut record = Vec::with_capacity(panel.n_assets() + 1);
    for (date, row) in panel.dates.iter().zip(panel.values.rows()) {
        record.clear();
        record.push(date.clone());
        // `{:?}` prints the shortest representation that round-trips exactly
        record.extend(row.iter().map(|v| format!("{v:?}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Panel whose columns have sample mean 0 and sample standard deviation 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedPanel {
    dates: Vec<String>,
    assets: Vec<String>,
    values: Array2<f64>,
}

impl StandardizedPanel {
    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    /// Restrict to a subset of columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> StandardizedPanel {
        StandardizedPanel {
            dates: self.dates.clone(),
            assets: columns.iter().map(|&j| self.assets[j].clone()).collect(),
            values: self.values.select(Axis(1), columns),
        }
    }

    /// Interpret as a raw panel again (e.g. to re-standardize).
    pub fn to_returns(&self) -> ReturnsPanel {
        ReturnsPanel { dates: self.dates.clone(), assets: self.assets.clone(), values: self.values.clone() }
    }
}

/// Mean and sample standard deviation (divisor `len - 1`).
pub(crate) fn mean_std(col: ArrayView1<'_, f64>) -> (f64, f64) {
    let t = col.len() as f64;
    let mean = col.sum() / t;
    let ss: f64 = col.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (t - 1.0)).sqrt())
}

/// Standardize one column in place; returns `false` for a constant column.
pub(crate) fn standardize_column(mut col: ndarray::ArrayViewMut1<'_, f64>) -> bool {
    let (mean, sd) = mean_std(col.view());
    // relative check: a column of identical values can leave rounding dust in `sd`
    let scale = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if !(sd > 0.0) || sd <= 1e-14 * scale {
        return false;
    }
    col.mapv_inplace(|x| (x - mean) / sd);
    // one refinement pass pins mean and sd to rounding level
    let (mean, sd) = mean_std(col.view());
    col.mapv_inplace(|x| (x - mean) / sd);
    true
}

/// Column-wise `(x - mean) / sd` with divisor `T - 1`.
pub fn standardize(panel: &ReturnsPanel) -> Result<StandardizedPanel, PanelError> {
    let mut values = panel.values.clone();
    let ok: Vec<bool> = values
        .axis_iter_mut(Axis(1))
        .into_par_iter()
        .map(standardize_column)
        .collect();
    if let Some(j) = ok.iter().position(|ok| !ok) {
        return Err(PanelError::DegenerateColumn(panel.assets[j].clone()));
    }
    Ok(StandardizedPanel { dates: panel.dates.clone(), assets: panel.assets.clone(), values })
}

/// Symmetric correlation matrix with asset labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    assets: Vec<String>,
    values: Array2<f64>,
}

impl CorrelationMatrix {
    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
}

/// Empirical correlation of a standardized panel, `X^T X / (T - 1)`.
///
/// Every entry is an explicit, fixed-order dot product of two columns, so the
/// correlation of a column subset is bit-for-bit the matching sub-block of the
/// full matrix. The diagonal is set to exactly 1 and entries are clamped to
/// `[-1, 1]`.
pub fn correlation(panel: &StandardizedPanel) -> CorrelationMatrix {
    CorrelationMatrix { assets: panel.assets.clone(), values: gram_correlation(&panel.values) }
}

/// Correlation of columns that are already centered with unit sample variance.
pub(crate) fn gram_correlation(values: &Array2<f64>) -> Array2<f64> {
    let (t, n) = values.dim();
    let cols: Vec<Array1<f64>> = values.columns().into_iter().map(|c| c.to_owned()).collect();
    let denom = (t - 1) as f64;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ci = cols[i].as_slice().expect("owned column is contiguous");
            (0..i)
                .map(|j| {
                    let cj = cols[j].as_slice().expect("owned column is contiguous");
                    let dot: f64 = ci.iter().zip(cj).map(|(a, b)| a * b).sum();
                    (dot / denom).clamp(-1.0, 1.0)
                })
                .collect()
        })
        .collect();
    let mut out = Array2::<f64>::eye(n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}
