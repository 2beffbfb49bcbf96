//! Python bindings. Matrices cross the boundary as lists of rows.

use std::fs::File;
use std::io::BufReader;

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hpca::panel::{self, Delimiter, PanelFormat};
use hpca::rmt;
use hpca::sector::{load_sector_map, SectorPartition};
use hpca::synth::{self, MarketSpec};

fn py_err(e: impl Into<hpca::Error>) -> PyErr {
    let e = e.into();
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn open(path: &str) -> PyResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))
}

/// A returns panel: rows are dates, columns are assets.
#[pyclass(name = "Panel", module = "hpca_py", skip_from_py_object)]
#[derive(Clone)]
struct PyPanel {
    inner: panel::ReturnsPanel,
}

#[pymethods]
impl PyPanel {
    #[new]
    #[pyo3(signature = (values, assets, dates=None))]
    fn new(values: Vec<Vec<f64>>, assets: Vec<String>, dates: Option<Vec<String>>) -> PyResult<Self> {
        let values = to_array(values)?;
        let dates = dates.unwrap_or_else(|| (0..values.nrows()).map(|i| i.to_string()).collect());
        Ok(Self { inner: panel::ReturnsPanel::new(dates, assets, values).map_err(py_err)? })
    }

    #[getter]
    fn assets(&self) -> Vec<String> {
        self.inner.assets().to_vec()
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        self.inner.dates().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.values())
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n_obs(), self.inner.n_assets())
    }

    /// Column-standardized values (zero mean, unit sample variance).
    fn standardized(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(panel::standardize(&self.inner).map_err(py_err)?.values()))
    }

    fn correlation(&self) -> PyResult<Vec<Vec<f64>>> {
        let std = panel::standardize(&self.inner).map_err(py_err)?;
        Ok(to_rows(panel::correlation(&std).values()))
    }

    fn __repr__(&self) -> String {
        format!("Panel({} dates x {} assets)", self.inner.n_obs(), self.inner.n_assets())
    }
}

/// Read a CSV (or TSV, by extension) returns panel.
#[pyfunction]
fn load_panel(path: &str) -> PyResult<PyPanel> {
    let format = PanelFormat { delimiter: Delimiter::from_path(path.as_ref()) };
    let loaded = panel::load_panel(open(path)?, format).map_err(py_err)?;
    Ok(PyPanel { inner: loaded.panel })
}

/// Eigen-decomposition of a symmetric matrix: `(values, vectors)` with values
/// descending and `vectors[k]` the k-th eigenvector.
#[pyfunction]
fn sym_eig(matrix: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let s = hpca::sym_eig_sorted(to_array(matrix)?.view()).map_err(py_err)?;
    Ok((s.values.to_vec(), s.vectors.columns().into_iter().map(|c| c.to_vec()).collect()))
}

/// A fitted hierarchical PCA model.
#[pyclass(name = "HpcaModel", module = "hpca_py")]
struct PyHpcaModel {
    inner: hpca::HpcaModel,
    spectrum: hpca::LabeledSpectrum,
}

impl PyHpcaModel {
    fn build(panel: &panel::ReturnsPanel, partition: &SectorPartition) -> PyResult<Self> {
        let std = panel::standardize(panel).map_err(py_err)?;
        let inner = hpca::HpcaModel::fit(&std, partition).map_err(py_err)?;
        let spectrum = inner.spectrum().map_err(py_err)?;
        Ok(Self { inner, spectrum })
    }
}

#[pymethods]
impl PyHpcaModel {
    /// Fit from a panel and one sector label per asset.
    #[staticmethod]
    fn fit(panel: &PyPanel, sectors: Vec<String>) -> PyResult<Self> {
        if sectors.len() != panel.inner.n_assets() {
            return Err(PyValueError::new_err(format!(
                "{} sector labels for {} assets",
                sectors.len(),
                panel.inner.n_assets()
            )));
        }
        Self::build(&panel.inner, &SectorPartition::from_asset_labels(&sectors))
    }

    /// Fit from a panel file and an `asset,sector` map file.
    #[staticmethod]
    fn from_files(panel_path: &str, sectors_path: &str) -> PyResult<Self> {
        let p = load_panel(panel_path)?;
        let partition = load_sector_map(open(sectors_path)?, p.inner.assets(), Delimiter::from_path(sectors_path.as_ref()))
            .map_err(py_err)?;
        Self::build(&p.inner, &partition)
    }

    #[getter]
    fn assets(&self) -> Vec<String> {
        self.inner.assets.clone()
    }

    #[getter]
    fn sectors(&self) -> Vec<String> {
        self.inner.partition.labels().to_vec()
    }

    /// The n x n HPCA correlation matrix.
    #[getter]
    fn matrix(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.matrix)
    }

    /// Correlation matrix of the sector factors.
    #[getter]
    fn rho(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.rho.values)
    }

    #[getter]
    fn m(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.m.values)
    }

    #[getter]
    fn betas(&self) -> Vec<f64> {
        self.inner.betas().to_vec()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.spectrum.values()
    }

    /// `"Multi-sector"` or the sector label, per eigenvalue.
    #[getter]
    fn labels(&self) -> Vec<String> {
        self.spectrum.labels().iter().map(|l| l.describe(&self.inner.partition)).collect()
    }

    fn eigenvector(&self, k: usize) -> PyResult<Vec<f64>> {
        self.spectrum
            .entries
            .get(k)
            .map(|e| e.vector.to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("eigenvector {k} out of range")))
    }

    fn cumulative_variance(&self) -> Vec<f64> {
        hpca::model::cumulative_variance(&self.spectrum.values(), self.inner.n_assets())
    }

    fn __repr__(&self) -> String {
        format!("HpcaModel({} assets, {} sectors)", self.inner.n_assets(), self.inner.n_sectors())
    }
}

/// Upper Marchenko-Pastur edge for `n` assets over `t` observations.
#[pyfunction]
fn mp_threshold(n: usize, t: usize) -> f64 {
    rmt::mp_threshold(n, t)
}

/// `(grid, density)` of the Marchenko-Pastur law over its support.
#[pyfunction]
#[pyo3(signature = (n, t, grid=rmt::DEFAULT_GRID))]
fn mp_density(n: usize, t: usize, grid: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let r = rmt::mp_density(n, t, grid).map_err(py_err)?;
    Ok((r.grid, r.density))
}

/// Residual spectrum after removing `m` PCA or HPCA factors, as a JSON string.
#[pyfunction]
#[pyo3(signature = (panel, sectors, method, m=None))]
fn residual_report(panel: &PyPanel, sectors: Vec<String>, method: &str, m: Option<usize>) -> PyResult<String> {
    let std = panel::standardize(&panel.inner).map_err(py_err)?;
    let mp = rmt::mp_density(std.n_assets(), std.n_obs(), rmt::DEFAULT_GRID).map_err(py_err)?;
    let residuals = match method {
        "pca" => {
            let pca = hpca::sym_eig_sorted(panel::correlation(&std).values().view()).map_err(py_err)?;
            let m = m.unwrap_or_else(|| rmt::count_above(pca.values.iter().copied(), mp.lambda_plus));
            rmt::pca_residuals(&std, &pca, m)
        }
        "hpca" => {
            let model = hpca::HpcaModel::fit(&std, &SectorPartition::from_asset_labels(&sectors)).map_err(py_err)?;
            let s = model.spectrum().map_err(py_err)?;
            let m = m.unwrap_or_else(|| rmt::count_above(s.values(), mp.lambda_plus));
            rmt::hpca_residuals(&std, &s, m)
        }
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}, expected pca or hpca"))),
    }
    .map_err(py_err)?;
    let report = rmt::residual_spectrum(&residuals, &mp).map_err(py_err)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Draw a synthetic market from a JSON spec. Returns `(panel, sector labels)`.
#[pyfunction]
#[pyo3(signature = (spec_json, seed=None))]
fn simulate(spec_json: &str, seed: Option<u64>) -> PyResult<(PyPanel, Vec<String>)> {
    let mut spec: MarketSpec = serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let market = synth::generate(&spec).map_err(py_err)?;
    let sectors = synth::sector_map_rows(&market).into_iter().map(|(_, s)| s).collect();
    Ok((PyPanel { inner: market.panel }, sectors))
}

#[pymodule]
fn hpca_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_class::<PyHpcaModel>()?;
    m.add_function(wrap_pyfunction!(load_panel, m)?)?;
    m.add_function(wrap_pyfunction!(sym_eig, m)?)?;
    m.add_function(wrap_pyfunction!(mp_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(mp_density, m)?)?;
    m.add_function(wrap_pyfunction!(residual_report, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
