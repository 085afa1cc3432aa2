//! Python bindings: `import pysynthleak`.
//!
//! Tables and schemas are wrapped as classes; the numeric building blocks
//! take plain lists; the pipelines take a TOML config file and return the
//! report as a JSON string.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use synthleak::error::ErrorClass;
use synthleak::tabular::{EncodedMatrix, FeatureKind};
use synthleak::{baselines, metrics, nsga2, planted, predictor, run, selection, tabular};

fn to_py(e: synthleak::Error) -> PyErr {
    match (&e, e.class()) {
        (synthleak::Error::Io { .. }, _) => PyIOError::new_err(e.to_string()),
        (_, ErrorClass::Internal) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn index(points: Vec<Vec<f64>>) -> PyResult<selection::NeighborIndex> {
    let m = EncodedMatrix::from_points(points).map_err(to_py)?;
    selection::NeighborIndex::new(Arc::new(m)).map_err(to_py)
}

#[pyclass(name = "Schema", module = "pysynthleak", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySchema {
    inner: Arc<tabular::Schema>,
}

#[pymethods]
impl PySchema {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PySchema {
            inner: Arc::new(tabular::Schema::load(path).map_err(to_py)?),
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PySchema {
            inner: Arc::new(tabular::Schema::from_toml_str(text).map_err(to_py)?),
        })
    }

    /// Column names, features first and the target last.
    fn columns(&self) -> Vec<String> {
        self.inner.column_names()
    }

    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }
}

#[pyclass(name = "Table", module = "pysynthleak", frozen)]
struct PyTable {
    inner: tabular::Table,
}

#[pymethods]
impl PyTable {
    #[staticmethod]
    fn load(path: PathBuf, schema: &PySchema) -> PyResult<Self> {
        Ok(PyTable {
            inner: tabular::load_table(path, schema.inner.clone()).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn schema(&self) -> PySchema {
        PySchema {
            inner: self.inner.schema().clone(),
        }
    }

    /// Row `i` as strings, in CSV form.
    fn row(&self, i: usize) -> PyResult<Vec<String>> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        let schema = self.inner.schema();
        Ok(schema
            .columns()
            .zip(self.inner.row(i))
            .map(|(spec, c)| tabular::format_cell(spec, *c))
            .collect())
    }

    /// Continuous column values, or category indices for categorical columns.
    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let schema = self.inner.schema();
        let j = schema
            .columns()
            .position(|s| s.name == name)
            .ok_or_else(|| PyValueError::new_err(format!("no column {name:?}")))?;
        Ok(self
            .inner
            .column(j)
            .map(|c| match c {
                tabular::Cell::Num(v) => v,
                tabular::Cell::Cat(k) => k as f64,
            })
            .collect())
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(path).map_err(to_py)
    }
}

#[pyclass(name = "Encoder", module = "pysynthleak", frozen)]
struct PyEncoder {
    inner: tabular::Encoder,
}

#[pymethods]
impl PyEncoder {
    #[staticmethod]
    fn fit(table: &PyTable) -> PyResult<Self> {
        Ok(PyEncoder {
            inner: tabular::Encoder::fit(&table.inner).map_err(to_py)?,
        })
    }

    fn width(&self) -> usize {
        self.inner.width()
    }

    /// Encoded feature rows of a table.
    fn encode(&self, table: &PyTable) -> PyResult<Vec<Vec<f64>>> {
        let m = self.inner.encode(&table.inner).map_err(to_py)?;
        Ok(m.rows().map(<[f64]>::to_vec).collect())
    }

    /// Decodes an encoded row to CSV-form strings (features only).
    fn decode(&self, vector: Vec<f64>) -> PyResult<Vec<String>> {
        let row = self.inner.decode(&vector).map_err(to_py)?;
        let schema = self.inner.schema();
        Ok(schema
            .features
            .iter()
            .zip(row)
            .map(|(spec, c)| tabular::format_cell(spec, c))
            .collect())
    }

    fn is_categorical(&self) -> Vec<bool> {
        self.inner
            .schema()
            .features
            .iter()
            .map(|f| f.kind == FeatureKind::Categorical)
            .collect()
    }
}

#[pyfunction]
fn harmonic_mean(distances: Vec<f64>) -> PyResult<f64> {
    selection::harmonic_mean(&distances).map_err(to_py)
}

#[pyfunction]
fn cross_entropy(p: f64, y: f64) -> f64 {
    predictor::cross_entropy(p, y)
}

#[pyfunction]
fn recon_budget(n_train: usize, tau: f64) -> PyResult<usize> {
    selection::recon_budget(n_train, tau).map_err(to_py)
}

/// Row ids in density order (harmonic mean of the k nearest squared distances).
#[pyfunction]
#[pyo3(signature = (points, k = selection::DEFAULT_K))]
fn rank_by_density(points: Vec<Vec<f64>>, k: usize) -> PyResult<Vec<usize>> {
    Ok(selection::rank_by_density(&index(points)?, k).map_err(to_py)?.ids())
}

/// Ids of the recovered set: density ranking followed by neighbour exclusion.
#[pyfunction]
#[pyo3(signature = (points, n_train, tau = selection::DEFAULT_TAU, k = selection::DEFAULT_K))]
fn select_recovered(points: Vec<Vec<f64>>, n_train: usize, tau: f64, k: usize) -> PyResult<Vec<usize>> {
    let ranking = selection::rank_by_density(&index(points)?, k).map_err(to_py)?;
    Ok(selection::select_recovered(&ranking, n_train, tau).map_err(to_py)?.ids())
}

#[pyfunction]
#[pyo3(signature = (points, n_train, tau = selection::DEFAULT_TAU))]
fn ganleaks_rank(points: Vec<Vec<f64>>, n_train: usize, tau: f64) -> PyResult<Vec<usize>> {
    Ok(baselines::ganleaks_rank(&index(points)?, n_train, tau).map_err(to_py)?.ids())
}

#[pyfunction]
fn random_select(n_rows: usize, n_train: usize, tau: f64, seed: u64) -> PyResult<Vec<usize>> {
    Ok(baselines::random_select(n_rows, n_train, tau, seed).map_err(to_py)?.ids())
}

#[pyfunction]
fn dominates(a: [f64; 2], b: [f64; 2]) -> bool {
    nsga2::dominates(&a, &b)
}

#[pyfunction]
fn non_dominated_sort(points: Vec<[f64; 2]>) -> Vec<Vec<usize>> {
    nsga2::non_dominated_sort(&points)
}

#[pyfunction]
fn crowding_distance(front: Vec<[f64; 2]>) -> Vec<f64> {
    nsga2::crowding_distance(&front)
}

/// Centroids of the one-dimensional threshold clustering.
#[pyfunction]
#[pyo3(signature = (values, threshold = metrics::DEFAULT_CLUSTER_THRESHOLD))]
fn fit_feature_clusters(values: Vec<f64>, threshold: f64) -> PyResult<Vec<f64>> {
    Ok(metrics::fit_feature_clusters(&values, threshold)
        .map_err(to_py)?
        .centroids)
}

/// Writes the planted-memorisation benchmark (`schema.toml`, `train.csv`,
/// `synthetic.csv`) into `directory` and returns the planted training ids.
#[pyfunction]
#[pyo3(signature = (directory, seed = 0, n_train = 500, n_planted = 25, copies = 6, n_synthetic = 2000))]
fn write_planted_benchmark(
    directory: PathBuf,
    seed: u64,
    n_train: usize,
    n_planted: usize,
    copies: usize,
    n_synthetic: usize,
) -> PyResult<Vec<usize>> {
    let b = planted::generate(&planted::PlantedConfig {
        n_train,
        n_planted,
        copies,
        n_synthetic,
        seed,
        ..Default::default()
    })
    .map_err(to_py)?;
    std::fs::create_dir_all(&directory)?;
    std::fs::write(directory.join("schema.toml"), b.schema.to_toml_string())?;
    b.train.write_csv(directory.join("train.csv")).map_err(to_py)?;
    b.synthetic.write_csv(directory.join("synthetic.csv")).map_err(to_py)?;
    Ok(b.planted_train_ids)
}

/// Runs the attack described by a TOML config file, writes the report into
/// its output directory and returns the report JSON.
#[pyfunction]
fn attack(config_path: PathBuf) -> PyResult<String> {
    let config = run::RunConfig::load(config_path).map_err(to_py)?;
    Ok(run::cmd_attack(&config).map_err(to_py)?.to_json())
}

/// Scores an attack report against a training table; returns the metrics JSON.
#[pyfunction]
fn evaluate(report_path: PathBuf, training_path: PathBuf, config_path: PathBuf) -> PyResult<String> {
    let config = run::RunConfig::load(config_path).map_err(to_py)?;
    let m = run::cmd_evaluate(&report_path, &training_path, &config).map_err(to_py)?;
    serde_json::to_string_pretty(&m).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Text or markdown summary of a report file.
#[pyfunction]
#[pyo3(signature = (report_path, format = "text"))]
fn report(report_path: PathBuf, format: &str) -> PyResult<String> {
    let format: run::ReportFormat = format.parse().map_err(to_py)?;
    run::cmd_report(&report_path, format).map_err(to_py)
}

#[pymodule]
pub fn pysynthleak(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchema>()?;
    m.add_class::<PyTable>()?;
    m.add_class::<PyEncoder>()?;
    m.add_function(wrap_pyfunction!(harmonic_mean, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(recon_budget, m)?)?;
    m.add_function(wrap_pyfunction!(rank_by_density, m)?)?;
    m.add_function(wrap_pyfunction!(select_recovered, m)?)?;
    m.add_function(wrap_pyfunction!(ganleaks_rank, m)?)?;
    m.add_function(wrap_pyfunction!(random_select, m)?)?;
    m.add_function(wrap_pyfunction!(dominates, m)?)?;
    m.add_function(wrap_pyfunction!(non_dominated_sort, m)?)?;
    m.add_function(wrap_pyfunction!(crowding_distance, m)?)?;
    m.add_function(wrap_pyfunction!(fit_feature_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(write_planted_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
