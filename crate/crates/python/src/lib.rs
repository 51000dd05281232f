//! Python bindings for `rsappm`.
//!
//! Cells, labels and change-points are zero-based, as in the Rust API.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use rsappm::cli;
use rsappm::grid::GridTopology;
use rsappm::model::ScenarioSpec;
use rsappm::partitions::{self, Partition, PriorSampler, PriorSpec, PriorVariant, WeightRule};
use rsappm::sampler::ChainOutput;
use rsappm::summaries;
use rsappm::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for rsappm::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Serializes through JSON into plain Python objects.
fn to_python<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn partition_of(labels: &[usize], n: usize) -> PyResult<Partition> {
    if labels.len() != n {
        return Err(PyValueError::new_err(format!("expected {n} labels, got {}", labels.len())));
    }
    Ok(Partition::from_labels(labels))
}

fn partitions_of(draws: Vec<Vec<usize>>) -> PyResult<Vec<Partition>> {
    let n = draws.first().map_or(0, Vec::len);
    draws.iter().map(|d| partition_of(d, n)).collect()
}

/// Rectangular lattice with 8-neighbour contiguity and column-major cells.
#[pyclass(name = "Grid", module = "rsappm_py", frozen)]
struct PyGrid {
    inner: GridTopology,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(rows: usize, cols: usize) -> PyResult<Self> {
        Ok(Self { inner: GridTopology::new(rows, cols).py()? })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.n_cells()
    }

    fn cell_index(&self, row: usize, col: usize) -> PyResult<usize> {
        if row >= self.inner.rows() || col >= self.inner.cols() {
            return Err(PyValueError::new_err(format!("({row}, {col}) lies outside the grid")));
        }
        Ok(self.inner.cell_index(row, col))
    }

    fn position(&self, cell: usize) -> PyResult<(usize, usize)> {
        self.check(cell)?;
        Ok(self.inner.position(cell))
    }

    fn neighbors(&self, cell: usize) -> PyResult<Vec<usize>> {
        self.check(cell)?;
        Ok(self.inner.neighbors(cell).to_vec())
    }

    /// Twice the number of neighbour pairs with different labels.
    fn total_boundary_length(&self, labels: Vec<usize>) -> PyResult<usize> {
        Ok(self.inner.total_boundary_length(&partition_of(&labels, self.inner.n_cells())?))
    }

    /// Dense Leroux precision `zeta (D - W) + (1 - zeta) I`.
    fn leroux_precision(&self, zeta: f64) -> PyResult<Vec<Vec<f64>>> {
        let q = self.inner.leroux_precision(zeta).py()?.matrix().to_dense();
        Ok(q.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn __repr__(&self) -> String {
        format!("Grid({}, {})", self.inner.rows(), self.inner.cols())
    }
}

impl PyGrid {
    fn check(&self, cell: usize) -> PyResult<()> {
        if cell >= self.inner.n_cells() {
            return Err(PyValueError::new_err(format!("cell {cell} out of range")));
        }
        Ok(())
    }
}

/// Spatial product partition prior.
#[pyclass(name = "PartitionPrior", module = "rsappm_py", frozen)]
struct PyPartitionPrior {
    inner: PriorSpec,
}

#[pymethods]
impl PyPartitionPrior {
    #[new]
    #[pyo3(signature = (kappa = 1.0, xi = 1.0, variant = "appm"))]
    fn new(kappa: f64, xi: f64, variant: &str) -> PyResult<Self> {
        let variant: PriorVariant = variant.parse().py()?;
        Ok(Self { inner: PriorSpec::new(kappa, xi, variant).py()? })
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn xi(&self) -> f64 {
        self.inner.xi
    }

    /// Unnormalised log prior of a labelling.
    fn log_weight(&self, grid: &PyGrid, labels: Vec<usize>) -> PyResult<f64> {
        let p = partition_of(&labels, grid.inner.n_cells())?;
        Ok(partitions::log_prior_unnormalized(&p, &self.inner, &grid.inner))
    }

    /// Every partition of a small grid with its normalised probability.
    fn enumerate(&self, grid: &PyGrid) -> PyResult<Vec<(Vec<usize>, f64)>> {
        let table = partitions::enumerate_prior(&grid.inner, &self.inner).py()?;
        Ok(table.entries().iter().map(|(p, _)| (p.labels().to_vec(), table.probability(p))).collect())
    }

    /// Draws from a prior-only Gibbs chain.
    #[pyo3(signature = (grid, draws, seed = 0, burn_in = 100, thin = 1))]
    fn sample(&self, grid: &PyGrid, draws: usize, seed: u64, burn_in: usize, thin: usize) -> PyResult<Vec<Vec<usize>>> {
        let sampler = PriorSampler { burn_in, thin, rule: WeightRule::Exact };
        let out = sampler.run(&grid.inner, &self.inner, draws, seed).py()?;
        Ok(out.iter().map(|p| p.labels().to_vec()).collect())
    }
}

/// A fitted chain read back from its output directory.
#[pyclass(name = "Chain", module = "rsappm_py", frozen)]
struct PyChain {
    inner: ChainOutput,
}

#[pymethods]
impl PyChain {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: ChainOutput::read_dir(&path).py()? })
    }

    #[getter]
    fn n_draws(&self) -> usize {
        self.inner.draws.len()
    }

    #[getter]
    fn n_regimes(&self) -> usize {
        self.inner.n_regimes()
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.n_cells()
    }

    /// Stored partitions of one regime.
    fn partitions(&self, regime: usize) -> PyResult<Vec<Vec<usize>>> {
        if regime >= self.inner.n_regimes() {
            return Err(PyValueError::new_err(format!("regime {regime} out of range")));
        }
        let parts = self.inner.partitions(regime).py()?;
        Ok(parts.iter().map(|p| p.labels().to_vec()).collect())
    }

    /// Stored change-points, one list per draw.
    fn changepoints(&self) -> Vec<Vec<usize>> {
        self.inner.draws.iter().map(|d| d.changepoints.clone()).collect()
    }

    fn log_likelihoods(&self) -> Vec<f64> {
        self.inner.draws.iter().map(|d| d.log_likelihood).collect()
    }

    /// LPML, WAIC, modal cluster counts and change-point modes.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &cli::chain_summary(&self.inner).py()?)
    }

    fn manifest<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner.manifest())
    }
}

/// Simulates a named scenario into `out` and returns the truth record.
#[pyfunction]
#[pyo3(signature = (scenario, out, seed = 0, sigma2 = None, n_lambda = None))]
fn simulate_data<'py>(
    py: Python<'py>,
    scenario: &str,
    out: PathBuf,
    seed: u64,
    sigma2: Option<f64>,
    n_lambda: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = match (scenario, sigma2, n_lambda) {
        ("multi-regime", s, n) => ScenarioSpec::multi_regime(s.unwrap_or(0.1), n.unwrap_or(5)),
        (_, None, None) => ScenarioSpec::preset(scenario).py()?,
        _ => return Err(PyValueError::new_err("sigma2 and n_lambda apply to multi-regime only")),
    };
    to_python(py, &cli::simulate_data(&spec, seed, &out).py()?)
}

/// Runs the sampler as configured and returns the chain directories.
#[pyfunction]
#[pyo3(signature = (data, config, out, seed = None))]
fn fit(py: Python<'_>, data: PathBuf, config: PathBuf, out: PathBuf, seed: Option<u64>) -> PyResult<Vec<PathBuf>> {
    py.allow_threads(|| cli::fit(&data, &config, &out, seed)).py()
}

/// Writes posterior summaries of a chain directory; `cells` are zero-based.
#[pyfunction]
#[pyo3(signature = (chain, out, cells = Vec::new(), level = 0.95))]
fn summarize<'py>(py: Python<'py>, chain: PathBuf, out: PathBuf, cells: Vec<usize>, level: f64) -> PyResult<Bound<'py, PyAny>> {
    to_python(py, &cli::summarize(&chain, &out, &cells, level).py()?)
}

/// Modal cluster counts, LPML and WAIC per chain directory.
#[pyfunction]
#[pyo3(signature = (chains, out = None))]
fn compare<'py>(py: Python<'py>, chains: Vec<PathBuf>, out: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    to_python(py, &cli::compare(&chains, out.as_deref()).py()?)
}

#[pyfunction]
fn rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    partitions::rand_index(&partition_of(&a, a.len())?, &partition_of(&b, a.len())?).py()
}

#[pyfunction]
fn vi_distance(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    partitions::vi_distance(&partition_of(&a, a.len())?, &partition_of(&b, a.len())?).py()
}

/// Posterior co-clustering frequencies of a list of labellings.
#[pyfunction]
fn coclustering(draws: Vec<Vec<usize>>) -> PyResult<Vec<Vec<f64>>> {
    let cc = summaries::coclustering(&partitions_of(draws)?).py()?;
    Ok(cc.rows().map(<[f64]>::to_vec).collect())
}

/// Point estimate minimising the posterior expected variation of
/// information.
#[pyfunction]
fn vi_point_estimate(draws: Vec<Vec<usize>>) -> PyResult<Vec<usize>> {
    let est = summaries::vi_point_estimate(&partitions_of(draws)?).py()?;
    Ok(est.labels().to_vec())
}

#[pymodule]
fn rsappm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyPartitionPrior>()?;
    m.add_class::<PyChain>()?;
    m.add_function(wrap_pyfunction!(simulate_data, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(vi_distance, m)?)?;
    m.add_function(wrap_pyfunction!(coclustering, m)?)?;
    m.add_function(wrap_pyfunction!(vi_point_estimate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
