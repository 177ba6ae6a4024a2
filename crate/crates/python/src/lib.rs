//! Python bindings: permeability fields, discretized problems, offline
//! spaces, solves and adaptive runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gmsdg::adaptive::{run_strategy, AdaptiveConfig, ConvergenceRecord, FamilySet, Strategy};
use gmsdg::snapshots::Oversampling;
use gmsdg::solve::Gamma;
use gmsdg::{
    BoundaryData, Discretization, Family, Grid, OfflineSpaces, OfflineState, PermeabilityField, Problem, SourceField,
    SpectralOptions,
};

fn to_py(e: gmsdg::Error) -> PyErr {
    match e {
        gmsdg::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Cell-wise permeability on an `n × n` fine lattice.
#[pyclass(name = "Permeability", module = "gmsdg_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPermeability {
    inner: PermeabilityField,
}

#[pymethods]
impl PyPermeability {
    #[staticmethod]
    #[pyo3(signature = (n, value = 1.0))]
    fn constant(n: usize, value: f64) -> PyResult<Self> {
        Ok(Self {
            inner: PermeabilityField::constant(n, value).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n, contrast = 1e4, seed = 0))]
    fn channels(n: usize, contrast: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: PermeabilityField::channels(n, contrast, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n, contrast = 1e4, seed = 0))]
    fn inclusions(n: usize, contrast: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: PermeabilityField::inclusions(n, contrast, seed).map_err(to_py)?,
        })
    }

    /// Row-major values, `values[iy * nx + ix]`.
    #[staticmethod]
    fn from_values(nx: usize, ny: usize, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: PermeabilityField::new(nx, ny, values).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: PermeabilityField::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        if path.extension().is_some_and(|e| e == "bin") {
            self.inner.save_binary(&path).map_err(to_py)
        } else {
            self.inner.save_text(&path).map_err(to_py)
        }
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.ny(), self.inner.nx())
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn min(&self) -> f64 {
        self.inner.min()
    }

    fn max(&self) -> f64 {
        self.inner.max()
    }

    fn __repr__(&self) -> String {
        format!(
            "Permeability({}x{}, min={}, max={})",
            self.inner.nx(),
            self.inner.ny(),
            self.inner.min(),
            self.inner.max()
        )
    }
}

/// Per-block eigenfunction spectra used to build multiscale spaces.
#[pyclass(name = "OfflineSpaces", module = "gmsdg_py", frozen)]
struct PyOfflineSpaces {
    inner: OfflineSpaces,
}

#[pymethods]
impl PyOfflineSpaces {
    #[getter]
    fn num_blocks(&self) -> usize {
        self.inner.num_blocks()
    }

    #[getter]
    fn has_family2(&self) -> bool {
        self.inner.options.family2
    }

    /// Eigenvalues of family 1 or 2 on one block.
    #[pyo3(signature = (block, family = 1))]
    fn eigenvalues(&self, block: usize, family: u8) -> PyResult<Vec<f64>> {
        if block >= self.inner.num_blocks() {
            return Err(PyValueError::new_err(format!("block {block} out of range")));
        }
        let fam = parse_family(family)?;
        self.inner
            .block(block)
            .eigen(fam)
            .map(|e| e.values.clone())
            .ok_or_else(|| PyValueError::new_err("family 2 spectrum was not computed"))
    }

    /// `λ_max / H` of the family-1 spectrum per block.
    fn trace_constants(&self) -> Vec<f64> {
        gmsdg::cli::trace_constants(&self.inner)
    }

    /// Number of basis functions with the first `l1` and `l2` eigenfunctions
    /// of each block.
    #[pyo3(signature = (l1, l2 = 0))]
    fn dof(&self, l1: usize, l2: usize) -> usize {
        OfflineState::initial(&self.inner, l1, l2).dof()
    }
}

fn parse_family(f: u8) -> PyResult<Family> {
    match f {
        1 => Ok(Family::One),
        2 => Ok(Family::Two),
        _ => Err(PyValueError::new_err(format!("family must be 1 or 2, got {f}"))),
    }
}

fn record_dict<'py>(py: Python<'py>, r: &ConvergenceRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("m", r.m)?;
    d.set_item("strategy", r.strategy.name())?;
    d.set_item("dof", r.dof)?;
    d.set_item("e2", r.e2)?;
    d.set_item("ea", r.ea)?;
    d.set_item("e2_snap", r.e2_snap)?;
    d.set_item("ea_snap", r.ea_snap)?;
    d.set_item("sum_eta2", r.sum_eta2)?;
    d.set_item("k_marked", r.k_marked)?;
    d.set_item("n_added", r.n_added)?;
    d.set_item("n_removed", r.n_removed)?;
    d.set_item("seconds", r.seconds)?;
    d.set_item("converged", r.converged)?;
    Ok(d)
}

/// A discretized high-contrast problem on the unit square.
///
/// `source` is `"constant"` or `"two-region"`; `boundary` is `"bilinear"`
/// (g = xy) or `"zero"`; `gamma` is a number or `None` for the automatic
/// choice.
#[pyclass(name = "Problem", module = "gmsdg_py", frozen)]
struct PyProblem {
    disc: Discretization,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (nc, nf, kappa, source = "constant", amplitude = 1.0, boundary = "bilinear", gamma = Some(16.0)))]
    fn new(
        nc: usize,
        nf: usize,
        kappa: &PyPermeability,
        source: &str,
        amplitude: f64,
        boundary: &str,
        gamma: Option<f64>,
    ) -> PyResult<Self> {
        let grid = Grid::unit(nc, nf).map_err(to_py)?;
        let n = nc * nf;
        let source = match source {
            "constant" => SourceField::constant(n, amplitude),
            "two-region" => SourceField::two_region(n, amplitude),
            other => return Err(PyValueError::new_err(format!("unknown source `{other}`"))),
        };
        let boundary = match boundary {
            "bilinear" => BoundaryData::Bilinear,
            "zero" => BoundaryData::Zero,
            other => return Err(PyValueError::new_err(format!("unknown boundary data `{other}`"))),
        };
        let gamma = match gamma {
            Some(g) => Gamma::Fixed(g),
            None => Gamma::Auto { alpha: 2.0 },
        };
        let problem = Problem::new(grid, kappa.inner.clone())
            .with_source(source)
            .with_boundary(boundary)
            .with_gamma(gamma);
        Ok(Self {
            disc: Discretization::new(&problem).map_err(to_py)?,
        })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.disc.gamma()
    }

    #[getter]
    fn num_fine_dofs(&self) -> usize {
        self.disc.grid().num_fine_dofs()
    }

    /// `(x, y)` of every fine DG node, block by block.
    fn node_coords(&self) -> Vec<(f64, f64)> {
        let g = self.disc.grid();
        (0..g.num_blocks())
            .flat_map(|b| (0..g.nodes_per_block()).map(move |n| (b, n)))
            .map(|(b, n)| {
                let [x, y] = g.node_coords(b, n);
                (x, y)
            })
            .collect()
    }

    /// Fine-grid DG solution.
    fn solve_fine(&self, py: Python<'_>) -> PyResult<Vec<f64>> {
        py.detach(|| self.disc.solve_fine().map(|s| s.fine)).map_err(to_py)
    }

    #[pyo3(signature = (family2 = true, m_max = Some(64), oversampling = false, halo = 1, n_pod = 40))]
    fn build_spaces(
        &self,
        py: Python<'_>,
        family2: bool,
        m_max: Option<usize>,
        oversampling: bool,
        halo: usize,
        n_pod: usize,
    ) -> PyResult<PyOfflineSpaces> {
        let options = SpectralOptions {
            family2,
            m_max,
            oversampling: oversampling.then_some(Oversampling { halo, n_pod }),
        };
        let inner = py.detach(|| self.disc.build_spaces(options)).map_err(to_py)?;
        Ok(PyOfflineSpaces { inner })
    }

    /// Solution in the space of the first `l1` family-1 and `l2` family-2
    /// eigenfunctions of every block.
    #[pyo3(signature = (spaces, l1 = 4, l2 = 0))]
    fn solve_coarse(&self, py: Python<'_>, spaces: &PyOfflineSpaces, l1: usize, l2: usize) -> PyResult<Vec<f64>> {
        if l2 > 0 && !spaces.inner.options.family2 {
            return Err(PyValueError::new_err("family 2 spectrum was not computed"));
        }
        let state = OfflineState::initial(&spaces.inner, l1, l2);
        py.detach(|| self.disc.solve_coarse(&spaces.inner, &state).map(|s| s.fine))
            .map_err(to_py)
    }

    /// Relative `(L², energy)` errors of `u` against `reference`.
    fn relative_errors(&self, u: Vec<f64>, reference: Vec<f64>) -> PyResult<(f64, f64)> {
        let n = self.disc.grid().num_fine_dofs();
        if u.len() != n || reference.len() != n {
            return Err(PyValueError::new_err(format!("expected vectors of length {n}")));
        }
        self.disc.relative_errors(&u, &reference).map_err(to_py)
    }

    /// Run an enrichment strategy and return one dict per iteration.
    #[pyo3(signature = (
        spaces, strategy = "adaptive", theta = None, delta0 = 0.75, epsilon = 1e-12,
        max_iterations = 10, max_dof = None, l1 = 4, l2 = 0, families = "v1",
        uniform_increment = 4, snapshot_reference = false
    ))]
    #[allow(clippy::too_many_arguments)]
    fn run<'py>(
        &self,
        py: Python<'py>,
        spaces: &PyOfflineSpaces,
        strategy: &str,
        theta: Option<f64>,
        delta0: f64,
        epsilon: f64,
        max_iterations: usize,
        max_dof: Option<usize>,
        l1: usize,
        l2: usize,
        families: &str,
        uniform_increment: usize,
        snapshot_reference: bool,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let strategy: Strategy = strategy.parse().map_err(to_py)?;
        let families: FamilySet = families.parse().map_err(to_py)?;
        let theta = theta.unwrap_or(if strategy == Strategy::Pursuit { 0.8 } else { 0.4 });
        let config = AdaptiveConfig {
            strategy,
            theta,
            delta0,
            epsilon,
            max_iterations,
            max_dof,
            l1,
            l2,
            families,
            uniform_increment,
            record_time: false,
        };
        let records = py
            .detach(|| -> gmsdg::Result<Vec<ConvergenceRecord>> {
                let fine = self.disc.solve_fine()?;
                let snap = if snapshot_reference {
                    Some(self.disc.solve_snapshot(&spaces.inner)?)
                } else {
                    None
                };
                Ok(run_strategy(&self.disc, &spaces.inner, &config, &fine, snap.as_ref())?.records)
            })
            .map_err(to_py)?;
        records.iter().map(|r| record_dict(py, r)).collect()
    }
}

/// Run a configuration file and return its convergence history.
#[pyfunction]
#[pyo3(signature = (path, out_dir = None))]
fn run_config<'py>(py: Python<'py>, path: PathBuf, out_dir: Option<PathBuf>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let config = gmsdg::cli::RunConfig::load(&path).map_err(to_py)?;
    let art = py
        .detach(|| gmsdg::cli::run(&config, out_dir.as_deref()))
        .map_err(to_py)?;
    art.records.iter().map(|r| record_dict(py, r)).collect()
}

/// Generate a permeability file from `name[:key=value,...]`.
#[pyfunction]
fn gen_kappa(spec: &str, out: PathBuf) -> PyResult<()> {
    gmsdg::cli::gen_kappa(spec, &out).map_err(to_py)
}

/// Number of leading entries of a descending list capturing a `theta`
/// fraction of its sum.
#[pyfunction]
fn dorfler_mark(eta2_desc: Vec<f64>, theta: f64) -> usize {
    gmsdg::adaptive::dorfler_mark(&eta2_desc, theta)
}

#[pyfunction]
fn choose_s(values: Vec<f64>, l: usize, delta0: f64) -> usize {
    gmsdg::adaptive::choose_s(&values, l, delta0)
}

#[pymodule]
fn gmsdg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPermeability>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyOfflineSpaces>()?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(gen_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(dorfler_mark, m)?)?;
    m.add_function(wrap_pyfunction!(choose_s, m)?)?;
    m.add("STRATEGIES", Strategy::ALL.iter().map(|s| s.name()).collect::<Vec<_>>())?;
    Ok(())
}
