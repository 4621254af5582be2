//! Python bindings: meshes, random fields, PG-LOD and NN-LOD solves, and the
//! patch network. Vectors cross the boundary as plain lists of floats.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use stochlod::config::ExperimentConfig;
use stochlod::lod::solve_pglod;
use stochlod::mlp::{load_checkpoint, save_checkpoint, MlpModel};
use stochlod::pipeline::{self, assemble_nn_surrogate};
use stochlod::randfield::{self, FieldKind, FieldRealization, GaussianSampler, MaternParams};

create_exception!(stochlod_py, StochlodError, PyException);

fn err(e: stochlod::Error) -> PyErr {
    match e {
        stochlod::Error::InvalidParameter(_) | stochlod::Error::InvalidGrid(_) | stochlod::Error::Shape(_) => {
            PyValueError::new_err(e.to_string())
        }
        e => StochlodError::new_err(e.to_string()),
    }
}

const SOLVE_TOL: f64 = 1e-12;

/// Coarse grid, coefficient mesh and corrector mesh with patch order `ell`.
#[pyclass(module = "stochlod_py", name = "Discretization", frozen)]
struct PyDiscretization {
    inner: pipeline::Discretization,
}

impl PyDiscretization {
    fn gaussian(&self, z: Vec<f64>) -> PyResult<FieldRealization> {
        FieldRealization::new(self.inner.field, z, FieldKind::Gaussian).map_err(err)
    }

    fn coefficient(&self, z: Vec<f64>) -> PyResult<FieldRealization> {
        randfield::to_lognormal(&self.gaussian(z)?).map_err(err)
    }
}

#[pymethods]
impl PyDiscretization {
    #[new]
    #[pyo3(signature = (coarse_h, eps, fine_h, ell=2))]
    fn new(coarse_h: f64, eps: f64, fine_h: f64, ell: usize) -> PyResult<Self> {
        Ok(Self {
            inner: pipeline::Discretization::new(coarse_h, eps, fine_h, ell).map_err(err)?,
        })
    }

    #[getter]
    fn input_len(&self) -> usize {
        self.inner.input_len()
    }

    #[getter]
    fn output_len(&self) -> usize {
        self.inner.output_len()
    }

    #[getter]
    fn num_elements(&self) -> usize {
        self.inner.coarse.num_elements()
    }

    #[getter]
    fn num_field_cells(&self) -> usize {
        self.inner.field.num_cells()
    }

    #[getter]
    fn num_coarse_dofs(&self) -> usize {
        self.inner.coarse.num_interior_nodes()
    }

    /// Gaussian field `Z` (one value per coefficient cell).
    #[pyo3(signature = (sigma2, nu, kappa, seed, index=0))]
    fn sample_gaussian(&self, sigma2: f64, nu: f64, kappa: f64, seed: u64, index: u64) -> PyResult<Vec<f64>> {
        let p = MaternParams::new(sigma2, nu, kappa).map_err(err)?;
        let s = GaussianSampler::new(p, self.inner.field).map_err(err)?;
        Ok(s.sample(seed, index).map_err(err)?.into_values())
    }

    /// Network inputs `R_T Z`, one row per coarse element.
    fn patch_inputs(&self, z: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let x = self.inner.patch_inputs(&self.gaussian(z)?).map_err(err)?;
        Ok(x.outer_iter().map(|r| r.to_vec()).collect())
    }

    /// Flattened local PG-LOD matrices of `exp(Z)`, one per element.
    fn local_surrogates(&self, py: Python<'_>, z: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let a = self.coefficient(z)?;
        let locals = py.detach(|| self.inner.local_surrogates(&a)).map_err(err)?;
        Ok(locals.into_iter().map(|l| l.into_vec()).collect())
    }

    /// PG-LOD solution at the interior coarse nodes.
    #[pyo3(signature = (z, f=1.0))]
    fn pglod_solve(&self, py: Python<'_>, z: Vec<f64>, f: f64) -> PyResult<Vec<f64>> {
        let a = self.coefficient(z)?;
        py.detach(|| {
            let s = self.inner.pglod_matrix(&a)?;
            solve_pglod(&s, &self.inner.coarse_load(f)?, SOLVE_TOL)
        })
        .map_err(err)
    }

    /// Fine FEM solution restricted to the interior coarse nodes.
    #[pyo3(signature = (z, f=1.0))]
    fn fem_solve(&self, py: Python<'_>, z: Vec<f64>, f: f64) -> PyResult<Vec<f64>> {
        let a = self.coefficient(z)?;
        py.detach(|| Ok(self.inner.solve_fem(&a, f)?.coarse_nodal())).map_err(err)
    }

    /// NN-LOD solution with the network surrogate.
    #[pyo3(signature = (model, z, f=1.0))]
    fn nn_solve(&self, py: Python<'_>, model: &PyMlp, z: Vec<f64>, f: f64) -> PyResult<Vec<f64>> {
        let z = self.gaussian(z)?;
        py.detach(|| {
            let s = assemble_nn_surrogate(&model.inner, &z, &self.inner)?;
            solve_pglod(&s, &self.inner.coarse_load(f)?, SOLVE_TOL)
        })
        .map_err(err)
    }

    /// `L2(D)` norm of a coarse function given at the interior nodes.
    fn coarse_l2_norm(&self, v: Vec<f64>) -> PyResult<f64> {
        if v.len() != self.inner.coarse.num_interior_nodes() {
            return Err(PyValueError::new_err("wrong number of coarse values"));
        }
        Ok(stochlod::lod::coarse_l2_norm(&self.inner.coarse, &v))
    }
}

/// Dense ReLU network mapping patch inputs to flattened local matrices.
#[pyclass(module = "stochlod_py", name = "Mlp")]
struct PyMlp {
    inner: MlpModel,
}

#[pymethods]
impl PyMlp {
    #[new]
    #[pyo3(signature = (widths, seed=0))]
    fn new(widths: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: MlpModel::he_uniform(&widths, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_checkpoint(&path).map_err(err)?.model,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.inner, None, serde_json::Value::Null).map_err(err)
    }

    #[getter]
    fn widths(&self) -> Vec<usize> {
        self.inner.widths()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.num_parameters()
    }

    fn forward(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(PyValueError::new_err("rows have different lengths"));
        }
        let x = Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect())
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let y = self.inner.forward(x.view()).map_err(err)?;
        Ok(y.outer_iter().map(|r| r.to_vec()).collect())
    }
}

/// Whittle-Matérn covariance at distance `r`.
#[pyfunction]
fn matern_cov(sigma2: f64, nu: f64, kappa: f64, r: f64) -> PyResult<f64> {
    let p = MaternParams::new(sigma2, nu, kappa).map_err(err)?;
    randfield::matern_cov(&p, r).map_err(err)
}

/// `max / min` of a positive field.
#[pyfunction]
fn contrast(values: Vec<f64>) -> PyResult<f64> {
    randfield::contrast_of(&values).map_err(err)
}

/// Realizations per split under the 80:10:10 rule.
#[pyfunction]
fn split_counts(n: usize) -> (usize, usize, usize) {
    pipeline::split_counts(n)
}

/// Generates a dataset from a JSON config; returns the manifest as JSON.
#[pyfunction]
fn generate_dataset(py: Python<'_>, config_json: &str, dir: PathBuf) -> PyResult<String> {
    let cfg: ExperimentConfig = serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let m = py.detach(|| pipeline::generate_dataset(&cfg, &dir)).map_err(err)?;
    serde_json::to_string(&m).map_err(|e| StochlodError::new_err(e.to_string()))
}

/// The default configuration as JSON.
#[pyfunction]
fn default_config() -> String {
    serde_json::to_string_pretty(&ExperimentConfig::default()).expect("config serializes")
}

#[pymodule]
fn stochlod_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("StochlodError", m.py().get_type::<StochlodError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDiscretization>()?;
    m.add_class::<PyMlp>()?;
    m.add_function(wrap_pyfunction!(matern_cov, m)?)?;
    m.add_function(wrap_pyfunction!(contrast, m)?)?;
    m.add_function(wrap_pyfunction!(split_counts, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    Ok(())
}
