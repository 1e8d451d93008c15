//! Python bindings. Reports come back as plain dicts and lists.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use spnorm::experiments::{self, DEFAULT_SCALES};
use spnorm::moments::{self as m, MomentStats};
use spnorm::norm::{Mode, NormKind};
use spnorm::objective::{self, LossTarget};
use spnorm::spnet::{ModelConfig, SpNetModel};
use spnorm::train::{self as tr, TrainConfig};
use spnorm::{checkpoint, pfm, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::NonFinite(_) => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<PyObject> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

fn norm_kind(name: &str) -> PyResult<NormKind> {
    NormKind::ALL
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown norm kind {name:?}")))
}

/// Dense f64 tensor, row-major.
#[pyclass(name = "Tensor", module = "spnorm")]
#[derive(Clone)]
struct PyTensor(spnorm::Tensor);

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
        spnorm::Tensor::new(&shape, data).map(Self).map_err(err)
    }

    #[staticmethod]
    fn zeros(shape: Vec<usize>) -> Self {
        Self(spnorm::Tensor::zeros(&shape))
    }

    #[staticmethod]
    fn full(shape: Vec<usize>, value: f64) -> Self {
        Self(spnorm::Tensor::full(&shape, value))
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.0.shape().to_vec()
    }

    /// Flat values.
    fn tolist(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    fn sum(&self) -> f64 {
        self.0.sum()
    }

    fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    fn __len__(&self) -> usize {
        self.0.numel()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.0.shape())
    }
}

/// An SPNet with its parameters.
#[pyclass(name = "SpNet", module = "spnorm")]
struct PySpNet(SpNetModel);

#[pymethods]
impl PySpNet {
    /// `name` is micro, tiny, small, base or large; `norm` swaps every norm layer.
    #[new]
    #[pyo3(signature = (name = "micro", seed = 0, norm = None))]
    fn new(name: &str, seed: u64, norm: Option<&str>) -> PyResult<Self> {
        let mut cfg = ModelConfig::by_name(name).map_err(err)?;
        if let Some(k) = norm {
            cfg = cfg.with_norm(norm_kind(k)?);
        }
        SpNetModel::new(cfg, seed).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        checkpoint::load(path).map(Self).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        checkpoint::save(&self.0, path).map_err(err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.0.param_count()
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<PyObject> {
        to_py(py, &self.0.config)
    }

    /// Depth for `image [N,3,H,W]` and `sparse [N,1,H,W]`, H and W divisible by 32.
    fn predict(&self, image: &PyTensor, sparse: &PyTensor) -> PyResult<PyTensor> {
        self.0.predict(&image.0, &sparse.0, Mode::Eval).map(PyTensor).map_err(err)
    }

    /// Deviation of the model from exact proportionality and invariance under input rescaling.
    #[pyo3(signature = (image, sparse, scales = None))]
    fn sp_report(&self, py: Python<'_>, image: &PyTensor, sparse: &PyTensor, scales: Option<Vec<f64>>) -> PyResult<PyObject> {
        let scales = scales.unwrap_or(DEFAULT_SCALES.to_vec());
        let r = experiments::model_sp_report(&self.0, &image.0, &sparse.0, &scales).map_err(err)?;
        to_py(py, &r)
    }

    /// Λ of every SP-Norm layer as `(layer, value)` pairs.
    fn lambdas(&self) -> Vec<(String, f64)> {
        self.0.slp_lambdas()
    }
}

#[pyfunction]
fn norm_kinds() -> Vec<&'static str> {
    NormKind::ALL.iter().map(|k| k.name()).collect()
}

#[pyfunction]
#[pyo3(signature = (seed = 0, include_model = true, fault = None))]
fn gradcheck(py: Python<'_>, seed: u64, include_model: bool, fault: Option<&str>) -> PyResult<PyObject> {
    to_py(py, &experiments::gradcheck_suite(seed, include_model, fault).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (trials = 100_000, seed = 0))]
fn moments(py: Python<'_>, trials: usize, seed: u64) -> PyResult<PyObject> {
    to_py(py, &experiments::moments_suite(trials, seed).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (model = "micro", scales = None, seed = 0))]
fn sp_check(py: Python<'_>, model: &str, scales: Option<Vec<f64>>, seed: u64) -> PyResult<PyObject> {
    let base = ModelConfig::by_name(model).map_err(err)?;
    let scales = scales.unwrap_or(DEFAULT_SCALES.to_vec());
    to_py(py, &experiments::sp_check(&base, &scales, seed).map_err(err)?)
}

/// Toy training run. Returns the trained model and the report.
#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (steps = None, seed = 0, preset = "default", lr = None, batch_size = None, size = None, norm = None))]
fn train(
    py: Python<'_>,
    steps: Option<usize>,
    seed: u64,
    preset: &str,
    lr: Option<f64>,
    batch_size: Option<usize>,
    size: Option<usize>,
    norm: Option<&str>,
) -> PyResult<(PySpNet, PyObject)> {
    let mut cfg = match preset {
        "default" => TrainConfig::default(),
        "oracle" => TrainConfig::oracle(),
        p => return Err(PyValueError::new_err(format!("unknown preset {p:?}"))),
    };
    cfg.seed = seed;
    if let Some(s) = steps {
        cfg.steps = s;
    }
    if let Some(lr) = lr {
        cfg.optimizer.lr = lr;
    }
    if let Some(b) = batch_size {
        cfg.batch_size = b;
        cfg.pool_size = cfg.pool_size.max(b);
    }
    if let Some(s) = size {
        (cfg.height, cfg.width) = (s, s);
    }
    if let Some(k) = norm {
        cfg.model = cfg.model.with_norm(norm_kind(k)?);
    }
    let (model, report) = py.allow_threads(|| tr::train(&cfg, |_| {})).map_err(err)?;
    let mut out = serde_json::to_value(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    out["ratio"] = report.ratio().into();
    Ok((PySpNet(model), to_py(py, &out)?))
}

/// Rel/RMSE over the sparsity sweep; `model=None` scores the ground truth itself.
#[pyfunction]
#[pyo3(signature = (model = None, scenes = 16, size = 64, seed = 0))]
fn evaluate(py: Python<'_>, model: Option<&PySpNet>, scenes: usize, size: usize, seed: u64) -> PyResult<PyObject> {
    let held = experiments::heldout_scenes(seed, scenes, size, size).map_err(err)?;
    let levels = experiments::SPARSITY_LEVELS;
    let r = match model {
        Some(m) => experiments::eval_sweep(experiments::model_predictor(&m.0), &held, &levels, seed),
        None => experiments::eval_sweep(experiments::oracle_predictor, &held, &levels, seed),
    }
    .map_err(err)?;
    to_py(py, &r)
}

/// Loss breakdown for prediction `z` against `gt`, all `[N,1,H,W]`.
#[pyfunction]
#[pyo3(signature = (z, gt, gt_mask, sparse = None, sparse_mask = None))]
fn total_loss(
    py: Python<'_>,
    z: &PyTensor,
    gt: &PyTensor,
    gt_mask: &PyTensor,
    sparse: Option<&PyTensor>,
    sparse_mask: Option<&PyTensor>,
) -> PyResult<PyObject> {
    let target = match (sparse, sparse_mask) {
        (Some(s), Some(sm)) => LossTarget::new(gt.0.clone(), gt_mask.0.clone(), s.0.clone(), sm.0.clone()),
        (None, None) => LossTarget::dense(gt.0.clone(), gt_mask.0.clone()),
        _ => return Err(PyValueError::new_err("sparse and sparse_mask go together")),
    }
    .map_err(err)?;
    to_py(py, &objective::total_loss(&z.0, &target).map_err(err)?)
}

/// `(mean, variance)` of a product of independent variables.
#[pyfunction]
fn product_moments(p: (f64, f64), q: (f64, f64)) -> (f64, f64) {
    let r = m::product_moments(MomentStats::new(p.0, p.1), MomentStats::new(q.0, q.1));
    (r.mean, r.variance)
}

/// Λ for an SP-Norm over `n` channels with weight and bias moments `(mean, variance)`.
#[pyfunction]
fn spnorm_lambda(n: usize, w: (f64, f64), b: (f64, f64)) -> f64 {
    m::spnorm_lambda(n, MomentStats::new(w.0, w.1), MomentStats::new(b.0, b.1))
}

#[pyfunction]
fn read_pfm(path: &str) -> PyResult<PyTensor> {
    pfm::read(path).map(PyTensor).map_err(err)
}

#[pyfunction]
fn write_pfm(path: &str, raster: &PyTensor) -> PyResult<()> {
    pfm::write(path, &raster.0).map_err(err)
}

#[pymodule]
#[pyo3(name = "spnorm")]
fn spnorm_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PySpNet>()?;
    m.add_function(wrap_pyfunction!(norm_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(moments, m)?)?;
    m.add_function(wrap_pyfunction!(sp_check, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(product_moments, m)?)?;
    m.add_function(wrap_pyfunction!(spnorm_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(read_pfm, m)?)?;
    m.add_function(wrap_pyfunction!(write_pfm, m)?)?;
    Ok(())
}
