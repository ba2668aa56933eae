//! Python bindings. Images cross the boundary as flat row-major lists with
//! an explicit shape so the module has no numpy dependency.

use std::path::Path;

use gradsim::adjoint::{rollout, EpisodeTape};
use gradsim::config::SceneConfig;
use gradsim::estimation::{self, Channel, LossMode, LossSpec, Method, OptimizerConfig, ParamSelector};
use gradsim::render::Image;
use gradsim::scenarios::{self as sc, Episode as CoreEpisode};
use gradsim::SimError;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(gradsim, DivergenceError, PyRuntimeError);

fn py_err(e: SimError) -> PyErr {
    if e.is_divergence() {
        DivergenceError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn selectors(names: &[String]) -> PyResult<Vec<ParamSelector>> {
    names.iter().map(|n| ParamSelector::parse(n).map_err(py_err)).collect()
}

fn image_dict<'py>(py: Python<'py>, img: &Image) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("shape", (img.height(), img.width(), img.channels()))?;
    d.set_item("data", img.data().to_vec())?;
    Ok(d)
}

/// A scene with its initial state and rollout settings.
#[pyclass(module = "gradsim", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Episode {
    inner: CoreEpisode,
}

#[pymethods]
impl Episode {
    /// Builds an episode from a JSON scene file. Relative mesh and texture
    /// paths resolve against the file's directory.
    #[staticmethod]
    fn from_config(path: &str) -> PyResult<Episode> {
        let p = Path::new(path);
        let cfg = SceneConfig::from_path(p).map_err(py_err)?;
        let inner = cfg.build(p.parent().unwrap_or(Path::new("."))).map_err(py_err)?;
        Ok(Episode { inner })
    }

    /// One of the built-in scenes: cube, deformable_cube, bounce, beam,
    /// walker, cloth, projectile, pendulum.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Episode> {
        let inner = match name {
            "cube" => sc::CubeSetup::default().episode(),
            "deformable_cube" => sc::CubeSetup { model: sc::BodyModel::Deformable, ..Default::default() }.episode(),
            "bounce" => sc::BounceSetup::default().episode(),
            "beam" => sc::BeamSetup::default().episode(),
            "walker" => sc::WalkerSetup::default().episode(),
            "cloth" => sc::ClothSetup::default().episode(),
            "projectile" => sc::ProjectileSetup::default().episode(),
            "pendulum" => sc::PendulumSetup::default().episode(),
            other => return Err(PyValueError::new_err(format!("unknown scene {other:?}"))),
        }
        .map_err(py_err)?;
        Ok(Episode { inner })
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.options.dt
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.options.horizon
    }

    #[getter]
    fn frame_count(&self) -> usize {
        self.inner.options.frame_count()
    }

    /// Current value of a quantity such as `"mass:0"` or `"mu_c"`.
    fn get(&self, selector: &str) -> PyResult<f64> {
        let s = ParamSelector::parse(selector).map_err(py_err)?;
        let e = &self.inner.scenario;
        s.get(&e.scene, &e.params, &e.state).map_err(py_err)
    }

    /// Copy of the episode with one quantity replaced.
    fn with_value(&self, selector: &str, value: f64) -> PyResult<Episode> {
        let s = ParamSelector::parse(selector).map_err(py_err)?;
        let mut out = self.inner.clone();
        let e = &mut out.scenario;
        s.set(&e.scene, &mut e.params, &mut e.state, value).map_err(py_err)?;
        Ok(Episode { inner: out })
    }

    fn rollout(&self, py: Python<'_>) -> PyResult<Tape> {
        let e = &self.inner;
        let tape = py.detach(|| rollout(&e.scenario.scene, &e.scenario.params, &e.scenario.state, &e.options)).map_err(py_err)?;
        Ok(Tape { inner: tape })
    }
}

/// Recorded states and frames of one rollout.
#[pyclass(module = "gradsim", frozen)]
struct Tape {
    inner: EpisodeTape,
}

#[pymethods]
impl Tape {
    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    /// Names of the entries of each row returned by `states`.
    fn columns(&self) -> Vec<String> {
        self.inner.state(0).column_names()
    }

    /// One flat row per state, the initial state first.
    fn states(&self) -> Vec<Vec<f64>> {
        (0..=self.inner.horizon()).map(|t| self.inner.state(t).to_row()).collect()
    }

    /// Rendered frames as dicts with `rgb` and `silhouette` images.
    fn frames<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .frames
            .iter()
            .map(|f| {
                let d = PyDict::new(py);
                d.set_item("step", f.state_index)?;
                d.set_item("rgb", image_dict(py, &f.frame.rgb)?)?;
                d.set_item("silhouette", image_dict(py, &f.frame.silhouette)?)?;
                Ok(d)
            })
            .collect()
    }
}

/// Video-supervised estimation: the target video is rendered from
/// `truth`, gradients flow through `model`.
#[pyclass(module = "gradsim", frozen)]
struct Problem {
    inner: estimation::Problem,
}

#[pymethods]
impl Problem {
    #[new]
    #[pyo3(signature = (truth, model, loss = "all", channel = "rgb"))]
    fn new(truth: &Episode, model: &Episode, loss: &str, channel: &str) -> PyResult<Problem> {
        let mode = match loss {
            "all" => LossMode::AllFrames,
            "first_last" => LossMode::FirstLast,
            "last" => LossMode::LastFrame,
            other => return Err(PyValueError::new_err(format!("unknown loss mode {other:?}"))),
        };
        let channel = match channel {
            "rgb" => Channel::Rgb,
            "silhouette" => Channel::Silhouette,
            other => return Err(PyValueError::new_err(format!("unknown channel {other:?}"))),
        };
        let inner = estimation::Problem::from_episodes(&truth.inner, &model.inner, LossSpec { mode, channel }).map_err(py_err)?;
        Ok(Problem { inner })
    }

    fn loss(&self, py: Python<'_>, params: Vec<String>, values: Vec<f64>) -> PyResult<f64> {
        let sel = selectors(&params)?;
        py.detach(|| self.inner.loss_at(&sel, &values)).map_err(py_err)
    }

    /// `(loss, gradient)` at the given values.
    fn loss_and_grad(&self, py: Python<'_>, params: Vec<String>, values: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        let sel = selectors(&params)?;
        let (l, g, _) = py.detach(|| self.inner.loss_and_grad(&sel, &values)).map_err(py_err)?;
        Ok((l, g))
    }

    /// Runs Adam (or plain gradient descent with `sgd=True`) and returns a
    /// dict with the best values and the loss trace. `monotone=True`
    /// rejects steps that raise the loss.
    #[pyo3(signature = (params, init, iterations = 100, lr = None, sgd = false, monotone = false))]
    fn estimate<'py>(
        &self,
        py: Python<'py>,
        params: Vec<String>,
        init: Vec<f64>,
        iterations: usize,
        lr: Option<f64>,
        sgd: bool,
        monotone: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let sel = selectors(&params)?;
        let method = if sgd { Method::Sgd } else { Method::Adam };
        let opt = OptimizerConfig { method, lr, monotone, ..OptimizerConfig::adam(iterations) };
        let r = py.detach(|| estimation::estimate(&self.inner, &sel, &init, &opt)).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("labels", r.labels)?;
        d.set_item("values", r.values)?;
        d.set_item("loss_trace", r.loss_trace)?;
        d.set_item("param_trace", r.param_trace)?;
        Ok(d)
    }

    /// `(value, loss)` pairs over `grid`; divergent points give infinity.
    fn sweep(&self, py: Python<'_>, param: &str, grid: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
        let sel = ParamSelector::parse(param).map_err(py_err)?;
        py.detach(|| estimation::sweep_landscape(&self.inner, &sel, &grid)).map_err(py_err)
    }
}

/// Steps (frames) per second for forward simulation, rendering and the
/// reverse pass on a beam of roughly `tets` tetrahedra.
#[pyfunction]
#[pyo3(name = "bench", signature = (tets, steps = 100))]
fn run_bench<'py>(py: Python<'py>, tets: usize, steps: usize) -> PyResult<Bound<'py, PyDict>> {
    let r = py.detach(|| gradsim::bench::bench(tets, steps)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("tets", r.tets)?;
    d.set_item("forward_hz", r.forward_hz)?;
    d.set_item("render_hz", r.render_hz)?;
    d.set_item("backward_hz", r.backward_hz)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "gradsim")]
fn gradsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Episode>()?;
    m.add_class::<Tape>()?;
    m.add_class::<Problem>()?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    Ok(())
}
