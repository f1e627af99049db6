//! Python bindings: configs, scenes, the model, data generation, metrics,
//! training and SVG plots.

use std::path::PathBuf;

use pyo3::exceptions::{PyKeyError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use equiforecast::config::Config;
use equiforecast::data::{generate_scenes, ForecastFile, ScenarioKind, ScenarioSpec, SceneFile};
use equiforecast::error::Error;
use equiforecast::objective::{loss_breakdown, metric_report};
use equiforecast::plot::render_svg as render;
use equiforecast::predictor::Model;
use equiforecast::scene::{constant_velocity_baseline, select_trajectories, ForecastSet, GroundTruth, Point, Scene, Se2Transform};
use equiforecast::train::{check_dataset, train as train_model, Checkpoint, TrainOutput};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Track = Vec<Point>;

#[pyclass(name = "Config", module = "pyequiforecast")]
struct PyConfig {
    inner: Config,
}

#[pymethods]
impl PyConfig {
    /// Defaults, with keyword overrides such as `Config(heads=3, map_mode="none")`.
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = Config::default();
        if let Some(d) = overrides {
            for (k, v) in d.iter() {
                inner.set(&k.extract::<String>()?, &v.str()?.to_string()).map_err(err)?;
            }
        }
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn tiny() -> Self {
        Self { inner: Config::tiny() }
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Config::from_text(text).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.set(key, &value.str()?.to_string()).map_err(err)?;
        next.validate().map_err(err)?;
        self.inner = next;
        Ok(())
    }

    /// Field values as strings, keyed by name.
    fn as_dict(&self) -> Vec<(String, String)> {
        self.inner.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    fn __getattr__<'py>(&self, py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
        let c = &self.inner;
        let int = |v: usize| Ok(v.into_pyobject(py)?.into_any());
        let float = |v: f64| Ok(v.into_pyobject(py)?.into_any());
        match name {
            "t_in" => int(c.t_in),
            "t_out" => int(c.t_out),
            "agents" => int(c.agents),
            "lanes" => int(c.lanes),
            "lane_points" => int(c.lane_points),
            "heads" => int(c.heads),
            "cycles" => int(c.cycles),
            "hidden_dim" => int(c.hidden_dim),
            "epochs" => int(c.epochs),
            "batch_size" => int(c.batch_size),
            "checkpoint_every" => int(c.checkpoint_every),
            "seed" => Ok(c.seed.into_pyobject(py)?.into_any()),
            "beta" => float(c.beta),
            "learning_rate" => float(c.learning_rate),
            "miss_threshold" => float(c.miss_threshold),
            "sample_rate_hz" => float(c.sample_rate_hz),
            "map_mode" => Ok(c.map_mode.to_string().into_pyobject(py)?.into_any()),
            _ => Err(PyKeyError::new_err(name.to_string())),
        }
    }

    fn __repr__(&self) -> String {
        let fields: Vec<String> = self.inner.entries().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("Config({})", fields.join(", "))
    }
}

#[pyclass(name = "Scene", module = "pyequiforecast")]
struct PyScene {
    inner: Scene,
}

#[pymethods]
impl PyScene {
    #[new]
    #[pyo3(signature = (histories, agent_mask, lanes, lane_mask))]
    fn new(histories: Vec<Track>, agent_mask: Vec<bool>, lanes: Vec<Track>, lane_mask: Vec<bool>) -> Self {
        Self {
            inner: Scene {
                histories,
                agent_mask,
                lanes,
                lane_mask,
            },
        }
    }

    #[getter]
    fn histories(&self) -> Vec<Track> {
        self.inner.histories.clone()
    }

    #[getter]
    fn agent_mask(&self) -> Vec<bool> {
        self.inner.agent_mask.clone()
    }

    #[getter]
    fn lanes(&self) -> Vec<Track> {
        self.inner.lanes.clone()
    }

    #[getter]
    fn lane_mask(&self) -> Vec<bool> {
        self.inner.lane_mask.clone()
    }

    /// Rotate by `angle` radians about the origin, then translate.
    fn transformed(&self, angle: f64, translation: Point) -> Self {
        Self {
            inner: self.inner.transformed(&Se2Transform::new(angle, translation)),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Scene(agents={}, valid={}, history={})",
            self.inner.agent_mask.len(),
            self.inner.valid_agents(),
            self.inner.histories.first().map_or(0, Vec::len)
        )
    }
}

#[pyclass(name = "GroundTruth", module = "pyequiforecast")]
struct PyGroundTruth {
    inner: GroundTruth,
}

#[pymethods]
impl PyGroundTruth {
    #[new]
    fn new(futures: Vec<Track>, agent_mask: Vec<bool>) -> Self {
        Self {
            inner: GroundTruth { futures, agent_mask },
        }
    }

    #[getter]
    fn futures(&self) -> Vec<Track> {
        self.inner.futures.clone()
    }

    #[getter]
    fn agent_mask(&self) -> Vec<bool> {
        self.inner.agent_mask.clone()
    }
}

#[pyclass(name = "Forecast", module = "pyequiforecast")]
struct PyForecast {
    inner: ForecastSet,
}

#[pymethods]
impl PyForecast {
    #[new]
    fn new(trajectories: Vec<Vec<Track>>, probabilities: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = ForecastSet {
            trajectories,
            probabilities,
        };
        let v = inner.validate();
        if !v.is_empty() {
            return Err(err(Error::InvalidForecast(v)));
        }
        Ok(Self { inner })
    }

    /// `agents × heads × horizon` points.
    #[getter]
    fn trajectories(&self) -> Vec<Vec<Track>> {
        self.inner.trajectories.clone()
    }

    #[getter]
    fn probabilities(&self) -> Vec<Vec<f64>> {
        self.inner.probabilities.clone()
    }

    /// Highest-probability head per agent.
    fn selected(&self) -> Vec<Option<usize>> {
        select_trajectories(&self.inner).iter().map(|s| s.map(|s| s.0)).collect()
    }

    fn transformed(&self, angle: f64, translation: Point) -> Self {
        Self {
            inner: self.inner.transformed(&Se2Transform::new(angle, translation)),
        }
    }
}

#[pyclass(name = "Model", module = "pyequiforecast")]
struct PyModel {
    ckpt: Checkpoint,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        Ok(Self {
            ckpt: Checkpoint::new(Model::new(config.inner.clone()).map_err(err)?),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            ckpt: Checkpoint::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.ckpt.save(&path).map_err(err)
    }

    #[getter]
    fn config(&self) -> PyConfig {
        PyConfig {
            inner: self.ckpt.model.config.clone(),
        }
    }

    fn param_count(&self) -> usize {
        self.ckpt.model.param_count()
    }

    /// Parameter count per component.
    fn param_counts(&self) -> Vec<(&'static str, usize)> {
        let c = self.ckpt.model.param_counts();
        vec![
            ("map", c.map),
            ("backbone", c.backbone),
            ("decoder", c.decoder),
            ("probability", c.probability),
            ("total", c.total),
        ]
    }

    fn forecast(&self, scene: &PyScene) -> PyResult<PyForecast> {
        Ok(PyForecast {
            inner: self.ckpt.model.forecast(&scene.inner).map_err(err)?,
        })
    }

    fn forecast_batch(&self, scenes: Vec<PyRef<'_, PyScene>>) -> PyResult<Vec<PyForecast>> {
        let refs: Vec<&Scene> = scenes.iter().map(|s| &s.inner).collect();
        let out = self.ckpt.model.forecast_batch(&refs).map_err(err)?;
        Ok(out.into_iter().map(|inner| PyForecast { inner }).collect())
    }

    /// Train in place for `config.epochs` epochs; returns one dict per epoch.
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        scenes: Vec<PyRef<'_, PyScene>>,
        truths: Vec<PyRef<'_, PyGroundTruth>>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        if scenes.len() != truths.len() {
            return Err(PyValueError::new_err(format!(
                "{} scenes but {} ground truths",
                scenes.len(),
                truths.len()
            )));
        }
        let data: Vec<(&Scene, &GroundTruth)> = scenes.iter().zip(&truths).map(|(s, t)| (&s.inner, &t.inner)).collect();
        let logs = train_model(&mut self.ckpt, &data, &TrainOutput::default(), |_| {}).map_err(err)?;
        logs.iter()
            .map(|l| {
                let d = PyDict::new(py);
                d.set_item("epoch", l.epoch)?;
                d.set_item("loss", l.loss)?;
                d.set_item("trajectory", l.trajectory)?;
                d.set_item("probability", l.probability)?;
                d.set_item("seconds", l.seconds)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Model(parameters={})", self.ckpt.model.param_count())
    }
}

/// Synthetic scenes as `(scene, truth, mode)` triples.
#[pyfunction]
#[pyo3(signature = (kind, n, seed, config=None, modes=3, noise=0.05, speed=10.0, radius=50.0))]
#[allow(clippy::too_many_arguments)]
fn generate(
    kind: &str,
    n: usize,
    seed: u64,
    config: Option<&PyConfig>,
    modes: usize,
    noise: f64,
    speed: f64,
    radius: f64,
) -> PyResult<Vec<(PyScene, PyGroundTruth, usize)>> {
    let cfg = config.map_or_else(Config::default, |c| c.inner.clone());
    let spec = ScenarioSpec {
        kind: kind.parse::<ScenarioKind>().map_err(err)?,
        speed,
        turn_radius: radius,
        mode_count: modes,
        noise,
    };
    let samples = generate_scenes(&spec, &cfg.dims(), cfg.sample_rate_hz, n, seed).map_err(err)?;
    Ok(samples
        .into_iter()
        .map(|s| (PyScene { inner: s.scene }, PyGroundTruth { inner: s.truth }, s.mode))
        .collect())
}

#[pyfunction]
fn constant_velocity(scene: &PyScene, future: usize) -> PyForecast {
    PyForecast {
        inner: constant_velocity_baseline(&scene.inner, future),
    }
}

fn unpack(forecasts: &[PyRef<'_, PyForecast>], truths: &[PyRef<'_, PyGroundTruth>]) -> (Vec<ForecastSet>, Vec<GroundTruth>) {
    (
        forecasts.iter().map(|f| f.inner.clone()).collect(),
        truths.iter().map(|t| t.inner.clone()).collect(),
    )
}

/// minADE, minFDE and miss rate over the first `tau` steps.
#[pyfunction]
#[pyo3(signature = (forecasts, truths, tau, miss_threshold=2.0))]
fn metrics<'py>(
    py: Python<'py>,
    forecasts: Vec<PyRef<'_, PyForecast>>,
    truths: Vec<PyRef<'_, PyGroundTruth>>,
    tau: usize,
    miss_threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (f, t) = unpack(&forecasts, &truths);
    let r = metric_report(&f, &t, tau, miss_threshold).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("min_ade", r.min_ade)?;
    d.set_item("min_fde", r.min_fde)?;
    d.set_item("miss_rate", r.miss_rate)?;
    d.set_item("agents", r.agents)?;
    Ok(d)
}

/// Trajectory, probability and combined loss.
#[pyfunction]
#[pyo3(signature = (forecasts, truths, beta=0.5))]
fn loss<'py>(
    py: Python<'py>,
    forecasts: Vec<PyRef<'_, PyForecast>>,
    truths: Vec<PyRef<'_, PyGroundTruth>>,
    beta: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (f, t) = unpack(&forecasts, &truths);
    let l = loss_breakdown(&f, &t, beta).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("trajectory", l.trajectory)?;
    d.set_item("probability", l.probability)?;
    d.set_item("combined", l.combined)?;
    Ok(d)
}

fn scene_file(scene: &PyScene, truth: Option<&PyGroundTruth>, future: usize, rate: f64) -> PyResult<SceneFile> {
    SceneFile::new(scene.inner.clone(), truth.map(|t| t.inner.clone()), future, rate).map_err(err)
}

/// SVG of a scene with optional ground truth and forecast.
#[pyfunction]
#[pyo3(signature = (scene, truth=None, forecast=None, future=None, sample_rate_hz=10.0))]
fn render_svg(
    scene: &PyScene,
    truth: Option<&PyGroundTruth>,
    forecast: Option<&PyForecast>,
    future: Option<usize>,
    sample_rate_hz: f64,
) -> PyResult<String> {
    let future = future
        .or_else(|| truth.and_then(|t| t.inner.futures.first().map(Vec::len)))
        .or_else(|| forecast.map(|f| f.inner.horizon()))
        .unwrap_or(0);
    let file = scene_file(scene, truth, future, sample_rate_hz)?;
    let forecast = forecast
        .map(|f| ForecastFile::new(f.inner.clone(), scene.inner.agent_mask.clone()))
        .transpose()
        .map_err(err)?;
    render(&file, forecast.as_ref()).map_err(err)
}

#[pyfunction]
fn read_scene(path: PathBuf) -> PyResult<(PyScene, Option<PyGroundTruth>)> {
    let f = SceneFile::read(&path).map_err(err)?;
    Ok((PyScene { inner: f.scene }, f.truth.map(|inner| PyGroundTruth { inner })))
}

#[pyfunction]
#[pyo3(signature = (path, scene, future, truth=None, sample_rate_hz=10.0))]
fn write_scene(path: PathBuf, scene: &PyScene, future: usize, truth: Option<&PyGroundTruth>, sample_rate_hz: f64) -> PyResult<()> {
    scene_file(scene, truth, future, sample_rate_hz)?.write(&path).map_err(err)
}

/// Check that scenes and truths fit `config`; returns the number of pairs.
#[pyfunction]
fn check_scenes(config: &PyConfig, scenes: Vec<PyRef<'_, PyScene>>, truths: Vec<PyRef<'_, PyGroundTruth>>) -> PyResult<usize> {
    let c = &config.inner;
    let files = scenes
        .iter()
        .zip(&truths)
        .map(|(s, t)| scene_file(s, Some(t), c.t_out, c.sample_rate_hz))
        .collect::<PyResult<Vec<_>>>()?;
    Ok(check_dataset(&files, &c.dims()).map_err(err)?.len())
}

#[pymodule]
fn pyequiforecast(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyGroundTruth>()?;
    m.add_class::<PyForecast>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(constant_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(loss, m)?)?;
    m.add_function(wrap_pyfunction!(render_svg, m)?)?;
    m.add_function(wrap_pyfunction!(read_scene, m)?)?;
    m.add_function(wrap_pyfunction!(write_scene, m)?)?;
    m.add_function(wrap_pyfunction!(check_scenes, m)?)?;
    Ok(())
}
