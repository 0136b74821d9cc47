//! `edac_lab`: Python access to environments, datasets, training and the
//! math validators. Structured results cross the boundary as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use edac_core::algorithms::{TrainConfig, TrainerState};
use edac_core::analysis::{self, checks};
use edac_core::cli::{self, RunConfig};
use edac_core::datagen::{self, OfflineDataset};
use edac_core::env::{EnvSpec, EnvState, ScoreAnchors};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Serializable value to a Python object via `json.loads`.
fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (s,))
}

fn from_py<T: serde::de::DeserializeOwned>(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let s: String = py
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&s).map_err(value_err)
}

/// One episode of an environment. `step` advances the internal state.
#[pyclass(module = "edac_lab")]
struct Env {
    spec: EnvSpec,
    state: Option<EnvState>,
}

#[pymethods]
impl Env {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Env {
            spec: EnvSpec::by_name(name).map_err(value_err)?,
            state: None,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.spec.state_dim
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.spec.action_dim
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let s = self.spec.reset(seed);
        let obs = s.obs.clone();
        self.state = Some(s);
        obs
    }

    /// Returns `(obs, reward, done)`.
    fn step(&mut self, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool)> {
        let s = self
            .state
            .as_ref()
            .ok_or_else(|| runtime_err("call reset() first"))?;
        let r = self.spec.step(s, &action).map_err(value_err)?;
        let out = (r.state.obs.clone(), r.reward, r.done);
        self.state = Some(r.state);
        Ok(out)
    }
}

/// A loaded `.odrl` dataset with its metadata.
#[pyclass(module = "edac_lab")]
struct Dataset {
    inner: OfflineDataset,
    path: PathBuf,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Dataset {
            inner: datagen::load(&path).map_err(value_err)?,
            path,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.transitions.len()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.transitions.state_dim()
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.transitions.action_dim()
    }

    #[getter]
    fn meta<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.meta)
    }

    fn mean_reward(&self) -> f64 {
        self.inner.transitions.mean_reward()
    }

    /// `(s, a, r, s_next, done)` of transition `i`.
    #[allow(clippy::type_complexity)]
    fn transition(&self, i: usize) -> PyResult<(Vec<f64>, Vec<f64>, f64, Vec<f64>, bool)> {
        if i >= self.inner.transitions.len() {
            return Err(PyIndexError::new_err(format!(
                "transition {i} out of range"
            )));
        }
        let t = self.inner.transitions.get(i);
        Ok((t.s.to_vec(), t.a.to_vec(), t.r, t.s_next.to_vec(), t.done))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({}, {} {}, {} transitions)",
            self.path.display(),
            self.inner.meta.env.name,
            self.inner.meta.tier,
            self.inner.transitions.len()
        )
    }
}

/// Offline learner bound to a dataset. `config` takes the keys of the
/// `train` section of a run config; missing keys keep their defaults.
#[pyclass(module = "edac_lab")]
struct Trainer {
    state: TrainerState,
    data: OfflineDataset,
}

#[pymethods]
impl Trainer {
    #[new]
    #[pyo3(signature = (dataset, config=None))]
    fn new(
        py: Python<'_>,
        dataset: &Dataset,
        config: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<Self> {
        let cfg: TrainConfig = match config {
            Some(d) => from_py(py, d.as_any())?,
            None => TrainConfig::default(),
        };
        let t = &dataset.inner.transitions;
        let state = TrainerState::new(cfg, t.state_dim(), t.action_dim()).map_err(value_err)?;
        Ok(Trainer {
            state,
            data: dataset.inner.clone(),
        })
    }

    #[getter]
    fn step_count(&self) -> u64 {
        self.state.step()
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.state.config)
    }

    /// Runs `steps` updates and returns the metrics of the last one.
    #[pyo3(signature = (steps=1))]
    fn train<'py>(&mut self, py: Python<'py>, steps: u64) -> PyResult<Bound<'py, PyAny>> {
        if steps == 0 {
            return Err(value_err("steps must be at least 1"));
        }
        let mut last = None;
        for _ in 0..steps {
            last = Some(
                self.state
                    .train_step(&self.data.transitions)
                    .map_err(runtime_err)?,
            );
        }
        to_py(py, &last)
    }

    /// Clip-penalty report on dataset states against the given behavior policy checkpoints.
    #[pyo3(signature = (path, samples=1024, seed=0))]
    fn penalty_report<'py>(
        &self,
        py: Python<'py>,
        path: PathBuf,
        samples: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let behavior = cli::behavior_policies(&path, &self.data).map_err(value_err)?;
        let r = analysis::penalty_report(
            &self.state.ensemble,
            &self.data.transitions,
            &behavior,
            samples,
            seed,
        )
        .map_err(value_err)?;
        to_py(py, &r)
    }

    /// `(min, mean)` pairwise input-gradient cosine on dataset pairs.
    #[pyo3(signature = (samples=1024, seed=0))]
    fn cos_sim(&self, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
        let c =
            analysis::dataset_cos_sim(&self.state.ensemble, &self.data.transitions, samples, seed)
                .map_err(value_err)?;
        Ok((c.min, c.mean))
    }

    fn save_checkpoint(&self, path: PathBuf) -> PyResult<()> {
        self.state.to_checkpoint().save(&path).map_err(runtime_err)
    }
}

/// Trains reference policies and writes one dataset tier; returns the summary line.
#[pyfunction]
#[pyo3(signature = (path, env="pointmass1d", tier="medium", n=20_000, seed=0))]
fn generate_dataset(path: PathBuf, env: &str, tier: &str, n: usize, seed: u64) -> PyResult<String> {
    let mut cfg = RunConfig::default();
    cfg.env.name = env.to_string();
    cfg.data.tier = tier.parse().map_err(value_err)?;
    cfg.data.n = n;
    cfg.data.seed = seed;
    Ok(cli::generate_dataset(&cfg, &path)
        .map_err(value_err)?
        .summary())
}

/// Deterministic evaluation of a checkpoint (or the uniform agent when `checkpoint` is None).
#[pyfunction]
#[pyo3(signature = (data, checkpoint=None, episodes=10, seed=0))]
fn evaluate<'py>(
    py: Python<'py>,
    data: PathBuf,
    checkpoint: Option<PathBuf>,
    episodes: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = RunConfig::default();
    cfg.data.path = Some(data);
    cfg.eval.episodes = episodes;
    cfg.eval.seed = seed;
    let r = cli::evaluate(&cfg, checkpoint.as_deref()).map_err(value_err)?;
    to_py(py, &r)
}

#[pyfunction]
fn normalized_score(ret: f64, random_ref: f64, expert_ref: f64) -> PyResult<f64> {
    let a = ScoreAnchors::new(random_ref, expert_ref).map_err(value_err)?;
    edac_core::env::normalized_score(ret, &a).map_err(value_err)
}

#[pyfunction]
fn norm_quantile(p: f64) -> f64 {
    analysis::norm_quantile(p)
}

#[pyfunction]
fn expected_min_approx(m: f64, sigma: f64, n: usize) -> f64 {
    analysis::expected_min_approx(m, sigma, n)
}

/// Eigen-decomposition of the member-gradient covariance; returns a dict.
#[pyfunction]
fn variance_spectrum<'py>(py: Python<'py>, grads: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let s = analysis::variance_spectrum(&grads).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("eigenvalues", s.eigenvalues.clone())?;
    d.set_item("eigenvectors", s.eigenvectors.clone())?;
    d.set_item("total_variance", s.total_variance)?;
    d.set_item("mean_norm", s.mean_norm)?;
    d.set_item("lambda_min", s.lambda_min())?;
    Ok(d)
}

/// `(name, measured, tolerance, passed)` for every math validator.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn math_suite(seed: u64) -> Vec<(String, f64, f64, bool)> {
    checks::math_suite(seed)
        .into_iter()
        .map(|c| (c.name, c.measured, c.tolerance, c.passed))
        .collect()
}

/// `(name, rel_err, tolerance, passed)` for the finite-difference gradient suite.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn gradient_suite(seed: u64) -> PyResult<Vec<(String, f64, f64, bool)>> {
    Ok(edac_core::algorithms::gradcheck::run_suite(seed)
        .map_err(runtime_err)?
        .into_iter()
        .map(|c| (c.name.to_string(), c.rel_err, c.tol, c.passed()))
        .collect())
}

#[pymodule]
fn edac_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Env>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Trainer>()?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_score, m)?)?;
    m.add_function(wrap_pyfunction!(norm_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(expected_min_approx, m)?)?;
    m.add_function(wrap_pyfunction!(variance_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(math_suite, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_suite, m)?)?;
    Ok(())
}
