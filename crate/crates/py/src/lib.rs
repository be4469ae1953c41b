//! Python bindings: demo collection, pretraining, fine-tuning, evaluation
//! and the degradation arithmetic. Heavy calls release the interpreter lock.

use std::path::PathBuf;

use membot_core::checkpoint::Checkpoint;
use membot_core::cli::{eval_seeds, load_demos};
use membot_core::config::Config;
use membot_core::envs::{collect_demos, make_task, write_demos};
use membot_core::eval::{self, EvalResult};
use membot_core::finetune::run_finetuning;
use membot_core::pretrain::run_pretraining;
use membot_core::{Error, Variant};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        e if e.is_usage() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn config_from(text: Option<&str>) -> PyResult<Config> {
    let c = match text {
        Some(t) => Config::from_toml(t).map_err(py_err)?,
        None => Config::default(),
    };
    c.validate().map_err(py_err)?;
    Ok(c)
}

fn result_dict<'py>(py: Python<'py>, r: &EvalResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("method", &r.method)?;
    d.set_item("task", r.task.name())?;
    d.set_item("p", r.p)?;
    d.set_item("episodes", r.n_episodes)?;
    d.set_item("successes", r.successes)?;
    d.set_item("success_rate", r.success_rate)?;
    d.set_item("success_std", r.success_std)?;
    d.set_item("mean_return", r.mean_return)?;
    d.set_item("return_std", r.return_std)?;
    Ok(d)
}

/// A belief-encoder agent with its policy, critics and normalizers.
#[pyclass(name = "Agent", module = "membot")]
struct PyAgent {
    inner: membot_core::agent::Agent,
}

#[pymethods]
impl PyAgent {
    #[new]
    #[pyo3(signature = (variant, obs_width, action_dim, width=128, head_hidden=256, seed=0))]
    fn new(
        variant: &str,
        obs_width: usize,
        action_dim: usize,
        width: usize,
        head_hidden: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let v: Variant = variant.parse().map_err(py_err)?;
        let dims = membot_core::agent::ModelDims {
            width,
            head_hidden,
            ..Default::default()
        };
        let inner =
            membot_core::agent::Agent::new(v, obs_width, action_dim, dims, seed).map_err(py_err)?;
        Ok(PyAgent { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = Checkpoint::load(&path)
            .and_then(|c| c.agent())
            .map_err(py_err)?;
        Ok(PyAgent { inner })
    }

    /// Writes a checkpoint readable by `membot evaluate` and `membot sweep`.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        let mut ck = Checkpoint::new();
        ck.set("kind", "agent");
        ck.put_agent(&self.inner);
        ck.save(&path).map_err(py_err)
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.name()
    }

    /// Method label used in result tables.
    #[getter]
    fn tag(&self) -> &'static str {
        self.inner.variant.tag()
    }

    #[getter]
    fn obs_width(&self) -> usize {
        self.inner.obs_width()
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    /// Parameter count of the belief network and policy.
    #[getter]
    fn num_params(&self) -> usize {
        use membot_core::diffmath::Parameterized;
        self.inner.net.num_params() + self.inner.policy.num_params()
    }

    #[pyo3(signature = (task, p=1.0, episodes=100, seeds=3, seed=0))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        task: &str,
        p: f64,
        episodes: usize,
        seeds: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let t = make_task(task, seed).map_err(py_err)?;
        let agent = &self.inner;
        let r = py
            .detach(|| eval::evaluate(agent, &t, p, episodes, &eval_seeds(seed, seeds)))
            .map_err(py_err)?;
        result_dict(py, &r)
    }

    fn __repr__(&self) -> String {
        format!(
            "Agent(variant='{}', obs_width={}, action_dim={})",
            self.inner.variant.name(),
            self.inner.obs_width(),
            self.inner.action_dim()
        )
    }
}

/// Writes `episodes` expert demonstrations to `path`; returns
/// `(episodes, pairs)`.
#[pyfunction]
#[pyo3(signature = (task, path, episodes=60, max_len=40, seed=0))]
fn collect(
    py: Python<'_>,
    task: &str,
    path: PathBuf,
    episodes: usize,
    max_len: usize,
    seed: u64,
) -> PyResult<(usize, usize)> {
    let t = make_task(task, seed).map_err(py_err)?;
    py.detach(|| {
        let eps = collect_demos(&t, episodes, max_len, seed)?;
        write_demos(&path, &t, &eps)?;
        Ok((eps.len(), eps.iter().map(|e| e.len()).sum()))
    })
    .map_err(py_err)
}

/// Pretrains on demo files. `config` is TOML text. Returns the agent and the
/// loss curve as `(iteration, bc, recon, total, recon_mse, p_mask)` rows.
#[pyfunction]
#[pyo3(signature = (demos, variant="lstm", config=None, seed=0))]
#[allow(clippy::type_complexity)]
fn pretrain(
    py: Python<'_>,
    demos: Vec<PathBuf>,
    variant: &str,
    config: Option<&str>,
    seed: u64,
) -> PyResult<(PyAgent, Vec<(usize, f64, f64, f64, f64, f64)>)> {
    let v: Variant = variant.parse().map_err(py_err)?;
    let cfg = config_from(config)?;
    let out = py
        .detach(|| {
            let data = load_demos(&demos)?;
            run_pretraining(&data, cfg.pretrain_config(v), seed)
        })
        .map_err(py_err)?;
    let rows = out
        .curve
        .rows
        .iter()
        .map(|r| {
            (
                r.iteration,
                r.bc_loss,
                r.recon_loss,
                r.total,
                r.recon_mse,
                r.p_mask,
            )
        })
        .collect();
    Ok((PyAgent { inner: out.agent }, rows))
}

/// Fine-tunes a copy of `agent` on `task`. Returns the new agent and the
/// `(env_step, eval_success, eval_return, critic_loss, actor_loss, alpha)`
/// rows.
#[pyfunction]
#[pyo3(signature = (agent, task, steps=None, p_obs=None, demos=None, config=None, seed=0))]
#[allow(clippy::type_complexity, clippy::too_many_arguments)]
fn finetune(
    py: Python<'_>,
    agent: PyRef<'_, PyAgent>,
    task: &str,
    steps: Option<usize>,
    p_obs: Option<f64>,
    demos: Option<Vec<PathBuf>>,
    config: Option<&str>,
    seed: u64,
) -> PyResult<(PyAgent, Vec<(usize, f64, f64, f64, f64, f64)>)> {
    let mut cfg = config_from(config)?;
    if let Some(s) = steps {
        cfg.steps = s;
    }
    if let Some(p) = p_obs {
        cfg.p_obs = p;
    }
    cfg.validate().map_err(py_err)?;
    let t = make_task(task, seed).map_err(py_err)?;
    let start = agent.inner.clone();
    let out = py
        .detach(|| {
            let data = demos.as_deref().map(load_demos).transpose()?;
            run_finetuning(
                start,
                &t,
                data.as_ref(),
                &cfg.finetune_config(t.kind()),
                seed,
            )
        })
        .map_err(py_err)?;
    let rows = out
        .curve
        .rows
        .iter()
        .map(|r| {
            (
                r.env_step,
                r.eval_success,
                r.eval_return,
                r.critic_loss,
                r.actor_loss,
                r.alpha,
            )
        })
        .collect();
    Ok((PyAgent { inner: out.agent }, rows))
}

/// Scripted expert under dropout `p`.
#[pyfunction]
#[pyo3(signature = (task, p=1.0, episodes=100, seeds=3, seed=0))]
fn evaluate_expert<'py>(
    py: Python<'py>,
    task: &str,
    p: f64,
    episodes: usize,
    seeds: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let t = make_task(task, seed).map_err(py_err)?;
    let r = py
        .detach(|| eval::evaluate_expert(&t, p, episodes, &eval_seeds(seed, seeds)))
        .map_err(py_err)?;
    result_dict(py, &r)
}

/// `(perf_p − perf_full) / perf_full`; raises ValueError for a zero baseline.
#[pyfunction]
fn relative_degradation(perf_p: f64, perf_full: f64) -> PyResult<f64> {
    eval::relative_degradation(perf_p, perf_full).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Largest gap in percentage points between recomputed and published
/// degradation, and the number of entries compared.
#[pyfunction]
fn reference_arithmetic_check() -> PyResult<(f64, usize)> {
    eval::reference_arithmetic_check().map_err(py_err)
}

/// Expands `start:stop:step` or a comma list into probabilities.
#[pyfunction]
fn parse_grid(grid: &str) -> PyResult<Vec<f64>> {
    eval::parse_grid(grid).map_err(py_err)
}

#[pymodule]
fn membot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(collect, m)?)?;
    m.add_function(wrap_pyfunction!(pretrain, m)?)?;
    m.add_function(wrap_pyfunction!(finetune, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_expert, m)?)?;
    m.add_function(wrap_pyfunction!(relative_degradation, m)?)?;
    m.add_function(wrap_pyfunction!(reference_arithmetic_check, m)?)?;
    m.add_function(wrap_pyfunction!(parse_grid, m)?)?;
    Ok(())
}
