//! Python bindings for the simulator: build instances, run single seeded
//! episodes or whole experiment batches, and poke at the protocol
//! utilities from Python.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mmab::arena::{run_episode_with, BanditInstance, Feedback};
use mmab::harness::{checkpoints, run_batch, ExperimentConfig};
use mmab::rng::{derive_seed, stream};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_feedback(s: &str) -> PyResult<Feedback> {
    match s {
        "collision_sensing" => Ok(Feedback::CollisionSensing),
        "no_sensing" => Ok(Feedback::NoSensing),
        other => Err(value_err(format!(
            "unknown feedback {other:?}, expected \"collision_sensing\" or \"no_sensing\""
        ))),
    }
}

/// A Bernoulli bandit instance with a fixed player entry schedule.
#[pyclass(frozen)]
struct Instance {
    inner: BanditInstance,
}

#[pymethods]
impl Instance {
    #[new]
    #[pyo3(signature = (means, horizon, entries, feedback = "no_sensing"))]
    fn new(means: Vec<f64>, horizon: u64, entries: Vec<u64>, feedback: &str) -> PyResult<Self> {
        let inner = BanditInstance::bernoulli(means, horizon, entries, parse_feedback(feedback)?)
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn arms(&self) -> usize {
        self.inner.arms()
    }

    #[getter]
    fn players(&self) -> usize {
        self.inner.players()
    }

    #[getter]
    fn horizon(&self) -> u64 {
        self.inner.horizon
    }

    #[getter]
    fn means(&self) -> Vec<f64> {
        self.inner.means.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(arms={}, players={}, horizon={})",
            self.inner.arms(),
            self.inner.players(),
            self.inner.horizon
        )
    }
}

/// The centralized oracle allocation: which arm each player would be
/// pinned to by entry order.
#[pyfunction]
fn oracle_assignment(means: Vec<f64>, entries: Vec<u64>) -> Vec<usize> {
    mmab::baselines::oracle_assignment(&means, &entries)
}

/// One draw of the stochastic integer quantizer used by the in-band
/// communication protocol.
#[pyfunction]
fn quantize(value: f64, bits_minus_one: u32, seed: u64) -> u64 {
    let mut rng = stream(seed, "quantize", 0);
    mmab::sic_mmab::quantize(value, bits_minus_one, &mut rng)
}

fn episode_summary<'py>(
    py: Python<'py>,
    cfg: &ExperimentConfig,
    run_index: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let instance = cfg.instance().map_err(value_err)?;
    let mut policies = cfg.policies(&instance);
    let seed = derive_seed(cfg.seed, "run", run_index);
    let outcome = run_episode_with(&instance, &mut policies, seed, |_, _| {}).map_err(value_err)?;
    let ledger = outcome.ledger;

    let marks = checkpoints(instance.horizon);
    let regret_at: Vec<f64> = marks.iter().map(|&t| ledger.cum_regret[(t - 1) as usize]).collect();
    let collisions: u64 = ledger.collisions.iter().map(|&c| c as u64).sum();

    let out = PyDict::new(py);
    out.set_item("seed", seed)?;
    out.set_item("flagged", outcome.flagged)?;
    out.set_item("final_regret", *ledger.cum_regret.last().unwrap())?;
    out.set_item("final_realized_regret", *ledger.cum_realized_regret.last().unwrap())?;
    out.set_item("collisions", collisions)?;
    out.set_item("exploit_arms", ledger.per_player_exploit_arm.clone())?;
    out.set_item("checkpoints", marks)?;
    out.set_item("regret_at_checkpoints", regret_at)?;
    Ok(out)
}

/// Runs one seeded episode described by an experiment config (JSON, same
/// schema as the CLI) and returns its summary as a dict.
#[pyfunction]
#[pyo3(signature = (config_json, run_index = 0))]
fn run_episode<'py>(
    py: Python<'py>,
    config_json: &str,
    run_index: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(value_err)?;
    episode_summary(py, &cfg, run_index)
}

/// Runs the full experiment batch, writes `runs.csv` / `summary.json`
/// into `out_dir` (when given) and returns the aggregate report as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir = None))]
fn run_experiment(config_json: &str, out_dir: Option<&str>) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(value_err)?;
    let report = run_batch(&cfg, out_dir.map(std::path::Path::new)).map_err(value_err)?;
    serde_json::to_string(&report).map_err(value_err)
}

#[pymodule]
fn mmab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_function(wrap_pyfunction!(oracle_assignment, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
