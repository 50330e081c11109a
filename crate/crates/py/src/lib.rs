//! Python bindings. Heavy computations release the GIL.

use std::path::PathBuf;

use blab_core::closed_form::{reward_curve_closed_form, QuadratureSpec};
use blab_core::equilibrium::{user_equilibria_brute, ClosedFormOracle, MonteCarloOracle, UtilityOracle};
use blab_core::experiments::run_scenario as run_scenario_core;
use blab_core::monotonicity::{check_strict_im as strict_im_core, Evaluator};
use blab_core::scenario::{Scenario, ScenarioConfig};
use blab_core::strategic::{alpha_star_report as alpha_star_core, solve_symmetric_equilibrium, DEFAULT_EQUILIBRIUM_GRID};
use blab_core::{estimate_reward_curve, DataMode, Error, GridFunction, RiskySafeConfig, TimeMode};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(blab, InconclusiveError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig(_) | Error::RejectedInput(_) | Error::UnsupportedMode(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Inconclusive { .. } => InconclusiveError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn mode_of(name: &str) -> PyResult<DataMode> {
    match name {
        "separate" => Ok(DataMode::Separate),
        "shared" => Ok(DataMode::Shared),
        other => Err(PyValueError::new_err(format!("unknown data mode '{other}'"))),
    }
}

/// Risky-safe arm problem.
#[pyclass(name = "Config", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyConfig(RiskySafeConfig);

#[pymethods]
impl PyConfig {
    #[staticmethod]
    #[pyo3(signature = (h, l, s, p0, sigma, n_users, horizon, beta=1.0))]
    #[allow(clippy::too_many_arguments)]
    fn discrete(h: f64, l: f64, s: f64, p0: f64, sigma: f64, n_users: usize, horizon: u32, beta: f64) -> PyResult<Self> {
        let c = RiskySafeConfig::discrete(h, l, s, p0, sigma, n_users, horizon, beta);
        c.validate().map_err(to_py)?;
        Ok(PyConfig(c))
    }

    #[staticmethod]
    #[pyo3(signature = (h, l, s, p0, sigma, sigma_b, n_users))]
    fn continuous(h: f64, l: f64, s: f64, p0: f64, sigma: f64, sigma_b: f64, n_users: usize) -> PyResult<Self> {
        let c = RiskySafeConfig::continuous(h, l, s, p0, sigma, sigma_b, n_users);
        c.validate().map_err(to_py)?;
        Ok(PyConfig(c))
    }

    fn with_users(&self, n_users: usize) -> PyResult<Self> {
        let c = self.0.with_users(n_users);
        c.validate().map_err(to_py)?;
        Ok(PyConfig(c))
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.0.n_users
    }

    #[getter]
    fn p0(&self) -> f64 {
        self.0.p0
    }

    #[getter]
    fn continuous_time(&self) -> bool {
        self.0.time_mode == TimeMode::ContinuousUndiscounted
    }

    fn myopic_threshold(&self) -> f64 {
        self.0.myopic_threshold()
    }

    fn __repr__(&self) -> String {
        let c = &self.0;
        format!(
            "Config(h={}, l={}, s={}, p0={}, sigma={}, sigma_b={}, n_users={}, horizon={:?}, beta={})",
            c.h, c.l, c.s, c.p0, c.sigma, c.sigma_b, c.n_users, c.horizon, c.beta
        )
    }
}

/// A map from the posterior to the probability of recommending the risky arm.
#[pyclass(name = "Policy", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPolicy(blab_core::Policy);

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn thompson_sampling() -> Self {
        PyPolicy(blab_core::Policy::ThompsonSampling)
    }

    #[staticmethod]
    fn greedy(config: &PyConfig) -> Self {
        PyPolicy(blab_core::Policy::greedy(&config.0))
    }

    #[staticmethod]
    fn epsilon_thompson(epsilon: f64) -> PyResult<Self> {
        Self::checked(blab_core::Policy::epsilon_thompson(epsilon))
    }

    #[staticmethod]
    fn cutoff(c: f64) -> PyResult<Self> {
        Self::checked(blab_core::Policy::cutoff(c))
    }

    #[staticmethod]
    fn always_safe() -> Self {
        PyPolicy(blab_core::Policy::always_safe())
    }

    #[staticmethod]
    fn uniform_mixture(base: &PyPolicy, epsilon: f64) -> PyResult<Self> {
        Self::checked(blab_core::Policy::UniformMixture {
            base: Box::new(base.0.clone()),
            epsilon,
        })
    }

    #[staticmethod]
    fn mixture(base: &PyPolicy, epsilon: f64, explore: f64) -> PyResult<Self> {
        Self::checked(blab_core::Policy::Mixture {
            base: Box::new(base.0.clone()),
            epsilon,
            explore,
        })
    }

    /// Piecewise-linear policy through `values` on uniform knots over [0, 1].
    #[staticmethod]
    fn grid_function(values: Vec<f64>) -> PyResult<Self> {
        let g = GridFunction::new(values).map_err(to_py)?;
        Self::checked(blab_core::Policy::GridFunction(g))
    }

    fn prob(&self, p: f64) -> PyResult<f64> {
        let state = blab_core::InformationState::new(p).map_err(to_py)?;
        blab_core::policy_eval(&self.0, state).map_err(to_py)
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label()
    }

    fn __repr__(&self) -> String {
        format!("Policy({})", self.0.label())
    }
}

impl PyPolicy {
    fn checked(p: blab_core::Policy) -> PyResult<Self> {
        p.validate().map_err(to_py)?;
        Ok(PyPolicy(p))
    }
}

/// `R(n)` for `n = 1..N` with half-widths: simulated in discrete time,
/// closed form in continuous time.
#[pyfunction]
#[pyo3(signature = (config, policy, replications=100_000, seed=0))]
fn reward_curve(
    py: Python<'_>,
    config: &PyConfig,
    policy: &PyPolicy,
    replications: u64,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let (cfg, pol) = (config.0.clone(), policy.0.clone());
    let curve = py
        .detach(|| match cfg.time_mode {
            TimeMode::Discrete => estimate_reward_curve(&cfg, &pol, replications, seed),
            TimeMode::ContinuousUndiscounted => {
                reward_curve_closed_form(&pol, &cfg, &QuadratureSpec::default())
            }
        })
        .map_err(to_py)?;
    Ok((curve.values, curve.half_widths))
}

/// Pure user equilibria as strings of platform labels, one per user.
#[pyfunction]
#[pyo3(signature = (config, a1, a2, mode="separate", tau=0.0, replications=100_000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn user_equilibria(
    py: Python<'_>,
    config: &PyConfig,
    a1: &PyPolicy,
    a2: &PyPolicy,
    mode: &str,
    tau: f64,
    replications: u64,
    seed: u64,
) -> PyResult<Vec<String>> {
    let mode = mode_of(mode)?;
    let (cfg, a1, a2) = (config.0.clone(), a1.0.clone(), a2.0.clone());
    let set = py
        .detach(|| {
            let oracle: Box<dyn UtilityOracle> = match cfg.time_mode {
                TimeMode::Discrete => Box::new(MonteCarloOracle::new(&cfg, replications, seed)?),
                TimeMode::ContinuousUndiscounted => {
                    Box::new(ClosedFormOracle::new(&cfg, QuadratureSpec::default())?)
                }
            };
            user_equilibria_brute(&a1, &a2, mode, oracle.as_ref(), tau)
        })
        .map_err(to_py)?;
    Ok(set.profiles.iter().map(|p| p.to_string()).collect())
}

/// Symmetric equilibrium of the shared-data game: knot values of `f*` and
/// the ends of its zero and one regions.
#[pyfunction]
#[pyo3(signature = (config, grid_size=DEFAULT_EQUILIBRIUM_GRID))]
fn symmetric_equilibrium(config: &PyConfig, grid_size: usize) -> PyResult<(Vec<f64>, f64, f64)> {
    let eq = solve_symmetric_equilibrium(&config.0, grid_size).map_err(to_py)?;
    let g = &eq.f_star;
    let values = (0..g.knots()).map(|i| g.eval(g.knot(i))).collect();
    Ok((values, eq.zero_region_end, eq.one_region_start))
}

#[pyfunction]
fn alpha_star_report<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.0.clone();
    let g = py
        .detach(|| alpha_star_core(&cfg, &QuadratureSpec::default()))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("alpha_star", g.alpha_star)?;
    d.set_item("single_opt", g.single_opt)?;
    d.set_item("team_opt", g.team_opt)?;
    d.set_item("margins", g.margins)?;
    d.set_item("error_budget", g.error_budget)?;
    d.set_item("single_cutoff", g.single_cutoff)?;
    d.set_item("team_cutoff", g.team_cutoff)?;
    d.set_item("degenerate", g.degenerate)?;
    Ok(d)
}

/// Strict information monotonicity verdict: "holds", "fails" or
/// "inconclusive".
#[pyfunction]
#[pyo3(signature = (config, policy, replications=100_000, seed=0, level=0.01))]
fn check_strict_im(
    py: Python<'_>,
    config: &PyConfig,
    policy: &PyPolicy,
    replications: u64,
    seed: u64,
    level: f64,
) -> PyResult<String> {
    let (cfg, pol) = (config.0.clone(), policy.0.clone());
    let eval = match cfg.time_mode {
        TimeMode::Discrete => Evaluator::MonteCarlo { replications, seed },
        TimeMode::ContinuousUndiscounted => Evaluator::ClosedForm(QuadratureSpec::default()),
    };
    let v = py
        .detach(|| strict_im_core(&pol, &cfg, &eval, level))
        .map_err(to_py)?;
    Ok(format!("{:?}", v.verdict).to_lowercase())
}

/// Runs a scenario file without writing outputs. Returns the status
/// ("ok" or "inconclusive") and the result rows as dicts.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, path: PathBuf) -> PyResult<(String, Vec<Bound<'py, PyDict>>)> {
    let record = py
        .detach(|| {
            let sc = Scenario::resolve(ScenarioConfig::from_path(&path)?)?;
            run_scenario_core(&sc)
        })
        .map_err(to_py)?;
    let mut rows = Vec::with_capacity(record.rows.len());
    for r in &record.rows {
        let d = PyDict::new(py);
        d.set_item("experiment", &r.experiment)?;
        d.set_item("quantity", &r.quantity)?;
        d.set_item("value", r.value)?;
        d.set_item("half_width", r.half_width)?;
        d.set_item("n", r.n)?;
        d.set_item("policy", &r.policy)?;
        d.set_item("tags", &r.tags)?;
        rows.push(d);
    }
    let status = format!("{:?}", record.status).to_lowercase();
    Ok((status, rows))
}

/// Names of the built-in policy kinds.
#[pyfunction]
fn policy_kinds() -> Vec<&'static str> {
    blab_core::policy::builtin_policy_kinds()
        .into_iter()
        .map(|k| k.name)
        .collect()
}

#[pymodule]
fn blab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyPolicy>()?;
    m.add("InconclusiveError", m.py().get_type::<InconclusiveError>())?;
    m.add_function(wrap_pyfunction!(reward_curve, m)?)?;
    m.add_function(wrap_pyfunction!(user_equilibria, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_star_report, m)?)?;
    m.add_function(wrap_pyfunction!(check_strict_im, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(policy_kinds, m)?)?;
    Ok(())
}
