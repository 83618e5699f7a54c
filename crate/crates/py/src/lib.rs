//! Python bindings. Matrices cross the boundary as lists of rows, vectors as
//! flat lists, sequences as lists of vectors.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lqc_trust::controllers::PredictionWindow;
use lqc_trust::experiment::{ControllerSpec, ExperimentConfig, SweepRow};
use lqc_trust::riccati::{solve_dare, DareOptions, RiccatiSolution, SystemMatrices};
use lqc_trust::scenarios::{self, NoiseKind, NoiseModel};
use lqc_trust::simulation::{self, CartPoleParams, Rollout};
use lqc_trust::{metrics, Error};

fn to_py(err: Error) -> PyErr {
    let msg = err.to_string();
    match err.root() {
        Error::MissingFile(_) => PyFileNotFoundError::new_err(msg),
        Error::BadInput(_) | Error::Config(_) | Error::Parse { .. } | Error::Validation { .. } => {
            PyValueError::new_err(msg)
        }
        _ => PyRuntimeError::new_err(msg),
    }
}

fn matrix(rows: Vec<Vec<f64>>, name: &str) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{name}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn seq_in(seq: Vec<Vec<f64>>) -> Vec<DVector<f64>> {
    seq.into_iter().map(DVector::from_vec).collect()
}

fn seq_out(seq: &[DVector<f64>]) -> Vec<Vec<f64>> {
    seq.iter().map(|v| v.as_slice().to_vec()).collect()
}

/// Linear system `(A, B)` with stage costs `(Q, R)`.
#[pyclass(name = "System", module = "lqc_trust", frozen)]
struct PySystem {
    inner: SystemMatrices,
}

#[pymethods]
impl PySystem {
    #[new]
    #[pyo3(signature = (a, b, q, r, semidefinite_q = false))]
    fn new(
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        semidefinite_q: bool,
    ) -> PyResult<Self> {
        let (a, b, q, r) = (matrix(a, "A")?, matrix(b, "B")?, matrix(q, "Q")?, matrix(r, "R")?);
        let inner = if semidefinite_q {
            SystemMatrices::with_semidefinite_q(a, b, q, r)
        } else {
            SystemMatrices::new(a, b, q, r)
        };
        Ok(Self {
            inner: inner.map_err(to_py)?,
        })
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows(self.inner.a())
    }
    #[getter]
    fn b(&self) -> Vec<Vec<f64>> {
        rows(self.inner.b())
    }
    #[getter]
    fn q(&self) -> Vec<Vec<f64>> {
        rows(self.inner.q())
    }
    #[getter]
    fn r(&self) -> Vec<Vec<f64>> {
        rows(self.inner.r())
    }
    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    /// Solves the DARE and caches kernel powers up to `horizon`.
    #[pyo3(signature = (horizon, tol = 1e-12, max_iter = 100_000))]
    fn solve_dare(&self, py: Python<'_>, horizon: usize, tol: f64, max_iter: usize) -> PyResult<PyRiccati> {
        let opts = DareOptions { tol, max_iter };
        let inner = py.detach(|| solve_dare(&self.inner, horizon, opts)).map_err(to_py)?;
        Ok(PyRiccati { inner })
    }

    fn __repr__(&self) -> String {
        format!("System(n={}, m={})", self.inner.state_dim(), self.inner.action_dim())
    }
}

#[pyclass(name = "Riccati", module = "lqc_trust", frozen)]
struct PyRiccati {
    inner: RiccatiSolution,
}

#[pymethods]
impl PyRiccati {
    #[getter]
    fn p(&self) -> Vec<Vec<f64>> {
        rows(self.inner.p())
    }
    #[getter]
    fn k(&self) -> Vec<Vec<f64>> {
        rows(self.inner.k())
    }
    #[getter]
    fn f(&self) -> Vec<Vec<f64>> {
        rows(self.inner.f())
    }
    #[getter]
    fn h(&self) -> Vec<Vec<f64>> {
        rows(self.inner.h())
    }
    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho()
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations()
    }
    #[getter]
    fn residual(&self) -> f64 {
        self.inner.residual()
    }
    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    /// `sum_{tau>=t} (F')^{tau-t} P seq[tau]`.
    fn kernel_sum(&self, t: usize, seq: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let v = self.inner.kernel_sum(t, &seq_in(seq)).map_err(to_py)?;
        Ok(v.as_slice().to_vec())
    }

    fn suffix_sums(&self, seq: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(seq_out(&self.inner.suffix_sums(&seq_in(seq)).map_err(to_py)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "Riccati(n={}, rho={:.6}, horizon={})",
            self.inner.state_dim(),
            self.inner.rho(),
            self.inner.horizon()
        )
    }
}

/// Controller description; build with the static constructors.
#[pyclass(name = "Controller", module = "lqc_trust", frozen)]
struct PyController {
    spec: ControllerSpec,
}

#[pymethods]
impl PyController {
    #[staticmethod]
    fn offline() -> Self {
        Self {
            spec: ControllerSpec::Offline,
        }
    }
    #[staticmethod]
    fn zero() -> Self {
        Self {
            spec: ControllerSpec::Zero,
        }
    }
    #[staticmethod]
    fn one() -> Self {
        Self {
            spec: ControllerSpec::One,
        }
    }
    #[staticmethod]
    fn lambda_confident(lam: f64) -> Self {
        Self {
            spec: ControllerSpec::Lambda { lambda: lam },
        }
    }
    #[staticmethod]
    #[pyo3(signature = (sigma = 1e-9))]
    fn threshold(sigma: f64) -> Self {
        Self {
            spec: ControllerSpec::Threshold { sigma },
        }
    }
    #[staticmethod]
    #[pyo3(signature = (lambda0 = 0.3, clamp = false))]
    fn self_tuning(lambda0: f64, clamp: bool) -> Self {
        Self {
            spec: ControllerSpec::SelfTuning { lambda0, clamp },
        }
    }

    #[getter]
    fn label(&self) -> String {
        self.spec.label()
    }

    fn __repr__(&self) -> String {
        format!("Controller({})", self.spec.label())
    }
}

fn rollout_dict<'py>(py: Python<'py>, r: &Rollout) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("label", &r.label)?;
    d.set_item("states", seq_out(&r.states))?;
    d.set_item("actions", seq_out(&r.actions))?;
    d.set_item("stage_costs", &r.stage_costs)?;
    d.set_item("terminal_cost", r.terminal_cost)?;
    d.set_item("total_cost", r.total_cost)?;
    d.set_item("lambdas", &r.lambdas)?;
    d.set_item("lambda_final", r.lambda_final)?;
    d.set_item("failed_at", r.failed_at)?;
    Ok(d)
}

/// Closed-loop rollout of `controller` on `x_{t+1} = A x_t + B u_t + w_t`.
#[pyfunction]
#[pyo3(signature = (system, riccati, controller, w, w_hat, x0 = None))]
fn rollout<'py>(
    py: Python<'py>,
    system: &PySystem,
    riccati: &PyRiccati,
    controller: &PyController,
    w: Vec<Vec<f64>>,
    w_hat: Vec<Vec<f64>>,
    x0: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let n = system.inner.state_dim();
    let x0 = x0.map_or_else(|| DVector::zeros(n), DVector::from_vec);
    let result = py.detach(|| {
        let window = PredictionWindow::new(seq_in(w), seq_in(w_hat))?;
        let mut c = controller.spec.build(&riccati.inner, &window)?;
        simulation::rollout_linear(&system.inner, &riccati.inner, c.as_mut(), &window, &x0)
    });
    rollout_dict(py, &result.map_err(to_py)?)
}

/// Cart-pole rollout on the nonlinear plant with default physical parameters.
#[pyfunction]
#[pyo3(signature = (horizon, controller, w_hat = None, x0 = None))]
fn rollout_cartpole<'py>(
    py: Python<'py>,
    horizon: usize,
    controller: &PyController,
    w_hat: Option<Vec<Vec<f64>>>,
    x0: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let result = py.detach(|| {
        let params = CartPoleParams::default();
        let inst = scenarios::cartpole_instance(params, horizon)?;
        let ric = lqc_trust::riccati::solve_dare(&inst.sys, horizon, DareOptions::default())?;
        let w_hat = w_hat.map_or_else(|| inst.w.clone(), seq_in);
        let window = PredictionWindow::new(inst.w.clone(), w_hat)?;
        let mut c = controller.spec.build(&ric, &window)?;
        let x0 = x0.map_or_else(|| DVector::zeros(4), DVector::from_vec);
        simulation::rollout_cartpole(&params, &inst.sys, &ric, c.as_mut(), &window, &x0)
    });
    rollout_dict(py, &result.map_err(to_py)?)
}

#[pyfunction]
fn prediction_error(riccati: &PyRiccati, w: Vec<Vec<f64>>, w_hat: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::prediction_error(&riccati.inner, &seq_in(w), &seq_in(w_hat)).map_err(to_py)
}

#[pyfunction]
fn w_bar(riccati: &PyRiccati, w_hat: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::w_bar(&riccati.inner, &seq_in(w_hat)).map_err(to_py)
}

#[pyfunction]
fn self_variation(seq: Vec<Vec<f64>>) -> f64 {
    metrics::self_variation(&seq_in(seq))
}

/// `sum_t psi_t' H psi_t` for the fixed-trust deviations at `lam`.
#[pyfunction]
fn lambda_gap(riccati: &PyRiccati, w: Vec<Vec<f64>>, w_hat: Vec<Vec<f64>>, lam: f64) -> PyResult<f64> {
    let psi = metrics::lambda_confident_deviations(&riccati.inner, &seq_in(w), &seq_in(w_hat), lam).map_err(to_py)?;
    metrics::gap_identity(&riccati.inner, &psi).map_err(to_py)
}

/// `kind` is one of `binomial_scaled`, `gaussian_iid`, `gaussian_scaled_w`.
#[pyfunction]
#[pyo3(signature = (w, kind, param, seed, broadcast = false))]
fn generate_predictions(
    w: Vec<Vec<f64>>,
    kind: &str,
    param: f64,
    seed: u64,
    broadcast: bool,
) -> PyResult<Vec<Vec<f64>>> {
    let kind = match kind {
        "binomial_scaled" => NoiseKind::BinomialScaled,
        "gaussian_iid" => NoiseKind::GaussianIid,
        "gaussian_scaled_w" => NoiseKind::GaussianScaledW,
        other => return Err(PyValueError::new_err(format!("unknown noise kind `{other}`"))),
    };
    let noise = NoiseModel {
        kind,
        param,
        seed,
        broadcast,
    };
    Ok(seq_out(
        &scenarios::generate_predictions(&seq_in(w), &noise).map_err(to_py)?,
    ))
}

/// `(System, w)` for the planar tracking problem.
#[pyfunction]
fn robot_tracking(horizon: usize) -> PyResult<(PySystem, Vec<Vec<f64>>)> {
    let inst = scenarios::robot_tracking_instance(horizon).map_err(to_py)?;
    Ok((PySystem { inner: inst.sys }, seq_out(&inst.w)))
}

/// `(System, w)` for a station with periodic arrivals.
#[pyfunction]
#[pyo3(signature = (chargers, horizon, rate = 0.2, energy_kwh = 5.0))]
fn ev_synthetic(chargers: usize, horizon: usize, rate: f64, energy_kwh: f64) -> PyResult<(PySystem, Vec<Vec<f64>>)> {
    let sessions = scenarios::synthetic_ev_sessions(chargers, horizon, rate, energy_kwh).map_err(to_py)?;
    let inst = scenarios::ev_charging_instance(chargers, horizon, &sessions).map_err(to_py)?;
    Ok((PySystem { inner: inst.sys }, seq_out(&inst.w)))
}

/// `(System, w)` for the linearized cart-pole.
#[pyfunction]
fn cartpole(horizon: usize) -> PyResult<(PySystem, Vec<Vec<f64>>)> {
    let inst = scenarios::cartpole_instance(CartPoleParams::default(), horizon).map_err(to_py)?;
    Ok((PySystem { inner: inst.sys }, seq_out(&inst.w)))
}

fn row_dict<'py>(py: Python<'py>, r: &SweepRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("scenario", &r.scenario)?;
    d.set_item("controller", &r.controller)?;
    d.set_item("noise_level", r.noise_level)?;
    d.set_item("epsilon", r.epsilon)?;
    d.set_item("alg_cost", r.alg_cost)?;
    d.set_item("opt_cost", r.opt_cost)?;
    d.set_item("cr", r.cr)?;
    d.set_item("mu_var_w", r.mu_var_w)?;
    d.set_item("mu_var_wh", r.mu_var_wh)?;
    d.set_item("repetition_index_selected", r.repetition_index_selected)?;
    d.set_item("lambda_final", r.lambda_final)?;
    d.set_item("alg_cost_std", r.alg_cost_std)?;
    d.set_item("survival_steps", r.survival_steps)?;
    Ok(d)
}

/// Checks a TOML sweep config; returns the controller labels.
#[pyfunction]
fn validate_config(config_toml: &str) -> PyResult<Vec<String>> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(to_py)?;
    Ok(cfg.controllers.iter().map(ControllerSpec::label).collect())
}

/// Runs a TOML sweep config and returns one dict per row.
#[pyfunction]
#[pyo3(signature = (config_toml, threads = None))]
fn run_sweep<'py>(py: Python<'py>, config_toml: &str, threads: Option<usize>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(to_py)?;
    let rows = py
        .detach(|| lqc_trust::experiment::run_sweep(&cfg, threads))
        .map_err(to_py)?;
    rows.iter().map(|r| row_dict(py, r)).collect()
}

#[pymodule]
#[pyo3(name = "lqc_trust")]
fn lqc_trust_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyRiccati>()?;
    m.add_class::<PyController>()?;
    m.add_function(wrap_pyfunction!(rollout, m)?)?;
    m.add_function(wrap_pyfunction!(rollout_cartpole, m)?)?;
    m.add_function(wrap_pyfunction!(prediction_error, m)?)?;
    m.add_function(wrap_pyfunction!(w_bar, m)?)?;
    m.add_function(wrap_pyfunction!(self_variation, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_gap, m)?)?;
    m.add_function(wrap_pyfunction!(generate_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(robot_tracking, m)?)?;
    m.add_function(wrap_pyfunction!(ev_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(cartpole, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
