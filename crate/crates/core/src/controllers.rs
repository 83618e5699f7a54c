//! Control policies that consume untrusted disturbance predictions.
//!
//! Every predictive action here has the shape
//!
//! ```text
//! u_t = -(R + B'PB)^-1 B' (P A x_t + lambda * sum_{tau>=t} (F')^{tau-t} P w_hat_tau)
//! ```
//!
//! `lambda = 0` is plain LQR, `lambda = 1` the explicit MPC solution that fully
//! trusts the predictions. The threshold controller switches from the latter
//! to the former once the accumulated prediction error crosses `sigma`; the
//! self-tuning controller picks `lambda_t` online as the minimiser of the
//! cost gap accumulated on the history observed so far.

use std::cell::Cell;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::riccati::RiccatiSolution;

/// True disturbances plus their predictions over a horizon `T`.
///
/// Predictions are public from the start. True disturbances are only handed
/// to controllers through [`CausalView`], which refuses to reveal `w_t` before
/// step `t + 1` and records the furthest index ever read.
#[derive(Debug, Clone)]
pub struct PredictionWindow {
    w_true: Vec<DVector<f64>>,
    w_hat: Vec<DVector<f64>>,
    max_observed: Cell<Option<usize>>,
}

impl PredictionWindow {
    pub fn new(w_true: Vec<DVector<f64>>, w_hat: Vec<DVector<f64>>) -> Result<Self> {
        if w_true.is_empty() {
            return Err(Error::bad_input("horizon must be positive"));
        }
        if w_true.len() != w_hat.len() {
            return Err(Error::bad_input(format!(
                "{} disturbances but {} predictions",
                w_true.len(),
                w_hat.len()
            )));
        }
        let n = w_true[0].len();
        if let Some(t) = w_true.iter().chain(&w_hat).position(|v| v.len() != n) {
            return Err(Error::bad_input(format!("entry {t} does not have dimension {n}")));
        }
        if w_true.iter().chain(&w_hat).any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::bad_input("non-finite disturbance or prediction"));
        }
        Ok(Self {
            w_true,
            w_hat,
            max_observed: Cell::new(None),
        })
    }

    /// Checks `||w_t|| <= w_bar` and `||w_hat_t|| <= w_hat_bar` for every `t`.
    pub fn check_bounds(&self, w_bar: f64, w_hat_bar: f64) -> Result<()> {
        for (t, (w, wh)) in self.w_true.iter().zip(&self.w_hat).enumerate() {
            if w.norm() > w_bar {
                return Err(Error::bad_input(format!(
                    "||w_{t}|| = {} exceeds bound {w_bar}",
                    w.norm()
                )));
            }
            if wh.norm() > w_hat_bar {
                return Err(Error::bad_input(format!(
                    "||w_hat_{t}|| = {} exceeds bound {w_hat_bar}",
                    wh.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.w_true.len()
    }

    pub fn dim(&self) -> usize {
        self.w_true[0].len()
    }

    pub fn predictions(&self) -> &[DVector<f64>] {
        &self.w_hat
    }

    /// The full true sequence, for offline quantities (OPT, error metrics).
    /// Never hand this to an online controller.
    pub fn hindsight(&self) -> &[DVector<f64>] {
        &self.w_true
    }

    /// Furthest true-disturbance index any controller has read.
    pub fn max_observed(&self) -> Option<usize> {
        self.max_observed.get()
    }

    pub fn view(&self, now: usize) -> CausalView<'_> {
        CausalView { window: self, now }
    }

    pub(crate) fn disturbance(&self, t: usize) -> &DVector<f64> {
        &self.w_true[t]
    }
}

/// What a controller may see at step `now`: all predictions and `w_0..w_{now-1}`.
#[derive(Debug, Clone, Copy)]
pub struct CausalView<'a> {
    window: &'a PredictionWindow,
    now: usize,
}

impl<'a> CausalView<'a> {
    pub fn now(&self) -> usize {
        self.now
    }

    pub fn predictions(&self) -> &'a [DVector<f64>] {
        &self.window.w_hat
    }

    pub fn observed(&self, tau: usize) -> Result<&'a DVector<f64>> {
        if tau >= self.now || tau >= self.window.horizon() {
            return Err(Error::CausalityViolation {
                requested: tau,
                now: self.now,
            });
        }
        let seen = &self.window.max_observed;
        seen.set(Some(seen.get().map_or(tau, |m| m.max(tau))));
        Ok(&self.window.w_true[tau])
    }

    /// `w_{now-1}`, or `None` at step 0.
    pub fn last_observed(&self) -> Option<&'a DVector<f64>> {
        if self.now == 0 {
            None
        } else {
            self.observed(self.now - 1).ok()
        }
    }
}

fn predictive_action(ric: &RiccatiSolution, x: &DVector<f64>, lambda: f64, sum: &DVector<f64>) -> DVector<f64> {
    let mut inner = ric.pa() * x;
    inner.axpy(lambda, sum, 1.0);
    -(ric.gain_input() * inner)
}

fn check_step(ric: &RiccatiSolution, t: usize, w_hat: &[DVector<f64>]) -> Result<()> {
    if t >= w_hat.len() {
        return Err(Error::bad_input(format!("step {t} outside horizon {}", w_hat.len())));
    }
    if w_hat.len() > ric.horizon() {
        return Err(Error::bad_input(format!(
            "prediction horizon {} exceeds cached horizon {}",
            w_hat.len(),
            ric.horizon()
        )));
    }
    Ok(())
}

/// Pure LQR: `u = -K x`.
pub fn zero_confident_action(ric: &RiccatiSolution, x: &DVector<f64>) -> Result<DVector<f64>> {
    ric.check_state(x)?;
    Ok(-(ric.k() * x))
}

/// Explicit MPC action that treats `w_hat[t..]` as the true future.
pub fn one_confident_action(
    ric: &RiccatiSolution,
    x: &DVector<f64>,
    t: usize,
    w_hat: &[DVector<f64>],
) -> Result<DVector<f64>> {
    lambda_confident_action(ric, x, t, w_hat, 1.0)
}

/// Trust-weighted action. Defined for any finite `lambda`.
pub fn lambda_confident_action(
    ric: &RiccatiSolution,
    x: &DVector<f64>,
    t: usize,
    w_hat: &[DVector<f64>],
    lambda: f64,
) -> Result<DVector<f64>> {
    if !lambda.is_finite() {
        return Err(Error::bad_input(format!(
            "trust parameter must be finite, got {lambda}"
        )));
    }
    ric.check_state(x)?;
    check_step(ric, t, w_hat)?;
    let sum = ric.kernel_sum(t, w_hat)?;
    Ok(predictive_action(ric, x, lambda, &sum))
}

/// Accumulated-error switch of the threshold controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdState {
    delta: f64,
    sigma: f64,
    tripped: bool,
}

impl ThresholdState {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::bad_input(format!(
                "threshold must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self {
            delta: 0.0,
            sigma,
            tripped: false,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tripped(&self) -> bool {
        self.tripped
    }

    /// Adds `||w_hat_{t-1} - w_{t-1}||` (zero at `t = 0`) and reports whether
    /// predictions are still trusted at this step.
    pub fn advance(&mut self, last_error_norm: f64) -> Result<bool> {
        if !(last_error_norm >= 0.0) {
            return Err(Error::bad_input(format!(
                "error norm must be nonnegative, got {last_error_norm}"
            )));
        }
        self.delta += last_error_norm;
        if self.delta >= self.sigma {
            self.tripped = true;
        }
        Ok(!self.tripped)
    }

    /// One step of the threshold controller. Trusted steps use
    /// [`one_confident_action`], later ones fall back to [`zero_confident_action`].
    pub fn step(
        &mut self,
        ric: &RiccatiSolution,
        x: &DVector<f64>,
        t: usize,
        w_hat: &[DVector<f64>],
        last_error_norm: f64,
    ) -> Result<DVector<f64>> {
        if self.advance(last_error_norm)? {
            one_confident_action(ric, x, t, w_hat)
        } else {
            zero_confident_action(ric, x)
        }
    }
}

/// Running sums behind the self-tuning trust parameter.
///
/// After incorporating `w_0..w_{t-1}` the state holds
/// `eta(v; s, t-1) = sum_{tau=s}^{t-1} (F')^{tau-s} P v_tau` for `s < t`, for
/// both the true sequence and the predictions.
#[derive(Debug, Clone)]
pub struct SelfTuningState {
    t: usize,
    lambda0: f64,
    clamp: bool,
    lambda_t: f64,
    eta_w: Vec<DVector<f64>>,
    eta_wh: Vec<DVector<f64>>,
    numerator: f64,
    denominator: f64,
}

impl SelfTuningState {
    pub fn new(lambda0: f64, clamp: bool) -> Result<Self> {
        if !lambda0.is_finite() {
            return Err(Error::bad_input(format!("initial trust must be finite, got {lambda0}")));
        }
        Ok(Self {
            t: 0,
            lambda0,
            clamp,
            lambda_t: lambda0,
            eta_w: Vec::new(),
            eta_wh: Vec::new(),
            numerator: 0.0,
            denominator: 0.0,
        })
    }

    /// Number of observed steps folded into the sums.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn lambda_t(&self) -> f64 {
        self.lambda_t
    }

    pub fn eta_w(&self) -> &[DVector<f64>] {
        &self.eta_w
    }

    pub fn eta_wh(&self) -> &[DVector<f64>] {
        &self.eta_wh
    }

    pub fn numerator(&self) -> f64 {
        self.numerator
    }

    pub fn denominator(&self) -> f64 {
        self.denominator
    }

    /// Folds in the newly revealed `w_{t-1}` and its prediction.
    pub fn observe(&mut self, ric: &RiccatiSolution, w: &DVector<f64>, w_hat: &DVector<f64>) -> Result<()> {
        ric.check_state(w)?;
        ric.check_state(w_hat)?;
        let newest = self.t;
        if newest >= ric.horizon() {
            return Err(Error::bad_input(format!(
                "observation {newest} beyond cached horizon {}",
                ric.horizon()
            )));
        }
        for (s, (ew, ewh)) in self.eta_w.iter_mut().zip(self.eta_wh.iter_mut()).enumerate() {
            let kernel = ric.kernel(newest - s);
            ew.gemv(1.0, kernel, w, 1.0);
            ewh.gemv(1.0, kernel, w_hat, 1.0);
        }
        self.eta_w.push(ric.p() * w);
        self.eta_wh.push(ric.p() * w_hat);
        self.t += 1;

        let h = ric.h();
        let (mut num, mut den) = (0.0, 0.0);
        for (ew, ewh) in self.eta_w.iter().zip(&self.eta_wh) {
            let h_ewh = h * ewh;
            num += ew.dot(&h_ewh);
            den += ewh.dot(&h_ewh);
        }
        self.numerator = num;
        self.denominator = den;
        Ok(())
    }

    /// Follow-the-leader minimiser of the gap accumulated so far, `1` when the
    /// prediction sums vanish.
    pub fn leader(&self) -> f64 {
        if self.denominator == 0.0 {
            1.0
        } else {
            self.numerator / self.denominator
        }
    }

    /// Trust parameter for step `t`, given that `w_0..w_{t-1}` have been observed.
    pub fn trust_for_step(&mut self, t: usize) -> f64 {
        let raw = if t < 2 { self.lambda0 } else { self.leader() };
        self.lambda_t = if self.clamp { raw.clamp(0.0, 1.0) } else { raw };
        self.lambda_t
    }

    /// One step of self-tuning control. `w_prev` is `w_{t-1}` and is required
    /// for `t >= 1`.
    pub fn step(
        &mut self,
        ric: &RiccatiSolution,
        x: &DVector<f64>,
        t: usize,
        w_hat: &[DVector<f64>],
        w_prev: Option<&DVector<f64>>,
    ) -> Result<(f64, DVector<f64>)> {
        check_step(ric, t, w_hat)?;
        self.catch_up(ric, t, w_hat, w_prev)?;
        let lambda = self.trust_for_step(t);
        let u = lambda_confident_action(ric, x, t, w_hat, lambda)?;
        Ok((lambda, u))
    }

    fn catch_up(
        &mut self,
        ric: &RiccatiSolution,
        t: usize,
        w_hat: &[DVector<f64>],
        w_prev: Option<&DVector<f64>>,
    ) -> Result<()> {
        if t == 0 {
            return Ok(());
        }
        if self.t + 1 != t {
            return Err(Error::bad_input(format!(
                "self-tuning state has seen {} steps, cannot act at step {t}",
                self.t
            )));
        }
        let w = w_prev.ok_or_else(|| Error::bad_input(format!("step {t} needs the observed w_{}", t - 1)))?;
        self.observe(ric, w, &w_hat[t - 1])
    }
}

/// A policy driven step by step by a rollout.
pub trait Controller {
    fn label(&self) -> String;

    /// Action for step `t` at state `x`. `view.now() == t`.
    fn act(&mut self, ric: &RiccatiSolution, t: usize, x: &DVector<f64>, view: &CausalView<'_>)
        -> Result<DVector<f64>>;

    /// Trust parameter used at the most recent step, if the policy has one.
    fn trust(&self) -> Option<f64> {
        None
    }

    /// Called once after the last step with `view.now() == T`. Returns the
    /// policy's final trust parameter, if any.
    fn finish(&mut self, _ric: &RiccatiSolution, _view: &CausalView<'_>) -> Result<Option<f64>> {
        Ok(None)
    }
}

/// `u = -K x`.
#[derive(Debug, Clone, Default)]
pub struct ZeroConfident;

impl Controller for ZeroConfident {
    fn label(&self) -> String {
        "zero".into()
    }

    fn act(
        &mut self,
        ric: &RiccatiSolution,
        _t: usize,
        x: &DVector<f64>,
        _view: &CausalView<'_>,
    ) -> Result<DVector<f64>> {
        zero_confident_action(ric, x)
    }
}

/// Fixed-trust controller with the prediction sums precomputed once.
#[derive(Debug, Clone)]
pub struct LambdaConfident {
    lambda: f64,
    sums: Vec<DVector<f64>>,
}

impl LambdaConfident {
    pub fn new(ric: &RiccatiSolution, w_hat: &[DVector<f64>], lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::bad_input(format!(
                "trust parameter must be finite, got {lambda}"
            )));
        }
        Ok(Self {
            lambda,
            sums: ric.suffix_sums(w_hat)?,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Controller for LambdaConfident {
    fn label(&self) -> String {
        format!("lambda({})", self.lambda)
    }

    fn act(
        &mut self,
        ric: &RiccatiSolution,
        t: usize,
        x: &DVector<f64>,
        _view: &CausalView<'_>,
    ) -> Result<DVector<f64>> {
        ric.check_state(x)?;
        let sum = self
            .sums
            .get(t)
            .ok_or_else(|| Error::bad_input(format!("step {t} outside horizon {}", self.sums.len())))?;
        Ok(predictive_action(ric, x, self.lambda, sum))
    }

    fn trust(&self) -> Option<f64> {
        Some(self.lambda)
    }
}

/// Clairvoyant policy: the explicit MPC action fed the true disturbances.
/// Its cost is OPT.
#[derive(Debug, Clone)]
pub struct OfflineOptimal {
    inner: LambdaConfident,
}

impl OfflineOptimal {
    pub fn new(ric: &RiccatiSolution, w_true: &[DVector<f64>]) -> Result<Self> {
        Ok(Self {
            inner: LambdaConfident::new(ric, w_true, 1.0)?,
        })
    }
}

impl Controller for OfflineOptimal {
    fn label(&self) -> String {
        "offline".into()
    }

    fn act(
        &mut self,
        ric: &RiccatiSolution,
        t: usize,
        x: &DVector<f64>,
        view: &CausalView<'_>,
    ) -> Result<DVector<f64>> {
        self.inner.act(ric, t, x, view)
    }
}

/// Trusts predictions until the accumulated error reaches `sigma`, then runs LQR.
#[derive(Debug, Clone)]
pub struct ThresholdControl {
    state: ThresholdState,
    trusting: LambdaConfident,
    history: Vec<bool>,
}

impl ThresholdControl {
    pub fn new(ric: &RiccatiSolution, w_hat: &[DVector<f64>], sigma: f64) -> Result<Self> {
        Ok(Self {
            state: ThresholdState::new(sigma)?,
            trusting: LambdaConfident::new(ric, w_hat, 1.0)?,
            history: Vec::new(),
        })
    }

    pub fn state(&self) -> &ThresholdState {
        &self.state
    }

    /// Whether predictions were trusted at each step taken so far.
    pub fn trusted_steps(&self) -> &[bool] {
        &self.history
    }
}

impl Controller for ThresholdControl {
    fn label(&self) -> String {
        format!("threshold({})", self.state.sigma)
    }

    fn act(
        &mut self,
        ric: &RiccatiSolution,
        t: usize,
        x: &DVector<f64>,
        view: &CausalView<'_>,
    ) -> Result<DVector<f64>> {
        let last_error = match view.last_observed() {
            Some(w) => (&view.predictions()[t - 1] - w).norm(),
            None => 0.0,
        };
        let trusted = self.state.advance(last_error)?;
        self.history.push(trusted);
        if trusted {
            self.trusting.act(ric, t, x, view)
        } else {
            zero_confident_action(ric, x)
        }
    }
}

/// Self-tuning trust controller.
#[derive(Debug, Clone)]
pub struct SelfTuning {
    state: SelfTuningState,
    sums: Vec<DVector<f64>>,
    w_hat: Vec<DVector<f64>>,
}

impl SelfTuning {
    pub fn new(ric: &RiccatiSolution, w_hat: &[DVector<f64>], lambda0: f64, clamp: bool) -> Result<Self> {
        Ok(Self {
            state: SelfTuningState::new(lambda0, clamp)?,
            sums: ric.suffix_sums(w_hat)?,
            w_hat: w_hat.to_vec(),
        })
    }

    pub fn state(&self) -> &SelfTuningState {
        &self.state
    }
}

impl Controller for SelfTuning {
    fn label(&self) -> String {
        if self.state.clamp {
            format!("self_tuning({},clamp)", self.state.lambda0)
        } else {
            format!("self_tuning({})", self.state.lambda0)
        }
    }

    fn act(
        &mut self,
        ric: &RiccatiSolution,
        t: usize,
        x: &DVector<f64>,
        view: &CausalView<'_>,
    ) -> Result<DVector<f64>> {
        ric.check_state(x)?;
        check_step(ric, t, &self.w_hat)?;
        self.state.catch_up(ric, t, &self.w_hat, view.last_observed())?;
        let lambda = self.state.trust_for_step(t);
        Ok(predictive_action(ric, x, lambda, &self.sums[t]))
    }

    fn trust(&self) -> Option<f64> {
        Some(self.state.lambda_t)
    }

    /// Folds in `w_{T-1}` and returns the hindsight minimiser `lambda_T`.
    fn finish(&mut self, ric: &RiccatiSolution, view: &CausalView<'_>) -> Result<Option<f64>> {
        let t_end = self.w_hat.len();
        if self.state.t + 1 == t_end {
            let w = view.observed(t_end - 1)?;
            self.state.observe(ric, w, &self.w_hat[t_end - 1])?;
        }
        Ok(Some(self.state.leader()))
    }
}

/// Rolls out the clairvoyant policy on the true disturbances. The cost is OPT,
/// which must be positive.
pub fn offline_optimal_rollout(
    ric: &RiccatiSolution,
    sys: &crate::riccati::SystemMatrices,
    x0: &DVector<f64>,
    w_true: &[DVector<f64>],
) -> Result<crate::simulation::Rollout> {
    let window = PredictionWindow::new(w_true.to_vec(), w_true.to_vec())?;
    let mut policy = OfflineOptimal::new(ric, w_true)?;
    let rollout = crate::simulation::rollout_linear(sys, ric, &mut policy, &window, x0)?;
    if !(rollout.total_cost > 0.0) {
        return Err(Error::DegenerateInstance(format!(
            "offline optimal cost is {}, expected a positive value",
            rollout.total_cost
        )));
    }
    Ok(rollout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::{solve_dare, DareOptions, SystemMatrices};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn golden(horizon: usize) -> RiccatiSolution {
        let one = DMatrix::from_element(1, 1, 1.0);
        let sys = SystemMatrices::new(one.clone(), one.clone(), one.clone(), one).unwrap();
        solve_dare(&sys, horizon, DareOptions::default()).unwrap()
    }

    fn s(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn zero_confident_examples() {
        let ric = golden(2);
        assert_eq!(zero_confident_action(&ric, &s(0.0)).unwrap()[0], 0.0);
        assert_relative_eq!(
            zero_confident_action(&ric, &s(1.0)).unwrap()[0],
            -0.6180339887,
            epsilon = 1e-10
        );
        assert!(zero_confident_action(&ric, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn one_confident_two_step_sum() {
        let ric = golden(2);
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let f = 2.0 - p;
        let m_inv = 1.0 / (1.0 + p);
        let u = one_confident_action(&ric, &s(0.0), 0, &[s(1.0), s(1.0)]).unwrap();
        assert_relative_eq!(u[0], -m_inv * p * (1.0 + f), epsilon = 1e-12);

        // Single remaining term at t = T-1.
        let x = s(0.4);
        let u = one_confident_action(&ric, &x, 1, &[s(9.0), s(-2.0)]).unwrap();
        assert_relative_eq!(u[0], -m_inv * (p * 1.0 * 0.4 + p * -2.0), epsilon = 1e-12);

        assert!(matches!(
            one_confident_action(&ric, &x, 2, &[s(0.0), s(0.0)]),
            Err(Error::BadInput(_))
        ));
    }

    #[test]
    fn lambda_special_cases() {
        let ric = golden(3);
        let w_hat = [s(0.5), s(-1.0), s(2.0)];
        let x = s(-0.7);
        let zero = zero_confident_action(&ric, &x).unwrap();
        let one = one_confident_action(&ric, &x, 1, &w_hat).unwrap();
        assert_relative_eq!(
            lambda_confident_action(&ric, &x, 1, &w_hat, 0.0).unwrap(),
            zero,
            epsilon = 1e-14
        );
        assert_eq!(lambda_confident_action(&ric, &x, 1, &w_hat, 1.0).unwrap(), one);
        let mid = lambda_confident_action(&ric, &x, 1, &w_hat, 0.5).unwrap();
        assert_relative_eq!(mid, (zero + one) * 0.5, epsilon = 1e-14);
        assert!(lambda_confident_action(&ric, &x, 1, &w_hat, f64::NAN).is_err());
        // Zero predictions collapse the 1-confident action onto LQR.
        let none = [s(0.0), s(0.0), s(0.0)];
        assert_relative_eq!(
            one_confident_action(&ric, &x, 0, &none).unwrap(),
            zero_confident_action(&ric, &x).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn threshold_trace() {
        // e_t = 0 for t < 5, |e_5| = sigma/2, |e_6| = sigma: trusted through 6.
        let sigma = 0.8;
        let errors = [0.0, 0.0, 0.0, 0.0, 0.0, sigma / 2.0, sigma, 0.0, 0.0, 0.0];
        let mut st = ThresholdState::new(sigma).unwrap();
        let mut trusted = Vec::new();
        let mut last_delta = 0.0;
        for t in 0..errors.len() {
            let last = if t == 0 { 0.0 } else { errors[t - 1] };
            trusted.push(st.advance(last).unwrap());
            assert!(st.delta() >= last_delta);
            last_delta = st.delta();
        }
        assert_eq!(trusted, [true, true, true, true, true, true, true, false, false, false]);
        assert!(st.tripped());
    }

    #[test]
    fn threshold_rejects_bad_sigma() {
        assert!(ThresholdState::new(0.0).is_err());
        assert!(ThresholdState::new(-1.0).is_err());
        assert!(ThresholdState::new(f64::INFINITY).is_err());
        assert!(ThresholdState::new(1.0).unwrap().advance(-0.1).is_err());
    }

    #[test]
    fn self_tuning_requires_observation() {
        let ric = golden(4);
        let w_hat = vec![s(1.0); 4];
        let mut st = SelfTuningState::new(0.3, false).unwrap();
        let (l0, _) = st.step(&ric, &s(0.0), 0, &w_hat, None).unwrap();
        assert_eq!(l0, 0.3);
        assert!(matches!(
            st.step(&ric, &s(0.0), 1, &w_hat, None),
            Err(Error::BadInput(_))
        ));
        let (l1, _) = st.step(&ric, &s(0.0), 1, &w_hat, Some(&s(1.0))).unwrap();
        assert_eq!(l1, 0.3);
        let (l2, _) = st.step(&ric, &s(0.0), 2, &w_hat, Some(&s(1.0))).unwrap();
        assert_eq!(l2, 1.0);
        // Skipping a step is refused.
        assert!(st.step(&ric, &s(0.0), 3 + 1, &w_hat, Some(&s(1.0))).is_err());
    }

    #[test]
    fn self_tuning_clamp() {
        let ric = golden(5);
        // Predictions a quarter of the truth push the leader to 4.
        let w: Vec<_> = (0..5).map(|t| s(1.0 + t as f64)).collect();
        let w_hat: Vec<_> = w.iter().map(|v| v * 0.25).collect();
        let mut free = SelfTuningState::new(0.3, false).unwrap();
        let mut clamped = SelfTuningState::new(0.3, true).unwrap();
        for t in 0..5 {
            let prev = if t == 0 { None } else { Some(&w[t - 1]) };
            let (lf, _) = free.step(&ric, &s(0.0), t, &w_hat, prev).unwrap();
            let (lc, _) = clamped.step(&ric, &s(0.0), t, &w_hat, prev).unwrap();
            if t >= 2 {
                assert_eq!(lf, 4.0);
                assert_eq!(lc, 1.0);
            }
        }
    }

    #[test]
    fn causal_view_blocks_future() {
        let win = PredictionWindow::new(vec![s(1.0), s(2.0), s(3.0)], vec![s(0.0); 3]).unwrap();
        let view = win.view(1);
        assert_eq!(view.observed(0).unwrap()[0], 1.0);
        assert!(matches!(
            view.observed(1),
            Err(Error::CausalityViolation { requested: 1, now: 1 })
        ));
        assert_eq!(win.max_observed(), Some(0));
        assert!(win.view(0).last_observed().is_none());
    }

    #[test]
    fn window_validation() {
        assert!(PredictionWindow::new(vec![], vec![]).is_err());
        assert!(PredictionWindow::new(vec![s(1.0)], vec![]).is_err());
        assert!(PredictionWindow::new(vec![s(1.0), DVector::zeros(2)], vec![s(1.0), s(1.0)]).is_err());
        assert!(PredictionWindow::new(vec![s(f64::NAN)], vec![s(1.0)]).is_err());
        let win = PredictionWindow::new(vec![s(1.0), s(-2.0)], vec![s(0.5), s(0.5)]).unwrap();
        assert!(win.check_bounds(2.0, 0.5).is_ok());
        assert!(win.check_bounds(1.5, 1.0).is_err());
        assert!(win.check_bounds(2.0, 0.4).is_err());
    }
}
