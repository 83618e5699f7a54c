//! Closed-loop rollouts: linear dynamics and the nonlinear Cart-Pole.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controllers::{Controller, PredictionWindow};
use crate::error::{Error, Result};
use crate::riccati::{RiccatiSolution, SystemMatrices};

/// Realized trajectory of one controller on one disturbance trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub label: String,
    /// `x_0..x_T`; shorter when a Cart-Pole episode fails early.
    pub states: Vec<DVector<f64>>,
    pub actions: Vec<DVector<f64>>,
    pub stage_costs: Vec<f64>,
    /// `x_T' P x_T`, or the failure penalty for a failed episode.
    pub terminal_cost: f64,
    pub total_cost: f64,
    /// Trust parameter used at each step, for controllers that have one.
    pub lambdas: Option<Vec<f64>>,
    /// Hindsight trust parameter reported by the controller after the last step.
    pub lambda_final: Option<f64>,
    /// Step at which the pole left the admissible band.
    pub failed_at: Option<usize>,
}

impl Rollout {
    /// Steps completed before failure (the horizon for successful runs).
    pub fn survival_steps(&self) -> usize {
        self.actions.len()
    }
}

fn quad(v: &DVector<f64>, m: &nalgebra::DMatrix<f64>) -> f64 {
    v.dot(&(m * v))
}

fn stage_cost(sys: &SystemMatrices, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    quad(x, sys.q()) + quad(u, sys.r())
}

fn check_rollout_inputs(
    sys: &SystemMatrices,
    ric: &RiccatiSolution,
    window: &PredictionWindow,
    x0: &DVector<f64>,
) -> Result<()> {
    if window.horizon() != ric.horizon() {
        return Err(Error::bad_input(format!(
            "trace horizon {} does not match cached horizon {}",
            window.horizon(),
            ric.horizon()
        )));
    }
    let n = sys.state_dim();
    if ric.state_dim() != n || window.dim() != n || x0.len() != n {
        return Err(Error::bad_input(format!(
            "dimension mismatch: system n={n}, Riccati n={}, trace n={}, x0 n={}",
            ric.state_dim(),
            window.dim(),
            x0.len()
        )));
    }
    Ok(())
}

fn checked_action(sys: &SystemMatrices, u: DVector<f64>, t: usize) -> Result<DVector<f64>> {
    if u.len() != sys.action_dim() {
        return Err(Error::bad_input(format!(
            "controller returned action of length {} at step {t}, expected {}",
            u.len(),
            sys.action_dim()
        )));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { step: t });
    }
    Ok(u)
}

/// Runs `controller` on `x_{t+1} = A x_t + B u_t + w_t` for the window's horizon.
///
/// At step `t` the controller sees `x_t`, every prediction and `w_0..w_{t-1}`.
pub fn rollout_linear(
    sys: &SystemMatrices,
    ric: &RiccatiSolution,
    controller: &mut dyn Controller,
    window: &PredictionWindow,
    x0: &DVector<f64>,
) -> Result<Rollout> {
    check_rollout_inputs(sys, ric, window, x0)?;
    let horizon = window.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut stage_costs = Vec::with_capacity(horizon);
    let mut lambdas = Vec::with_capacity(horizon);
    let mut x = x0.clone();

    for t in 0..horizon {
        let u = checked_action(sys, controller.act(ric, t, &x, &window.view(t))?, t)?;
        if let Some(l) = controller.trust() {
            lambdas.push(l);
        }
        stage_costs.push(stage_cost(sys, &x, &u));
        let mut next = window.disturbance(t).clone();
        next.gemv(1.0, sys.a(), &x, 1.0);
        next.gemv(1.0, sys.b(), &u, 1.0);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: t + 1 });
        }
        states.push(std::mem::replace(&mut x, next));
        actions.push(u);
    }
    let lambda_final = controller.finish(ric, &window.view(horizon))?;
    let terminal_cost = quad(&x, ric.p());
    states.push(x);
    let total_cost = stage_costs.iter().sum::<f64>() + terminal_cost;
    if !total_cost.is_finite() {
        return Err(Error::Diverged { step: horizon });
    }
    Ok(Rollout {
        label: controller.label(),
        states,
        actions,
        stage_costs,
        terminal_cost,
        total_cost,
        lambdas: (lambdas.len() == horizon).then_some(lambdas),
        lambda_final,
        failed_at: None,
    })
}

/// How the constant external force enters the discrete state update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceScaling {
    /// Discretized with the rest of the model: `w_t = dt * force * B_c`.
    #[default]
    Euler,
    /// `w_t = force * B_c` added once per step, unscaled.
    PerStep,
}

/// Physical parameters of the cart-pole and its integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartPoleParams {
    /// Cart mass (kg).
    pub cart_mass: f64,
    /// Pole mass (kg).
    pub pole_mass: f64,
    /// Pole length (m).
    pub length: f64,
    pub gravity: f64,
    /// Euler step (s).
    pub dt: f64,
    /// Episode fails once `|theta|` exceeds this (rad).
    pub fail_angle: f64,
    /// Added to the cost of a failed episode in place of the terminal cost.
    pub failure_penalty: f64,
    /// Magnitude of the constant external force (N).
    pub external_force: f64,
    pub disturbance_scaling: DisturbanceScaling,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            cart_mass: 10.0,
            pole_mass: 1.0,
            length: 10.0,
            gravity: 9.8,
            dt: 0.02,
            fail_angle: PI / 15.0,
            failure_penalty: 0.0,
            external_force: 60.0,
            disturbance_scaling: DisturbanceScaling::Euler,
        }
    }
}

impl CartPoleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("length", self.length),
            ("gravity", self.gravity),
            ("fail_angle", self.fail_angle),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::bad_input(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::bad_input(format!("dt must lie in (0, 0.1], got {}", self.dt)));
        }
        if !(self.failure_penalty >= 0.0 && self.failure_penalty.is_finite()) {
            return Err(Error::bad_input("failure_penalty must be finite and nonnegative"));
        }
        if !self.external_force.is_finite() {
            return Err(Error::bad_input("external_force must be finite"));
        }
        Ok(())
    }

    /// `l (4/3 - m/(m+M))`.
    pub fn eta(&self) -> f64 {
        self.length * (4.0 / 3.0 - self.pole_mass / (self.pole_mass + self.cart_mass))
    }

    /// Time derivative of `(y, y_dot, theta, theta_dot)` under force `u`,
    /// frictionless.
    pub fn derivative(&self, state: &[f64; 4], u: f64) -> [f64; 4] {
        let [_, y_dot, theta, theta_dot] = *state;
        let (m, big_m, l, g) = (self.pole_mass, self.cart_mass, self.length, self.gravity);
        let total = m + big_m;
        let (sin, cos) = theta.sin_cos();
        let theta_acc = (g * sin + cos * ((-u - m * l * theta_dot * theta_dot * sin) / total))
            / (l * (4.0 / 3.0 - m * cos * cos / total));
        let y_acc = (u + m * l * (theta_dot * theta_dot * sin - theta_acc * cos)) / total;
        [y_dot, y_acc, theta_dot, theta_acc]
    }

    /// One explicit Euler step of the nonlinear dynamics.
    pub fn euler_step(&self, state: &[f64; 4], u: f64) -> [f64; 4] {
        let d = self.derivative(state, u);
        std::array::from_fn(|i| state[i] + self.dt * d[i])
    }
}

/// Runs `controller` (designed on the linearization `sys_lin`) against the
/// nonlinear cart-pole. `w_t` is added to the state once per step.
///
/// An episode whose angle leaves `fail_angle` stops there; the returned
/// rollout carries `failed_at` and the cost accumulated so far plus the
/// failure penalty.
pub fn rollout_cartpole(
    params: &CartPoleParams,
    sys_lin: &SystemMatrices,
    ric: &RiccatiSolution,
    controller: &mut dyn Controller,
    window: &PredictionWindow,
    x0: &DVector<f64>,
) -> Result<Rollout> {
    params.validate()?;
    if sys_lin.state_dim() != 4 || sys_lin.action_dim() != 1 {
        return Err(Error::bad_input("cart-pole model must have 4 states and 1 input"));
    }
    check_rollout_inputs(sys_lin, ric, window, x0)?;
    let horizon = window.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut stage_costs = Vec::with_capacity(horizon);
    let mut lambdas = Vec::with_capacity(horizon);
    let mut x = x0.clone();
    let mut failed_at = None;

    for t in 0..horizon {
        let u = checked_action(sys_lin, controller.act(ric, t, &x, &window.view(t))?, t)?;
        if let Some(l) = controller.trust() {
            lambdas.push(l);
        }
        stage_costs.push(stage_cost(sys_lin, &x, &u));
        let current = [x[0], x[1], x[2], x[3]];
        let stepped = params.euler_step(&current, u[0]);
        let next = DVector::from_row_slice(&stepped) + window.disturbance(t);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: t + 1 });
        }
        states.push(std::mem::replace(&mut x, next));
        actions.push(u);
        if x[2].abs() > params.fail_angle {
            failed_at = Some(t + 1);
            break;
        }
    }
    let lambda_final = match failed_at {
        None => controller.finish(ric, &window.view(horizon))?,
        Some(_) => None,
    };
    let terminal_cost = match failed_at {
        None => quad(&x, ric.p()),
        Some(_) => params.failure_penalty,
    };
    states.push(x);
    let total_cost = stage_costs.iter().sum::<f64>() + terminal_cost;
    let steps = actions.len();
    Ok(Rollout {
        label: controller.label(),
        states,
        actions,
        stage_costs,
        terminal_cost,
        total_cost,
        lambdas: (lambdas.len() == steps && steps > 0).then_some(lambdas),
        lambda_final,
        failed_at,
    })
}
