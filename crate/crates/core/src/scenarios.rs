//! Case-study instances: planar robot tracking, battery-buffered EV charging
//! and the cart-pole, plus the prediction-noise models used to corrupt their
//! disturbance sequences.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riccati::SystemMatrices;
use crate::simulation::{CartPoleParams, DisturbanceScaling};

/// Regularization added to semidefinite or zero cost matrices.
pub const COST_REGULARIZATION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `e = c X`, `X ~ Binomial(10, 0.5)`.
    BinomialScaled,
    /// `e ~ N(0, sigma^2)`.
    GaussianIid,
    /// `e_t = Z_t w_t`, scalar `Z_t ~ N(0, sigma^2)`.
    GaussianScaledW,
}

/// Additive prediction noise `e_t = w_hat_t - w_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// `c` for the binomial model, the variance for the Gaussian ones.
    #[serde(default)]
    pub param: f64,
    #[serde(default)]
    pub seed: u64,
    /// Draw one scalar per step and apply it to every component instead of
    /// drawing per component. Ignored by `gaussian_scaled_w`.
    #[serde(default)]
    pub broadcast: bool,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, param: f64, seed: u64) -> Self {
        Self {
            kind,
            param,
            seed,
            broadcast: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.param >= 0.0 && self.param.is_finite()) {
            return Err(Error::bad_input(format!(
                "noise parameter must be finite and >= 0, got {}",
                self.param
            )));
        }
        Ok(())
    }
}

/// `w_hat_t = w_t + e_t` with `e` drawn from `noise`. Deterministic in the seed.
pub fn generate_predictions(w: &[DVector<f64>], noise: &NoiseModel) -> Result<Vec<DVector<f64>>> {
    noise.validate()?;
    if noise.param == 0.0 {
        return Ok(w.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut out = Vec::with_capacity(w.len());
    match noise.kind {
        NoiseKind::BinomialScaled => {
            let dist = Binomial::new(10, 0.5).map_err(|e| Error::Numerical(e.to_string()))?;
            let c = noise.param;
            for wt in w {
                let e = draw(&mut rng, wt.len(), noise.broadcast, |r| c * dist.sample(r) as f64);
                out.push(wt + e);
            }
        }
        NoiseKind::GaussianIid => {
            let dist = Normal::new(0.0, noise.param.sqrt()).map_err(|e| Error::Numerical(e.to_string()))?;
            for wt in w {
                let e = draw(&mut rng, wt.len(), noise.broadcast, |r| dist.sample(r));
                out.push(wt + e);
            }
        }
        NoiseKind::GaussianScaledW => {
            let dist = Normal::new(0.0, noise.param.sqrt()).map_err(|e| Error::Numerical(e.to_string()))?;
            for wt in w {
                let z: f64 = dist.sample(&mut rng);
                out.push(wt + wt * z);
            }
        }
    }
    Ok(out)
}

fn draw(
    rng: &mut ChaCha8Rng,
    n: usize,
    broadcast: bool,
    mut sample: impl FnMut(&mut ChaCha8Rng) -> f64,
) -> DVector<f64> {
    if broadcast {
        DVector::from_element(n, sample(rng))
    } else {
        DVector::from_fn(n, |_, _| sample(rng))
    }
}

/// Planar tracking problem in error coordinates `x = (p - y, v)`.
#[derive(Debug, Clone)]
pub struct TrackingInstance {
    pub sys: SystemMatrices,
    pub w: Vec<DVector<f64>>,
    /// Reference points `y_0..y_T`.
    pub trajectory: Vec<[f64; 2]>,
}

/// Cloud-shaped reference `(2cos(pi t/30) + cos(pi t/5), 2sin(pi t/30) + sin(pi t/5))`.
pub fn tracking_reference(t: usize) -> [f64; 2] {
    let t = t as f64;
    [
        2.0 * (PI * t / 30.0).cos() + (PI * t / 5.0).cos(),
        2.0 * (PI * t / 30.0).sin() + (PI * t / 5.0).sin(),
    ]
}

pub fn robot_tracking_instance(horizon: usize) -> Result<TrackingInstance> {
    robot_tracking_instance_with_action_cost(horizon, 1e-2)
}

/// Tracking instance with `R = r I`. A zero `r` is replaced by a tiny
/// positive value so the Riccati solution exists.
pub fn robot_tracking_instance_with_action_cost(horizon: usize, r: f64) -> Result<TrackingInstance> {
    if horizon < 2 {
        return Err(Error::bad_input(format!(
            "tracking horizon must be at least 2, got {horizon}"
        )));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::bad_input(format!("action cost must be >= 0, got {r}")));
    }
    let r = if r == 0.0 { COST_REGULARIZATION } else { r };
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        1.0, 0.0, 0.2, 0.0,
        0.0, 1.0, 0.0, 0.2,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ]);
    #[rustfmt::skip]
    let b = DMatrix::from_row_slice(4, 2, &[
        0.0, 0.0,
        0.0, 0.0,
        0.2, 0.0,
        0.0, 0.2,
    ]);
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]));
    let sys = SystemMatrices::with_semidefinite_q(a, b, q, DMatrix::identity(2, 2) * r)?;

    let trajectory: Vec<_> = (0..=horizon).map(tracking_reference).collect();
    // x_{t+1} = (p_t - y_t) + 0.2 v_t + (y_t - y_{t+1}): the reference shift
    // enters as a position-only disturbance.
    let w = trajectory
        .windows(2)
        .map(|pair| DVector::from_vec(vec![pair[0][0] - pair[1][0], pair[0][1] - pair[1][1], 0.0, 0.0]))
        .collect();
    Ok(TrackingInstance { sys, w, trajectory })
}

/// One EV arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvSession {
    pub arrival_slot: usize,
    pub charger_id: usize,
    pub energy_kwh: f64,
}

#[derive(Debug, Clone)]
pub struct EvInstance {
    pub sys: SystemMatrices,
    pub w: Vec<DVector<f64>>,
}

/// Battery-buffered charging station with `chargers` identical batteries:
/// `A = B = Q = I`, `R = 0.1 I`. An arrival draws its demand from the battery
/// at its charger, so it enters the disturbance with a negative sign.
pub fn ev_charging_instance(chargers: usize, horizon: usize, sessions: &[EvSession]) -> Result<EvInstance> {
    if chargers == 0 || horizon == 0 {
        return Err(Error::bad_input("EV instance needs at least one charger and one slot"));
    }
    let eye = DMatrix::identity(chargers, chargers);
    let sys = SystemMatrices::new(eye.clone(), eye.clone(), eye.clone(), eye * 0.1)?;
    let mut w = vec![DVector::zeros(chargers); horizon];
    for (i, s) in sessions.iter().enumerate() {
        if s.charger_id >= chargers {
            return Err(Error::bad_input(format!(
                "session {i}: charger {} out of range (N = {chargers})",
                s.charger_id
            )));
        }
        if s.arrival_slot >= horizon {
            return Err(Error::bad_input(format!(
                "session {i}: arrival slot {} outside horizon {horizon}",
                s.arrival_slot
            )));
        }
        if !(s.energy_kwh > 0.0 && s.energy_kwh.is_finite()) {
            return Err(Error::bad_input(format!("session {i}: energy must be positive")));
        }
        w[s.arrival_slot][s.charger_id] -= s.energy_kwh;
    }
    Ok(EvInstance { sys, w })
}

/// Arrivals at a constant `rate` per slot (one every `round(1/rate)` slots,
/// starting at slot 0), assigned to chargers round-robin.
pub fn synthetic_ev_sessions(chargers: usize, horizon: usize, rate: f64, energy_kwh: f64) -> Result<Vec<EvSession>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::bad_input(format!("arrival rate must lie in (0, 1], got {rate}")));
    }
    if chargers == 0 {
        return Err(Error::bad_input("need at least one charger"));
    }
    let gap = (1.0 / rate).round() as usize;
    Ok((0..horizon)
        .step_by(gap)
        .enumerate()
        .map(|(k, slot)| EvSession {
            arrival_slot: slot,
            charger_id: k % chargers,
            energy_kwh,
        })
        .collect())
}

pub const EV_CSV_HEADER: [&str; 3] = ["arrival_slot", "charger_id", "energy_kwh"];

/// Reads sessions from a CSV with header `arrival_slot,charger_id,energy_kwh`.
/// Row numbers in errors count the header as row 1.
pub fn ingest_ev_csv(path: impl AsRef<Path>) -> Result<Vec<EvSession>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != EV_CSV_HEADER {
        return Err(Error::Parse {
            row: 1,
            column: "header".into(),
            message: format!(
                "expected `{}`, found `{}`",
                EV_CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut sessions = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let parse_err = |idx: usize, msg: String| Error::Parse {
            row,
            column: EV_CSV_HEADER[idx].into(),
            message: msg,
        };
        let arrival_slot = field(0).parse::<usize>().map_err(|e| parse_err(0, e.to_string()))?;
        let charger_id = field(1).parse::<usize>().map_err(|e| parse_err(1, e.to_string()))?;
        let energy_kwh = field(2).parse::<f64>().map_err(|e| parse_err(2, e.to_string()))?;
        if !(energy_kwh > 0.0 && energy_kwh.is_finite()) {
            return Err(Error::Validation {
                row,
                message: format!("energy_kwh must be positive, got {energy_kwh}"),
            });
        }
        sessions.push(EvSession {
            arrival_slot,
            charger_id,
            energy_kwh,
        });
    }
    Ok(sessions)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Parse {
            row: 1,
            column: String::new(),
            message: format!("{other:?}"),
        },
    }
}

#[derive(Debug, Clone)]
pub struct CartPoleInstance {
    /// Euler-discretized linearization about the upright equilibrium.
    pub sys: SystemMatrices,
    pub w: Vec<DVector<f64>>,
    pub params: CartPoleParams,
}

/// Continuous-time linearization `(A_c, B_c)` about the upright position,
/// state `(y, y_dot, theta, theta_dot)`.
pub fn cartpole_linearization(params: &CartPoleParams) -> (DMatrix<f64>, DVector<f64>) {
    let (m, big_m, l, g) = (params.pole_mass, params.cart_mass, params.length, params.gravity);
    let eta = params.eta();
    let total = m + big_m;
    let mut a = DMatrix::zeros(4, 4);
    a[(0, 1)] = 1.0;
    a[(1, 2)] = -m * l * g / (eta * total);
    a[(2, 3)] = 1.0;
    a[(3, 2)] = g / eta;
    let b = DVector::from_vec(vec![
        0.0,
        (total * eta + m * l) / (total * total * eta),
        0.0,
        -1.0 / (total * eta),
    ]);
    (a, b)
}

/// Cart-pole with `Q = I`, `R = 1e-3` and the constant forcing of
/// `external_force` newtons along `B_c` (see [`DisturbanceScaling`]).
pub fn cartpole_instance(params: CartPoleParams, horizon: usize) -> Result<CartPoleInstance> {
    params.validate()?;
    if horizon == 0 {
        return Err(Error::bad_input("horizon must be positive"));
    }
    let (a_c, b_c) = cartpole_linearization(&params);
    let a = DMatrix::identity(4, 4) + a_c * params.dt;
    let b = DMatrix::from_column_slice(4, 1, (&b_c * params.dt).as_slice());
    let sys = SystemMatrices::new(a, b, DMatrix::identity(4, 4), DMatrix::from_element(1, 1, 1e-3))?;
    let scale = match params.disturbance_scaling {
        DisturbanceScaling::Euler => params.external_force * params.dt,
        DisturbanceScaling::PerStep => params.external_force,
    };
    let w = vec![b_c * scale; horizon];
    Ok(CartPoleInstance { sys, w, params })
}
