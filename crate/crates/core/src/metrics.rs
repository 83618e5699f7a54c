//! Scalar quantities used to evaluate controllers: prediction error, the
//! prediction energy `W_bar`, self-variation, the cost-gap identity, regret
//! and the fixed-trust competitive-ratio bound.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::riccati::RiccatiSolution;

fn check_lengths(a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::bad_input(format!(
            "sequence lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `sum_t || sum_{tau>=t} (F')^{tau-t} P v_tau ||^2`.
fn kernel_energy(ric: &RiccatiSolution, seq: &[DVector<f64>]) -> Result<f64> {
    Ok(ric.suffix_sums(seq)?.iter().map(|s| s.norm_squared()).sum())
}

/// Prediction error `eps = sum_t || sum_{tau>=t} (F')^{tau-t} P (w_tau - w_hat_tau) ||^2`.
pub fn prediction_error(ric: &RiccatiSolution, w: &[DVector<f64>], w_hat: &[DVector<f64>]) -> Result<f64> {
    check_lengths(w, w_hat)?;
    let e: Vec<_> = w.iter().zip(w_hat).map(|(a, b)| a - b).collect();
    kernel_energy(ric, &e)
}

/// `W_bar = sum_t || sum_{tau>=t} (F')^{tau-t} P w_hat_tau ||^2`.
pub fn w_bar(ric: &RiccatiSolution, w_hat: &[DVector<f64>]) -> Result<f64> {
    kernel_energy(ric, w_hat)
}

/// Self-variation `sum_{s=1}^{T-1} max_{tau<s} ||y_tau - y_{tau+T-s}||`.
///
/// Sequences shorter than two entries have zero variation.
pub fn self_variation(seq: &[DVector<f64>]) -> f64 {
    let len = seq.len();
    if len < 2 {
        return 0.0;
    }
    (1..len)
        .map(|s| {
            (0..s)
                .map(|tau| (&seq[tau] - &seq[tau + len - s]).norm())
                .fold(0.0, f64::max)
        })
        .sum()
}

/// `sum_t psi_t' H psi_t`: the excess cost over OPT of a policy that deviates
/// from the clairvoyant action by `psi_t` inside the gain.
pub fn gap_identity(ric: &RiccatiSolution, psi: &[DVector<f64>]) -> Result<f64> {
    let h = ric.h();
    let mut total = 0.0;
    for p in psi {
        ric.check_state(p)?;
        total += p.dot(&(h * p));
    }
    Ok(total)
}

/// Deviation vectors of the fixed-trust controller,
/// `psi_t = sum_{tau>=t} (F')^{tau-t} P (w_tau - lambda w_hat_tau)`.
pub fn lambda_confident_deviations(
    ric: &RiccatiSolution,
    w: &[DVector<f64>],
    w_hat: &[DVector<f64>],
    lambda: f64,
) -> Result<Vec<DVector<f64>>> {
    check_lengths(w, w_hat)?;
    let d: Vec<_> = w.iter().zip(w_hat).map(|(a, b)| a - b * lambda).collect();
    ric.suffix_sums(&d)
}

/// `ALG(lambda_0..lambda_{T-1}) - ALG(lambda*)`.
pub fn regret(alg_cost_adaptive: f64, alg_cost_best_fixed: f64) -> f64 {
    alg_cost_adaptive - alg_cost_best_fixed
}

pub fn competitive_ratio(alg_cost: f64, opt_cost: f64) -> Result<f64> {
    if !(opt_cost > 0.0) {
        return Err(Error::DegenerateInstance(format!("OPT = {opt_cost} is not positive")));
    }
    Ok(alg_cost / opt_cost)
}

/// Induced 2-norm of `H` (its largest eigenvalue, since `H` is PSD).
pub fn h_norm(ric: &RiccatiSolution) -> f64 {
    ric.h().clone().symmetric_eigenvalues().max().max(0.0)
}

/// Upper bound on the competitive ratio of fixed-trust control,
/// `1 + 2 ||H|| min(lambda^2 eps/OPT + (1-lambda)^2/C, 1/C + lambda^2 W_bar/OPT)`.
///
/// `c` is a system constant that cannot be computed from the instance; the
/// value is meant for plotting bound shapes only.
pub fn theorem2_bound(ric: &RiccatiSolution, lambda: f64, epsilon: f64, w_bar: f64, opt: f64, c: f64) -> Result<f64> {
    if !(opt > 0.0) {
        return Err(Error::bad_input(format!("OPT must be positive, got {opt}")));
    }
    if !(c > 0.0) {
        return Err(Error::bad_input(format!("constant C must be positive, got {c}")));
    }
    let l2 = lambda * lambda;
    let first = l2 * epsilon / opt + (1.0 - lambda).powi(2) / c;
    let second = 1.0 / c + l2 * w_bar / opt;
    Ok(1.0 + 2.0 * h_norm(ric) * first.min(second))
}

/// Per-instance summary of one controller against OPT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceMetrics {
    pub epsilon: f64,
    pub w_bar: f64,
    pub mu_var_w: f64,
    pub mu_var_wh: f64,
    pub opt_cost: f64,
    pub alg_cost: f64,
    pub cr: f64,
}

impl InstanceMetrics {
    pub fn compute(
        ric: &RiccatiSolution,
        w: &[DVector<f64>],
        w_hat: &[DVector<f64>],
        opt_cost: f64,
        alg_cost: f64,
    ) -> Result<Self> {
        Ok(Self {
            epsilon: prediction_error(ric, w, w_hat)?,
            w_bar: w_bar(ric, w_hat)?,
            mu_var_w: self_variation(w),
            mu_var_wh: self_variation(w_hat),
            opt_cost,
            alg_cost,
            cr: competitive_ratio(alg_cost, opt_cost)?,
        })
    }
}
