#![allow(dead_code)]

use lqc_trust::controllers::{Controller, PredictionWindow};
use lqc_trust::riccati::{solve_dare, DareOptions, RiccatiSolution, SystemMatrices};
use lqc_trust::simulation::{rollout_linear, Rollout};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0))
}

pub fn uniform_seq(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Vec<DVector<f64>> {
    (0..len).map(|_| uniform_vector(rng, n)).collect()
}

/// Random `(A, B)` with entries in `[-1, 1]`, `Q = R = I`, resampled until
/// the Riccati iteration yields a stable closed loop.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize, horizon: usize) -> (SystemMatrices, RiccatiSolution) {
    loop {
        let sys = SystemMatrices::new(
            uniform_matrix(rng, n, n),
            uniform_matrix(rng, n, m),
            DMatrix::identity(n, n),
            DMatrix::identity(m, m),
        )
        .unwrap();
        if let Ok(ric) = solve_dare(&sys, horizon, DareOptions::default()) {
            return (sys, ric);
        }
    }
}

/// `Q + A'PA - A'PB (R + B'PB)^{-1} B'PA - P`, computed with an LU solve.
pub fn dare_residual(sys: &SystemMatrices, p: &DMatrix<f64>) -> f64 {
    let (a, b, q, r) = (sys.a(), sys.b(), sys.q(), sys.r());
    let bpa = b.transpose() * p * a;
    let m = r + b.transpose() * p * b;
    let solved = m.lu().solve(&bpa).unwrap();
    let res = q + a.transpose() * p * a - bpa.transpose() * solved - p;
    res.norm()
}

/// `sum_{tau>=t} (F')^{tau-t} P v_tau` with explicit matrix powers.
pub fn brute_kernel_sum(ric: &RiccatiSolution, t: usize, seq: &[DVector<f64>]) -> DVector<f64> {
    let ft = ric.f().transpose();
    let mut total = DVector::zeros(ric.state_dim());
    for (tau, v) in seq.iter().enumerate().skip(t) {
        let power = ft.pow((tau - t) as u32);
        total += power * ric.p() * v;
    }
    total
}

/// `sum_t || sum_{tau>=t} (F')^{tau-t} P e_tau ||^2` by brute force.
pub fn brute_energy(ric: &RiccatiSolution, seq: &[DVector<f64>]) -> f64 {
    (0..seq.len())
        .map(|t| brute_kernel_sum(ric, t, seq).norm_squared())
        .sum()
}

pub fn run(
    sys: &SystemMatrices,
    ric: &RiccatiSolution,
    controller: &mut dyn Controller,
    w: &[DVector<f64>],
    w_hat: &[DVector<f64>],
    x0: &DVector<f64>,
) -> Rollout {
    let window = PredictionWindow::new(w.to_vec(), w_hat.to_vec()).unwrap();
    rollout_linear(sys, ric, controller, &window, x0).unwrap()
}

pub fn scaled(seq: &[DVector<f64>], c: f64) -> Vec<DVector<f64>> {
    seq.iter().map(|v| v * c).collect()
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    let slope = sxy / sxx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    1.0 - sse / syy
}
