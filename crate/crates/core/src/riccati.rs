//! Discrete algebraic Riccati equation and the closed-loop quantities derived
//! from its stabilizing solution.
//!
//! For a system `x' = A x + B u + w` with stage cost `x'Qx + u'Ru` the
//! solution `P` of
//!
//! ```text
//! P = Q + A'PA - A'PB (R + B'PB)^-1 B'PA
//! ```
//!
//! gives the LQR gain `K = (R + B'PB)^-1 B'PA`, the closed loop `F = A - BK`
//! and `H = B (R + B'PB)^-1 B'`. Every predictive controller in this crate
//! weights future disturbances through the kernel `(F')^k P`, so the solution
//! caches those products up to the experiment horizon.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

/// The `(A, B, Q, R)` quadruple of a linear-quadratic instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl SystemMatrices {
    /// Builds a system with positive definite `Q` and `R`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        Self::checked(a, b, q, r, Definiteness::Positive)
    }

    /// Like [`SystemMatrices::new`] but accepts a positive semidefinite state
    /// cost, as used by tracking problems that only penalise position.
    pub fn with_semidefinite_q(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        Self::checked(a, b, q, r, Definiteness::SemiPositive)
    }

    fn checked(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        q_kind: Definiteness,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::bad_input(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::bad_input(format!(
                "B must be {n}xm, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        let m = b.ncols();
        if q.shape() != (n, n) {
            return Err(Error::bad_input(format!(
                "Q must be {n}x{n}, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if r.shape() != (m, m) {
            return Err(Error::bad_input(format!(
                "R must be {m}x{m}, got {}x{}",
                r.nrows(),
                r.ncols()
            )));
        }
        for (name, mat) in [("A", &a), ("B", &b), ("Q", &q), ("R", &r)] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::bad_input(format!("{name} has non-finite entries")));
            }
        }
        check_definite("Q", &q, q_kind)?;
        check_definite("R", &r, Definiteness::Positive)?;
        Ok(Self { a, b, q, r })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Action dimension `m`.
    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Copy of the system with `Q + eps I`.
    pub fn regularized(&self, eps: f64) -> Self {
        let n = self.state_dim();
        Self {
            q: &self.q + DMatrix::identity(n, n) * eps,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Definiteness {
    Positive,
    SemiPositive,
}

fn check_definite(name: &str, m: &DMatrix<f64>, kind: Definiteness) -> Result<()> {
    let asym = (m - m.transpose()).abs().max();
    if asym > SYMMETRY_TOL {
        return Err(Error::bad_input(format!(
            "{name} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
    let ok = match kind {
        Definiteness::Positive => min_eig > 0.0,
        // Round-off on exact zeros shows up around 1e-16 times the scale.
        Definiteness::SemiPositive => min_eig >= -1e-12 * m.abs().max().max(1.0),
    };
    if ok {
        Ok(())
    } else {
        let what = match kind {
            Definiteness::Positive => "positive definite",
            Definiteness::SemiPositive => "positive semidefinite",
        };
        Err(Error::bad_input(format!(
            "{name} is not {what} (min eigenvalue {min_eig:e})"
        )))
    }
}

/// Stopping rule for the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DareOptions {
    /// Bound on `||P_{k+1} - P_k||_F / max(1, ||P_{k+1}||_F)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// Stabilizing DARE solution and everything the controllers derive from it.
///
/// Immutable once built; share it freely between rollouts.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    p: DMatrix<f64>,
    k: DMatrix<f64>,
    f: DMatrix<f64>,
    h: DMatrix<f64>,
    m_inv: DMatrix<f64>,
    rho: f64,
    iterations: usize,
    residual: f64,
    // P A
    pa: DMatrix<f64>,
    // (R + B'PB)^-1 B'
    gain_input: DMatrix<f64>,
    ft: DMatrix<f64>,
    ft_powers_p: Vec<DMatrix<f64>>,
}

impl RiccatiSolution {
    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// LQR gain `K`, `m x n`.
    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// Closed loop `A - BK`.
    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    /// `B (R + B'PB)^-1 B'`.
    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// `(R + B'PB)^-1`.
    pub fn m_inv(&self) -> &DMatrix<f64> {
        &self.m_inv
    }

    /// Spectral radius of `F`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Frobenius norm of the DARE residual at the returned `P`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Number of cached kernel powers; also the horizon the solution was built for.
    pub fn horizon(&self) -> usize {
        self.ft_powers_p.len()
    }

    pub fn state_dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.k.nrows()
    }

    /// `[(F')^k P for k in 0..horizon]`.
    pub fn ft_powers_p(&self) -> &[DMatrix<f64>] {
        &self.ft_powers_p
    }

    /// `(F')^k P` from the cache.
    pub fn kernel(&self, k: usize) -> &DMatrix<f64> {
        &self.ft_powers_p[k]
    }

    pub(crate) fn pa(&self) -> &DMatrix<f64> {
        &self.pa
    }

    pub(crate) fn gain_input(&self) -> &DMatrix<f64> {
        &self.gain_input
    }

    /// `sum_{tau=t}^{T-1} (F')^{tau-t} P v_tau` evaluated term by term with
    /// the cached powers. `seq` must not be longer than [`Self::horizon`].
    pub fn kernel_sum(&self, t: usize, seq: &[DVector<f64>]) -> Result<DVector<f64>> {
        if seq.len() > self.horizon() {
            return Err(Error::bad_input(format!(
                "sequence length {} exceeds cached horizon {}",
                seq.len(),
                self.horizon()
            )));
        }
        let mut acc = DVector::zeros(self.state_dim());
        for (k, v) in seq.iter().enumerate().skip(t) {
            self.check_state(v)?;
            acc.gemv(1.0, &self.ft_powers_p[k - t], v, 1.0);
        }
        Ok(acc)
    }

    /// All suffix sums `S_t = sum_{tau>=t} (F')^{tau-t} P v_tau` for
    /// `t = 0..len`, via `S_t = P v_t + F' S_{t+1}`. Linear in the length.
    pub fn suffix_sums(&self, seq: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let n = self.state_dim();
        let mut out = vec![DVector::zeros(n); seq.len()];
        let mut next = DVector::zeros(n);
        for (t, v) in seq.iter().enumerate().rev() {
            self.check_state(v)?;
            let mut s = &self.p * v;
            s.gemv(1.0, &self.ft, &next, 1.0);
            out[t] = s.clone();
            next = s;
        }
        Ok(out)
    }

    pub(crate) fn check_state(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.state_dim() {
            return Err(Error::bad_input(format!(
                "vector has length {}, state dimension is {}",
                v.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }
}

/// Solves the DARE by fixed-point iteration from `P_0 = Q` and caches
/// `horizon` kernel powers.
pub fn solve_dare(sys: &SystemMatrices, horizon: usize, opts: DareOptions) -> Result<RiccatiSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::bad_input(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if horizon == 0 {
        return Err(Error::bad_input("horizon must be positive"));
    }
    let (a, b, q, r) = (sys.a(), sys.b(), sys.q(), sys.r());
    let at = a.transpose();
    let bt = b.transpose();

    let mut p = q.clone();
    let mut step = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let next = riccati_map(&p, a, &at, b, &bt, q, r)?;
        step = (&next - &p).norm() / next.norm().max(1.0);
        p = next;
        if !step.is_finite() {
            return Err(Error::Numerical("Riccati iterate became non-finite".into()));
        }
        if step <= opts.tol {
            break;
        }
    }
    if step > opts.tol {
        return Err(Error::NonConvergence {
            iterations,
            residual: step,
        });
    }
    // Keep going while the step still shrinks; for large P the relative rule
    // stops well above the rounding floor.
    let mut last = f64::INFINITY;
    while iterations < opts.max_iter {
        let next = riccati_map(&p, a, &at, b, &bt, q, r)?;
        let delta = (&next - &p).norm();
        if !(delta < last) {
            break;
        }
        iterations += 1;
        last = delta;
        p = next;
    }

    let residual = (riccati_map(&p, a, &at, b, &bt, q, r)? - &p).norm();
    let m_inv = spd_inverse(&(r + &bt * &p * b))?;
    let pa = &p * a;
    let gain_input = &m_inv * &bt;
    let k = &gain_input * &pa;
    let f = a - b * &k;
    let rho = spectral_radius(&f)?;
    if rho >= 1.0 {
        return Err(Error::NotStabilizable { rho });
    }
    let h = symmetrize(b * &gain_input);
    let ft = f.transpose();

    let mut ft_powers_p = Vec::with_capacity(horizon);
    ft_powers_p.push(p.clone());
    for k in 1..horizon {
        let next = &ft * &ft_powers_p[k - 1];
        ft_powers_p.push(next);
    }

    Ok(RiccatiSolution {
        p,
        k,
        f,
        h,
        m_inv,
        rho,
        iterations,
        residual,
        pa,
        gain_input,
        ft,
        ft_powers_p,
    })
}

/// Solves the DARE, retrying with `Q + eps I` when the plain iteration stalls
/// (semidefinite state costs can leave slow modes).
pub fn solve_dare_regularized(
    sys: &SystemMatrices,
    horizon: usize,
    opts: DareOptions,
    eps: f64,
) -> Result<RiccatiSolution> {
    match solve_dare(sys, horizon, opts) {
        Err(Error::NonConvergence { .. }) => solve_dare(&sys.regularized(eps), horizon, opts),
        other => other,
    }
}

fn riccati_map(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    at: &DMatrix<f64>,
    b: &DMatrix<f64>,
    bt: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let pa = p * a;
    let bt_pa = bt * &pa;
    let m = r + bt * p * b;
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Numerical("R + B'PB is not positive definite".into()))?;
    let correction = bt_pa.transpose() * chol.solve(&bt_pa);
    Ok(symmetrize(q + at * pa - correction))
}

fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("R + B'PB is not positive definite".into()))?
        .inverse();
    Ok(symmetrize(inv))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::bad_input(format!(
            "spectral radius of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}
