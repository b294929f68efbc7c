//! Symmetric second-order projector-splitting integrator for rank-`r`
//! matrices `Y = U S Vᵀ` evolving by `i Y' = 𝕳(t, Y)`.
//!
//! One step is `K(h/2) S(h/2) L(h) S(h/2) K(h/2)`; the `S` substeps run the
//! Galerkin equation backward in time. Substep ODEs use RK4.

use num_complex::Complex64;

use crate::als_solver::qr_positive;
use crate::block_linalg::truncated_svd;
use crate::error::{Error, Result};
use crate::matrix_model::{CMat, MatrixExperiment, TwoSidedHamiltonian};

/// `U S Vᵀ` with `U* U = I` and `V* V = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankState {
    pub u: CMat,
    pub s: CMat,
    pub v: CMat,
}

impl LowRankState {
    /// Rank-`r` truncated SVD of `m`.
    pub fn from_matrix(m: &CMat, r: usize) -> Result<Self> {
        let svd = truncated_svd(m, r)?;
        let s =
            CMat::from_fn(r, r, |i, j| if i == j { Complex64::new(svd.s[i], 0.0) } else { Complex64::new(0.0, 0.0) });
        Ok(Self { u: svd.u, s, v: svd.v.map(|z| z.conj()) })
    }

    pub fn rank(&self) -> usize {
        self.s.nrows()
    }

    pub fn to_matrix(&self) -> CMat {
        &self.u * &self.s * self.v.transpose()
    }

    /// `max(‖U*U − I‖, ‖V*V − I‖)` in the Frobenius norm.
    pub fn orthonormality_defect(&self) -> f64 {
        let r = self.rank();
        let id = CMat::identity(r, r);
        let du = (self.u.adjoint() * &self.u - &id).norm();
        let dv = (self.v.adjoint() * &self.v - &id).norm();
        du.max(dv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplittingOptions {
    /// RK4 substeps per substep ODE.
    pub substeps: usize,
}

impl Default for SplittingOptions {
    fn default() -> Self {
        Self { substeps: 4 }
    }
}

fn minus_i() -> Complex64 {
    Complex64::new(0.0, -1.0)
}

/// RK4 for `X' = f(t, X)` from `t0` to `t1` in `m` steps (`t1 < t0` allowed).
fn rk4(mut x: CMat, t0: f64, t1: f64, m: usize, f: impl Fn(f64, &CMat) -> CMat) -> CMat {
    let h = (t1 - t0) / m as f64;
    let (half, full, sixth) = (Complex64::new(0.5 * h, 0.0), Complex64::new(h, 0.0), Complex64::new(h / 6.0, 0.0));
    for s in 0..m {
        let t = t0 + s as f64 * h;
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * h, &(&x + &k1 * half));
        let k3 = f(t + 0.5 * h, &(&x + &k2 * half));
        let k4 = f(t + h, &(&x + &k3 * full));
        x += (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * sixth;
    }
    x
}

/// `K' = F(t, K Vᵀ) V̄`, then `K = U S`.
fn k_step(h: &TwoSidedHamiltonian, st: &LowRankState, t0: f64, t1: f64, m: usize) -> LowRankState {
    let vt = st.v.transpose();
    let vbar = st.v.map(|z| z.conj());
    let k = rk4(&st.u * &st.s, t0, t1, m, |t, k| h.apply_unchecked(t, &(k * &vt)) * &vbar * minus_i());
    let (u, s) = qr_positive(&k);
    LowRankState { u, s, v: st.v.clone() }
}

/// `S' = U* F(t, U S Vᵀ) V̄` from `t0` to `t1`; called with `t1 < t0`.
fn s_step(h: &TwoSidedHamiltonian, st: &LowRankState, t0: f64, t1: f64, m: usize) -> LowRankState {
    let vt = st.v.transpose();
    let vbar = st.v.map(|z| z.conj());
    let uadj = st.u.adjoint();
    let s = rk4(st.s.clone(), t0, t1, m, |t, s| &uadj * h.apply_unchecked(t, &(&st.u * s * &vt)) * &vbar * minus_i());
    LowRankState { u: st.u.clone(), s, v: st.v.clone() }
}

/// `L' = F(t, U Lᵀ)ᵀ Ū` with `L = V Sᵀ`, then `L = V Sᵀ`.
fn l_step(h: &TwoSidedHamiltonian, st: &LowRankState, t0: f64, t1: f64, m: usize) -> LowRankState {
    let ubar = st.u.map(|z| z.conj());
    let l = rk4(&st.v * st.s.transpose(), t0, t1, m, |t, l| {
        h.apply_unchecked(t, &(&st.u * l.transpose())).transpose() * &ubar * minus_i()
    });
    let (v, r) = qr_positive(&l);
    LowRankState { u: st.u.clone(), s: r.transpose(), v }
}

/// One symmetric splitting step from `t` to `t + h`.
pub fn ksl_step(
    ham: &TwoSidedHamiltonian,
    state: &LowRankState,
    t: f64,
    h: f64,
    opts: &SplittingOptions,
) -> Result<LowRankState> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let (lx, ly) = ham.dims();
    if state.u.nrows() != lx || state.v.nrows() != ly {
        return Err(Error::ShapeMismatch {
            expected: format!("{lx}x{ly}"),
            got: format!("{}x{}", state.u.nrows(), state.v.nrows()),
        });
    }
    let m = opts.substeps.max(1);
    let mid = t + 0.5 * h;
    let end = t + h;
    let st = k_step(ham, state, t, mid, m);
    let st = s_step(ham, &st, mid, t, m);
    let st = l_step(ham, &st, t, end, 2 * m);
    let st = s_step(ham, &st, end, mid, m);
    Ok(k_step(ham, &st, mid, end, m))
}

/// States at the `N + 1` grid nodes of `exp`, using `steps` uniform steps
/// (a multiple of `N`), starting from the rank-`r` truncation of `U₀`.
pub fn propagate(exp: &MatrixExperiment, r: usize, steps: usize, opts: &SplittingOptions) -> Result<Vec<LowRankState>> {
    let n = exp.intervals;
    if steps == 0 || !steps.is_multiple_of(n) {
        return Err(Error::InvalidParameter(format!("steps ({steps}) must be a positive multiple of {n}")));
    }
    let per = steps / n;
    let h = exp.t_final / steps as f64;
    let mut st = LowRankState::from_matrix(&exp.u0(), r)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(st.clone());
    for s in 0..steps {
        st = ksl_step(&exp.hamiltonian, &st, s as f64 * h, h, opts)?;
        if (s + 1) % per == 0 {
            out.push(st.clone());
        }
    }
    Ok(out)
}
