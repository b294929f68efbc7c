//! Natural real parametrization of pure Gaussian wavepackets.
//!
//! Layout of a parameter vector for dimension `d`:
//! `[Re a, Im a, A (upper triangle, row-major), B (upper triangle, row-major), q, p]`,
//! of length `2 + d(d+1) + 2d`. For `d = 1` this is `(Re a, Im a, A, B, q, p)`.

use super::poly::Poly;
use super::scalar::{Cx, Dual, Real, C64};
use super::small::{zero_mat, Mat3, MAX_DIM};
use super::term::GaussianTerm;
use crate::error::{Error, Result};

pub fn param_count(d: usize) -> usize {
    2 + d * (d + 1) + 2 * d
}

fn tri(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Upper-triangle index pairs in storage order.
pub fn upper_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(tri(d));
    for i in 0..d {
        for j in i..d {
            v.push((i, j));
        }
    }
    v
}

/// Offsets of the blocks in a parameter vector.
#[derive(Clone, Copy, Debug)]
pub struct Layout {
    pub dim: usize,
    pub width_re: usize,
    pub width_im: usize,
    pub center: usize,
    pub momentum: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(d: usize) -> Self {
        let t = tri(d);
        Self { dim: d, width_re: 2, width_im: 2 + t, center: 2 + 2 * t, momentum: 2 + 2 * t + d, len: param_count(d) }
    }

    /// Position of the diagonal entry `A_jj` in the vector.
    pub fn diag_re(&self, j: usize) -> usize {
        let pairs = upper_pairs(self.dim);
        self.width_re + pairs.iter().position(|&p| p == (j, j)).unwrap()
    }
}

/// `γ(v)(x) = a · exp(−½(x−q)ᵀQ(x−q)) · exp(i p·(x−q))`, `Q = A + iB`.
pub fn gamma<R: Real>(d: usize, v: &[R]) -> Result<GaussianTerm<R>> {
    let lay = Layout::new(d);
    if v.len() != lay.len {
        return Err(Error::ShapeMismatch { expected: lay.len.to_string(), got: v.len().to_string() });
    }
    let mut width: Mat3<R> = zero_mat();
    for (k, (i, j)) in upper_pairs(d).into_iter().enumerate() {
        let z = Cx::new(v[lay.width_re + k], v[lay.width_im + k]);
        width[i][j] = z;
        width[j][i] = z;
    }
    GaussianTerm::wavepacket(
        d,
        Cx::new(v[0], v[1]),
        &v[lay.center..lay.center + d],
        &v[lay.momentum..lay.momentum + d],
        width,
    )
}

/// Parameters of a pure term (inverse of [`gamma`]).
pub fn params_of(u: &GaussianTerm<f64>) -> Result<Vec<f64>> {
    if !u.is_pure() {
        return Err(Error::InvalidParameter("parameters are defined for pure Gaussians only".into()));
    }
    let d = u.dim();
    let lay = Layout::new(d);
    let mut v = vec![0.0; lay.len];
    let a = u.amplitude();
    v[0] = a.re;
    v[1] = a.im;
    let w = u.width();
    for (k, (i, j)) in upper_pairs(d).into_iter().enumerate() {
        v[lay.width_re + k] = w[i][j].re;
        v[lay.width_im + k] = w[i][j].im;
    }
    v[lay.center..lay.center + d].copy_from_slice(&u.center());
    v[lay.momentum..lay.momentum + d].copy_from_slice(&u.momentum());
    Ok(v)
}

/// Term with a unit dual seed on parameter `direction`.
pub fn dual_lift(u: &GaussianTerm<f64>, direction: usize) -> Result<GaussianTerm<Dual<1>>> {
    let v = params_of(u)?;
    if direction >= v.len() {
        return Err(Error::IndexOutOfRange { index: direction, len: v.len() });
    }
    let dv: Vec<Dual<1>> = v
        .iter()
        .enumerate()
        .map(|(i, &x)| if i == direction { Dual::variable(x, 0) } else { Dual::constant(x) })
        .collect();
    gamma(u.dim(), &dv)
}

/// Parameter derivatives `∂γ/∂v_i = P_i(x − q) · γ̂(x)` where `γ̂` is `γ(v)`
/// with unit amplitude. Returns `(γ̂, [P_i])`.
pub fn derivative_polys(d: usize, v: &[f64]) -> Result<(GaussianTerm<f64>, Vec<Poly<f64>>)> {
    let lay = Layout::new(d);
    let mut unit = v.to_vec();
    unit[0] = 1.0;
    unit[1] = 0.0;
    let base = gamma(d, &unit)?;
    let a = C64::from_f64(v[0], v[1]);
    let i = C64::i();
    let w = base.width();
    let e = |j: usize| {
        let mut x = [0u8; MAX_DIM];
        x[j] = 1;
        x
    };
    let e2 = |j: usize, k: usize| {
        let mut x = [0u8; MAX_DIM];
        x[j] += 1;
        x[k] += 1;
        x
    };
    let mut polys = vec![Poly::constant(C64::zero()); lay.len];
    polys[0] = Poly::one();
    polys[1] = Poly::constant(i);
    for (k, (r, c)) in upper_pairs(d).into_iter().enumerate() {
        let f = if r == c { -0.5 } else { -1.0 };
        polys[lay.width_re + k] = Poly::monomial(e2(r, c), a.scale_f(f));
        polys[lay.width_im + k] = Poly::monomial(e2(r, c), (a * i).scale_f(f));
    }
    // ∂/∂q_j of −½yᵀQy + i p·y with y = x − q is (Qy)_j − i p_j
    for j in 0..d {
        let mut terms = vec![([0u8; MAX_DIM], -(a * i).scale_f(v[lay.momentum + j]))];
        for k in 0..d {
            terms.push((e(k), a * w[j][k]));
        }
        polys[lay.center + j] = Poly::from_terms(terms);
        polys[lay.momentum + j] = Poly::monomial(e(j), a * i);
    }
    Ok((base, polys))
}
