//! Dense linear algebra for complex symmetric matrices of order at most 3.

use super::scalar::{Cx, Real};

pub const MAX_DIM: usize = 3;

pub type Vec3<R> = [Cx<R>; MAX_DIM];
pub type Mat3<R> = [[Cx<R>; MAX_DIM]; MAX_DIM];

pub fn zero_vec<R: Real>() -> Vec3<R> {
    [Cx::zero(); MAX_DIM]
}

pub fn zero_mat<R: Real>() -> Mat3<R> {
    [[Cx::zero(); MAX_DIM]; MAX_DIM]
}

pub fn identity<R: Real>(d: usize) -> Mat3<R> {
    let mut m = zero_mat();
    for i in 0..d {
        m[i][i] = Cx::one();
    }
    m
}

pub fn conj_mat<R: Real>(m: &Mat3<R>, d: usize) -> Mat3<R> {
    let mut out = *m;
    for row in out.iter_mut().take(d) {
        for x in row.iter_mut().take(d) {
            *x = x.conj();
        }
    }
    out
}

pub fn add_mat<R: Real>(a: &Mat3<R>, b: &Mat3<R>, d: usize) -> Mat3<R> {
    let mut out = zero_mat();
    for i in 0..d {
        for j in 0..d {
            out[i][j] = a[i][j] + b[i][j];
        }
    }
    out
}

pub fn mat_vec<R: Real>(m: &Mat3<R>, x: &Vec3<R>, d: usize) -> Vec3<R> {
    let mut out = zero_vec();
    for i in 0..d {
        let mut s = Cx::zero();
        for j in 0..d {
            s += m[i][j] * x[j];
        }
        out[i] = s;
    }
    out
}

/// Bilinear (not sesquilinear) form `xᵀy`.
pub fn dot<R: Real>(x: &Vec3<R>, y: &Vec3<R>, d: usize) -> Cx<R> {
    let mut s = Cx::zero();
    for i in 0..d {
        s += x[i] * y[i];
    }
    s
}

/// `LDLᵀ` factorization of a complex symmetric matrix whose real part is
/// positive definite. Every pivot then has positive real part, so the
/// principal square roots of the pivots vary continuously along any path of
/// such matrices.
#[derive(Clone, Copy, Debug)]
pub struct Ldl<R> {
    d: usize,
    l: Mat3<R>,
    pivots: Vec3<R>,
}

impl<R: Real> Ldl<R> {
    /// Returns `None` if a pivot has non-positive real part.
    pub fn new(m: &Mat3<R>, d: usize) -> Option<Self> {
        let mut l = identity::<R>(d);
        let mut pivots = zero_vec::<R>();
        for j in 0..d {
            let mut p = m[j][j];
            for k in 0..j {
                p -= l[j][k] * l[j][k] * pivots[k];
            }
            if !(p.re.value() > 0.0) {
                return None;
            }
            pivots[j] = p;
            let inv = p.inv();
            for i in j + 1..d {
                let mut s = m[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k] * pivots[k];
                }
                l[i][j] = s * inv;
            }
        }
        Some(Self { d, l, pivots })
    }

    pub fn solve(&self, b: &Vec3<R>) -> Vec3<R> {
        let d = self.d;
        let mut y = *b;
        for i in 0..d {
            for k in 0..i {
                let t = self.l[i][k] * y[k];
                y[i] -= t;
            }
        }
        for i in 0..d {
            y[i] = y[i] / self.pivots[i];
        }
        for i in (0..d).rev() {
            for k in i + 1..d {
                let t = self.l[k][i] * y[k];
                y[i] -= t;
            }
        }
        y
    }

    pub fn inverse(&self) -> Mat3<R> {
        let d = self.d;
        let mut out = zero_mat();
        for j in 0..d {
            let mut e = zero_vec::<R>();
            e[j] = Cx::one();
            let col = self.solve(&e);
            for i in 0..d {
                out[i][j] = col[i];
            }
        }
        // enforce exact symmetry
        for i in 0..d {
            for j in i + 1..d {
                let avg = (out[i][j] + out[j][i]).scale_f(0.5);
                out[i][j] = avg;
                out[j][i] = avg;
            }
        }
        out
    }

    /// Principal branch of `det(M)^{-1/2}`, continuous on the set of
    /// matrices with positive definite real part and positive on real ones.
    pub fn det_inv_sqrt(&self) -> Cx<R> {
        let mut s = Cx::one();
        for i in 0..self.d {
            s *= self.pivots[i].sqrt();
        }
        s.inv()
    }
}

/// Smallest eigenvalue of the real part is positive (checked on primal
/// values through a Cholesky attempt).
pub fn real_part_positive_definite<R: Real>(m: &Mat3<R>, d: usize) -> bool {
    let mut a = [[0.0f64; MAX_DIM]; MAX_DIM];
    for i in 0..d {
        for j in 0..d {
            a[i][j] = 0.5 * (m[i][j].re.value() + m[j][i].re.value());
        }
    }
    for j in 0..d {
        let mut p = a[j][j];
        for k in 0..j {
            p -= a[j][k] * a[j][k];
        }
        if !(p > 0.0) {
            return false;
        }
        let p = p.sqrt();
        a[j][j] = p;
        for i in j + 1..d {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / p;
        }
    }
    true
}
