//! Polynomial complex-Gaussian terms and sums, with exact inner products,
//! products and free Schrödinger propagation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::poly::{lift_poly, Exponent, Poly};
use super::scalar::{lift_c, Cx, Real, C64};
use super::small::{
    add_mat, conj_mat, dot, mat_vec, real_part_positive_definite, zero_mat, zero_vec, Ldl, Mat3, Vec3, MAX_DIM,
};
use crate::error::{Error, Result};

/// `amp · P(x − c) · exp(−½ xᵀQx + βᵀx + κ)` on `ℝ^d`, `d ≤ 3`.
///
/// Stored in exponent form; the wavepacket view
/// `a · exp(−½(x−q)ᵀQ(x−q) + i p·(x−q))` is recovered by [`Self::center`],
/// [`Self::momentum`] and [`Self::amplitude`]. `Re Q` is positive definite.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianTerm<R: Real = f64> {
    dim: usize,
    width: Mat3<R>,
    beta: Vec3<R>,
    kappa: Cx<R>,
    amp: Cx<R>,
    poly: Option<(Poly<R>, [R; MAX_DIM])>,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        Err(Error::InvalidParameter(format!("dimension must be 1..={MAX_DIM}, got {d}")))
    } else {
        Ok(())
    }
}

/// Symmetric complex width `A + iB` from real row-major `A` and `B`.
pub fn width_from_parts(d: usize, a: &[f64], b: &[f64]) -> Mat3<f64> {
    let mut m = zero_mat();
    for i in 0..d {
        for j in 0..d {
            m[i][j] = C64::from_f64(0.5 * (a[i * d + j] + a[j * d + i]), 0.5 * (b[i * d + j] + b[j * d + i]));
        }
    }
    m
}

impl<R: Real> GaussianTerm<R> {
    /// Wavepacket `a · exp(−½(x−q)ᵀQ(x−q)) · exp(i p·(x−q))`.
    pub fn wavepacket(d: usize, a: Cx<R>, q: &[R], p: &[R], width: Mat3<R>) -> Result<Self> {
        check_dim(d)?;
        if q.len() != d || p.len() != d {
            return Err(Error::ShapeMismatch {
                expected: format!("{d}-vectors"),
                got: format!("{}, {}", q.len(), p.len()),
            });
        }
        if !real_part_positive_definite(&width, d) {
            return Err(Error::InvalidWidth);
        }
        let mut qc = zero_vec::<R>();
        for j in 0..d {
            qc[j] = Cx::real(q[j]);
        }
        let qq = mat_vec(&width, &qc, d);
        let mut beta = zero_vec::<R>();
        let mut kappa = Cx::zero();
        for j in 0..d {
            beta[j] = qq[j] + Cx::new(R::zero(), p[j]);
            kappa -= qq[j] * qc[j] * Cx::from_f64(0.5, 0.0) + Cx::new(R::zero(), p[j] * q[j]);
        }
        Ok(Self { dim: d, width: sym(&width, d), beta, kappa, amp: a, poly: None })
    }

    /// Attaches a polynomial factor `P(x − center)`.
    pub fn with_poly(mut self, poly: Poly<R>, center: &[R]) -> Result<Self> {
        if center.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{}-vector", self.dim),
                got: center.len().to_string(),
            });
        }
        if poly.terms().iter().any(|(e, _)| e[self.dim..].iter().any(|&k| k > 0)) {
            return Err(Error::InvalidParameter("polynomial uses more variables than the dimension".into()));
        }
        let mut c = [R::zero(); MAX_DIM];
        c[..self.dim].copy_from_slice(center);
        self.poly = if poly.is_constant_one() { None } else { Some((poly, c)) };
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> Mat3<R> {
        self.width
    }

    pub fn is_pure(&self) -> bool {
        self.poly.is_none()
    }

    pub fn poly(&self) -> Option<(&Poly<R>, &[R])> {
        self.poly.as_ref().map(|(p, c)| (p, &c[..self.dim]))
    }

    fn real_part_inverse(&self) -> [[f64; MAX_DIM]; MAX_DIM] {
        let d = self.dim;
        let mut a = zero_mat::<f64>();
        for i in 0..d {
            for j in 0..d {
                a[i][j] = C64::from_f64(self.width[i][j].re.value(), 0.0);
            }
        }
        let inv = Ldl::new(&a, d).expect("validated width").inverse();
        let mut out = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            for j in 0..d {
                out[i][j] = inv[i][j].re;
            }
        }
        out
    }

    /// Position center `q = (Re Q)⁻¹ Re β` (primal values).
    pub fn center(&self) -> Vec<f64> {
        let d = self.dim;
        let ainv = self.real_part_inverse();
        (0..d).map(|i| (0..d).map(|j| ainv[i][j] * self.beta[j].re.value()).sum()).collect()
    }

    /// Momentum `p = Im β − (Im Q) q` (primal values).
    pub fn momentum(&self) -> Vec<f64> {
        let d = self.dim;
        let q = self.center();
        (0..d)
            .map(|i| self.beta[i].im.value() - (0..d).map(|j| self.width[i][j].im.value() * q[j]).sum::<f64>())
            .collect()
    }

    /// Wavepacket amplitude `a` at the center (primal values).
    pub fn amplitude(&self) -> C64 {
        let d = self.dim;
        let q = self.center();
        let p = self.momentum();
        let mut e = self.kappa.value();
        for i in 0..d {
            for j in 0..d {
                e += self.width[i][j].value().scale_f(0.5 * q[i] * q[j]);
            }
            e += C64::from_f64(0.0, p[i] * q[i]);
        }
        self.amp.value() * e.exp()
    }

    /// Point value at real `x`.
    pub fn eval(&self, x: &[f64]) -> Cx<R> {
        let d = self.dim;
        let mut xv = zero_vec::<R>();
        for j in 0..d {
            xv[j] = Cx::from_f64(x[j], 0.0);
        }
        let qx = mat_vec(&self.width, &xv, d);
        let e = self.kappa + dot(&self.beta, &xv, d) - dot(&xv, &qx, d).scale_f(0.5);
        let mut v = self.amp * e.exp();
        if let Some((p, c)) = &self.poly {
            let mut y = zero_vec::<R>();
            for j in 0..d {
                y[j] = Cx::real(R::from_f64(x[j]) - c[j]);
            }
            v *= p.eval(&y);
        }
        v
    }

    /// Multiplication by a complex scalar.
    pub fn scale(&self, s: Cx<R>) -> Self {
        let mut out = self.clone();
        out.amp *= s;
        out
    }

    /// `‖u‖²`.
    pub fn norm_sqr(&self) -> Result<R> {
        Ok(inner(self, self)?.re)
    }

    pub fn check_valid(&self) -> Result<()> {
        if real_part_positive_definite(&self.width, self.dim) {
            Ok(())
        } else {
            Err(Error::InvalidWidth)
        }
    }
}

fn sym<R: Real>(m: &Mat3<R>, d: usize) -> Mat3<R> {
    let mut out = *m;
    for i in 0..d {
        for j in i + 1..d {
            let avg = (m[i][j] + m[j][i]).scale_f(0.5);
            out[i][j] = avg;
            out[j][i] = avg;
        }
    }
    out
}

/// Constant lift into another real field.
pub fn lift<R: Real>(u: &GaussianTerm<f64>) -> GaussianTerm<R> {
    let mut width = zero_mat();
    let mut beta = zero_vec();
    for i in 0..u.dim {
        beta[i] = lift_c(u.beta[i]);
        for j in 0..u.dim {
            width[i][j] = lift_c(u.width[i][j]);
        }
    }
    GaussianTerm {
        dim: u.dim,
        width,
        beta,
        kappa: lift_c(u.kappa),
        amp: lift_c(u.amp),
        poly: u.poly.as_ref().map(|(p, c)| (lift_poly(p), c.map(R::from_f64))),
    }
}

/// Primal part of a term over any real field.
pub fn primal<R: Real>(u: &GaussianTerm<R>) -> GaussianTerm<f64> {
    let mut width = zero_mat();
    let mut beta = zero_vec();
    for i in 0..u.dim {
        beta[i] = u.beta[i].value();
        for j in 0..u.dim {
            width[i][j] = u.width[i][j].value();
        }
    }
    GaussianTerm {
        dim: u.dim,
        width,
        beta,
        kappa: u.kappa.value(),
        amp: u.amp.value(),
        poly: u
            .poly
            .as_ref()
            .map(|(p, c)| (Poly::from_terms(p.terms().iter().map(|&(e, z)| (e, z.value()))), c.map(|x| x.value()))),
    }
}

/// Completed square of `conj(g_u)·g_v` for the exponential parts.
struct Combined<R> {
    d: usize,
    ldl: Ldl<R>,
    mean: Vec3<R>,
    /// `∫ conj(g_u) g_v dx` without polynomial factors.
    mass: Cx<R>,
}

fn combine<R: Real>(u: &GaussianTerm<R>, v: &GaussianTerm<R>) -> Result<Combined<R>> {
    if u.dim != v.dim {
        return Err(Error::ShapeMismatch { expected: format!("dimension {}", u.dim), got: v.dim.to_string() });
    }
    let d = u.dim;
    let m = add_mat(&conj_mat(&u.width, d), &v.width, d);
    let ldl = Ldl::new(&m, d).ok_or(Error::InvalidWidth)?;
    let mut b = zero_vec::<R>();
    for j in 0..d {
        b[j] = u.beta[j].conj() + v.beta[j];
    }
    let mean = ldl.solve(&b);
    let expo = dot(&b, &mean, d).scale_f(0.5) + u.kappa.conj() + v.kappa;
    let mass =
        u.amp.conj() * v.amp * ldl.det_inv_sqrt() * expo.exp() * Cx::from_f64((2.0 * PI).powf(d as f64 / 2.0), 0.0);
    Ok(Combined { d, ldl, mean, mass })
}

/// Moments `E[y^θ]` of the centered complex Gaussian with covariance `Σ`,
/// for all `θ` with `θ_j ≤ max[j]`, from the recurrence
/// `E[y_j y^θ] = Σ_k Σ_jk θ_k E[y^{θ−e_k}]`.
pub struct Moments<R> {
    max: Exponent,
    table: Vec<Cx<R>>,
}

impl<R: Real> Moments<R> {
    pub fn new(cov: &Mat3<R>, max: Exponent) -> Self {
        let dims = max.map(|m| m as usize + 1);
        let mut table = vec![Cx::zero(); dims[0] * dims[1] * dims[2]];
        let idx = |e: &[usize; 3]| (e[0] * dims[1] + e[1]) * dims[2] + e[2];
        table[0] = Cx::one();
        let total = dims[0] + dims[1] + dims[2];
        for deg in 1..total {
            for a in 0..dims[0] {
                for b in 0..dims[1] {
                    let c = match deg.checked_sub(a + b) {
                        Some(c) if c < dims[2] => c,
                        _ => continue,
                    };
                    let e = [a, b, c];
                    let j = (0..3).find(|&j| e[j] > 0).unwrap();
                    let mut rest = e;
                    rest[j] -= 1;
                    let mut s = Cx::zero();
                    for k in 0..3 {
                        if rest[k] > 0 {
                            let mut r2 = rest;
                            r2[k] -= 1;
                            s += cov[j][k] * table[idx(&r2)].scale_f(rest[k] as f64);
                        }
                    }
                    table[idx(&e)] = s;
                }
            }
        }
        Self { max, table }
    }

    pub fn get(&self, e: Exponent) -> Cx<R> {
        let d1 = self.max[1] as usize + 1;
        let d2 = self.max[2] as usize + 1;
        self.table[(e[0] as usize * d1 + e[1] as usize) * d2 + e[2] as usize]
    }
}

/// Polynomial factor of `u` re-expanded about `mean` (`None` for pure terms).
fn shifted_poly<R: Real>(u: &GaussianTerm<R>, mean: &Vec3<R>, conj: bool) -> Option<Poly<R>> {
    u.poly.as_ref().map(|(p, c)| {
        let mut s = zero_vec::<R>();
        for j in 0..u.dim {
            s[j] = mean[j] - Cx::real(c[j]);
        }
        if conj {
            p.conj().shift(&s)
        } else {
            p.shift(&s)
        }
    })
}

/// Covariance of the combined Gaussian, padded with zeros beyond `d`.
fn covariance<R: Real>(c: &Combined<R>) -> Mat3<R> {
    c.ldl.inverse()
}

/// `⟨u, v⟩ = ∫ conj(u) v dx`, conjugate-linear in `u`.
pub fn inner<R: Real>(u: &GaussianTerm<R>, v: &GaussianTerm<R>) -> Result<Cx<R>> {
    let c = combine(u, v)?;
    let pu = shifted_poly(u, &c.mean, true);
    let pv = shifted_poly(v, &c.mean, false);
    let prod = match (pu, pv) {
        (None, None) => return Ok(c.mass),
        (Some(p), None) | (None, Some(p)) => p,
        (Some(p), Some(q)) => p.mul(&q),
    };
    let mom = Moments::new(&covariance(&c), prod.max_exponents());
    let mut s = Cx::zero();
    for &(e, coef) in prod.terms() {
        s += coef * mom.get(e);
    }
    Ok(c.mass * s)
}

/// Gram matrix `⟨P_a(x − c_u) g_u, P_b(x − c_v) g_v⟩` for pure `g_u`, `g_v`
/// and polynomial lists sharing each base, with one completed square and one
/// moment table for all pairs.
pub fn poly_gram(
    u: &GaussianTerm<f64>,
    u_polys: &[Poly<f64>],
    u_center: &[f64],
    v: &GaussianTerm<f64>,
    v_polys: &[Poly<f64>],
    v_center: &[f64],
) -> Result<Vec<Vec<C64>>> {
    if !u.is_pure() || !v.is_pure() {
        return Err(Error::InvalidParameter("poly_gram expects pure Gaussian bases".into()));
    }
    let c = combine(u, v)?;
    let d = c.d;
    let mut su = zero_vec::<f64>();
    let mut sv = zero_vec::<f64>();
    for j in 0..d {
        su[j] = c.mean[j] - C64::from_f64(u_center[j], 0.0);
        sv[j] = c.mean[j] - C64::from_f64(v_center[j], 0.0);
    }
    let pu: Vec<Poly<f64>> = u_polys.iter().map(|p| p.conj().shift(&su)).collect();
    let pv: Vec<Poly<f64>> = v_polys.iter().map(|p| p.shift(&sv)).collect();
    let mut max = [0u8; MAX_DIM];
    let mu = pu.iter().fold([0u8; MAX_DIM], |m, p| elementwise_max(m, p.max_exponents()));
    let mv = pv.iter().fold([0u8; MAX_DIM], |m, p| elementwise_max(m, p.max_exponents()));
    for j in 0..MAX_DIM {
        max[j] = mu[j] + mv[j];
    }
    let mom = Moments::new(&covariance(&c), max);
    let mut out = vec![vec![C64::zero(); pv.len()]; pu.len()];
    for (a, p) in pu.iter().enumerate() {
        for (b, q) in pv.iter().enumerate() {
            let mut s = C64::zero();
            for &(ea, ca) in p.terms() {
                for &(eb, cb) in q.terms() {
                    s += ca * cb * mom.get([ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]]);
                }
            }
            out[a][b] = c.mass * s;
        }
    }
    Ok(out)
}

fn elementwise_max(a: Exponent, b: Exponent) -> Exponent {
    [a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2])]
}

/// Pointwise product `u·v`.
pub fn multiply<R: Real>(u: &GaussianTerm<R>, v: &GaussianTerm<R>) -> Result<GaussianTerm<R>> {
    if u.dim != v.dim {
        return Err(Error::ShapeMismatch { expected: format!("dimension {}", u.dim), got: v.dim.to_string() });
    }
    let d = u.dim;
    let mut beta = zero_vec();
    for j in 0..d {
        beta[j] = u.beta[j] + v.beta[j];
    }
    let poly = match (&u.poly, &v.poly) {
        (None, None) => None,
        (Some(p), None) | (None, Some(p)) => Some(p.clone()),
        (Some((pu, cu)), Some((pv, cv))) => {
            // P_v(x − c_v) = P_v((x − c_u) + (c_u − c_v))
            let mut s = zero_vec::<R>();
            for j in 0..d {
                s[j] = Cx::real(cu[j] - cv[j]);
            }
            Some((pu.mul(&pv.shift(&s)), *cu))
        }
    };
    Ok(GaussianTerm {
        dim: d,
        width: add_mat(&u.width, &v.width, d),
        beta,
        kappa: u.kappa + v.kappa,
        amp: u.amp * v.amp,
        poly,
    })
}

/// `e^{i σ t Δ} u` with `σ = ±1`, the solution at time `t` of
/// `∂_t w = i σ Δ w`, `w(0) = u`.
///
/// Width `Q_t = (Q⁻¹ + 2iσt)⁻¹`; the amplitude factor
/// `det(I + 2iσtQ)^{-1/2} = det(Q)^{-1/2} det(Q⁻¹ + 2iσt)^{-1/2}` is
/// evaluated as a product of two principal branches over matrices with
/// positive definite real part, which is the continuous branch in `t`.
pub fn free_evolve<R: Real>(u: &GaussianTerm<R>, t: f64, sign: f64) -> Result<GaussianTerm<R>> {
    let d = u.dim;
    if t == 0.0 {
        return Ok(u.clone());
    }
    let st = sign * t;
    // work in coordinates y = x − c centered at the polynomial's center
    let center: [R; MAX_DIM] = match &u.poly {
        Some((_, c)) => *c,
        None => [R::zero(); MAX_DIM],
    };
    let mut cv = zero_vec::<R>();
    for j in 0..d {
        cv[j] = Cx::real(center[j]);
    }
    let qc = mat_vec(&u.width, &cv, d);
    let mut beta_y = zero_vec::<R>();
    for j in 0..d {
        beta_y[j] = u.beta[j] - qc[j];
    }
    let kappa_y = u.kappa - dot(&cv, &qc, d).scale_f(0.5) + dot(&u.beta, &cv, d);

    let fq = Ldl::new(&u.width, d).ok_or(Error::InvalidWidth)?;
    let mut k = fq.inverse();
    for j in 0..d {
        k[j][j] += Cx::from_f64(0.0, 2.0 * st);
    }
    let fk = Ldl::new(&k, d).ok_or(Error::InvalidWidth)?;
    let width_t = sym(&fk.inverse(), d);
    // β_t = (I + 2iσtQ)⁻¹β = Q_t Q⁻¹ β
    let qinv_beta = fq.solve(&beta_y);
    let beta_t = mat_vec(&width_t, &qinv_beta, d);
    let kappa_t = kappa_y + dot(&beta_y, &beta_t, d) * Cx::from_f64(0.0, st);
    let amp_t = u.amp * fq.det_inv_sqrt() * fk.det_inv_sqrt();

    let poly = match &u.poly {
        None => None,
        Some((p, c)) => Some((evolve_poly(p, &width_t, &beta_t, st, d), *c)),
    };

    // back to x coordinates
    let qtc = mat_vec(&width_t, &cv, d);
    let mut beta = zero_vec::<R>();
    for j in 0..d {
        beta[j] = beta_t[j] + qtc[j];
    }
    let kappa = kappa_t - dot(&cv, &qtc, d).scale_f(0.5) - dot(&beta_t, &cv, d);
    Ok(GaussianTerm { dim: d, width: width_t, beta, kappa, amp: amp_t, poly })
}

/// `P(O) 1` with the commuting operators `O_j = y_j + 2iσt(∂_j + ℓ_j)`,
/// `ℓ_j = β_j − (Q y)_j`, the polynomial part of `e^{iσtΔ}[P g]`.
fn evolve_poly<R: Real>(p: &Poly<R>, width: &Mat3<R>, beta: &Vec3<R>, st: f64, d: usize) -> Poly<R> {
    let two_ist = Cx::from_f64(0.0, 2.0 * st);
    // ℓ_j as a polynomial
    let ell: Vec<Poly<R>> = (0..d)
        .map(|j| {
            let mut terms = vec![([0u8; MAX_DIM], beta[j])];
            for k in 0..d {
                let mut e = [0u8; MAX_DIM];
                e[k] = 1;
                terms.push((e, -width[j][k]));
            }
            Poly::from_terms(terms)
        })
        .collect();
    let apply = |r: &Poly<R>, j: usize| -> Poly<R> {
        let mut e = [0u8; MAX_DIM];
        e[j] = 1;
        let y_r = Poly::monomial(e, Cx::one()).mul(r);
        let inner = r.derivative(j).add(&ell[j].mul(r));
        y_r.add(&inner.scale(two_ist))
    };
    let mut cache: std::collections::BTreeMap<Exponent, Poly<R>> = std::collections::BTreeMap::new();
    cache.insert([0; MAX_DIM], Poly::one());
    let mut out = Poly::constant(Cx::zero());
    for &(e, c) in p.terms() {
        let r = image_of(e, &mut cache, &apply);
        out = out.add(&r.scale(c));
    }
    out
}

fn image_of<R: Real>(
    e: Exponent,
    cache: &mut std::collections::BTreeMap<Exponent, Poly<R>>,
    apply: &impl Fn(&Poly<R>, usize) -> Poly<R>,
) -> Poly<R> {
    if let Some(p) = cache.get(&e) {
        return p.clone();
    }
    let j = (0..MAX_DIM).find(|&j| e[j] > 0).unwrap();
    let mut prev = e;
    prev[j] -= 1;
    let base = image_of(prev, cache, apply);
    let r = apply(&base, j);
    cache.insert(e, r.clone());
    r
}

/// Finite sum of terms of equal dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSum<R: Real = f64> {
    dim: usize,
    terms: Vec<GaussianTerm<R>>,
}

impl<R: Real> GaussianSum<R> {
    pub fn new(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn from_terms(dim: usize, terms: Vec<GaussianTerm<R>>) -> Result<Self> {
        check_dim(dim)?;
        if let Some(t) = terms.iter().find(|t| t.dim != dim) {
            return Err(Error::ShapeMismatch { expected: format!("dimension {dim}"), got: t.dim.to_string() });
        }
        Ok(Self { dim, terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[GaussianTerm<R>] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn push(&mut self, t: GaussianTerm<R>) -> Result<()> {
        if t.dim != self.dim {
            return Err(Error::ShapeMismatch { expected: format!("dimension {}", self.dim), got: t.dim.to_string() });
        }
        self.terms.push(t);
        Ok(())
    }

    pub fn extend(&mut self, other: &Self) -> Result<()> {
        for t in &other.terms {
            self.push(t.clone())?;
        }
        Ok(())
    }

    pub fn scale(&self, s: Cx<R>) -> Self {
        Self { dim: self.dim, terms: self.terms.iter().map(|t| t.scale(s)).collect() }
    }

    pub fn eval(&self, x: &[f64]) -> Cx<R> {
        let mut s = Cx::zero();
        for t in &self.terms {
            s += t.eval(x);
        }
        s
    }

    pub fn free_evolve(&self, t: f64, sign: f64) -> Result<Self> {
        let terms = self.terms.iter().map(|g| free_evolve(g, t, sign)).collect::<Result<_>>()?;
        Ok(Self { dim: self.dim, terms })
    }

    /// Product with every term of `other`.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        let mut terms = Vec::with_capacity(self.len() * other.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(multiply(a, b)?);
            }
        }
        Ok(Self { dim: self.dim, terms })
    }

    pub fn norm_sqr(&self) -> Result<R> {
        Ok(inner_sum(self, self)?.re)
    }
}

pub fn lift_sum<R: Real>(u: &GaussianSum<f64>) -> GaussianSum<R> {
    GaussianSum { dim: u.dim, terms: u.terms.iter().map(lift).collect() }
}

/// `⟨u, v⟩` for sums.
pub fn inner_sum<R: Real>(u: &GaussianSum<R>, v: &GaussianSum<R>) -> Result<Cx<R>> {
    let mut s = Cx::zero();
    for a in &u.terms {
        for b in &v.terms {
            s += inner(a, b)?;
        }
    }
    Ok(s)
}

/// `⟨u, v⟩` with a single term on the left.
pub fn inner_term_sum<R: Real>(u: &GaussianTerm<R>, v: &GaussianSum<R>) -> Result<Cx<R>> {
    let mut s = Cx::zero();
    for b in &v.terms {
        s += inner(u, b)?;
    }
    Ok(s)
}

/// Serialized exponent-form record; `f64` values round-trip exactly.
#[derive(Serialize, Deserialize)]
struct TermRecord {
    dim: usize,
    /// Row-major `(re, im)` entries of `Q`.
    width: Vec<[f64; 2]>,
    beta: Vec<[f64; 2]>,
    kappa: [f64; 2],
    amp: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poly: Option<PolyRecord>,
}

#[derive(Serialize, Deserialize)]
struct PolyRecord {
    center: Vec<f64>,
    coefficients: Vec<(Vec<u8>, [f64; 2])>,
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn unpair(z: [f64; 2]) -> C64 {
    C64::from_f64(z[0], z[1])
}

impl Serialize for GaussianTerm<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim;
        let rec = TermRecord {
            dim: d,
            width: (0..d * d).map(|k| pair(self.width[k / d][k % d])).collect(),
            beta: (0..d).map(|k| pair(self.beta[k])).collect(),
            kappa: pair(self.kappa),
            amp: pair(self.amp),
            poly: self.poly.as_ref().map(|(p, c)| PolyRecord {
                center: c[..d].to_vec(),
                coefficients: p.terms().iter().map(|(e, z)| (e[..d].to_vec(), pair(*z))).collect(),
            }),
        };
        rec.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianTerm<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = TermRecord::deserialize(de)?;
        let d = rec.dim;
        if d == 0 || d > MAX_DIM || rec.width.len() != d * d || rec.beta.len() != d {
            return Err(D::Error::custom("inconsistent Gaussian term dimensions"));
        }
        let mut width = zero_mat();
        let mut beta = zero_vec();
        for i in 0..d {
            beta[i] = unpair(rec.beta[i]);
            for j in 0..d {
                width[i][j] = unpair(rec.width[i * d + j]);
            }
        }
        let poly = match rec.poly {
            None => None,
            Some(p) => {
                if p.center.len() != d || p.coefficients.iter().any(|(e, _)| e.len() != d) {
                    return Err(D::Error::custom("inconsistent polynomial dimensions"));
                }
                let mut c = [0.0; MAX_DIM];
                c[..d].copy_from_slice(&p.center);
                let terms = p.coefficients.into_iter().map(|(e, z)| {
                    let mut ex = [0u8; MAX_DIM];
                    ex[..d].copy_from_slice(&e);
                    (ex, unpair(z))
                });
                Some((Poly::from_terms(terms), c))
            }
        };
        let term = GaussianTerm { dim: d, width, beta, kappa: unpair(rec.kappa), amp: unpair(rec.amp), poly };
        term.check_valid().map_err(D::Error::custom)?;
        Ok(term)
    }
}

impl Serialize for GaussianSum<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Rec<'a> {
            dim: usize,
            terms: &'a [GaussianTerm<f64>],
        }
        Rec { dim: self.dim, terms: &self.terms }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianSum<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        #[derive(Deserialize)]
        struct Rec {
            dim: usize,
            terms: Vec<GaussianTerm<f64>>,
        }
        let r = Rec::deserialize(de)?;
        GaussianSum::from_terms(r.dim, r.terms).map_err(D::Error::custom)
    }
}
