//! Sparse complex polynomials in at most three real variables.

use std::collections::BTreeMap;

use super::scalar::{lift_c, Cx, Real, C64};
use super::small::{Vec3, MAX_DIM};

/// Exponent multi-index.
pub type Exponent = [u8; MAX_DIM];

/// `Σ c_θ y^θ`, stored as a sorted list of nonzero monomials.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<R> {
    terms: Vec<(Exponent, Cx<R>)>,
}

fn binomial(n: u8, k: u8) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

impl<R: Real> Poly<R> {
    pub fn constant(c: Cx<R>) -> Self {
        Self { terms: vec![([0; MAX_DIM], c)] }
    }

    pub fn one() -> Self {
        Self::constant(Cx::one())
    }

    pub fn monomial(exp: Exponent, c: Cx<R>) -> Self {
        Self { terms: vec![(exp, c)] }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Exponent, Cx<R>)>) -> Self {
        let mut map: BTreeMap<Exponent, Cx<R>> = BTreeMap::new();
        for (e, c) in terms {
            let slot = map.entry(e).or_insert_with(Cx::zero);
            *slot += c;
        }
        Self { terms: map.into_iter().collect() }
    }

    pub fn terms(&self) -> &[(Exponent, Cx<R>)] {
        &self.terms
    }

    pub fn is_constant_one(&self) -> bool {
        self.terms.len() == 1
            && self.terms[0].0 == [0; MAX_DIM]
            && self.terms[0].1.re.value() == 1.0
            && self.terms[0].1.im.value() == 0.0
    }

    /// Largest exponent in each direction.
    pub fn max_exponents(&self) -> Exponent {
        let mut m = [0u8; MAX_DIM];
        for (e, _) in &self.terms {
            for j in 0..MAX_DIM {
                m[j] = m[j].max(e[j]);
            }
        }
        m
    }

    pub fn total_degree(&self) -> usize {
        self.terms.iter().map(|(e, _)| e.iter().map(|&x| x as usize).sum()).max().unwrap_or(0)
    }

    /// Coefficients conjugated (the polynomial `conj(P(y))` for real `y`).
    pub fn conj(&self) -> Self {
        Self { terms: self.terms.iter().map(|&(e, c)| (e, c.conj())).collect() }
    }

    pub fn scale(&self, s: Cx<R>) -> Self {
        Self { terms: self.terms.iter().map(|&(e, c)| (e, c * s)).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_terms(self.terms.iter().chain(other.terms.iter()).copied())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for &(ea, ca) in &self.terms {
            for &(eb, cb) in &other.terms {
                let mut e = [0u8; MAX_DIM];
                for j in 0..MAX_DIM {
                    e[j] = ea[j] + eb[j];
                }
                out.push((e, ca * cb));
            }
        }
        Self::from_terms(out)
    }

    /// Partial derivative in direction `j`.
    pub fn derivative(&self, j: usize) -> Self {
        let terms = self.terms.iter().filter(|(e, _)| e[j] > 0).map(|&(e, c)| {
            let mut e2 = e;
            e2[j] -= 1;
            (e2, c.scale_f(e[j] as f64))
        });
        let p = Self::from_terms(terms);
        if p.terms.is_empty() {
            Self::constant(Cx::zero())
        } else {
            p
        }
    }

    /// Re-expansion `Q(y) = P(y + s)`.
    pub fn shift(&self, s: &Vec3<R>) -> Self {
        let mut out = Vec::new();
        for &(e, c) in &self.terms {
            // expand Π_j (y_j + s_j)^{e_j}
            let mut partial: Vec<(Exponent, Cx<R>)> = vec![([0; MAX_DIM], c)];
            for j in 0..MAX_DIM {
                if e[j] == 0 {
                    continue;
                }
                let mut powers = vec![Cx::one(); e[j] as usize + 1];
                for k in 1..=e[j] as usize {
                    powers[k] = powers[k - 1] * s[j];
                }
                let mut next = Vec::with_capacity(partial.len() * (e[j] as usize + 1));
                for &(pe, pc) in &partial {
                    for i in 0..=e[j] {
                        let mut ne = pe;
                        ne[j] = i;
                        next.push((ne, pc * powers[(e[j] - i) as usize].scale_f(binomial(e[j], i))));
                    }
                }
                partial = next;
            }
            out.extend(partial);
        }
        Self::from_terms(out)
    }

    pub fn eval(&self, y: &[Cx<R>]) -> Cx<R> {
        let mut s = Cx::zero();
        for &(e, c) in &self.terms {
            let mut m = c;
            for (j, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    m *= y[j];
                }
            }
            s += m;
        }
        s
    }
}

pub fn lift_poly<R: Real>(p: &Poly<f64>) -> Poly<R> {
    Poly { terms: p.terms.iter().map(|&(e, c)| (e, lift_c::<R>(c))).collect() }
}

impl Poly<f64> {
    pub fn coefficients(&self) -> impl Iterator<Item = (Exponent, C64)> + '_ {
        self.terms.iter().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::from_f64(re, im)
    }

    #[test]
    fn shift_matches_pointwise() {
        let p = Poly::from_terms(vec![
            ([2, 1, 0], c(1.0, -0.5)),
            ([0, 0, 3], c(0.25, 2.0)),
            ([1, 0, 1], c(-3.0, 0.0)),
            ([0, 0, 0], c(0.5, 0.5)),
        ]);
        let s = [c(0.3, -1.2), c(-0.7, 0.1), c(1.1, 0.4)];
        let q = p.shift(&s);
        let y = [c(0.4, 0.0), c(-1.3, 0.0), c(0.9, 0.0)];
        let ys = [y[0] + s[0], y[1] + s[1], y[2] + s[2]];
        let a = q.eval(&y);
        let b = p.eval(&ys);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn product_and_derivative_pointwise() {
        let p = Poly::from_terms(vec![([1, 0, 0], c(2.0, 1.0)), ([0, 2, 0], c(0.0, 1.0))]);
        let q = Poly::from_terms(vec![([0, 0, 0], c(1.0, 0.0)), ([1, 1, 0], c(-1.0, 3.0))]);
        let y = [c(0.7, 0.0), c(-0.2, 0.0), c(0.0, 0.0)];
        assert!((p.mul(&q).eval(&y) - p.eval(&y) * q.eval(&y)).abs() < 1e-14);
        let h = 1e-6;
        let yp = [c(0.7, 0.0), c(-0.2 + h, 0.0), c(0.0, 0.0)];
        let ym = [c(0.7, 0.0), c(-0.2 - h, 0.0), c(0.0, 0.0)];
        let fd = (p.eval(&yp) - p.eval(&ym)).scale_f(0.5 / h);
        assert!((p.derivative(1).eval(&y) - fd).abs() < 1e-8);
    }
}
