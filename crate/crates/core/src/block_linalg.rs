//! Dense kernels shared by both solver families: block-tridiagonal Cholesky,
//! preconditioned conjugate gradient, Kronecker-structured preconditioning and
//! truncated SVD.
//!
//! All reductions run sequentially in index order, so results are
//! deterministic for a fixed input.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hermitian block-tridiagonal matrix.
///
/// `upper[k]` is the coupling block in block-row `k`, block-column `k + 1`;
/// the block below the diagonal is its adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal<T: ComplexField> {
    diag: Vec<DMatrix<T>>,
    upper: Vec<DMatrix<T>>,
}

impl<T: ComplexField> BlockTridiagonal<T> {
    pub fn new(diag: Vec<DMatrix<T>>, upper: Vec<DMatrix<T>>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidParameter("block-tridiagonal matrix needs at least one block".into()));
        }
        let bs = diag[0].nrows();
        if upper.len() + 1 != diag.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} coupling blocks", diag.len() - 1),
                got: format!("{}", upper.len()),
            });
        }
        for m in diag.iter().chain(upper.iter()) {
            if m.nrows() != bs || m.ncols() != bs {
                return Err(Error::ShapeMismatch {
                    expected: format!("{bs}x{bs} blocks"),
                    got: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
        }
        Ok(Self { diag, upper })
    }

    pub fn n_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn block_size(&self) -> usize {
        self.diag[0].nrows()
    }

    pub fn diag(&self) -> &[DMatrix<T>] {
        &self.diag
    }

    pub fn upper(&self) -> &[DMatrix<T>] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.n_blocks() * self.block_size()
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let bs = self.block_size();
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (k, d) in self.diag.iter().enumerate() {
            m.view_mut((k * bs, k * bs), (bs, bs)).copy_from(d);
        }
        for (k, u) in self.upper.iter().enumerate() {
            m.view_mut((k * bs, (k + 1) * bs), (bs, bs)).copy_from(u);
            m.view_mut(((k + 1) * bs, k * bs), (bs, bs)).copy_from(&u.adjoint());
        }
        m
    }

    /// Product with a stacked right-hand side of `n_blocks * block_size` rows.
    pub fn mul(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let bs = self.block_size();
        let n = self.n_blocks();
        let mut y = DMatrix::zeros(x.nrows(), x.ncols());
        for k in 0..n {
            let mut yk = &self.diag[k] * x.rows(k * bs, bs);
            if k + 1 < n {
                yk += &self.upper[k] * x.rows((k + 1) * bs, bs);
            }
            if k > 0 {
                yk += self.upper[k - 1].adjoint() * x.rows((k - 1) * bs, bs);
            }
            y.rows_mut(k * bs, bs).copy_from(&yk);
        }
        y
    }

    /// Adds `shift * I` to every diagonal block.
    pub fn shifted(&self, shift: T::RealField) -> Self {
        let mut out = self.clone();
        for d in out.diag.iter_mut() {
            for i in 0..d.nrows() {
                d[(i, i)] += T::from_real(shift.clone());
            }
        }
        out
    }

    /// Sum of the real parts of the diagonal entries.
    pub fn trace(&self) -> T::RealField {
        let mut s = nalgebra::zero::<T::RealField>();
        for d in &self.diag {
            for i in 0..d.nrows() {
                s += d[(i, i)].clone().real();
            }
        }
        s
    }

    /// Block Cholesky factorization `M = L L*` with `L` block lower bidiagonal.
    pub fn cholesky(&self) -> Result<BlockFactorization<T>> {
        let n = self.n_blocks();
        let mut l_diag: Vec<DMatrix<T>> = Vec::with_capacity(n);
        let mut l_sub: Vec<DMatrix<T>> = Vec::with_capacity(n.saturating_sub(1));
        let mut schur = self.diag[0].clone();
        for k in 0..n {
            let chol = nalgebra::Cholesky::new(schur.clone()).ok_or(Error::NotPositiveDefinite { block: k })?;
            let lk = chol.l();
            if k + 1 < n {
                // C_k = upper[k]^* L_k^{-*}  <=>  C_k^* = L_k^{-1} upper[k]
                let ck_adj =
                    lk.solve_lower_triangular(&self.upper[k]).ok_or(Error::NotPositiveDefinite { block: k })?;
                let ck = ck_adj.adjoint();
                schur = &self.diag[k + 1] - &ck * &ck_adj;
                l_sub.push(ck);
            }
            l_diag.push(lk);
        }
        Ok(BlockFactorization { l_diag, l_sub })
    }

    /// Cholesky with a diagonal shift of `rel * trace / dim` applied when the
    /// plain factorization fails; the shift grows tenfold until it succeeds.
    pub fn cholesky_regularized(&self, rel: T::RealField) -> Result<(BlockFactorization<T>, T::RealField)> {
        match self.cholesky() {
            Ok(f) => Ok((f, nalgebra::zero::<T::RealField>())),
            Err(_) => {
                let scale = self.trace() / nalgebra::convert::<f64, T::RealField>(self.dim() as f64);
                let ten = nalgebra::convert::<f64, T::RealField>(10.0);
                let mut shift = rel * scale.clone();
                if shift <= nalgebra::zero::<T::RealField>() {
                    shift = nalgebra::convert(1e-300);
                }
                for _ in 0..40 {
                    if let Ok(f) = self.shifted(shift.clone()).cholesky() {
                        return Ok((f, shift));
                    }
                    shift *= ten.clone();
                }
                Err(Error::NotPositiveDefinite { block: 0 })
            }
        }
    }
}

/// Factor produced by [`BlockTridiagonal::cholesky`].
#[derive(Debug, Clone)]
pub struct BlockFactorization<T: ComplexField> {
    l_diag: Vec<DMatrix<T>>,
    l_sub: Vec<DMatrix<T>>,
}

impl<T: ComplexField> BlockFactorization<T> {
    pub fn n_blocks(&self) -> usize {
        self.l_diag.len()
    }

    pub fn block_size(&self) -> usize {
        self.l_diag[0].nrows()
    }

    /// Solves `M X = B` for a stacked right-hand side.
    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let bs = self.block_size();
        let n = self.n_blocks();
        let mut y = b.clone();
        for k in 0..n {
            let mut rhs = y.rows(k * bs, bs).into_owned();
            if k > 0 {
                let prev = y.rows((k - 1) * bs, bs).into_owned();
                rhs -= &self.l_sub[k - 1] * prev;
            }
            self.l_diag[k].solve_lower_triangular_mut(&mut rhs);
            y.rows_mut(k * bs, bs).copy_from(&rhs);
        }
        for k in (0..n).rev() {
            let mut rhs = y.rows(k * bs, bs).into_owned();
            if k + 1 < n {
                let next = y.rows((k + 1) * bs, bs).into_owned();
                rhs -= self.l_sub[k].adjoint() * next;
            }
            self.l_diag[k].adjoint().solve_upper_triangular_mut(&mut rhs);
            y.rows_mut(k * bs, bs).copy_from(&rhs);
        }
        y
    }

    pub fn solve_vec(&self, b: &DVector<T>) -> DVector<T> {
        let m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        let x = self.solve(&m);
        DVector::from_column_slice(x.as_slice())
    }

    /// Reassembles `L L*` densely.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let bs = self.block_size();
        let n = self.n_blocks();
        let mut l = DMatrix::zeros(n * bs, n * bs);
        for k in 0..n {
            l.view_mut((k * bs, k * bs), (bs, bs)).copy_from(&self.l_diag[k]);
            if k + 1 < n {
                l.view_mut(((k + 1) * bs, k * bs), (bs, bs)).copy_from(&self.l_sub[k]);
            }
        }
        &l * l.adjoint()
    }
}

/// Preconditioner `N ⊗ I` acting on sequences of `identity_dim × block_size`
/// matrices `X_k` as `X_k ↦ (Σ_l N_kl X_lᵀ)ᵀ`, i.e. the block-tridiagonal `N`
/// acts on the row vectors of each `X_k`.
#[derive(Debug, Clone)]
pub struct KroneckerPreconditioner {
    factor: BlockTridiagonal<Complex64>,
    chol: BlockFactorization<Complex64>,
    identity_dim: usize,
    shift: f64,
}

impl KroneckerPreconditioner {
    /// Factorizes `factor`; a relative diagonal shift of `1e-12 · trace/dim`
    /// (growing if needed) is applied when it is numerically singular.
    pub fn new(factor: BlockTridiagonal<Complex64>, identity_dim: usize) -> Result<Self> {
        let (chol, shift) = factor.cholesky_regularized(1e-12)?;
        Ok(Self { factor, chol, identity_dim, shift })
    }

    pub fn factor(&self) -> &BlockTridiagonal<Complex64> {
        &self.factor
    }

    pub fn identity_dim(&self) -> usize {
        self.identity_dim
    }

    /// Diagonal shift applied during factorization (zero if none).
    pub fn shift(&self) -> f64 {
        self.shift
    }

    fn stack(&self, x: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
        let bs = self.factor.block_size();
        let mut s = DMatrix::zeros(bs * x.len(), self.identity_dim);
        for (k, xk) in x.iter().enumerate() {
            s.rows_mut(k * bs, bs).copy_from(&xk.transpose());
        }
        s
    }

    fn unstack(&self, s: &DMatrix<Complex64>) -> Vec<DMatrix<Complex64>> {
        let bs = self.factor.block_size();
        (0..self.factor.n_blocks()).map(|k| s.rows(k * bs, bs).transpose()).collect()
    }

    pub fn apply(&self, x: &[DMatrix<Complex64>]) -> Vec<DMatrix<Complex64>> {
        self.unstack(&self.factor.mul(&self.stack(x)))
    }

    pub fn solve(&self, x: &[DMatrix<Complex64>]) -> Vec<DMatrix<Complex64>> {
        self.unstack(&self.chol.solve(&self.stack(x)))
    }
}

/// Vector space with the real inner product `Re⟨x, y⟩` used by [`pcg`].
pub trait CgVector: Clone {
    fn dot(&self, other: &Self) -> f64;
    fn axpy(&mut self, alpha: f64, x: &Self);
    fn scale(&mut self, alpha: f64);
    fn zeros_like(&self) -> Self;
}

impl CgVector for Vec<f64> {
    fn dot(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| a * b).sum()
    }
    fn axpy(&mut self, alpha: f64, x: &Self) {
        for (a, b) in self.iter_mut().zip(x) {
            *a += alpha * b;
        }
    }
    fn scale(&mut self, alpha: f64) {
        self.iter_mut().for_each(|a| *a *= alpha);
    }
    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }
}

impl CgVector for Vec<Complex64> {
    fn dot(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| (a.conj() * b).re).sum()
    }
    fn axpy(&mut self, alpha: f64, x: &Self) {
        for (a, b) in self.iter_mut().zip(x) {
            *a += b * alpha;
        }
    }
    fn scale(&mut self, alpha: f64) {
        self.iter_mut().for_each(|a| *a *= alpha);
    }
    fn zeros_like(&self) -> Self {
        vec![Complex64::new(0.0, 0.0); self.len()]
    }
}

impl CgVector for Vec<DMatrix<Complex64>> {
    fn dot(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other)
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum::<f64>())
            .sum()
    }
    fn axpy(&mut self, alpha: f64, x: &Self) {
        for (a, b) in self.iter_mut().zip(x) {
            a.zip_apply(b, |u, v| *u += v * alpha);
        }
    }
    fn scale(&mut self, alpha: f64) {
        for a in self.iter_mut() {
            a.apply(|u| *u *= alpha);
        }
    }
    fn zeros_like(&self) -> Self {
        self.iter().map(|a| DMatrix::zeros(a.nrows(), a.ncols())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome<V> {
    pub x: V,
    pub iterations: usize,
    /// Final preconditioned relative residual `‖r‖_P / ‖b‖_P`.
    pub residual: f64,
}

/// Preconditioned conjugate gradient for `A x = b` with `A` Hermitian
/// positive (semi)definite for `Re⟨·,·⟩`.
///
/// Stops when `sqrt(rᵀ P r) ≤ tol · sqrt(bᵀ P b)`. When started from `x0`
/// each iterate decreases the energy `½⟨x, A x⟩ − ⟨b, x⟩`.
pub fn pcg<V, A, P>(mut apply: A, b: &V, mut precond: P, x0: Option<V>, opts: CgOptions) -> Result<CgOutcome<V>>
where
    V: CgVector,
    A: FnMut(&V) -> V,
    P: FnMut(&V) -> V,
{
    let pb = precond(b);
    let bnorm = b.dot(&pb).max(0.0).sqrt();
    if bnorm == 0.0 && x0.is_none() {
        return Ok(CgOutcome { x: b.zeros_like(), iterations: 0, residual: 0.0 });
    }
    let (mut x, mut r, mut z) = match x0 {
        Some(x) => {
            let mut r = b.clone();
            r.axpy(-1.0, &apply(&x));
            let z = precond(&r);
            (x, r, z)
        }
        None => (b.zeros_like(), b.clone(), pb),
    };
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut rz = r.dot(&z);
    if !rz.is_finite() {
        return Err(Error::Indefinite { iteration: 0 });
    }
    let mut res = rz.max(0.0).sqrt() / scale;
    if res <= opts.tol {
        return Ok(CgOutcome { x, iterations: 0, residual: res });
    }
    let mut p = z.clone();
    for it in 1..=opts.max_iter {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !pap.is_finite() || pap <= 0.0 {
            return Err(Error::Indefinite { iteration: it });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        z = precond(&r);
        let rz_new = r.dot(&z);
        if !rz_new.is_finite() {
            return Err(Error::Indefinite { iteration: it });
        }
        res = rz_new.max(0.0).sqrt() / scale;
        if res <= opts.tol {
            return Ok(CgOutcome { x, iterations: it, residual: res });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        p.scale(beta);
        p.axpy(1.0, &z);
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: res })
}

/// Rank-`r` truncation `U diag(S) V*` of a complex matrix.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<Complex64>,
    pub s: Vec<f64>,
    pub v: DMatrix<Complex64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let mut us = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.adjoint()
    }
}

/// Full SVD with singular values sorted non-increasingly.
fn sorted_svd(m: &DMatrix<Complex64>) -> (DMatrix<Complex64>, Vec<f64>, DMatrix<Complex64>) {
    let svd = nalgebra::SVD::new(m.clone(), true, true);
    let u = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let k = order.len();
    let mut us = DMatrix::zeros(m.nrows(), k);
    let mut vs = DMatrix::zeros(m.ncols(), k);
    let mut s = Vec::with_capacity(k);
    for (j, &o) in order.iter().enumerate() {
        us.set_column(j, &u.column(o));
        vs.set_column(j, &vt.row(o).adjoint());
        s.push(svd.singular_values[o]);
    }
    (us, s, vs)
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Frobenius-best rank-`r` approximation.
pub fn truncated_svd(m: &DMatrix<Complex64>, r: usize) -> Result<TruncatedSvd> {
    let max = m.nrows().min(m.ncols());
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    let (u, s, v) = sorted_svd(m);
    Ok(TruncatedSvd { u: u.columns(0, r).into_owned(), s: s[..r].to_vec(), v: v.columns(0, r).into_owned() })
}
