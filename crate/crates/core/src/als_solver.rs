//! Space-time alternating least squares on `V_{r,N}`: piecewise-linear
//! trajectories `Σ_k ζ_k(t) A_k B_kᵀ` minimizing the discrete least-squares
//! functional `F_N` one factor sequence at a time.
//!
//! Each half step minimizes a quadratic whose normal operator is applied in
//! factored form and inverted by conjugate gradient preconditioned with a
//! block-tridiagonal Kronecker factor built from the frozen factors.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block_linalg::{pcg, truncated_svd, BlockTridiagonal, CgOptions, KroneckerPreconditioner};
use crate::error::{Error, Result};
use crate::matrix_model::{frobenius_inner, CMat, MatrixExperiment};
use crate::time_grid::TimeGrid;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn cr(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Element of `V_{r,N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeLowRank {
    grid: TimeGrid,
    rank: usize,
    a: Vec<CMat>,
    b: Vec<CMat>,
}

impl SpaceTimeLowRank {
    pub fn new(grid: TimeGrid, a: Vec<CMat>, b: Vec<CMat>) -> Result<Self> {
        let n = grid.n_nodes();
        if a.len() != n || b.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} node factors"),
                got: format!("{} and {}", a.len(), b.len()),
            });
        }
        let rank = a[0].ncols();
        let (lx, ly) = (a[0].nrows(), b[0].nrows());
        for (ak, bk) in a.iter().zip(&b) {
            if ak.shape() != (lx, rank) || bk.shape() != (ly, rank) {
                return Err(Error::ShapeMismatch {
                    expected: format!("{lx}x{rank} and {ly}x{rank}"),
                    got: format!("{:?} and {:?}", ak.shape(), bk.shape()),
                });
            }
        }
        Ok(Self { grid, rank, a, b })
    }

    /// Rank-`r` truncated SVD of `u0` copied to every node.
    pub fn from_truncated_svd(grid: TimeGrid, u0: &CMat, rank: usize) -> Result<Self> {
        let svd = truncated_svd(u0, rank)?;
        let mut a = svd.u.clone();
        for (j, s) in svd.s.iter().enumerate() {
            a.column_mut(j).apply(|z| *z *= *s);
        }
        let b = svd.v.map(|z| z.conj());
        let n = grid.n_nodes();
        Self::new(grid, vec![a; n], vec![b; n])
    }

    /// Entries uniform in the unit square of `ℂ`, independently per node.
    pub fn random(grid: TimeGrid, lx: usize, ly: usize, rank: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r: usize| {
            CMat::from_fn(r, rank, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        };
        let n = grid.n_nodes();
        let a = (0..n).map(|_| m(lx)).collect();
        let b = (0..n).map(|_| m(ly)).collect();
        Self { grid, rank, a, b }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn a(&self) -> &[CMat] {
        &self.a
    }

    pub fn b(&self) -> &[CMat] {
        &self.b
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.a[0].nrows(), self.b[0].nrows())
    }

    /// `A_k B_kᵀ`.
    pub fn node_value(&self, k: usize) -> CMat {
        &self.a[k] * self.b[k].transpose()
    }

    pub fn value(&self, t: f64) -> CMat {
        let (j, s) = self.grid.locate(t);
        self.node_value(j) * cr(1.0 - s) + self.node_value(j + 1) * cr(s)
    }
}

fn check_shapes(w: &SpaceTimeLowRank, exp: &MatrixExperiment) -> Result<()> {
    let (lx, ly) = exp.dims();
    if w.dims() != (lx, ly) {
        return Err(Error::ShapeMismatch { expected: format!("{lx}x{ly}"), got: format!("{:?}", w.dims()) });
    }
    if w.grid.t_final() != exp.t_final || w.grid.intervals() != exp.intervals {
        return Err(Error::ShapeMismatch {
            expected: format!("grid T={} N={}", exp.t_final, exp.intervals),
            got: format!("grid T={} N={}", w.grid.t_final(), w.grid.intervals()),
        });
    }
    Ok(())
}

/// `F_N(w) = ‖w(0) − U₀‖² + T ∫₀ᵀ ‖Σ iζ'_k Y_k − Σ ζ_k 𝕳(t_k, Y_k)‖² dt` with
/// `Y_k = A_k B_kᵀ`, evaluated exactly through the hat-function tables.
pub fn eval_fn(w: &SpaceTimeLowRank, exp: &MatrixExperiment) -> Result<f64> {
    check_shapes(w, exp)?;
    let grid = &w.grid;
    let n = grid.n_nodes();
    let y: Vec<CMat> = (0..n).map(|k| w.node_value(k)).collect();
    let z: Vec<CMat> = (0..n).map(|k| exp.hamiltonian.apply_unchecked(grid.node(k), &y[k])).collect();
    let mut integral = 0.0;
    for k in 0..n {
        for l in grid.neighbours(k) {
            let s = grid.stiffness_unchecked(k, l);
            let m = grid.mass_unchecked(k, l);
            let c = grid.cross_unchecked(k, l);
            integral += s * frobenius_inner(&y[k], &y[l]).re + m * frobenius_inner(&z[k], &z[l]).re;
            if c != 0.0 {
                integral += 2.0 * (I * c * frobenius_inner(&y[k], &z[l])).re;
            }
        }
    }
    let init = (&y[0] - exp.u0()).norm_squared();
    Ok((init + exp.t_final * integral).max(0.0))
}

/// Which factor sequence a half step solves for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    A,
    B,
}

impl std::fmt::Display for Half {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Half::A => "A",
            Half::B => "B",
        })
    }
}

/// Quadratic form used to build the block-tridiagonal preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PreconditionerForm {
    /// `‖A₀B₀ᵀ‖² + T ∫ ‖Σ ζ'_k A_k B_kᵀ‖²`: the `𝕳 = 0` part of `F_N`.
    Stiffness,
    /// `‖A₀B₀ᵀ‖² + T ∫ ‖Σ ζ_k A_k B_kᵀ‖²`.
    Mass,
    /// Stiffness form plus `c` times the mass form inside the integral.
    Shifted(f64),
    /// `Shifted(c)` with `c` the node average of `‖𝕳(t_k, U₀)‖² / ‖U₀‖²`.
    #[default]
    Auto,
}

/// Mean Rayleigh quotient `‖𝕳(t_k, U₀)‖² / ‖U₀‖²` over the nodes.
pub fn hamiltonian_scale(exp: &MatrixExperiment) -> f64 {
    let u0 = exp.u0();
    let norm = u0.norm_squared();
    if norm == 0.0 {
        return 0.0;
    }
    let n = exp.intervals;
    (0..=n).map(|k| exp.hamiltonian.apply_unchecked(k as f64 * exp.t_final / n as f64, &u0).norm_squared()).sum::<f64>()
        / ((n + 1) as f64 * norm)
}

/// Neighbour slot `d` of node `k` refers to node `k + d − 1`.
type Banded = Vec<[Option<CMat>; 3]>;

fn slot_node(k: usize, d: usize, n: usize) -> Option<usize> {
    let l = (k + d).checked_sub(1)?;
    (l < n).then_some(l)
}

/// Normal equations of one half step, written for the `A` unknowns; the `B`
/// step is the same system for the transposed problem.
struct HalfSystem<'a> {
    exp: &'a MatrixExperiment,
    half: Half,
    grid: TimeGrid,
    fixed: &'a [CMat],
    /// `χ_j(t_k)` indexed `[j][k]`.
    chi: Vec<Vec<f64>>,
    /// `B_lᵀ B̄_k`.
    g0: Banded,
    /// `χ_j(t_l) (R'_j(t_l)ᵀ B_l)ᵀ B̄_k`, `[j]`.
    g1: Vec<Banded>,
    /// `χ_j(t_l) χ_i(t_k) (R'_j(t_l)ᵀ B_l)ᵀ R'_i(t_k) B̄_k`, `[j][i]`.
    g2: Vec<Vec<Banded>>,
    /// `χ_i(t_k) B_lᵀ R'_i(t_k) B̄_k`, `[i]`.
    g3: Vec<Banded>,
    rhs: Vec<CMat>,
}

impl<'a> HalfSystem<'a> {
    fn free_op(&self, j: usize, t: f64, x: &CMat) -> CMat {
        let term = &self.exp.hamiltonian.terms()[j];
        match self.half {
            Half::A => term.left.apply(t, x),
            Half::B => term.right.apply_transpose(t, x),
        }
    }

    fn fixed_op_transpose(&self, j: usize, t: f64, y: &CMat) -> CMat {
        let term = &self.exp.hamiltonian.terms()[j];
        match self.half {
            Half::A => term.right.apply_transpose(t, y),
            Half::B => term.left.apply(t, y),
        }
    }

    fn fixed_op(&self, j: usize, t: f64, y: &CMat) -> CMat {
        let term = &self.exp.hamiltonian.terms()[j];
        match self.half {
            Half::A => term.right.apply(t, y),
            Half::B => term.left.apply_transpose(t, y),
        }
    }

    fn new(exp: &'a MatrixExperiment, half: Half, grid: TimeGrid, fixed: &'a [CMat]) -> Self {
        let n = grid.n_nodes();
        let nterms = exp.hamiltonian.terms().len();
        let chi: Vec<Vec<f64>> = exp
            .hamiltonian
            .terms()
            .iter()
            .map(|term| (0..n).map(|k| term.profile.value(grid.node(k))).collect())
            .collect();
        let u0 = match half {
            Half::A => exp.u0(),
            Half::B => exp.u0().transpose(),
        };
        let mut sys = HalfSystem {
            exp,
            half,
            grid,
            fixed,
            chi,
            g0: Vec::new(),
            g1: Vec::new(),
            g2: Vec::new(),
            g3: Vec::new(),
            rhs: Vec::new(),
        };
        let bbar: Vec<CMat> = fixed.iter().map(|b| b.map(|z| z.conj())).collect();
        let btilde: Vec<Vec<Option<CMat>>> = (0..nterms)
            .map(|j| {
                (0..n)
                    .map(|l| {
                        let c = sys.chi[j][l];
                        (c != 0.0).then(|| sys.fixed_op_transpose(j, grid.node(l), &fixed[l]) * cr(c))
                    })
                    .collect()
            })
            .collect();
        let bhat: Vec<Vec<Option<CMat>>> = (0..nterms)
            .map(|i| {
                (0..n)
                    .map(|k| {
                        let c = sys.chi[i][k];
                        (c != 0.0).then(|| sys.fixed_op(i, grid.node(k), &bbar[k]) * cr(c))
                    })
                    .collect()
            })
            .collect();
        let banded = |f: &dyn Fn(usize, usize) -> Option<CMat>| -> Banded {
            (0..n).map(|k| std::array::from_fn(|d| slot_node(k, d, n).and_then(|l| f(k, l)))).collect()
        };
        sys.g0 = banded(&|k, l| Some(fixed[l].transpose() * &bbar[k]));
        sys.g1 =
            (0..nterms).map(|j| banded(&|k, l| btilde[j][l].as_ref().map(|bt| bt.transpose() * &bbar[k]))).collect();
        sys.g2 = (0..nterms)
            .map(|j| {
                (0..nterms)
                    .map(|i| {
                        banded(&|k, l| match (&btilde[j][l], &bhat[i][k]) {
                            (Some(bt), Some(bh)) => Some(bt.transpose() * bh),
                            _ => None,
                        })
                    })
                    .collect()
            })
            .collect();
        sys.g3 = (0..nterms).map(|i| banded(&|k, l| bhat[i][k].as_ref().map(|bh| fixed[l].transpose() * bh))).collect();
        let mut rhs: Vec<CMat> = (0..n).map(|_| CMat::zeros(u0.nrows(), fixed[0].ncols())).collect();
        rhs[0] = &u0 * &bbar[0];
        sys.rhs = rhs;
        sys
    }

    /// Normal operator `𝒩` with `F_N = ⟨X, 𝒩X⟩ − 2Re⟨X, b⟩ + ‖U₀‖²`.
    fn apply(&self, x: &[CMat]) -> Vec<CMat> {
        let grid = &self.grid;
        let n = grid.n_nodes();
        let tw = self.exp.t_final;
        let nterms = self.chi.len();
        let (rows, r) = x[0].shape();
        let xt: Vec<Vec<Option<CMat>>> = (0..nterms)
            .map(|j| (0..n).map(|l| (self.chi[j][l] != 0.0).then(|| self.free_op(j, grid.node(l), &x[l]))).collect())
            .collect();
        let zero = Complex64::new(0.0, 0.0);
        let one = cr(1.0);
        let mut out = Vec::with_capacity(n);
        let mut w = CMat::zeros(rows, r);
        for k in 0..n {
            let mut o = CMat::zeros(rows, r);
            if k == 0 {
                o.gemm(one, &x[0], self.g0[0][1].as_ref().expect("diagonal slot"), zero);
            }
            for d in 0..3 {
                let Some(l) = slot_node(k, d, n) else { continue };
                let s = grid.stiffness_unchecked(k, l);
                o.gemm(cr(tw * s), &x[l], self.g0[k][d].as_ref().expect("banded slot"), one);
                let c = grid.cross_unchecked(k, l);
                if c != 0.0 {
                    for j in 0..nterms {
                        if let (Some(a), Some(g)) = (&xt[j][l], &self.g1[j][k][d]) {
                            o.gemm(I * (tw * c), a, g, one);
                        }
                    }
                }
            }
            for i in 0..nterms {
                if self.chi[i][k] == 0.0 {
                    continue;
                }
                w.fill(zero);
                for d in 0..3 {
                    let Some(l) = slot_node(k, d, n) else { continue };
                    let m = grid.mass_unchecked(k, l);
                    for j in 0..nterms {
                        if let (Some(a), Some(g)) = (&xt[j][l], &self.g2[j][i][k][d]) {
                            w.gemm(cr(m), a, g, one);
                        }
                    }
                    let c = grid.cross_unchecked(l, k);
                    if c != 0.0 {
                        if let Some(g) = &self.g3[i][k][d] {
                            w.gemm(-I * c, &x[l], g, one);
                        }
                    }
                }
                let lw = self.free_op(i, grid.node(k), &w);
                o.zip_apply(&lw, |u, v| *u += v * tw);
            }
            out.push(o);
        }
        out
    }

    fn preconditioner(&self, form: PreconditionerForm) -> Result<KroneckerPreconditioner> {
        let grid = &self.grid;
        let n = grid.n_nodes();
        let tw = self.exp.t_final;
        let (ws, wm) = match form {
            PreconditionerForm::Stiffness => (1.0, 0.0),
            PreconditionerForm::Mass => (0.0, 1.0),
            PreconditionerForm::Shifted(c) => (1.0, c),
            PreconditionerForm::Auto => (1.0, hamiltonian_scale(self.exp)),
        };
        let weight = |k: usize, l: usize| ws * grid.stiffness_unchecked(k, l) + wm * grid.mass_unchecked(k, l);
        let b = self.fixed;
        let diag = (0..n)
            .map(|k| {
                let mut d = b[k].adjoint() * &b[k] * cr(tw * weight(k, k));
                if k == 0 {
                    d += b[0].adjoint() * &b[0];
                }
                d
            })
            .collect();
        let upper = (0..n - 1).map(|k| b[k].adjoint() * &b[k + 1] * cr(tw * weight(k, k + 1))).collect();
        KroneckerPreconditioner::new(BlockTridiagonal::new(diag, upper)?, self.rhs[0].nrows())
    }
}

/// Result of one exact half-step minimization.
#[derive(Debug, Clone)]
pub struct HalfStepOutcome {
    /// Minimizing free factors, paired with `fixed`.
    pub factors: Vec<CMat>,
    /// Frozen factors, possibly re-orthonormalized; `factors[k] · fixed[k]ᵀ`
    /// is the new node value.
    pub fixed: Vec<CMat>,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    /// Diagonal regularization applied to the preconditioner (zero if none).
    pub preconditioner_shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfStepOptions {
    pub cg: CgOptions,
    pub preconditioner: PreconditionerForm,
    /// Replace each frozen factor by the `Q` of its QR factorization (and the
    /// free factor by `X Rᵀ`) before solving; node values are unchanged.
    pub orthonormalize: bool,
}

impl Default for HalfStepOptions {
    fn default() -> Self {
        Self {
            cg: CgOptions { tol: 1e-9, max_iter: 2000 },
            preconditioner: PreconditionerForm::Auto,
            orthonormalize: true,
        }
    }
}

/// `M = Q R` with `R` upper triangular with non-negative real diagonal.
pub(crate) fn qr_positive(m: &CMat) -> (CMat, CMat) {
    let qr = m.clone().qr();
    let (mut q, mut r) = (qr.q(), qr.r());
    for j in 0..r.nrows() {
        let d = r[(j, j)];
        let n = d.norm();
        if n > 0.0 {
            let ph = d / n;
            q.column_mut(j).apply(|z| *z *= ph);
            r.row_mut(j).apply(|z| *z *= ph.conj());
        }
    }
    (q, r)
}

fn solve_half(
    w: &SpaceTimeLowRank,
    exp: &MatrixExperiment,
    half: Half,
    opts: &HalfStepOptions,
) -> Result<HalfStepOutcome> {
    check_shapes(w, exp)?;
    let (fixed, start) = match half {
        Half::A => (&w.b, &w.a),
        Half::B => (&w.a, &w.b),
    };
    if fixed.iter().chain(start.iter()).any(|m| m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(Error::InvalidParameter("non-finite factor".into()));
    }
    let (fixed, start) = if opts.orthonormalize && fixed[0].nrows() >= fixed[0].ncols() {
        let mut q = Vec::with_capacity(fixed.len());
        let mut x = Vec::with_capacity(fixed.len());
        for (f, s) in fixed.iter().zip(start) {
            let (qk, rk) = qr_positive(f);
            q.push(qk);
            x.push(s * rk.transpose());
        }
        (q, x)
    } else {
        (fixed.clone(), start.clone())
    };
    let sys = HalfSystem::new(exp, half, w.grid, &fixed);
    let pre = sys.preconditioner(opts.preconditioner)?;
    let out = pcg(|x: &Vec<CMat>| sys.apply(x), &sys.rhs, |x: &Vec<CMat>| pre.solve(x), Some(start), opts.cg)?;
    Ok(HalfStepOutcome {
        factors: out.x,
        fixed,
        cg_iterations: out.iterations,
        cg_residual: out.residual,
        preconditioner_shift: pre.shift(),
    })
}

/// Exact minimizer of `F_N` over the `A_k` with the `B_k` frozen.
pub fn solve_half_step_a(
    w: &SpaceTimeLowRank,
    exp: &MatrixExperiment,
    opts: &HalfStepOptions,
) -> Result<HalfStepOutcome> {
    solve_half(w, exp, Half::A, opts)
}

/// Exact minimizer of `F_N` over the `B_k` with the `A_k` frozen.
pub fn solve_half_step_b(
    w: &SpaceTimeLowRank,
    exp: &MatrixExperiment,
    opts: &HalfStepOptions,
) -> Result<HalfStepOutcome> {
    solve_half(w, exp, Half::B, opts)
}

/// Dense matrix of the preconditioner quadratic form on the stacked
/// unknowns, for verification on small instances.
pub fn preconditioner_dense(
    w: &SpaceTimeLowRank,
    exp: &MatrixExperiment,
    half: Half,
    form: PreconditionerForm,
) -> Result<DMatrix<Complex64>> {
    check_shapes(w, exp)?;
    let fixed = match half {
        Half::A => &w.b,
        Half::B => &w.a,
    };
    let sys = HalfSystem::new(exp, half, w.grid, fixed);
    let pre = sys.preconditioner(form)?;
    let n = w.grid.n_nodes();
    let rows = sys.rhs[0].nrows();
    let r = w.rank;
    let dim = n * rows * r;
    let mut dense = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut e: Vec<CMat> = (0..n).map(|_| CMat::zeros(rows, r)).collect();
        let (k, rem) = (col / (rows * r), col % (rows * r));
        e[k][(rem % rows, rem / rows)] = cr(1.0);
        let y = pre.apply(&e);
        for (kk, yk) in y.iter().enumerate() {
            for (idx, v) in yk.iter().enumerate() {
                dense[(kk * rows * r + idx, col)] = *v;
            }
        }
    }
    Ok(dense)
}

/// Initial iterate of [`als`].
#[derive(Debug, Clone, PartialEq)]
pub enum AlsInit {
    /// Rank-`r` truncated SVD of `U₀` at every node.
    TruncatedSvd,
    Random {
        seed: u64,
    },
    /// Truncated SVD plus independent uniform entries of size
    /// `scale · ‖U₀‖ / sqrt(L r)` added to both factors at every node.
    PerturbedSvd {
        seed: u64,
        scale: f64,
    },
    Given(SpaceTimeLowRank),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlsOptions {
    pub sweeps: usize,
    /// Early exit when one sweep lowers `F_N` by less than this fraction.
    pub rel_tol: f64,
    pub half_step: HalfStepOptions,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self { sweeps: 20, rel_tol: 1e-8, half_step: HalfStepOptions::default() }
    }
}

/// One half step of the history; sweep 0 is the initial iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfStepRecord {
    pub sweep: usize,
    pub half: Option<Half>,
    pub fn_value: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
}

#[derive(Debug, Clone)]
pub struct AlsResult {
    pub solution: SpaceTimeLowRank,
    pub history: Vec<HalfStepRecord>,
}

impl AlsResult {
    pub fn final_fn(&self) -> f64 {
        self.history.last().map(|h| h.fn_value).unwrap_or(f64::NAN)
    }
}

/// Alternating minimization, `A` half step first.
pub fn als(exp: &MatrixExperiment, rank: usize, init: AlsInit, opts: &AlsOptions) -> Result<AlsResult> {
    if opts.sweeps == 0 {
        return Err(Error::InvalidParameter("at least one sweep required".into()));
    }
    let grid = TimeGrid::new(exp.t_final, exp.intervals)?;
    let (lx, ly) = exp.dims();
    let mut w = match init {
        AlsInit::TruncatedSvd => SpaceTimeLowRank::from_truncated_svd(grid, &exp.u0(), rank)?,
        AlsInit::Random { seed } => SpaceTimeLowRank::random(grid, lx, ly, rank, seed),
        AlsInit::PerturbedSvd { seed, scale } => {
            let u0 = exp.u0();
            let mut w = SpaceTimeLowRank::from_truncated_svd(grid, &u0, rank)?;
            let noise = SpaceTimeLowRank::random(grid, lx, ly, rank, seed);
            let amp = scale * u0.norm().sqrt() / ((lx.max(ly) * rank) as f64).sqrt();
            for (a, na) in w.a.iter_mut().zip(&noise.a) {
                *a += na * cr(amp);
            }
            for (b, nb) in w.b.iter_mut().zip(&noise.b) {
                *b += nb * cr(amp);
            }
            w
        }
        AlsInit::Given(w) => {
            if w.rank != rank {
                return Err(Error::ShapeMismatch { expected: format!("rank {rank}"), got: format!("rank {}", w.rank) });
            }
            w
        }
    };
    let f0 = eval_fn(&w, exp)?;
    let mut history = vec![HalfStepRecord { sweep: 0, half: None, fn_value: f0, cg_iterations: 0, cg_residual: 0.0 }];
    let mut f_prev = f0;
    for sweep in 1..=opts.sweeps {
        for half in [Half::A, Half::B] {
            let out = solve_half(&w, exp, half, &opts.half_step)?;
            match half {
                Half::A => {
                    w.a = out.factors;
                    w.b = out.fixed;
                }
                Half::B => {
                    w.b = out.factors;
                    w.a = out.fixed;
                }
            }
            history.push(HalfStepRecord {
                sweep,
                half: Some(half),
                fn_value: eval_fn(&w, exp)?,
                cg_iterations: out.cg_iterations,
                cg_residual: out.cg_residual,
            });
        }
        let f = history.last().expect("non-empty").fn_value;
        let decrease = f_prev - f;
        f_prev = f;
        if decrease <= opts.rel_tol * f.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(AlsResult { solution: w, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_model::{
        pathological_experiment, pathological_solution, random_experiment, FactoredMatrix, HamiltonianTerm, SideMatrix,
        SideOp, TimeProfile, TwoSidedHamiltonian,
    };

    fn rand_cmat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
        CMat::from_fn(r, c, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        let m = rand_cmat(rng, n, n);
        (&m + m.adjoint()) * cr(0.5)
    }

    /// Small two-term problem with dense, tridiagonal and conjugated factors.
    fn small_experiment(lx: usize, ly: usize, n: usize, seed: u64) -> MatrixExperiment {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h0x: Vec<f64> = (0..lx).map(|_| rng.gen_range(0.0..1.0)).collect();
        let terms = vec![
            HamiltonianTerm {
                profile: TimeProfile::CosineSwitch,
                left: SideOp::new(SideMatrix::Dense(hermitian(&mut rng, lx)), Some(h0x)),
                right: SideOp::new(SideMatrix::Dense(hermitian(&mut rng, ly)), None),
            },
            HamiltonianTerm {
                profile: TimeProfile::CosineSwitchComplement,
                left: SideOp::new(
                    SideMatrix::Tridiagonal {
                        diag: (0..lx).map(|_| rng.gen_range(0.0..1.0)).collect(),
                        off: (0..lx - 1).map(|_| rng.gen_range(0.0..1.0)).collect(),
                    },
                    None,
                ),
                right: SideOp::new(
                    SideMatrix::Dense(hermitian(&mut rng, ly)),
                    Some((0..ly).map(|i| i as f64 * 0.3).collect()),
                ),
            },
        ];
        let x = rand_cmat(&mut rng, lx, 2);
        let y = rand_cmat(&mut rng, ly, 2);
        let mut e = random_experiment(0);
        e.hamiltonian = TwoSidedHamiltonian::new(lx, ly, terms).unwrap();
        e.initial = FactoredMatrix { x, y };
        e.t_final = 1.3;
        e.intervals = n;
        e
    }

    /// `F_N` by 3-point Gauss quadrature of the residual on each interval.
    fn fn_quadrature(w: &SpaceTimeLowRank, exp: &MatrixExperiment) -> f64 {
        let grid = w.grid();
        let dt = grid.dt();
        let gx = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        let gw = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let y: Vec<CMat> = (0..grid.n_nodes()).map(|k| w.node_value(k)).collect();
        let z: Vec<CMat> = (0..grid.n_nodes()).map(|k| exp.hamiltonian.apply(grid.node(k), &y[k]).unwrap()).collect();
        let mut integral = 0.0;
        for j in 0..grid.intervals() {
            let dy = (&y[j + 1] - &y[j]) * cr(1.0 / dt);
            for q in 0..3 {
                let s = 0.5 * (1.0 + gx[q]);
                let g = &z[j] * cr(1.0 - s) + &z[j + 1] * cr(s);
                let res = &dy * I - g;
                integral += 0.5 * dt * gw[q] * res.norm_squared();
            }
        }
        (&y[0] - exp.u0()).norm_squared() + exp.t_final * integral
    }

    #[test]
    fn fn_matches_quadrature() {
        let exp = small_experiment(5, 4, 7, 1);
        let grid = TimeGrid::new(exp.t_final, exp.intervals).unwrap();
        for seed in 0..5 {
            let w = SpaceTimeLowRank::random(grid, 5, 4, 2, seed);
            let a = eval_fn(&w, &exp).unwrap();
            let b = fn_quadrature(&w, &exp);
            assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
        }
        let ex = random_experiment(2).with_horizon(0.5, 6);
        let w = SpaceTimeLowRank::random(TimeGrid::new(0.5, 6).unwrap(), 40, 40, 3, 9);
        let a = eval_fn(&w, &ex).unwrap();
        let b = fn_quadrature(&w, &ex);
        assert!((a - b).abs() <= 1e-10 * b);
    }

    #[test]
    fn zero_hamiltonian_constant_solution_has_zero_fn() {
        let mut exp = small_experiment(4, 4, 5, 2);
        exp.hamiltonian = TwoSidedHamiltonian::zero(4, 4);
        let w = SpaceTimeLowRank::from_truncated_svd(TimeGrid::new(exp.t_final, 5).unwrap(), &exp.u0(), 2).unwrap();
        assert!(eval_fn(&w, &exp).unwrap() < 1e-24);
    }

    #[test]
    fn shape_errors() {
        let exp = small_experiment(4, 3, 5, 2);
        let w = SpaceTimeLowRank::random(TimeGrid::new(exp.t_final, 5).unwrap(), 3, 4, 2, 0);
        assert!(eval_fn(&w, &exp).is_err());
        let w = SpaceTimeLowRank::random(TimeGrid::new(exp.t_final, 6).unwrap(), 4, 3, 2, 0);
        assert!(eval_fn(&w, &exp).is_err());
        assert!(SpaceTimeLowRank::new(
            TimeGrid::new(1.0, 2).unwrap(),
            vec![CMat::zeros(2, 1); 3],
            vec![CMat::zeros(2, 1); 2]
        )
        .is_err());
    }

    #[test]
    fn gauge_invariance() {
        let exp = small_experiment(5, 4, 6, 3);
        let grid = TimeGrid::new(exp.t_final, 6).unwrap();
        let w = SpaceTimeLowRank::random(grid, 5, 4, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut a = Vec::new();
        let mut b = Vec::new();
        for k in 0..grid.n_nodes() {
            let g = rand_cmat(&mut rng, 2, 2) + CMat::identity(2, 2) * cr(2.0);
            let ginv_t = g.clone().try_inverse().unwrap().transpose();
            a.push(&w.a()[k] * &g);
            b.push(&w.b()[k] * ginv_t);
        }
        let v = SpaceTimeLowRank::new(grid, a, b).unwrap();
        let (f1, f2) = (eval_fn(&w, &exp).unwrap(), eval_fn(&v, &exp).unwrap());
        assert!((f1 - f2).abs() < 1e-10 * f1.max(1.0));
    }

    /// Real parameters `(Re, Im)` per entry, node-major, column-major within a node.
    fn unpack_real(v: &[f64], n: usize, rows: usize, r: usize) -> Vec<CMat> {
        (0..n)
            .map(|k| {
                let base = k * rows * r * 2;
                CMat::from_fn(rows, r, |i, j| {
                    let idx = base + 2 * (j * rows + i);
                    Complex64::new(v[idx], v[idx + 1])
                })
            })
            .collect()
    }

    /// Minimizer of the quadratic `F_N` in the chosen factors, assembled by
    /// polarization of brute-force quadrature values.
    fn dense_half_step(w: &SpaceTimeLowRank, exp: &MatrixExperiment, half: Half) -> Vec<CMat> {
        let n = w.grid().n_nodes();
        let r = w.rank();
        let rows = match half {
            Half::A => w.dims().0,
            Half::B => w.dims().1,
        };
        let eval = |v: &[f64]| {
            let x = unpack_real(v, n, rows, r);
            let trial = match half {
                Half::A => SpaceTimeLowRank::new(*w.grid(), x, w.b().to_vec()).unwrap(),
                Half::B => SpaceTimeLowRank::new(*w.grid(), w.a().to_vec(), x).unwrap(),
            };
            fn_quadrature(&trial, exp)
        };
        let dim = n * rows * r * 2;
        let zero = vec![0.0; dim];
        let c = eval(&zero);
        let mut fp = vec![0.0; dim];
        let mut g = vec![0.0; dim];
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            let mut e = zero.clone();
            e[i] = 1.0;
            fp[i] = eval(&e);
            e[i] = -1.0;
            let fm = eval(&e);
            h[(i, i)] = 0.5 * (fp[i] + fm) - c;
            g[i] = 0.25 * (fm - fp[i]);
        }
        for i in 0..dim {
            for j in 0..i {
                let mut e = zero.clone();
                e[i] = 1.0;
                e[j] = 1.0;
                let fij = eval(&e);
                let v = 0.5 * (fij - fp[i] - fp[j] + c);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let sol = h.lu().solve(&nalgebra::DVector::from_vec(g)).unwrap();
        unpack_real(sol.as_slice(), n, rows, r)
    }

    #[test]
    fn half_steps_match_dense_normal_equations() {
        let exp = small_experiment(6, 6, 8, 5);
        let grid = TimeGrid::new(exp.t_final, 8).unwrap();
        let w = SpaceTimeLowRank::random(grid, 6, 6, 2, 11);
        for orthonormalize in [false, true] {
            let opts =
                HalfStepOptions { cg: CgOptions { tol: 1e-13, max_iter: 2000 }, orthonormalize, ..Default::default() };
            for half in [Half::A, Half::B] {
                let got = solve_half(&w, &exp, half, &opts).unwrap();
                let want = dense_half_step(&w, &exp, half);
                let fixed = match half {
                    Half::A => w.b(),
                    Half::B => w.a(),
                };
                let mut err = 0.0;
                let mut scale = 0.0;
                for k in 0..want.len() {
                    let a = &got.factors[k] * got.fixed[k].transpose();
                    let b = &want[k] * fixed[k].transpose();
                    err += (a - &b).norm_squared();
                    scale += b.norm_squared();
                }
                assert!(err.sqrt() < 1e-8 * scale.sqrt(), "{half}: {err} vs {scale}");
            }
        }
    }

    #[test]
    fn preconditioner_matches_dense_quadratic_form() {
        let exp = small_experiment(4, 3, 5, 6);
        let grid = TimeGrid::new(exp.t_final, 5).unwrap();
        let w = SpaceTimeLowRank::random(grid, 4, 3, 2, 12);
        let gx = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        let gw = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        for form in [PreconditionerForm::Stiffness, PreconditionerForm::Mass, PreconditionerForm::Shifted(0.7)] {
            let dense = preconditioner_dense(&w, &exp, Half::A, form).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let x: Vec<CMat> = (0..6).map(|_| rand_cmat(&mut rng, 4, 2)).collect();
            let xv = nalgebra::DVector::from_iterator(24 * 2, x.iter().flat_map(|m| m.iter().copied()));
            let quad = (xv.adjoint() * &dense * &xv)[(0, 0)];
            let y: Vec<CMat> = (0..6).map(|k| &x[k] * w.b()[k].transpose()).collect();
            let dt = grid.dt();
            let mut integral = 0.0;
            for j in 0..5 {
                for q in 0..3 {
                    let s = 0.5 * (1.0 + gx[q]);
                    let dv = ((&y[j + 1] - &y[j]) * cr(1.0 / dt)).norm_squared();
                    let v = (&y[j] * cr(1.0 - s) + &y[j + 1] * cr(s)).norm_squared();
                    let value = match form {
                        PreconditionerForm::Stiffness => dv,
                        PreconditionerForm::Mass => v,
                        PreconditionerForm::Shifted(c) => dv + c * v,
                        PreconditionerForm::Auto => unreachable!(),
                    };
                    integral += 0.5 * dt * gw[q] * value;
                }
            }
            let want = y[0].norm_squared() + exp.t_final * integral;
            assert!((quad.re - want).abs() < 1e-12 * want && quad.im.abs() < 1e-12 * want);
        }
    }

    #[test]
    fn full_rank_zero_hamiltonian_reproduces_initial_value() {
        let mut exp = small_experiment(4, 4, 6, 7);
        exp.hamiltonian = TwoSidedHamiltonian::zero(4, 4);
        let grid = TimeGrid::new(exp.t_final, 6).unwrap();
        let w = SpaceTimeLowRank::random(grid, 4, 4, 4, 1);
        let out = solve_half_step_a(&w, &exp, &HalfStepOptions::default()).unwrap();
        let v = SpaceTimeLowRank::new(grid, out.factors, out.fixed).unwrap();
        assert!((v.node_value(0) - exp.u0()).norm() < 1e-8 * exp.u0().norm());
        let f = eval_fn(&v, &exp).unwrap();
        assert!(f < 1e-12 * exp.u0().norm_squared(), "{f}");
    }

    #[test]
    fn als_history_is_monotone() {
        let exp = small_experiment(6, 5, 10, 9);
        let res = als(&exp, 2, AlsInit::Random { seed: 2 }, &AlsOptions { sweeps: 6, ..Default::default() }).unwrap();
        for pair in res.history.windows(2) {
            assert!(pair[1].fn_value <= pair[0].fn_value + 1e-9 * (1.0 + pair[0].fn_value));
        }
        assert_eq!(res.history[0].sweep, 0);
        assert_eq!(res.history[1].half, Some(Half::A));
    }

    #[test]
    fn als_fixed_point_for_within_ansatz_problem() {
        // the pathological problem at full rank: the interpolant is not exact,
        // so use the ALS output itself as the within-ansatz optimum
        let exp = pathological_experiment(20, 0.0, 0).unwrap().with_horizon(0.5, 10);
        let first = als(&exp, 20, AlsInit::TruncatedSvd, &AlsOptions { sweeps: 3, ..Default::default() }).unwrap();
        let again =
            als(&exp, 20, AlsInit::Given(first.solution.clone()), &AlsOptions { sweeps: 1, ..Default::default() })
                .unwrap();
        let f_first = first.final_fn();
        assert!(again.final_fn() <= f_first * (1.0 + 1e-8) + 1e-14);
        let grid = first.solution.grid();
        for k in 0..grid.n_nodes() {
            let d = (again.solution.node_value(k) - first.solution.node_value(k)).norm();
            assert!(d < 1e-6, "node {k}: {d}");
        }
        let exact_end = pathological_solution(&exp.u0(), 0.5);
        assert!((first.solution.node_value(10) - exact_end).norm() < 1e-2);
    }

    #[test]
    fn interpolant_of_exact_solution_is_second_order() {
        let u0 = pathological_experiment(20, 0.0, 0).unwrap().u0();
        let f = |n: usize| {
            let exp = pathological_experiment(20, 0.0, 0).unwrap().with_horizon(1.0, n);
            let grid = TimeGrid::new(1.0, n).unwrap();
            let a: Vec<CMat> = (0..=n).map(|k| pathological_solution(&u0, grid.node(k))).collect();
            let b = vec![CMat::identity(20, 20); n + 1];
            eval_fn(&SpaceTimeLowRank::new(grid, a, b).unwrap(), &exp).unwrap()
        };
        let (f1, f2) = (f(20), f(40));
        let ratio = f1 / f2;
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }
}
