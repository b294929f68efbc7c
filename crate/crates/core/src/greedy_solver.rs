//! Greedy space-time Gaussian solver in the interaction picture.
//!
//! The unknown `φ(t) = e^{−itΔ}ψ(t)` solves `i∂_tφ = H(t)φ` with
//! `H(t) = e^{−itΔ} V e^{itΔ}`. Each greedy term is a P1-in-time trajectory
//! `Σ_k ζ_k(t) γ(X_k)` of pure Gaussians; it minimizes
//! `F = ‖w(0) − u₀‖² + T ∫ ‖Σ_k (iζ'_k − ζ_k H(t_k)) w_k‖² dt` for the sum of
//! all terms so far plus the new one.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::block_linalg::{BlockFactorization, BlockTridiagonal};
use crate::error::{Error, Result};
use crate::gaussian::{
    derivative_polys, free_evolve, gamma, inner, lift, multiply, param_count, params_of, poly_gram, primal,
    upper_pairs, Cx, Dual, GaussianSum, GaussianTerm, Layout, Real, C64,
};
use crate::time_grid::TimeGrid;

/// `i∂_tφ = e^{−itΔ} V e^{itΔ} φ`, `φ(0) = u₀`, on `[0, T]` with `N` intervals.
#[derive(Debug, Clone)]
pub struct GreedyProblem {
    grid: TimeGrid,
    dim: usize,
    potential: GaussianSum,
    initial: GaussianSum,
}

impl GreedyProblem {
    /// `potential` must consist of pure Gaussians; only their product with
    /// the evolving terms enters.
    pub fn new(grid: TimeGrid, potential: GaussianSum, initial: GaussianSum) -> Result<Self> {
        let dim = initial.dim();
        if potential.dim() != dim {
            return Err(Error::ShapeMismatch {
                expected: format!("dimension {dim}"),
                got: potential.dim().to_string(),
            });
        }
        if potential.terms().iter().chain(initial.terms()).any(|t| !t.is_pure()) {
            return Err(Error::InvalidParameter("potential and initial data must be pure Gaussians".into()));
        }
        Ok(Self { grid, dim, potential, initial })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn potential(&self) -> &GaussianSum {
        &self.potential
    }

    pub fn initial(&self) -> &GaussianSum {
        &self.initial
    }

    /// Parameters per node.
    pub fn params_per_node(&self) -> usize {
        param_count(self.dim)
    }

    /// `H(t_k) g` as one term per potential term.
    pub fn apply_h<R: Real>(&self, k: usize, g: &GaussianTerm<R>) -> Result<Vec<GaussianTerm<R>>> {
        let t = self.grid.node(k);
        let forward = free_evolve(g, t, 1.0)?;
        self.potential.terms().iter().map(|v| free_evolve(&multiply(&lift::<R>(v), &forward)?, t, -1.0)).collect()
    }
}

/// `Σ_k ζ_k(t) γ(X_k)` with the node parameters stacked in `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGaussian {
    grid: TimeGrid,
    dim: usize,
    params: Vec<f64>,
}

impl SpaceTimeGaussian {
    pub fn new(grid: TimeGrid, dim: usize, params: Vec<f64>) -> Result<Self> {
        let m = param_count(dim);
        if params.len() != m * grid.n_nodes() {
            return Err(Error::ShapeMismatch {
                expected: (m * grid.n_nodes()).to_string(),
                got: params.len().to_string(),
            });
        }
        let s = Self { grid, dim, params };
        for k in 0..s.grid.n_nodes() {
            s.node(k)?;
        }
        Ok(s)
    }

    /// Every node equal to the pure term `g`.
    pub fn constant(grid: TimeGrid, g: &GaussianTerm<f64>) -> Result<Self> {
        let v = params_of(g)?;
        let params = (0..grid.n_nodes()).flat_map(|_| v.iter().copied()).collect();
        Self::new(grid, g.dim(), params)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn node_params(&self, k: usize) -> &[f64] {
        let m = param_count(self.dim);
        &self.params[k * m..(k + 1) * m]
    }

    pub fn node(&self, k: usize) -> Result<GaussianTerm<f64>> {
        gamma(self.dim, self.node_params(k))
    }

    /// Value at time `t` as a sum of the two active node terms.
    pub fn value(&self, t: f64) -> Result<GaussianSum> {
        let (j, s) = self.grid.locate(t);
        let mut out = GaussianSum::new(self.dim);
        for (k, w) in [(j, 1.0 - s), (j + 1, s)] {
            if w != 0.0 {
                out.push(self.node(k)?.scale(C64::from_f64(w, 0.0)))?;
            }
        }
        Ok(out)
    }
}

/// Data contributed by the accepted terms: node sums `D_k`, their images
/// `P_k = H(t_k) D_k`, the initial mismatch `u₀ − D_0`, and the value of `F`
/// at the accumulated solution.
#[derive(Debug, Clone)]
pub struct Residual {
    sums: Vec<GaussianSum>,
    images: Vec<GaussianSum>,
    initial_mismatch: GaussianSum,
    constant: f64,
}

impl Residual {
    pub fn new(problem: &GreedyProblem) -> Result<Self> {
        let n = problem.grid.n_nodes();
        let d = problem.dim;
        Ok(Self {
            sums: vec![GaussianSum::new(d); n],
            images: vec![GaussianSum::new(d); n],
            initial_mismatch: problem.initial.clone(),
            constant: problem.initial.norm_sqr()?,
        })
    }

    /// `F` at the accumulated solution.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn node_sum(&self, k: usize) -> &GaussianSum {
        &self.sums[k]
    }

    pub fn node_image(&self, k: usize) -> &GaussianSum {
        &self.images[k]
    }

    /// Appends `term`; `f_value` is `F` at the new accumulated solution.
    pub fn add_term(&mut self, problem: &GreedyProblem, term: &SpaceTimeGaussian, f_value: f64) -> Result<()> {
        for k in 0..problem.grid.n_nodes() {
            let g = term.node(k)?;
            for h in problem.apply_h(k, &g)? {
                self.images[k].push(h)?;
            }
            if k == 0 {
                self.initial_mismatch.push(g.scale(C64::from_f64(-1.0, 0.0)))?;
            }
            self.sums[k].push(g)?;
        }
        self.constant = f_value;
        Ok(())
    }

    /// `F` at the accumulated solution evaluated directly from the node sums.
    pub fn constant_from_scratch(&self, problem: &GreedyProblem) -> Result<f64> {
        let grid = &problem.grid;
        let mut f = self.initial_mismatch.norm_sqr()?;
        for k in 0..grid.n_nodes() {
            for l in grid.neighbours(k) {
                let s = grid.stiffness_unchecked(k, l);
                let m = grid.mass_unchecked(k, l);
                let c = grid.cross_unchecked(k, l);
                let dd = sum_inner(&self.sums[k], &self.sums[l])?;
                let pp = sum_inner(&self.images[k], &self.images[l])?;
                let dp = sum_inner(&self.sums[k], &self.images[l])?;
                f += grid.t_final() * (s * dd.re + m * pp.re - 2.0 * c * dp.im);
            }
        }
        Ok(f)
    }
}

fn sum_inner(a: &GaussianSum, b: &GaussianSum) -> Result<C64> {
    let mut s = C64::zero();
    for x in a.terms() {
        for y in b.terms() {
            s += inner(x, y)?;
        }
    }
    Ok(s)
}

/// `⟨x, Σ_j y_j⟩` with `y` held in `f64`.
fn inner_const<R: Real>(x: &GaussianTerm<R>, y: &GaussianSum) -> Result<Cx<R>> {
    let mut s = Cx::zero();
    for t in y.terms() {
        s += inner(x, &lift::<R>(t))?;
    }
    Ok(s)
}

fn inner_lists<R: Real>(a: &[GaussianTerm<R>], b: &[GaussianTerm<R>]) -> Result<Cx<R>> {
    let mut s = Cx::zero();
    for x in a {
        for y in b {
            s += inner(x, y)?;
        }
    }
    Ok(s)
}

/// Node term `g_k` and its image `H(t_k) g_k`.
#[derive(Clone)]
struct NodeData<R: Real> {
    g: GaussianTerm<R>,
    hg: Vec<GaussianTerm<R>>,
}

fn node_data<R: Real>(problem: &GreedyProblem, k: usize, v: &[R]) -> Result<NodeData<R>> {
    let g = gamma(problem.dim, v)?;
    let hg = problem.apply_h(k, &g)?;
    Ok(NodeData { g, hg })
}

fn lift_node<R: Real>(n: &NodeData<f64>) -> NodeData<R> {
    NodeData { g: lift(&n.g), hg: n.hg.iter().map(lift).collect() }
}

/// Ordered pair `(a, b)` of the quadratic part of `T⁻¹(F − const)`.
fn new_pair<R: Real>(grid: &TimeGrid, (ka, a): (usize, &NodeData<R>), (kb, b): (usize, &NodeData<R>)) -> Result<R> {
    let s = grid.stiffness_unchecked(ka, kb);
    let m = grid.mass_unchecked(ka, kb);
    let c = grid.cross_unchecked(ka, kb);
    let gg = inner(&a.g, &b.g)?;
    let hh = inner_lists(&a.hg, &b.hg)?;
    let mut gh = Cx::zero();
    for h in &b.hg {
        gh += inner(&a.g, h)?;
    }
    // 2 Re(i c z) = −2 c Im z
    Ok(gg.re * s + hh.re * m - gh.im * (2.0 * c))
}

/// Terms of `T⁻¹(F − const)` linear in the new node `k` and coupling it to
/// the accumulated data at node `l`, from both orderings of the pair.
fn cross_terms<R: Real>(grid: &TimeGrid, res: &Residual, k: usize, a: &NodeData<R>, l: usize) -> Result<R> {
    let s = grid.stiffness_unchecked(k, l);
    let m = grid.mass_unchecked(k, l);
    let c_kl = grid.cross_unchecked(k, l);
    let c_lk = grid.cross_unchecked(l, k);
    let gd = inner_const(&a.g, &res.sums[l])?;
    let gp = inner_const(&a.g, &res.images[l])?;
    let mut hp = Cx::zero();
    let mut hd = Cx::zero();
    for h in &a.hg {
        hp += inner_const(h, &res.images[l])?;
        hd += inner_const(h, &res.sums[l])?;
    }
    Ok((gd.re * s + hp.re * m - gp.im * c_kl + hd.im * c_lk) * 2.0)
}

/// `‖g_0‖² − 2 Re⟨u₀ − D_0, g_0⟩`.
fn initial_value<R: Real>(res: &Residual, g0: &GaussianTerm<R>) -> Result<R> {
    Ok(inner(g0, g0)?.re - inner_const(g0, &res.initial_mismatch)?.re * 2.0)
}

/// Maps `f` over `0..n` on up to `threads` scoped threads; output order is
/// the index order, so results do not depend on the thread count.
pub(crate) fn par_map<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = threads.max(1).min(n.max(1));
    if threads == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| scope.spawn(move || (t * chunk..((t + 1) * chunk).min(n)).map(f).collect::<Vec<T>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Objective evaluator for one greedy term.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    problem: &'a GreedyProblem,
    residual: &'a Residual,
    threads: usize,
}

impl<'a> Objective<'a> {
    pub fn new(problem: &'a GreedyProblem, residual: &'a Residual) -> Self {
        Self { problem, residual, threads: default_threads() }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    fn check(&self, x: &SpaceTimeGaussian) -> Result<()> {
        if x.grid != self.problem.grid || x.dim != self.problem.dim {
            return Err(Error::ShapeMismatch {
                expected: "trajectory on the problem grid".into(),
                got: "other grid".into(),
            });
        }
        Ok(())
    }

    fn nodes(&self, x: &SpaceTimeGaussian) -> Result<Vec<NodeData<f64>>> {
        par_map(self.problem.grid.n_nodes(), self.threads, |k| node_data(self.problem, k, x.node_params(k)))
            .into_iter()
            .collect()
    }

    /// `F` at the accumulated solution plus `x`.
    pub fn value(&self, x: &SpaceTimeGaussian) -> Result<f64> {
        self.check(x)?;
        let grid = &self.problem.grid;
        let nodes = self.nodes(x)?;
        let per_node: Vec<Result<f64>> = par_map(grid.n_nodes(), self.threads, |k| {
            let mut s = 0.0;
            for l in grid.neighbours(k) {
                s += new_pair(grid, (k, &nodes[k]), (l, &nodes[l]))?
                    + cross_terms(grid, self.residual, k, &nodes[k], l)?;
            }
            Ok(s)
        });
        let mut f = 0.0;
        for v in per_node {
            f += v?;
        }
        Ok(self.residual.constant + initial_value(self.residual, &nodes[0].g)? + grid.t_final() * f)
    }

    /// Exact gradient by one forward dual sweep per node; node `k` only
    /// couples to `k ± 1`.
    pub fn gradient(&self, x: &SpaceTimeGaussian) -> Result<Vec<f64>> {
        self.check(x)?;
        match self.problem.dim {
            1 => self.gradient_impl::<6>(x),
            2 => self.gradient_impl::<12>(x),
            3 => self.gradient_impl::<20>(x),
            d => Err(Error::InvalidParameter(format!("unsupported dimension {d}"))),
        }
    }

    fn gradient_impl<const M: usize>(&self, x: &SpaceTimeGaussian) -> Result<Vec<f64>> {
        debug_assert_eq!(M, param_count(self.problem.dim));
        let grid = &self.problem.grid;
        let nodes = self.nodes(x)?;
        let blocks: Vec<Result<[f64; M]>> = par_map(grid.n_nodes(), self.threads, |k| {
            let v: Vec<Dual<M>> = x.node_params(k).iter().enumerate().map(|(i, &p)| Dual::variable(p, i)).collect();
            let active = node_data(self.problem, k, &v)?;
            let mut local = new_pair(grid, (k, &active), (k, &active))?;
            for l in grid.neighbours(k) {
                local += cross_terms(grid, self.residual, k, &active, l)?;
                if l != k {
                    let other: NodeData<Dual<M>> = lift_node(&nodes[l]);
                    local += new_pair(grid, (k, &active), (l, &other))? + new_pair(grid, (l, &other), (k, &active))?;
                }
            }
            local = local * grid.t_final();
            if k == 0 {
                local += initial_value(self.residual, &active.g)?;
            }
            Ok(local.d)
        });
        let mut out = Vec::with_capacity(M * grid.n_nodes());
        for b in blocks {
            out.extend_from_slice(&b?);
        }
        Ok(out)
    }

    /// `H̃(X) = ∂_{X₁}∂_{X₂} Re G(X₁, X₂)` with
    /// `G = ⟨Γ₁(0), Γ₂(0)⟩ + T⟨∂_tΓ₁, ∂_tΓ₂⟩`; blocks are real `m × m`.
    pub fn metric(&self, x: &SpaceTimeGaussian) -> Result<BlockTridiagonal<f64>> {
        self.check(x)?;
        metric(x, self.threads)
    }
}

/// Metric of [`Objective::metric`], independent of the potential.
pub fn metric(x: &SpaceTimeGaussian, threads: usize) -> Result<BlockTridiagonal<f64>> {
    let grid = &x.grid;
    let d = x.dim;
    let lay = Layout::new(d);
    let derivs = par_map(grid.n_nodes(), threads, |k| derivative_polys(d, x.node_params(k)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let center = |k: usize| &x.node_params(k)[lay.center..lay.center + d];
    let block = |k: usize, l: usize| -> Result<DMatrix<f64>> {
        let g = poly_gram(&derivs[k].0, &derivs[k].1, center(k), &derivs[l].0, &derivs[l].1, center(l))?;
        let w = grid.t_final() * grid.stiffness_unchecked(k, l) + if k == 0 && l == 0 { 1.0 } else { 0.0 };
        Ok(DMatrix::from_fn(lay.len, lay.len, |a, b| w * g[a][b].re))
    };
    let n = grid.n_nodes();
    let diag: Vec<Result<DMatrix<f64>>> = par_map(n, threads, |k| {
        let b = block(k, k)?;
        Ok((&b + b.transpose()) * 0.5)
    });
    let upper: Vec<Result<DMatrix<f64>>> = par_map(n - 1, threads, |k| block(k, k + 1));
    BlockTridiagonal::new(diag.into_iter().collect::<Result<_>>()?, upper.into_iter().collect::<Result<_>>()?)
}

/// Settings of the one-term optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeOptions {
    /// Stop when `ε = ∇F · H̃⁻¹∇F ≤ epsilon_rel · (1 + F(X_init))`.
    pub epsilon_rel: f64,
    pub max_iterations: usize,
    /// Line search interval `(0, alpha_max]`.
    pub alpha_max: f64,
    /// Golden-section stops when the bracket is below this fraction of `alpha_max`.
    pub line_search_tol: f64,
    /// `λ = regularization · trace(H̃) / dim` added before factorization.
    pub regularization: f64,
    /// Smallest admissible eigenvalue of each node's `Re Q`.
    pub width_floor: f64,
    /// Stop when an accepted step decreases `F` by less than this fraction.
    pub min_relative_decrease: f64,
    /// Replace `H̃` by the identity (plain gradient descent).
    pub identity_metric: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            epsilon_rel: 1e-10,
            max_iterations: 100,
            alpha_max: 2.0,
            line_search_tol: 1e-2,
            regularization: 1e-10,
            width_floor: 1e-8,
            min_relative_decrease: 1e-7,
            identity_metric: false,
        }
    }
}

/// Why an optimization stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    Stalled,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub solution: SpaceTimeGaussian,
    pub value: f64,
    pub initial_value: f64,
    /// `F` after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub iterations: usize,
    /// Last computed decrement `∇F · H̃⁻¹∇F`.
    pub epsilon: f64,
    pub stop: StopReason,
}

fn widths_admissible(x: &[f64], d: usize, floor: f64) -> bool {
    let m = param_count(d);
    let lay = Layout::new(d);
    let pairs = upper_pairs(d);
    x.chunks(m).all(|v| {
        let mut a = DMatrix::zeros(d, d);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            a[(i, j)] = v[lay.width_re + k];
            a[(j, i)] = v[lay.width_re + k];
        }
        for i in 0..d {
            a[(i, i)] -= floor;
        }
        a.cholesky().is_some()
    })
}

fn factor_metric(h: &BlockTridiagonal<f64>, rel: f64) -> Result<BlockFactorization<f64>> {
    let lambda = rel * h.trace() / h.dim() as f64;
    let shifted = h.shifted(lambda);
    match shifted.cholesky() {
        Ok(f) => Ok(f),
        Err(_) => Ok(shifted.cholesky_regularized(rel)?.0),
    }
}

/// Algorithm: `X ← X − α H̃(X)⁻¹∇F(X)` with `α` from a golden-section search
/// on `(0, α_max]`, falling back to halving from `α = 1`.
pub fn optimize_term(
    objective: &Objective<'_>,
    init: SpaceTimeGaussian,
    opts: &OptimizeOptions,
) -> Result<OptimizeOutcome> {
    let d = init.dim;
    let grid = init.grid;
    let mut x = init;
    let mut f = objective.value(&x)?;
    let initial_value = f;
    let eps_lim = opts.epsilon_rel * (1.0 + initial_value.abs());
    let mut history = vec![f];
    let mut epsilon = f64::INFINITY;
    let eval = |p: &[f64]| -> f64 {
        if !widths_admissible(p, d, opts.width_floor) {
            return f64::INFINITY;
        }
        match SpaceTimeGaussian::new(grid, d, p.to_vec()).and_then(|s| objective.value(&s)) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    };
    for it in 0..opts.max_iterations {
        let g = DVector::from_vec(objective.gradient(&x)?);
        let y = if opts.identity_metric {
            g.clone()
        } else {
            let h = objective.metric(&x)?;
            factor_metric(&h, opts.regularization)?.solve_vec(&g)
        };
        epsilon = y.dot(&g);
        if epsilon <= eps_lim {
            return Ok(OptimizeOutcome {
                solution: x,
                value: f,
                initial_value,
                history,
                iterations: it,
                epsilon,
                stop: StopReason::Converged,
            });
        }
        let point = |alpha: f64| -> Vec<f64> { x.params.iter().zip(y.iter()).map(|(a, b)| a - alpha * b).collect() };
        let phi = |alpha: f64| eval(&point(alpha));
        let (alpha, value) = line_search(&phi, f, opts);
        match alpha {
            Some(a) if value < f => {
                let decrease = f - value;
                x = SpaceTimeGaussian::new(grid, d, point(a))?;
                f = value;
                history.push(f);
                if decrease <= opts.min_relative_decrease * f.abs().max(f64::MIN_POSITIVE) {
                    return Ok(OptimizeOutcome {
                        solution: x,
                        value: f,
                        initial_value,
                        history,
                        iterations: it + 1,
                        epsilon,
                        stop: StopReason::Stalled,
                    });
                }
            }
            _ => {
                return Ok(OptimizeOutcome {
                    solution: x,
                    value: f,
                    initial_value,
                    history,
                    iterations: it,
                    epsilon,
                    stop: StopReason::LineSearchFailed,
                });
            }
        }
    }
    Ok(OptimizeOutcome {
        solution: x,
        value: f,
        initial_value,
        history,
        iterations: opts.max_iterations,
        epsilon,
        stop: StopReason::MaxIterations,
    })
}

/// Golden-section minimization of `phi` on `[0, α_max]`; if the best point
/// found does not decrease `phi(0) = f0`, tries `α = 2^{-j}`, `j ≤ 40`.
fn line_search(phi: &impl Fn(f64) -> f64, f0: f64, opts: &OptimizeOptions) -> (Option<f64>, f64) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, opts.alpha_max);
    let mut best = (None, f0);
    let consider = |a: f64, v: f64, best: &mut (Option<f64>, f64)| {
        if v < best.1 {
            *best = (Some(a), v);
        }
    };
    let mut a1 = hi - ratio * (hi - lo);
    let mut a2 = lo + ratio * (hi - lo);
    let mut f1 = phi(a1);
    let mut f2 = phi(a2);
    consider(a1, f1, &mut best);
    consider(a2, f2, &mut best);
    while hi - lo > opts.line_search_tol * opts.alpha_max {
        if f1 <= f2 {
            hi = a2;
            a2 = a1;
            f2 = f1;
            a1 = hi - ratio * (hi - lo);
            f1 = phi(a1);
            consider(a1, f1, &mut best);
        } else {
            lo = a1;
            a1 = a2;
            f1 = f2;
            a2 = lo + ratio * (hi - lo);
            f2 = phi(a2);
            consider(a2, f2, &mut best);
        }
    }
    if best.0.is_some() {
        return best;
    }
    let mut a = 1.0;
    for _ in 0..40 {
        let v = phi(a);
        if v < f0 {
            return (Some(a), v);
        }
        a *= 0.5;
    }
    (None, f0)
}

/// Settings of the outer greedy loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedyOptions {
    pub max_terms: usize,
    /// Stop once `F ≤ f_stop`.
    pub f_stop: f64,
    /// Fresh initializations tried after a term fails to decrease `F`.
    pub retries: usize,
    /// Amplitude of the candidate initializations relative to the residual
    /// Gaussian they copy, before the optimal complex rescaling.
    pub candidate_scale: f64,
    pub seed: u64,
    pub threads: usize,
    pub optimize: OptimizeOptions,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self {
            max_terms: 30,
            f_stop: 0.0,
            retries: 5,
            candidate_scale: 0.1,
            seed: 0,
            threads: 0,
            optimize: OptimizeOptions::default(),
        }
    }
}

/// Record of one accepted greedy term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermRecord {
    pub iterations: usize,
    pub stop: StopReason,
    pub initial_value: f64,
    pub value: f64,
    pub retries: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct GreedyState {
    pub terms: Vec<SpaceTimeGaussian>,
    pub residual: Residual,
    /// `F` before any term followed by `F` after each accepted term.
    pub history: Vec<f64>,
    pub records: Vec<TermRecord>,
    /// Set when the loop stopped because no initialization decreased `F`.
    pub stalled: bool,
}

impl GreedyState {
    pub fn new(problem: &GreedyProblem) -> Result<Self> {
        let residual = Residual::new(problem)?;
        let f0 = residual.constant();
        Ok(Self { terms: Vec::new(), residual, history: vec![f0], records: Vec::new(), stalled: false })
    }

    /// Sum of all terms at node `k` (interaction picture).
    pub fn node_value(&self, k: usize) -> &GaussianSum {
        self.residual.node_sum(k)
    }

    /// `ψ(t_k) = e^{it_kΔ} φ(t_k)`.
    pub fn physical_node_value(&self, problem: &GreedyProblem, k: usize) -> Result<GaussianSum> {
        self.node_value(k).free_evolve(problem.grid.node(k), 1.0)
    }

    pub fn value(&self) -> f64 {
        *self.history.last().unwrap()
    }
}

/// Candidate trajectories copying one residual Gaussian family across all
/// nodes: the images `H(t_k) g^{(j)}_k` and the earlier terms themselves.
fn candidates(problem: &GreedyProblem, residual: &Residual, scale: f64) -> Result<Vec<SpaceTimeGaussian>> {
    let n = problem.grid.n_nodes();
    let families = residual.node_image(0).len() + residual.node_sum(0).len();
    let mut out = Vec::with_capacity(families);
    for j in 0..families {
        let mut params = Vec::with_capacity(n * problem.params_per_node());
        for k in 0..n {
            let images = residual.node_image(k);
            let g = if j < images.len() { &images.terms()[j] } else { &residual.node_sum(k).terms()[j - images.len()] };
            let mut v = params_of(g)?;
            v[0] *= scale;
            v[1] *= scale;
            params.extend(v);
        }
        if let Ok(s) = SpaceTimeGaussian::new(problem.grid, problem.dim, params) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Multiplies every node amplitude by `c`.
fn rescale(x: &SpaceTimeGaussian, c: C64) -> SpaceTimeGaussian {
    let m = param_count(x.dim);
    let mut p = x.params.clone();
    for v in p.chunks_mut(m) {
        let a = C64::from_f64(v[0], v[1]) * c;
        v[0] = a.re;
        v[1] = a.im;
    }
    SpaceTimeGaussian { grid: x.grid, dim: x.dim, params: p }
}

/// `F(cX) = F₀ + |c|²Q + 2 Re(c L)` is quadratic in a common amplitude
/// factor; returns the minimizing rescaled candidate and its value.
fn best_rescaling(objective: &Objective<'_>, x: &SpaceTimeGaussian) -> Result<(SpaceTimeGaussian, f64)> {
    let f0 = objective.residual.constant;
    let fp = objective.value(x)?;
    let fm = objective.value(&rescale(x, C64::from_f64(-1.0, 0.0)))?;
    let fi = objective.value(&rescale(x, C64::i()))?;
    let q = 0.5 * (fp + fm) - f0;
    let l = C64::from_f64(0.25 * (fp - fm), 0.5 * (f0 + q - fi));
    if !(q > 0.0) {
        return Ok((x.clone(), fp));
    }
    let c = l.conj().scale_f(-1.0 / q);
    let x = rescale(x, c);
    let v = objective.value(&x)?;
    Ok((x, v))
}

fn perturb(x: &SpaceTimeGaussian, rng: &mut ChaCha8Rng, size: f64) -> SpaceTimeGaussian {
    let lay = Layout::new(x.dim);
    let m = lay.len;
    let mut p = x.params.clone();
    // one perturbation shared by all nodes keeps the trajectory smooth in time
    let delta: Vec<f64> = (0..m).map(|_| rng.gen_range(-size..size)).collect();
    for v in p.chunks_mut(m) {
        for i in 0..m {
            let scale = if i < 2 { v[0].hypot(v[1]) } else { 1.0 };
            v[i] += delta[i] * scale;
        }
    }
    SpaceTimeGaussian { grid: x.grid, dim: x.dim, params: p }
}

/// Greedy loop: each term minimizes `F` of the accumulated solution plus
/// the term; accepted terms strictly decrease `F`.
pub fn greedy(problem: &GreedyProblem, opts: &GreedyOptions) -> Result<GreedyState> {
    let mut state = GreedyState::new(problem)?;
    continue_greedy(problem, &mut state, opts)?;
    Ok(state)
}

/// Adds terms to `state` until `opts.max_terms` terms exist in total.
pub fn continue_greedy(problem: &GreedyProblem, state: &mut GreedyState, opts: &GreedyOptions) -> Result<()> {
    let threads = if opts.threads == 0 { default_threads() } else { opts.threads };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(state.terms.len() as u64));
    while state.terms.len() < opts.max_terms && state.value() > opts.f_stop {
        let start = std::time::Instant::now();
        let objective = Objective::new(problem, &state.residual).with_threads(threads);
        let current = state.value();
        // ranked initializations
        let mut inits: Vec<(SpaceTimeGaussian, f64)> = Vec::new();
        if state.terms.is_empty() {
            let g0 = problem.initial.terms().first().ok_or(Error::InvalidParameter("empty initial data".into()))?;
            let x = SpaceTimeGaussian::constant(problem.grid, g0)?;
            let v = objective.value(&x)?;
            inits.push((x, v));
        } else {
            for c in candidates(problem, &state.residual, opts.candidate_scale)? {
                if let Ok(r) = best_rescaling(&objective, &c) {
                    inits.push(r);
                }
            }
            inits.sort_by(|a, b| a.1.total_cmp(&b.1));
        }
        let mut accepted = None;
        for attempt in 0..=opts.retries {
            let init = match inits.get(attempt) {
                Some((x, _)) if attempt == 0 => x.clone(),
                Some((x, _)) => perturb(x, &mut rng, 0.05),
                None => match inits.first() {
                    Some((x, _)) => perturb(x, &mut rng, 0.2),
                    None => break,
                },
            };
            let out = match optimize_term(&objective, init, &opts.optimize) {
                Ok(o) => o,
                Err(_) => continue,
            };
            if out.value < current {
                accepted = Some((out, attempt));
                break;
            }
        }
        let Some((out, retries)) = accepted else {
            state.stalled = true;
            break;
        };
        state.residual.add_term(problem, &out.solution, out.value)?;
        state.history.push(out.value);
        state.records.push(TermRecord {
            iterations: out.iterations,
            stop: out.stop,
            initial_value: out.initial_value,
            value: out.value,
            retries,
            seconds: start.elapsed().as_secs_f64(),
        });
        state.terms.push(out.solution);
    }
    Ok(())
}

/// Serialized greedy run: the problem, all accepted terms and the history.
/// Node sums and their images are rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreedyCheckpoint {
    pub t_final: f64,
    pub intervals: usize,
    pub dim: usize,
    pub potential: GaussianSum,
    pub initial: GaussianSum,
    /// Parameter layout per node.
    pub layout: String,
    pub terms: Vec<Vec<f64>>,
    pub history: Vec<f64>,
    pub records: Vec<TermRecord>,
    pub stalled: bool,
}

pub fn layout_description(d: usize) -> String {
    let pairs: Vec<String> = upper_pairs(d).iter().map(|(i, j)| format!("{i}{j}")).collect();
    format!(
        "per node: [Re a, Im a, A_{{{}}}, B_{{{}}}, q_0..q_{}, p_0..p_{}], Q = A + iB upper triangle row-major",
        pairs.join(","),
        pairs.join(","),
        d - 1,
        d - 1
    )
}

impl GreedyCheckpoint {
    pub fn capture(problem: &GreedyProblem, state: &GreedyState) -> Self {
        Self {
            t_final: problem.grid.t_final(),
            intervals: problem.grid.intervals(),
            dim: problem.dim,
            potential: problem.potential.clone(),
            initial: problem.initial.clone(),
            layout: layout_description(problem.dim),
            terms: state.terms.iter().map(|t| t.params.clone()).collect(),
            history: state.history.clone(),
            records: state.records.clone(),
            stalled: state.stalled,
        }
    }

    pub fn restore(&self) -> Result<(GreedyProblem, GreedyState)> {
        let grid = TimeGrid::new(self.t_final, self.intervals)?;
        let problem = GreedyProblem::new(grid, self.potential.clone(), self.initial.clone())?;
        let mut state = GreedyState::new(&problem)?;
        if self.history.len() != self.terms.len() + 1 {
            return Err(Error::ShapeMismatch {
                expected: format!("{} history entries", self.terms.len() + 1),
                got: self.history.len().to_string(),
            });
        }
        for (p, &f) in self.terms.iter().zip(&self.history[1..]) {
            let term = SpaceTimeGaussian::new(grid, self.dim, p.clone())?;
            state.residual.add_term(&problem, &term, f)?;
            state.terms.push(term);
        }
        state.history = self.history.clone();
        state.records = self.records.clone();
        state.stalled = self.stalled;
        Ok((problem, state))
    }
}

/// Primal view of a dual-valued term, for diagnostics.
pub fn primal_term<R: Real>(g: &GaussianTerm<R>) -> GaussianTerm<f64> {
    primal(g)
}
