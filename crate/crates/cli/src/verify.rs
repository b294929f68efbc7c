//! Oracle and property suites runnable from the command line.
//!
//! Every check compares a library result against an independent computation
//! (quadrature, dense linear algebra, finite differences, closed forms).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdse_core::als_solver::{als, eval_fn, AlsInit, AlsOptions, SpaceTimeLowRank};
use tdse_core::block_linalg::BlockTridiagonal;
use tdse_core::gaussian::{
    free_evolve, inner_sum, params_of, width_from_parts, GaussianSum, GaussianTerm, Layout, Poly, C64, MAX_DIM,
};
use tdse_core::greedy_solver::{
    metric, optimize_term, GreedyProblem, Objective, OptimizeOptions, Residual, SpaceTimeGaussian,
};
use tdse_core::matrix_model::{
    pathological_experiment, pathological_solution, pathological_u0, random_experiment, MatrixExperiment,
    PATHOLOGICAL_SIZE,
};
use tdse_core::matrix_reference::rk4_trajectory;
use tdse_core::spectral_reference::{coefficient_norm, l2_error, project, SineGrid, StrangPropagator};
use tdse_core::time_grid::TimeGrid;

use crate::CliError;

pub const SUITES: [&str; 8] =
    ["time-grid", "block-linalg", "matrix", "gaussian", "greedy", "spectral", "monotonicity", "all"];

/// One measured quantity against its tolerance; `value ≤ tolerance` passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(suite: &'static str, name: &str, value: f64, tolerance: f64) -> Self {
        Self { suite, name: name.into(), value, tolerance }
    }

    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}/{}: {:.3e} (limit {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.value,
            self.tolerance
        )
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<Vec<Check>, CliError> {
    match name {
        "time-grid" => time_grid_suite(),
        "block-linalg" => block_suite(seed),
        "matrix" => matrix_suite(seed),
        "gaussian" => gaussian_suite(seed),
        "greedy" => greedy_suite(seed),
        "spectral" => spectral_suite(),
        "monotonicity" => monotonicity_suite(seed),
        "all" => {
            let mut out = Vec::new();
            for s in &SUITES[..SUITES.len() - 1] {
                out.extend(run_suite(s, seed)?);
            }
            Ok(out)
        }
        other => Err(CliError::UnknownExperiment(other.to_string())),
    }
}

const GL3_X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

fn time_grid_suite() -> Result<Vec<Check>, CliError> {
    let mut worst: f64 = 0.0;
    for (t_final, n) in [(1.0, 4), (5.0, 7), (2.0, 200)] {
        let g = TimeGrid::new(t_final, n)?;
        let dt = g.dt();
        let quad = |f: &dyn Fn(f64) -> f64| -> f64 {
            let mut s = 0.0;
            for j in 0..n {
                let mid = g.node(j) + 0.5 * dt;
                for (x, w) in GL3_X.iter().zip(GL3_W) {
                    s += w * 0.5 * dt * f(mid + 0.5 * dt * x);
                }
            }
            s
        };
        let ks: Vec<usize> = if n > 10 { vec![0, 1, 99, 100, 199, 200] } else { (0..=n).collect() };
        for &k in &ks {
            for l in k.saturating_sub(2)..=(k + 2).min(n) {
                let m = quad(&|t| g.hat(k, t) * g.hat(l, t));
                let s = quad(&|t| g.hat_derivative(k, t) * g.hat_derivative(l, t));
                let c = quad(&|t| g.hat_derivative(k, t) * g.hat(l, t));
                worst = worst
                    .max((m - g.mass(k, l)?).abs())
                    .max((s - g.stiffness(k, l)?).abs() * dt)
                    .max((c - g.cross(k, l)?).abs());
            }
        }
    }
    Ok(vec![Check::new("time-grid", "hat integral tables vs quadrature", worst, 1e-13)])
}

fn block_suite(seed: u64) -> Result<Vec<Check>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..10 {
        let (nb, bs) = (3 + case % 5, 1 + case % 6);
        let rand_block = |rng: &mut ChaCha8Rng| DMatrix::<f64>::from_fn(bs, bs, |_, _| rng.gen_range(-1.0..1.0));
        let upper: Vec<DMatrix<f64>> = (0..nb - 1).map(|_| rand_block(&mut rng)).collect();
        let diag: Vec<DMatrix<f64>> = (0..nb)
            .map(|_| {
                let g = rand_block(&mut rng);
                &g * g.transpose() + DMatrix::identity(bs, bs) * (4.0 * bs as f64)
            })
            .collect();
        let m = BlockTridiagonal::new(diag, upper)?;
        let dense = m.to_dense();
        let b = DVector::from_fn(m.dim(), |_, _| rng.gen_range(-1.0..1.0));
        let x = m.cholesky()?.solve_vec(&b);
        let y = dense.clone().lu().solve(&b).expect("non-singular");
        worst = worst.max((&x - &y).norm() / y.norm()).max((&dense * &x - &b).norm() / b.norm());
    }
    Ok(vec![Check::new("block-linalg", "block Cholesky solve vs dense", worst, 1e-10)])
}

/// `F_N` by Gauss-Legendre quadrature of the piecewise-quadratic residual.
fn fn_quadrature(w: &SpaceTimeLowRank, exp: &MatrixExperiment) -> Result<f64, CliError> {
    let grid = w.grid();
    let dt = grid.dt();
    let i = Complex64::new(0.0, 1.0);
    let y: Vec<_> = (0..grid.n_nodes()).map(|k| w.node_value(k)).collect();
    let z = (0..grid.n_nodes()).map(|k| exp.hamiltonian.apply(grid.node(k), &y[k])).collect::<Result<Vec<_>, _>>()?;
    let mut integral = 0.0;
    for j in 0..grid.intervals() {
        let dy = (&y[j + 1] - &y[j]) * Complex64::new(1.0 / dt, 0.0);
        for (x, wq) in GL3_X.iter().zip(GL3_W) {
            let s = 0.5 * (1.0 + x);
            let g = &z[j] * Complex64::new(1.0 - s, 0.0) + &z[j + 1] * Complex64::new(s, 0.0);
            integral += 0.5 * dt * wq * (&dy * i - g).norm_squared();
        }
    }
    Ok((&y[0] - exp.u0()).norm_squared() + exp.t_final * integral)
}

fn matrix_suite(seed: u64) -> Result<Vec<Check>, CliError> {
    let mut worst: f64 = 0.0;
    for case in 0..5u64 {
        let exp = random_experiment(seed + case).with_horizon(0.7, 9);
        let grid = TimeGrid::new(exp.t_final, exp.intervals)?;
        let w = SpaceTimeLowRank::random(grid, 40, 40, 1 + case as usize, seed + 100 + case);
        let a = eval_fn(&w, &exp)?;
        let b = fn_quadrature(&w, &exp)?;
        worst = worst.max((a - b).abs() / b.abs());
    }
    let exp = pathological_experiment(PATHOLOGICAL_SIZE, 0.0, seed)?;
    let rk4 = rk4_trajectory(&exp, 2000)?;
    let u0 = pathological_u0(PATHOLOGICAL_SIZE);
    let grid = TimeGrid::new(exp.t_final, exp.intervals)?;
    let rk4_err =
        rk4.iter().zip(grid.nodes()).map(|(u, t)| (u - pathological_solution(&u0, t)).norm()).fold(0.0, f64::max);
    Ok(vec![
        Check::new("matrix", "F_N vs time quadrature (relative)", worst, 1e-8),
        Check::new("matrix", "RK4 (2000 steps) vs closed form on [0,2]", rk4_err, 1e-8),
    ])
}

fn random_width(rng: &mut ChaCha8Rng, d: usize) -> (Vec<f64>, Vec<f64>) {
    let g: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let s: f64 = (0..d).map(|k| g[i * d + k] * g[j * d + k]).sum();
            a[i * d + j] = 0.3 * s + if i == j { 0.5 } else { 0.0 };
            b[i * d + j] = rng.gen_range(-1.0..1.0);
        }
    }
    (a, b)
}

/// Random wavepacket, times a random polynomial of total degree at most
/// `degree` about a random center when `degree > 0`.
pub fn random_term(rng: &mut ChaCha8Rng, d: usize, degree: usize) -> GaussianTerm {
    let (a, b) = random_width(rng, d);
    let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let amp = C64::from_f64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let t = GaussianTerm::wavepacket(d, amp, &q, &p, width_from_parts(d, &a, &b)).expect("valid width");
    if degree == 0 {
        return t;
    }
    let terms: Vec<_> = (0..4)
        .map(|_| {
            let mut e = [0u8; MAX_DIM];
            let mut left = rng.gen_range(0..=degree);
            for slot in e.iter_mut().take(d) {
                let k = rng.gen_range(0..=left);
                *slot = k as u8;
                left -= k;
            }
            (e, C64::from_f64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        })
        .collect();
    let center: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    t.with_poly(Poly::from_terms(terms), &center).expect("valid polynomial")
}

/// Tensor trapezoid rule on `[-half, half]^d`.
fn trapezoid(d: usize, half: f64, h: f64, f: impl Fn(&[f64]) -> C64) -> C64 {
    let n = (2.0 * half / h).round() as usize;
    let mut s = C64::zero();
    let mut x = vec![0.0; d];
    let total = (n + 1).pow(d as u32);
    for flat in 0..total {
        let mut rest = flat;
        for xj in x.iter_mut() {
            *xj = -half + (rest % (n + 1)) as f64 * h;
            rest /= n + 1;
        }
        s += f(&x);
    }
    s.scale_f(h.powi(d as i32))
}

fn gaussian_suite(seed: u64) -> Result<Vec<Check>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut overlap: f64 = 0.0;
    for case in 0..100 {
        let d = if case < 75 { 1 } else { 2 };
        let u = random_term(&mut rng, d, case % 4);
        let v = random_term(&mut rng, d, (case / 4) % 4);
        let exact = tdse_core::gaussian::inner(&u, &v)?;
        let (half, h) = if d == 1 { (16.0, 0.01) } else { (11.0, 0.04) };
        let quad = trapezoid(d, half, h, |x| u.eval(x).conj() * v.eval(x));
        let scale = (u.norm_sqr()? * v.norm_sqr()?).sqrt();
        overlap = overlap.max((exact - quad).abs() / scale);
    }
    let mut unitarity: f64 = 0.0;
    let mut parseval: f64 = 0.0;
    for d in 1..=3 {
        for _ in 0..5 {
            let u = random_term(&mut rng, d, 2);
            let v = random_term(&mut rng, d, 1);
            let n0 = u.norm_sqr()?;
            let uv = tdse_core::gaussian::inner(&u, &v)?;
            for t in [0.1, 1.0, 5.0] {
                let ut = free_evolve(&u, t, 1.0)?;
                let vt = free_evolve(&v, t, 1.0)?;
                unitarity = unitarity.max((ut.norm_sqr()? - n0).abs() / n0);
                parseval =
                    parseval.max((tdse_core::gaussian::inner(&ut, &vt)? - uv).abs() / (n0 * v.norm_sqr()?).sqrt());
            }
        }
    }
    // closed-form free evolution against the sine-spectral propagator
    let u0 = GaussianTerm::wavepacket(1, C64::one(), &[0.0], &[0.0], width_from_parts(1, &[1.0], &[0.0]))?;
    let sum = GaussianSum::from_terms(1, vec![u0.clone()])?;
    let grid = SineGrid::new(1, 30.0, 512)?;
    let zero_v = GaussianSum::from_terms(1, vec![u0.scale(C64::zero())])?;
    let prop = StrangPropagator::new(&grid, &zero_v, 0.5 / 50.0)?;
    let mut c = project(&sum, &grid)?.coeffs;
    for _ in 0..50 {
        prop.strang_step(&mut c);
    }
    let exact = GaussianSum::from_terms(1, vec![free_evolve(&u0, 0.5, 1.0)?])?;
    let spectral = l2_error(&c, &exact, &grid)?;
    Ok(vec![
        Check::new("gaussian", "overlaps vs trapezoid quadrature, 100 cases (relative)", overlap, 1e-10),
        Check::new("gaussian", "free evolution unitarity", unitarity, 1e-12),
        Check::new("gaussian", "free evolution preserves inner products", parseval, 1e-12),
        Check::new("gaussian", "free evolution vs spectral propagator (L2)", spectral, 1e-6),
    ])
}

fn packet(d: usize, amp: f64, q: &[f64], p: &[f64], width: f64) -> Result<GaussianTerm, CliError> {
    let a: Vec<f64> = (0..d * d).map(|i| if i % (d + 1) == 0 { width } else { 0.0 }).collect();
    Ok(GaussianTerm::wavepacket(d, C64::from_f64(amp, 0.0), q, p, width_from_parts(d, &a, &vec![0.0; d * d]))?)
}

/// Small scattering problem of dimension `d` used by the greedy checks.
pub fn small_greedy_problem(d: usize, intervals: usize) -> Result<GreedyProblem, CliError> {
    let zero = vec![0.0; d];
    let mut q = vec![0.0; d];
    q[0] = 1.0;
    let v1 = packet(d, 1.5, &zero, &zero, 1.2)?;
    let mut c2 = vec![0.0; d];
    c2[0] = -1.5;
    let v2 = packet(d, 0.7, &c2, &zero, 0.8)?;
    let u0 = packet(d, 1.0, &q, &vec![-0.8; d], 1.0)?;
    Ok(GreedyProblem::new(
        TimeGrid::new(1.5, intervals)?,
        GaussianSum::from_terms(d, vec![v1, v2])?,
        GaussianSum::from_terms(d, vec![u0])?,
    )?)
}

/// Trajectory with random node-to-node variation around a random packet.
pub fn random_trajectory(rng: &mut ChaCha8Rng, problem: &GreedyProblem) -> Result<SpaceTimeGaussian, CliError> {
    let d = problem.dim();
    let base = params_of(&random_term(rng, d, 0))?;
    let lay = Layout::new(d);
    let mut params = Vec::new();
    for _ in 0..problem.grid().n_nodes() {
        let mut v = base.clone();
        for (i, x) in v.iter_mut().enumerate() {
            let size = if (lay.width_re..lay.width_im).contains(&i) { 0.02 } else { 0.1 };
            *x += rng.gen_range(-size..size);
        }
        params.extend(v);
    }
    Ok(SpaceTimeGaussian::new(*problem.grid(), d, params)?)
}

/// `F` by Gauss-Legendre quadrature in time of the explicit residual
/// `‖Σ_k (iζ'_k − ζ_k H(t_k)) w_k‖²` with spatial norms in closed form.
pub fn f_quadrature(problem: &GreedyProblem, nodes: &[GaussianSum]) -> Result<f64, CliError> {
    let grid = problem.grid();
    let d = problem.dim();
    let mut images = Vec::new();
    for (k, w) in nodes.iter().enumerate() {
        let mut s = GaussianSum::new(d);
        for g in w.terms() {
            for h in problem.apply_h(k, g)? {
                s.push(h)?;
            }
        }
        images.push(s);
    }
    let mut init = problem.initial().clone();
    init.extend(&nodes[0].scale(C64::from_f64(-1.0, 0.0)))?;
    let mut f = init.norm_sqr()?;
    let dt = grid.dt();
    for j in 0..grid.intervals() {
        for (x, w) in GL3_X.iter().zip(GL3_W) {
            let t = grid.node(j) + 0.5 * dt * (1.0 + x);
            let mut rho = GaussianSum::new(d);
            for (k, dz) in [(j, -1.0 / dt), (j + 1, 1.0 / dt)] {
                rho.extend(&nodes[k].scale(C64::from_f64(0.0, dz)))?;
                rho.extend(&images[k].scale(C64::from_f64(-grid.hat(k, t), 0.0)))?;
            }
            f += grid.t_final() * w * 0.5 * dt * inner_sum(&rho, &rho)?.re;
        }
    }
    Ok(f)
}

fn node_sums(problem: &GreedyProblem, terms: &[&SpaceTimeGaussian]) -> Result<Vec<GaussianSum>, CliError> {
    (0..problem.grid().n_nodes())
        .map(|k| {
            let mut s = GaussianSum::new(problem.dim());
            for t in terms {
                s.push(t.node(k)?)?;
            }
            Ok(s)
        })
        .collect()
}

fn greedy_suite(seed: u64) -> Result<Vec<Check>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f_err: f64 = 0.0;
    let mut grad_err: f64 = 0.0;
    let mut eig: f64 = f64::NEG_INFINITY;
    let mut solve_err: f64 = 0.0;
    for case in 0..50 {
        let d = 1 + case % 3;
        let problem = small_greedy_problem(d, 3 + case % 2)?;
        let mut residual = Residual::new(&problem)?;
        let mut earlier = Vec::new();
        for _ in 0..case % 3 {
            let x = random_trajectory(&mut rng, &problem)?;
            let f = Objective::new(&problem, &residual).value(&x)?;
            residual.add_term(&problem, &x, f)?;
            earlier.push(x);
        }
        let obj = Objective::new(&problem, &residual).with_threads(1);
        let x = random_trajectory(&mut rng, &problem)?;
        let value = obj.value(&x)?;
        if case < 10 {
            let mut all: Vec<&SpaceTimeGaussian> = earlier.iter().collect();
            all.push(&x);
            let q = f_quadrature(&problem, &node_sums(&problem, &all)?)?;
            f_err = f_err.max((value - q).abs() / q.abs());
        }
        let g = obj.gradient(&x)?;
        let h = 1e-5;
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..g.len() {
            let mut p = x.params().to_vec();
            p[i] += h;
            let fp = obj.value(&SpaceTimeGaussian::new(*problem.grid(), d, p.clone())?)?;
            p[i] -= 2.0 * h;
            let fm = obj.value(&SpaceTimeGaussian::new(*problem.grid(), d, p)?)?;
            grad_err = grad_err.max(((fp - fm) / (2.0 * h) - g[i]).abs() / scale);
        }
        if case < 15 {
            let m = metric(&x, 1)?;
            let dense = m.to_dense();
            let norm = dense.norm();
            let min = nalgebra::SymmetricEigen::new(dense.clone()).eigenvalues.min();
            eig = eig.max(-min / norm);
            let lambda = 1e-10 * m.trace() / m.dim() as f64;
            let shifted = m.shifted(lambda);
            let b = DVector::from_vec(g.clone());
            let y = shifted.cholesky()?.solve_vec(&b);
            let r = shifted.to_dense() * &y - &b;
            solve_err = solve_err.max(r.norm() / b.norm());
        }
    }
    Ok(vec![
        Check::new("greedy", "F vs time quadrature (relative)", f_err, 1e-8),
        Check::new("greedy", "gradient vs central differences, 50 cases (relative)", grad_err, 1e-5),
        Check::new("greedy", "metric smallest eigenvalue, negated and relative", eig.max(0.0), 1e-10),
        Check::new("greedy", "regularized metric solve residual (relative)", solve_err, 1e-10),
    ])
}

fn spectral_suite() -> Result<Vec<Check>, CliError> {
    let u0 = GaussianSum::from_terms(1, vec![packet(1, 1.0, &[4.0], &[-1.0], 1.0)?])?;
    let v =
        GaussianSum::from_terms(1, vec![packet(1, 1.5, &[-2.0], &[0.0], 1.0)?, packet(1, 1.0, &[2.0], &[0.0], 1.0)?])?;
    let grid = SineGrid::new(1, 30.0, 1024)?;
    let p0 = project(&u0, &grid)?;
    let prop = StrangPropagator::new(&grid, &v, 0.01)?;
    let mut c = p0.coeffs.clone();
    let n0 = coefficient_norm(&c);
    let mut drift: f64 = 0.0;
    for _ in 0..100 {
        let before = coefficient_norm(&c);
        prop.strang_step(&mut c);
        drift = drift.max((coefficient_norm(&c) - before).abs() / n0);
    }
    // step-halving order on the barrier problem
    let run = |steps: usize| -> Result<Vec<Complex64>, CliError> {
        let prop = StrangPropagator::new(&grid, &v, 2.0 / steps as f64)?;
        let mut c = p0.coeffs.clone();
        for _ in 0..steps {
            prop.strang_step(&mut c);
        }
        Ok(c)
    };
    let (a, b, r) = (run(50)?, run(100)?, run(800)?);
    let diff = |x: &[Complex64]| coefficient_norm(&x.iter().zip(&r).map(|(p, q)| p - q).collect::<Vec<_>>());
    let order = (diff(&a) / diff(&b)).log2();
    let samples = grid.sample(&u0)?;
    let back = grid.to_points(&grid.from_points(&samples));
    let recon = samples.iter().zip(&back).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    Ok(vec![
        Check::new("spectral", "Strang step norm drift", drift, 1e-12),
        Check::new("spectral", "Strang observed order deviation from 2", (order - 2.0).abs(), 0.1),
        Check::new("spectral", "project then reconstruct at collocation points", recon, 1e-8),
    ])
}

fn monotonicity_suite(seed: u64) -> Result<Vec<Check>, CliError> {
    let exp = random_experiment(seed).with_horizon(1.0, 20);
    let res = als(&exp, 3, AlsInit::Random { seed }, &AlsOptions { sweeps: 4, ..AlsOptions::default() })?;
    let als_rise = res
        .history
        .windows(2)
        .map(|w| (w[1].fn_value - w[0].fn_value) / w[0].fn_value)
        .fold(f64::NEG_INFINITY, f64::max);
    let problem = small_greedy_problem(1, 6)?;
    let residual = Residual::new(&problem)?;
    let obj = Objective::new(&problem, &residual);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut greedy_rise = f64::NEG_INFINITY;
    for _ in 0..3 {
        let x = random_trajectory(&mut rng, &problem)?;
        let out = optimize_term(&obj, x, &OptimizeOptions { max_iterations: 20, ..OptimizeOptions::default() })?;
        greedy_rise = greedy_rise.max(out.history.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(vec![
        Check::new("monotonicity", "largest relative rise of F_N across ALS half steps", als_rise.max(0.0), 1e-12),
        Check::new("monotonicity", "largest rise of F across accepted greedy steps", greedy_rise.max(0.0), 1e-12),
    ])
}
