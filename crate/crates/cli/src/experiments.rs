//! Drivers of the four built-in experiments.

use std::time::Instant;

use num_complex::Complex64;
use serde_json::json;
use tdse_core::als_solver::{als, AlsInit};
use tdse_core::gaussian::GaussianSum;
use tdse_core::greedy_solver::{
    continue_greedy, layout_description, GreedyCheckpoint, GreedyOptions, GreedyProblem, GreedyState,
};
use tdse_core::matrix_model::{
    pathological_experiment, pathological_solution, pathological_u0, random_experiment, CMat, PATHOLOGICAL_SIZE,
};
use tdse_core::matrix_reference::{best_rank_error, rk4_reference, rk4_trajectory, singular_value_curves, ErrorCurve};
use tdse_core::projector_splitting::{propagate, SplittingOptions};
use tdse_core::spectral_reference::{
    coefficient_norm, embed_coefficients, encode_snapshot, l2_error, project, SineGrid, SnapshotHeader,
    StrangPropagator,
};
use tdse_core::time_grid::TimeGrid;

use crate::config::{packet_sum, AlsPathologicalConfig, AlsRandomConfig, Config, GreedyConfig};
use crate::output::{Artifacts, Table};
use crate::CliError;

#[derive(Debug, Clone, Copy)]
pub struct RunContext {
    /// Worker threads; arms run concurrently when greater than one.
    pub threads: usize,
    /// Progress lines on stderr.
    pub progress: bool,
}

impl Default for RunContext {
    fn default() -> Self {
        Self { threads: 1, progress: false }
    }
}

impl RunContext {
    fn note(&self, msg: impl AsRef<str>) {
        if self.progress {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Runs both closures, concurrently when more than one thread is allowed.
    fn both<A: Send, B: Send>(&self, a: impl FnOnce() -> A + Send, b: impl FnOnce() -> B + Send) -> (A, B) {
        if self.threads > 1 {
            std::thread::scope(|s| {
                let hb = s.spawn(b);
                let ra = a();
                (ra, hb.join().expect("arm panicked"))
            })
        } else {
            (a(), b())
        }
    }
}

/// Wall-clock seconds per named phase, in execution order.
#[derive(Debug, Default)]
struct Phases(Vec<(String, f64)>);

impl Phases {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0.push((name.to_string(), t.elapsed().as_secs_f64()));
        out
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(self.0.iter().map(|(n, s)| json!({"phase": n, "seconds": s})).collect())
    }
}

pub fn run(config: &Config, ctx: &RunContext) -> Result<Artifacts, CliError> {
    config.validate()?;
    let start = Instant::now();
    let mut art = match config {
        Config::AlsRandom(c) => als_random(c, ctx)?,
        Config::AlsPathological(c) => als_pathological(c, ctx)?,
        Config::Greedy1d(c) | Config::Greedy3d(c) => greedy_run(c, ctx)?,
    };
    art.meta("experiment", config.name());
    art.meta("seed", config.seed());
    art.meta("version", env!("CARGO_PKG_VERSION"));
    art.meta("threads", ctx.threads);
    art.meta("config", config);
    art.meta("total_seconds", start.elapsed().as_secs_f64());
    Ok(art)
}

fn time_column(grid: &TimeGrid) -> Vec<f64> {
    grid.nodes()
}

fn als_random(c: &AlsRandomConfig, ctx: &RunContext) -> Result<Artifacts, CliError> {
    let mut art = Artifacts::default();
    let mut phases = Phases::default();
    let exp = random_experiment(c.seed).with_horizon(c.horizon.t_final, c.horizon.intervals);
    let grid = TimeGrid::new(exp.t_final, exp.intervals)?;
    let n = exp.intervals;
    ctx.note("reference trajectory");
    let reference =
        phases.time("reference", || rk4_reference(&exp, 2 * c.reference_steps_per_interval.div_ceil(2) * n))?;
    art.meta(
        "reference_certificate",
        json!({
            "steps": reference.certificate.steps,
            "coarse_steps": reference.certificate.coarse_steps,
            "sup_difference": reference.certificate.sup_difference,
            "tolerance": reference.certificate.tolerance,
            "converged": reference.certificate.converged,
        }),
    );
    let states = &reference.states;

    let k = c.singular_values;
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=k).map(|i| format!("sigma_{i}")));
    let cols_ref: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut sv = Table::new(
        "curves/singular_values.csv",
        "t: time\nsigma_i: i-th singular value of the reference U(t)",
        &cols_ref,
    );
    for (t, s) in time_column(&grid).into_iter().zip(singular_value_curves(states, k)) {
        let mut row = vec![t];
        row.extend((0..k).map(|i| s.get(i).copied().unwrap_or(0.0)));
        sv.push(row);
    }
    art.tables.push(sv);

    let mut by_rank = Table::new(
        "curves/error_vs_rank.csv",
        "rank: approximation rank\nals_error, df_error, svd_error: sup over nodes of the Frobenius error against the RK4 reference\nals_fn: final space-time residual of ALS",
        &["rank", "als_error", "df_error", "svd_error", "als_fn"],
    );
    let mut by_time = Table::new(
        "curves/error_vs_time.csv",
        "t: time\nrank: approximation rank\nals, df, svd: Frobenius error against the RK4 reference",
        &["t", "rank", "als", "df", "svd"],
    );
    let mut history = Table::new(
        "curves/als_history.csv",
        "rank: approximation rank\nsweep: ALS sweep (0 is the initial iterate)\nhalf: 0 initial, 1 A half step, 2 B half step\nfn: space-time residual F_N\ncg_iterations: preconditioned CG iterations of the half step",
        &["rank", "sweep", "half", "fn", "cg_iterations"],
    );
    let mut timing = Table::new(
        "timings/methods.csv",
        "rank: approximation rank\nals_seconds, df_seconds: wall-clock seconds",
        &["rank", "als_seconds", "df_seconds"],
    );
    let opts = c.als.options();
    let df_opts = SplittingOptions { substeps: c.dirac_frenkel.substeps };
    for &r in &c.ranks {
        ctx.note(format!("rank {r}"));
        let (als_out, df_out) = phases.time(&format!("rank {r}"), || {
            ctx.both(
                || {
                    let t = Instant::now();
                    als(&exp, r, AlsInit::TruncatedSvd, &opts).map(|res| (res, t.elapsed().as_secs_f64()))
                },
                || {
                    let t = Instant::now();
                    propagate(&exp, r, c.dirac_frenkel.steps_per_interval * n, &df_opts)
                        .map(|s| (s.iter().map(|x| x.to_matrix()).collect::<Vec<CMat>>(), t.elapsed().as_secs_f64()))
                },
            )
        });
        let (res, als_s) = als_out?;
        let (df_states, df_s) = df_out?;
        let als_states: Vec<CMat> = (0..=n).map(|k| res.solution.node_value(k)).collect();
        let e_als = ErrorCurve::between(&als_states, states);
        let e_df = ErrorCurve::between(&df_states, states);
        let e_svd = best_rank_error(states, r)?;
        by_rank.push(vec![r as f64, e_als.sup, e_df.sup, e_svd.sup, res.final_fn()]);
        for (k, t) in time_column(&grid).into_iter().enumerate() {
            by_time.push(vec![t, r as f64, e_als.per_node[k], e_df.per_node[k], e_svd.per_node[k]]);
        }
        for h in &res.history {
            let half = match h.half {
                None => 0.0,
                Some(tdse_core::als_solver::Half::A) => 1.0,
                Some(tdse_core::als_solver::Half::B) => 2.0,
            };
            history.push(vec![r as f64, h.sweep as f64, half, h.fn_value, h.cg_iterations as f64]);
        }
        timing.push(vec![r as f64, als_s, df_s]);
        art.summary.push(format!(
            "rank {r}: als {:.4e}  df {:.4e}  svd {:.4e}  ratio {:.3}",
            e_als.sup,
            e_df.sup,
            e_svd.sup,
            e_als.sup / e_svd.sup
        ));
    }
    art.tables.extend([by_rank, by_time, history, timing]);
    art.meta("als_options", format!("{opts:?}"));
    art.meta("phases", phases.to_json());
    Ok(art)
}

fn noise_label(e: f64) -> String {
    if e == 0.0 {
        "df_error_eps0".into()
    } else {
        format!("df_error_eps{e:e}")
    }
}

fn als_pathological(c: &AlsPathologicalConfig, ctx: &RunContext) -> Result<Artifacts, CliError> {
    let mut art = Artifacts::default();
    let mut phases = Phases::default();
    let (t_final, n) = (c.horizon.t_final, c.horizon.intervals);
    let grid = TimeGrid::new(t_final, n)?;
    let u0 = pathological_u0(PATHOLOGICAL_SIZE);
    let exact: Vec<CMat> = grid.nodes().into_iter().map(|t| pathological_solution(&u0, t)).collect();
    let exact_final = exact[n].clone();

    ctx.note("rk4 closed-form check");
    let full = pathological_experiment(PATHOLOGICAL_SIZE, 0.0, c.seed)?.with_horizon(t_final, n);
    let rk4 = phases.time("rk4 check", || rk4_trajectory(&full, c.rk4_steps))?;
    let rk4_err = ErrorCurve::between(&rk4, &exact);
    let mut rk4_table = Table::new(
        "curves/rk4_check.csv",
        "t: time\nerror: Frobenius distance of RK4 to the closed-form solution",
        &["t", "error"],
    );
    for (t, e) in grid.nodes().into_iter().zip(&rk4_err.per_node) {
        rk4_table.push(vec![t, *e]);
    }
    art.meta("rk4_sup_error", rk4_err.sup);
    art.summary.push(format!("rk4 ({} steps) vs closed form: sup error {:.3e}", c.rk4_steps, rk4_err.sup));

    let mut cols = vec!["rank".to_string(), "als_error".into(), "svd_error".into()];
    cols.extend(c.noise_levels.iter().map(|&e| noise_label(e)));
    cols.push("als_sup_error".into());
    let cols_ref: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut by_rank = Table::new(
        "curves/error_vs_rank.csv",
        "rank: approximation rank\nals_error, svd_error, df_error_eps*: Frobenius error at the final time against the closed-form solution; eps is the factor perturbation of the Dirac-Frenkel arm\nals_sup_error: sup over nodes of the ALS error",
        &cols_ref,
    );
    let mut tcols = vec!["rank".to_string(), "als_seconds".into()];
    tcols.extend(c.noise_levels.iter().map(|&e| noise_label(e).replace("error", "seconds")));
    let tcols_ref: Vec<&str> = tcols.iter().map(|s| s.as_str()).collect();
    let mut timing = Table::new(
        "timings/methods.csv",
        "rank: approximation rank\n*_seconds: wall-clock seconds per method",
        &tcols_ref,
    );
    let opts = c.als.options();
    let df_opts = SplittingOptions { substeps: c.dirac_frenkel.substeps };
    let steps = c.dirac_frenkel.steps_per_interval * n;
    for &r in &c.ranks {
        ctx.note(format!("rank {r}"));
        let exp = pathological_experiment(r, 0.0, c.seed)?.with_horizon(t_final, n);
        let (als_out, df_out) = phases.time(&format!("rank {r}"), || {
            ctx.both(
                || {
                    let t = Instant::now();
                    let init = AlsInit::PerturbedSvd { seed: c.seed, scale: c.als_perturbation };
                    als(&exp, r, init, &opts).map(|res| (res, t.elapsed().as_secs_f64()))
                },
                || -> Result<Vec<(f64, f64)>, tdse_core::Error> {
                    c.noise_levels
                        .iter()
                        .map(|&eps| {
                            let t = Instant::now();
                            let e = pathological_experiment(r, eps, c.seed)?.with_horizon(t_final, n);
                            let traj = propagate(&e, r, steps, &df_opts)?;
                            let err = (traj[n].to_matrix() - &exact_final).norm();
                            Ok((err, t.elapsed().as_secs_f64()))
                        })
                        .collect()
                },
            )
        });
        let (res, als_s) = als_out?;
        let df = df_out?;
        let als_states: Vec<CMat> = (0..=n).map(|k| res.solution.node_value(k)).collect();
        let als_curve = ErrorCurve::between(&als_states, &exact);
        let svd = best_rank_error(std::slice::from_ref(&exact_final), r)?.sup;
        let mut row = vec![r as f64, als_curve.per_node[n], svd];
        row.extend(df.iter().map(|d| d.0));
        row.push(als_curve.sup);
        by_rank.push(row);
        let mut trow = vec![r as f64, als_s];
        trow.extend(df.iter().map(|d| d.1));
        timing.push(trow);
        let dfs: Vec<String> = df.iter().map(|d| format!("{:.4e}", d.0)).collect();
        art.summary.push(format!(
            "rank {r}: als {:.4e}  svd {:.4e}  df [{}]",
            als_curve.per_node[n],
            svd,
            dfs.join(", ")
        ));
    }
    art.tables.extend([rk4_table, by_rank, timing]);
    art.meta("als_options", format!("{opts:?}"));
    art.meta("phases", phases.to_json());
    Ok(art)
}

/// Outcome of the greedy experiments, kept for programmatic checks.
#[derive(Debug, Clone)]
pub struct GreedyRun {
    pub problem: GreedyProblem,
    pub state: GreedyState,
    /// `(terms, state)` at each reported term count.
    pub snapshots: Vec<(usize, GreedyState)>,
}

/// Runs the greedy loop one term at a time, recording cumulative seconds.
pub fn greedy_terms(
    problem: &GreedyProblem,
    opts: &GreedyOptions,
    report: &[usize],
    ctx: &RunContext,
) -> Result<(GreedyRun, Vec<f64>), CliError> {
    let mut state = GreedyState::new(problem)?;
    let mut snapshots = Vec::new();
    let mut seconds = Vec::new();
    let start = Instant::now();
    for m in 1..=opts.max_terms {
        continue_greedy(problem, &mut state, &GreedyOptions { max_terms: m, ..*opts })?;
        if state.terms.len() < m {
            ctx.note(format!("greedy stopped after {} terms", state.terms.len()));
            break;
        }
        seconds.push(start.elapsed().as_secs_f64());
        ctx.note(format!("term {m}: F = {:.6e}", state.value()));
        if report.contains(&m) {
            snapshots.push((m, state.clone()));
        }
    }
    for &m in report {
        if !snapshots.iter().any(|s| s.0 == m) {
            snapshots.push((m, state.clone()));
        }
    }
    snapshots.sort_by_key(|s| s.0);
    Ok((GreedyRun { problem: problem.clone(), state, snapshots }, seconds))
}

fn greedy_run(c: &GreedyConfig, ctx: &RunContext) -> Result<Artifacts, CliError> {
    let mut art = Artifacts::default();
    let mut phases = Phases::default();
    let d = c.dim;
    let (t_final, n) = (c.horizon.t_final, c.horizon.intervals);
    let grid = TimeGrid::new(t_final, n)?;
    let initial = packet_sum(d, std::slice::from_ref(&c.initial))?;
    let potential = packet_sum(d, &c.potential)?;
    let problem = GreedyProblem::new(grid, potential.clone(), initial.clone())?;
    let threads = if c.greedy.threads == 0 { ctx.threads } else { c.greedy.threads };
    let opts = GreedyOptions { seed: c.seed, threads, ..c.greedy };

    ctx.note("greedy terms");
    let (run, seconds) = phases.time("greedy", || greedy_terms(&problem, &opts, &c.report_terms, ctx))?;
    let state = &run.state;

    let mut residual = Table::new(
        "curves/residual_vs_terms.csv",
        "terms: number of greedy terms\nresidual: space-time least-squares functional F after that many terms (terms = 0 is ||u0||^2)",
        &["terms", "residual"],
    );
    for (m, f) in state.history.iter().enumerate() {
        residual.push(vec![m as f64, *f]);
    }
    let mut stats = Table::new(
        "curves/term_stats.csv",
        "term: greedy term index\niterations: preconditioned descent iterations\nstop: 0 converged, 1 stalled, 2 iteration cap, 3 line search failed\ninitial_value, value: F at the start and end of the term optimization\nepsilon_limit: stopping threshold on the Newton-type decrement\nretries: discarded initializations",
        &["term", "iterations", "stop", "initial_value", "value", "epsilon_limit", "retries"],
    );
    for (i, r) in state.records.iter().enumerate() {
        let stop = match r.stop {
            tdse_core::greedy_solver::StopReason::Converged => 0.0,
            tdse_core::greedy_solver::StopReason::Stalled => 1.0,
            tdse_core::greedy_solver::StopReason::MaxIterations => 2.0,
            tdse_core::greedy_solver::StopReason::LineSearchFailed => 3.0,
        };
        let eps_lim = opts.optimize.epsilon_rel * (1.0 + r.initial_value.abs());
        stats.push(vec![
            (i + 1) as f64,
            r.iterations as f64,
            stop,
            r.initial_value,
            r.value,
            eps_lim,
            r.retries as f64,
        ]);
    }
    let mut greedy_timing = Table::new(
        "timings/greedy.csv",
        "terms: number of greedy terms\nseconds: cumulative wall-clock seconds",
        &["terms", "seconds"],
    );
    for (i, s) in seconds.iter().enumerate() {
        greedy_timing.push(vec![(i + 1) as f64, *s]);
    }

    // physical solution ψ(t_k) at each reported term count
    let exact_norm = initial.norm_sqr()?.sqrt();
    let mut norm_table = Table::new(
        "curves/norm_vs_time.csv",
        &format!("t: time\nnorm: L2 norm of the greedy solution with {} terms\nexact_norm: conserved norm of the exact solution", state.terms.len()),
        &["t", "norm", "exact_norm"],
    );
    for k in 0..=n {
        norm_table.push(vec![grid.node(k), state.node_value(k).norm_sqr()?.sqrt(), exact_norm]);
    }

    // spectral arms, advanced in lockstep; errors are taken at every node
    let s = &c.spectral;
    let steps_per_interval = s.steps / n;
    let h = t_final / s.steps as f64;
    let ref_grid = SineGrid::new(d, s.half_width, s.reference_modes)?;
    let mut arms: Vec<(usize, SineGrid, StrangPropagator, Vec<Complex64>, f64)> = Vec::new();
    for &modes in std::iter::once(&s.reference_modes).chain(&s.comparison_modes) {
        let g = SineGrid::new(d, s.half_width, modes)?;
        let t = Instant::now();
        let prop = StrangPropagator::new(&g, &potential, h)?;
        let p0 = project(&initial, &g)?;
        if p0.tail_warning {
            art.summary.push(format!(
                "warning: {modes}-mode projection of the initial data has tail mass {:.2e}",
                p0.tail_mass
            ));
        }
        let setup = t.elapsed().as_secs_f64();
        arms.push((modes, g, prop, p0.coeffs, setup));
    }
    let mut cols = vec!["t".to_string()];
    cols.extend(run.snapshots.iter().map(|(m, _)| format!("greedy_{m}_terms")));
    cols.extend(s.comparison_modes.iter().map(|m| format!("spectral_{m}")));
    cols.push("reference_norm".into());
    let cols_ref: Vec<&str> = cols.iter().map(|x| x.as_str()).collect();
    let mut err_table = Table::new(
        "curves/error_vs_time.csv",
        &format!(
            "t: time\ngreedy_M_terms: L2 error of the greedy solution with M terms against the {}-mode spectral reference\nspectral_n: L2 error of the n-mode spectral solution against the reference\nreference_norm: L2 norm of the reference",
            s.reference_modes
        ),
        &cols_ref,
    );
    ctx.note("spectral reference");
    phases.time("spectral", || -> Result<(), CliError> {
        for k in 0..=n {
            if k > 0 {
                for arm in arms.iter_mut() {
                    let t = Instant::now();
                    for _ in 0..steps_per_interval {
                        arm.2.strang_step(&mut arm.3);
                    }
                    arm.4 += t.elapsed().as_secs_f64();
                }
            }
            let reference = &arms[0].3;
            let mut row = vec![grid.node(k)];
            for (_, snap) in &run.snapshots {
                let psi: GaussianSum = snap.physical_node_value(&problem, k)?;
                row.push(l2_error(reference, &psi, &ref_grid)?);
            }
            for arm in &arms[1..] {
                let embedded = embed_coefficients(&arm.3, d, arm.0, s.reference_modes);
                let diff: Vec<Complex64> = embedded.iter().zip(reference).map(|(a, b)| a - b).collect();
                let extra = if arm.0 > s.reference_modes { f64::NAN } else { 0.0 };
                row.push(coefficient_norm(&diff) + extra);
            }
            row.push(coefficient_norm(reference));
            err_table.push(row);
        }
        Ok(())
    })?;
    let mut spectral_timing = Table::new(
        "timings/spectral.csv",
        "modes: sine modes per direction\nseconds: wall-clock seconds for setup and all Strang steps",
        &["modes", "seconds"],
    );
    let mut by_modes: Vec<(usize, f64)> = arms.iter().map(|a| (a.0, a.4)).collect();
    by_modes.sort_by_key(|a| a.0);
    for (m, sec) in by_modes {
        spectral_timing.push(vec![m as f64, sec]);
    }
    let header = SnapshotHeader { dim: d, modes: s.reference_modes, half_width: s.half_width, step: h, time: t_final };
    art.files.push((format!("snapshots/reference_t{t_final}.bin"), encode_snapshot(&header, &arms[0].3)));

    let checkpoint = GreedyCheckpoint::capture(&problem, state);
    art.files.push((
        "checkpoints/greedy.json".into(),
        serde_json::to_vec_pretty(&checkpoint).expect("checkpoint serializes"),
    ));

    for (i, (m, _)) in run.snapshots.iter().enumerate() {
        let col = err_table.column(&cols[i + 1]).expect("column exists");
        let sup = col.iter().copied().fold(0.0, f64::max);
        art.summary.push(format!("greedy {m} terms: sup-t L2 error {sup:.4e}"));
    }
    art.summary.push(format!("residual after {} terms: {:.4e}", state.terms.len(), state.value()));
    art.meta("parameter_layout", layout_description(d));
    art.meta("greedy_options", opts);
    art.meta("stalled", state.stalled);
    art.meta("phases", phases.to_json());
    art.tables.extend([residual, stats, norm_table, err_table, greedy_timing, spectral_timing]);
    Ok(art)
}
