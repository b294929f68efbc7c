use tdse_core::gaussian::{width_from_parts, GaussianSum, GaussianTerm, C64};
use tdse_core::greedy_solver::{
    greedy, optimize_term, GreedyOptions, GreedyProblem, Objective, OptimizeOptions, Residual, SpaceTimeGaussian,
};
use tdse_core::time_grid::TimeGrid;

fn packet(amp: f64, q: f64, p: f64) -> GaussianTerm {
    GaussianTerm::wavepacket(1, C64::from_f64(amp, 0.0), &[q], &[p], width_from_parts(1, &[1.0], &[0.0])).unwrap()
}

/// Wavepacket from the right hitting a double barrier.
fn barrier_problem(t_final: f64, intervals: usize) -> GreedyProblem {
    GreedyProblem::new(
        TimeGrid::new(t_final, intervals).unwrap(),
        GaussianSum::from_terms(1, vec![packet(1.5, -2.0, 0.0), packet(1.0, 2.0, 0.0)]).unwrap(),
        GaussianSum::from_terms(1, vec![packet(1.0, 6.0, -1.0)]).unwrap(),
    )
    .unwrap()
}

fn first_term_init(problem: &GreedyProblem) -> SpaceTimeGaussian {
    SpaceTimeGaussian::constant(*problem.grid(), &problem.initial().terms()[0]).unwrap()
}

#[test]
fn first_term_on_the_barrier_problem_decreases_by_a_tenth() {
    let problem = barrier_problem(5.0, 100);
    let residual = Residual::new(&problem).unwrap();
    let obj = Objective::new(&problem, &residual);
    let out = optimize_term(&obj, first_term_init(&problem), &OptimizeOptions::default()).unwrap();
    assert!(out.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!(out.value <= 0.9 * out.initial_value, "{} vs {}", out.value, out.initial_value);
}

#[test]
fn plain_gradient_descent_is_more_than_ten_times_slower() {
    let problem = barrier_problem(5.0, 20);
    let residual = Residual::new(&problem).unwrap();
    let obj = Objective::new(&problem, &residual);
    let natural = optimize_term(&obj, first_term_init(&problem), &OptimizeOptions::default()).unwrap();
    let target = natural.value + 0.01 * (natural.initial_value - natural.value);
    let k_natural = natural.history.iter().position(|&f| f <= target).unwrap();
    assert!(k_natural >= 1);
    let plain_opts = OptimizeOptions {
        identity_metric: true,
        max_iterations: 10 * k_natural,
        epsilon_rel: 0.0,
        min_relative_decrease: 0.0,
        ..OptimizeOptions::default()
    };
    let plain = optimize_term(&obj, first_term_init(&problem), &plain_opts).unwrap();
    let best = plain.history.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(best > target, "plain descent reached {best} within {} iterations (target {target})", 10 * k_natural);
}

#[test]
fn gradient_block_ignores_nodes_two_steps_away() {
    let problem = barrier_problem(2.0, 8);
    let mut residual = Residual::new(&problem).unwrap();
    let first = first_term_init(&problem);
    let f = Objective::new(&problem, &residual).value(&first).unwrap();
    residual.add_term(&problem, &first, f).unwrap();
    let obj = Objective::new(&problem, &residual).with_threads(1);
    let m = problem.params_per_node();
    let mut params: Vec<f64> =
        first.params().iter().enumerate().map(|(i, v)| v + 0.01 * ((i * 7919) % 13) as f64 / 13.0).collect();
    let x = SpaceTimeGaussian::new(*problem.grid(), 1, params.clone()).unwrap();
    let g = obj.gradient(&x).unwrap();
    let k = 3;
    for far in [k - 2, k + 2, k + 3] {
        for i in 0..m {
            params[far * m + i] += 0.05;
        }
    }
    let y = SpaceTimeGaussian::new(*problem.grid(), 1, params).unwrap();
    let h = obj.gradient(&y).unwrap();
    assert_eq!(&g[k * m..(k + 1) * m], &h[k * m..(k + 1) * m]);
    assert_ne!(&g[(k + 2) * m..(k + 3) * m], &h[(k + 2) * m..(k + 3) * m]);
}

#[test]
fn gradient_vanishes_at_an_exact_solution() {
    let zero = GaussianSum::from_terms(1, vec![packet(0.0, 0.0, 0.0)]).unwrap();
    let u0 = packet(1.0, 1.0, 0.5);
    let problem = GreedyProblem::new(
        TimeGrid::new(1.0, 10).unwrap(),
        zero,
        GaussianSum::from_terms(1, vec![u0.clone()]).unwrap(),
    )
    .unwrap();
    let residual = Residual::new(&problem).unwrap();
    let obj = Objective::new(&problem, &residual);
    let x = SpaceTimeGaussian::constant(*problem.grid(), &u0).unwrap();
    let f = obj.value(&x).unwrap();
    let g = obj.gradient(&x).unwrap();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm <= 1e-6 * (1.0 + f.abs()), "{norm}");
}

#[test]
fn one_term_represents_free_motion_of_a_wavepacket() {
    let zero = GaussianSum::from_terms(1, vec![packet(0.0, 0.0, 0.0)]).unwrap();
    let problem = GreedyProblem::new(
        TimeGrid::new(2.0, 10).unwrap(),
        zero,
        GaussianSum::from_terms(1, vec![packet(1.0, -1.0, 2.0)]).unwrap(),
    )
    .unwrap();
    let state = greedy(&problem, &GreedyOptions { max_terms: 1, ..GreedyOptions::default() }).unwrap();
    assert!(state.value() < 1e-10, "{}", state.value());
}

#[test]
fn residual_history_is_non_increasing_over_several_terms() {
    let problem = barrier_problem(2.0, 20);
    let state = greedy(&problem, &GreedyOptions { max_terms: 6, ..GreedyOptions::default() }).unwrap();
    assert!(state.history.windows(2).all(|w| w[1] <= w[0]), "{:?}", state.history);
    for r in &state.records {
        assert!(r.value <= r.initial_value);
    }
}
