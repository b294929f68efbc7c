//! Dense reference trajectories and best-rank error curves for the matrix
//! experiments.

use crate::block_linalg::{singular_values, truncated_svd};
use crate::error::{Error, Result};
use crate::matrix_model::{CMat, MatrixExperiment, TwoSidedHamiltonian};
use num_complex::Complex64;

/// Outcome of comparing a run against the same run with half the steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfConvergence {
    pub steps: usize,
    pub coarse_steps: usize,
    /// Sup over comparison nodes of the Frobenius distance between the runs.
    pub sup_difference: f64,
    pub tolerance: f64,
    pub converged: bool,
}

/// Dense states at the comparison nodes `t_k = kT/N`.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<CMat>,
    pub certificate: SelfConvergence,
}

impl ReferenceTrajectory {
    pub fn require_converged(&self) -> Result<&Self> {
        if self.certificate.converged {
            Ok(self)
        } else {
            Err(Error::SelfConvergence { change: self.certificate.sup_difference })
        }
    }
}

fn rhs(h: &TwoSidedHamiltonian, t: f64, u: &CMat) -> CMat {
    // U' = -i 𝕳(t, U)
    h.apply_unchecked(t, u) * Complex64::new(0.0, -1.0)
}

/// Classical RK4 step of `i U' = 𝕳(t, U)`.
pub fn rk4_step(h: &TwoSidedHamiltonian, t: f64, dt: f64, u: &CMat) -> CMat {
    let half = Complex64::new(0.5 * dt, 0.0);
    let k1 = rhs(h, t, u);
    let k2 = rhs(h, t + 0.5 * dt, &(u + &k1 * half));
    let k3 = rhs(h, t + 0.5 * dt, &(u + &k2 * half));
    let k4 = rhs(h, t + dt, &(u + &k3 * Complex64::new(dt, 0.0)));
    u + (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(dt / 6.0, 0.0)
}

/// RK4 with `steps` uniform steps on `[0, T]`, sampled at the `N + 1`
/// comparison nodes; `steps` must be a multiple of `N`.
pub fn rk4_trajectory(exp: &MatrixExperiment, steps: usize) -> Result<Vec<CMat>> {
    let n = exp.intervals;
    if steps == 0 || !steps.is_multiple_of(n) {
        return Err(Error::InvalidParameter(format!("steps ({steps}) must be a positive multiple of {n}")));
    }
    let per = steps / n;
    let dt = exp.t_final / steps as f64;
    let mut u = exp.u0();
    let mut out = Vec::with_capacity(n + 1);
    out.push(u.clone());
    for s in 0..steps {
        u = rk4_step(&exp.hamiltonian, s as f64 * dt, dt, &u);
        if (s + 1) % per == 0 {
            out.push(u.clone());
        }
    }
    Ok(out)
}

/// Sup over nodes of `‖a_k − b_k‖_F`.
pub fn sup_node_error(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Reference trajectory with a step-halving self-convergence certificate at
/// tolerance `1e-6`. `steps` must be an even multiple of `N`.
pub fn rk4_reference(exp: &MatrixExperiment, steps: usize) -> Result<ReferenceTrajectory> {
    let n = exp.intervals;
    if !steps.is_multiple_of(2 * n) {
        return Err(Error::InvalidParameter(format!("steps ({steps}) must be a positive multiple of {}", 2 * n)));
    }
    let fine = rk4_trajectory(exp, steps)?;
    let coarse = rk4_trajectory(exp, steps / 2)?;
    let diff = sup_node_error(&fine, &coarse);
    let tolerance = 1e-6;
    Ok(ReferenceTrajectory {
        times: (0..=n).map(|k| k as f64 * exp.t_final / n as f64).collect(),
        states: fine,
        certificate: SelfConvergence {
            steps,
            coarse_steps: steps / 2,
            sup_difference: diff,
            tolerance,
            converged: diff < tolerance,
        },
    })
}

/// Default reference step count: ten steps per comparison interval.
pub fn default_reference_steps(exp: &MatrixExperiment) -> usize {
    10 * exp.intervals
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub per_node: Vec<f64>,
    pub sup: f64,
}

impl ErrorCurve {
    pub fn from_nodes(per_node: Vec<f64>) -> Self {
        let sup = per_node.iter().copied().fold(0.0, f64::max);
        Self { per_node, sup }
    }

    /// Per-node distance between two trajectories.
    pub fn between(a: &[CMat], b: &[CMat]) -> Self {
        Self::from_nodes(a.iter().zip(b).map(|(x, y)| (x - y).norm()).collect())
    }
}

/// Frobenius distance of each state to its rank-`r` truncated SVD.
pub fn best_rank_error(states: &[CMat], r: usize) -> Result<ErrorCurve> {
    let per_node = states
        .iter()
        .map(|u| {
            let max = u.nrows().min(u.ncols());
            if r == 0 || r > max {
                return Err(Error::RankOutOfRange { rank: r, max });
            }
            let s = singular_values(u);
            Ok(s[r.min(s.len())..].iter().map(|x| x * x).sum::<f64>().sqrt())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorCurve::from_nodes(per_node))
}

/// Rank-`r` truncated SVD of each state.
pub fn best_rank_trajectory(states: &[CMat], r: usize) -> Result<Vec<CMat>> {
    states.iter().map(|u| truncated_svd(u, r).map(|t| t.reconstruct())).collect()
}

/// Leading `count` singular values per state, non-increasing.
pub fn singular_value_curves(states: &[CMat], count: usize) -> Vec<Vec<f64>> {
    states
        .iter()
        .map(|u| {
            let mut s = singular_values(u);
            s.truncate(count);
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_model::{pathological_experiment, pathological_solution, random_experiment};

    #[test]
    fn pathological_matches_closed_form() {
        let exp = pathological_experiment(20, 0.0, 0).unwrap();
        let reference = rk4_reference(&exp, 2000).unwrap();
        assert!(reference.certificate.converged);
        let u0 = exp.u0();
        let exact: Vec<CMat> = reference.times.iter().map(|&t| pathological_solution(&u0, t)).collect();
        assert!(sup_node_error(&reference.states, &exact) < 1e-8);
    }

    #[test]
    fn rk4_fourth_order() {
        let exp = pathological_experiment(20, 0.0, 0).unwrap().with_horizon(2.0, 10);
        let u0 = exp.u0();
        let err = |steps: usize| {
            let traj = rk4_trajectory(&exp, steps).unwrap();
            (traj.last().unwrap() - pathological_solution(&u0, 2.0)).norm()
        };
        let order = (err(20) / err(40)).log2();
        assert!(order >= 3.7, "order {order}");
    }

    #[test]
    fn zero_hamiltonian_is_constant() {
        let mut exp = random_experiment(1).with_horizon(1.0, 4);
        exp.hamiltonian = TwoSidedHamiltonian::zero(40, 40);
        let traj = rk4_trajectory(&exp, 8).unwrap();
        assert!(traj.iter().all(|u| u == &exp.u0()));
    }

    #[test]
    fn random_flow_conserves_norm() {
        let exp = random_experiment(4);
        let reference = rk4_reference(&exp, default_reference_steps(&exp)).unwrap();
        assert!(reference.certificate.converged, "{:?}", reference.certificate);
        let n0 = exp.u0().norm();
        for u in &reference.states {
            assert!((u.norm() - n0).abs() < 1e-8 * n0.max(1.0));
        }
    }

    #[test]
    fn step_count_validation() {
        let exp = pathological_experiment(4, 0.0, 0).unwrap();
        assert!(rk4_trajectory(&exp, 0).is_err());
        assert!(rk4_trajectory(&exp, 201).is_err());
        assert!(rk4_reference(&exp, 200).is_err());
    }

    #[test]
    fn best_rank_error_properties() {
        let exp = pathological_experiment(20, 0.0, 0).unwrap();
        let states: Vec<CMat> = (0..5).map(|k| pathological_solution(&exp.u0(), 0.4 * k as f64)).collect();
        assert_eq!(best_rank_error(&states, 20).unwrap().sup, 0.0);
        for r in 1..20 {
            let at0 = best_rank_error(&states[..1], r).unwrap().per_node[0];
            let tail: f64 = (r..20).map(|k| (-2.0 * k as f64).exp()).sum::<f64>().sqrt();
            assert!((at0 - tail).abs() < 1e-12);
            let next = best_rank_error(&states, r + 1).unwrap();
            let cur = best_rank_error(&states, r).unwrap();
            for (a, b) in next.per_node.iter().zip(&cur.per_node) {
                assert!(a <= b);
            }
        }
        assert!(best_rank_error(&states, 0).is_err());
        let truncated = best_rank_trajectory(&states, 3).unwrap();
        let curve = ErrorCurve::between(&states, &truncated);
        let best = best_rank_error(&states, 3).unwrap();
        for (a, b) in curve.per_node.iter().zip(&best.per_node) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_value_curve_examples() {
        let exp = random_experiment(0);
        let sv = singular_value_curves(&[exp.u0()], 5);
        assert!(sv[0][0] > 1.0 && sv[0][1..].iter().all(|&s| s < 1e-12));
        let p = pathological_experiment(20, 0.0, 0).unwrap();
        let sv = singular_value_curves(&[p.u0()], 20);
        for (k, s) in sv[0].iter().enumerate() {
            assert!((s - (-(k as f64)).exp()).abs() < 1e-14);
            if k > 0 {
                assert!(*s <= sv[0][k - 1]);
            }
        }
    }
}
