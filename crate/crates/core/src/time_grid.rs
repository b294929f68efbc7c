//! Uniform P1 time discretization and exact hat-function integrals.

use crate::error::{Error, Result};

/// Uniform grid of `n` intervals on `[0, t_final]` carrying the hat basis
/// `ζ_0..ζ_n`.
///
/// The three integral tables (mass, stiffness, and the mixed derivative
/// table) are banded with bandwidth one and are evaluated in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, intervals: usize) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidParameter(format!("final time must be positive, got {t_final}")));
        }
        if intervals < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 intervals, got {intervals}")));
        }
        Ok(Self { t_final, intervals })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Number of intervals `N`; there are `N + 1` nodes.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn n_nodes(&self) -> usize {
        self.intervals + 1
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.intervals as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.t_final / self.intervals as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|k| self.node(k)).collect()
    }

    fn check(&self, k: usize) -> Result<()> {
        if k > self.intervals {
            Err(Error::IndexOutOfRange { index: k, len: self.n_nodes() })
        } else {
            Ok(())
        }
    }

    fn is_boundary(&self, k: usize) -> bool {
        k == 0 || k == self.intervals
    }

    /// Value of the hat function `ζ_k` at time `t`.
    pub fn hat(&self, k: usize, t: f64) -> f64 {
        let dt = self.dt();
        let s = (t - self.node(k)).abs() / dt;
        if s >= 1.0 || t < 0.0 || t > self.t_final {
            0.0
        } else {
            1.0 - s
        }
    }

    /// Derivative of `ζ_k` at `t`, taken from the right except at `t = T`.
    pub fn hat_derivative(&self, k: usize, t: f64) -> f64 {
        let dt = self.dt();
        // locate interval [t_j, t_{j+1}] containing t
        let j = ((t / dt).floor() as usize).min(self.intervals - 1);
        if j == k {
            -1.0 / dt
        } else if j + 1 == k {
            1.0 / dt
        } else {
            0.0
        }
    }

    /// `∫ ζ_k ζ_l dt`.
    pub fn mass(&self, k: usize, l: usize) -> Result<f64> {
        self.check(k)?;
        self.check(l)?;
        Ok(self.mass_unchecked(k, l))
    }

    /// `∫ ζ'_k ζ'_l dt`.
    pub fn stiffness(&self, k: usize, l: usize) -> Result<f64> {
        self.check(k)?;
        self.check(l)?;
        Ok(self.stiffness_unchecked(k, l))
    }

    /// `∫ ζ'_k ζ_l dt`.
    pub fn cross(&self, k: usize, l: usize) -> Result<f64> {
        self.check(k)?;
        self.check(l)?;
        Ok(self.cross_unchecked(k, l))
    }

    pub(crate) fn mass_unchecked(&self, k: usize, l: usize) -> f64 {
        let dt = self.dt();
        match k.abs_diff(l) {
            0 if self.is_boundary(k) => dt / 3.0,
            0 => 2.0 * dt / 3.0,
            1 => dt / 6.0,
            _ => 0.0,
        }
    }

    pub(crate) fn stiffness_unchecked(&self, k: usize, l: usize) -> f64 {
        let dt = self.dt();
        match k.abs_diff(l) {
            0 if self.is_boundary(k) => 1.0 / dt,
            0 => 2.0 / dt,
            1 => -1.0 / dt,
            _ => 0.0,
        }
    }

    pub(crate) fn cross_unchecked(&self, k: usize, l: usize) -> f64 {
        if k == l {
            if k == 0 {
                -0.5
            } else if k == self.intervals {
                0.5
            } else {
                0.0
            }
        } else if l == k + 1 {
            -0.5
        } else if k == l + 1 {
            0.5
        } else {
            0.0
        }
    }

    /// Neighbouring node indices `l` with `|k - l| <= 1`.
    pub fn neighbours(&self, k: usize) -> impl Iterator<Item = usize> {
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(self.intervals);
        lo..=hi
    }

    /// Index of the interval containing `t` and the local coordinate in `[0, 1]`.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let s = (t / self.dt()).clamp(0.0, self.intervals as f64);
        let j = (s.floor() as usize).min(self.intervals - 1);
        (j, s - j as f64)
    }
}
