//! Closed-form calculus of polynomial complex-Gaussian wavepackets.

mod params;
mod poly;
mod scalar;
mod small;
mod term;

pub use params::{derivative_polys, dual_lift, gamma, param_count, params_of, upper_pairs, Layout};
pub use poly::{Exponent, Poly};
pub use scalar::{lift_c, Cx, Dual, Real, C64};
pub use small::{Mat3, Vec3, MAX_DIM};
pub use term::{
    free_evolve, inner, inner_sum, inner_term_sum, lift, lift_sum, multiply, poly_gram, primal, width_from_parts,
    GaussianSum, GaussianTerm, Moments,
};

#[cfg(test)]
mod tests;
