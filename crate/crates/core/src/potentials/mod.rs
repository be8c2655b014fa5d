//! Test potentials and the quadrature oracles that compute their phase-space
//! and level-set invariants directly.

mod analytic;
mod level_set;
mod profile;
mod pushforward;
mod quadrature;

pub use analytic::{AnalyticPotential, Family, GradientMethod};
pub use level_set::{
    is_regular_value, level_surface_invariants_oracle, regular_values, LevelSetParams, LevelSurfaceInvariants,
    REGULARITY_RATIO,
};
pub use profile::{ProfileShape, RadialProfile};
pub use pushforward::{flag_atoms, pushforward_density, PushforwardDensity, ATOM_RATIO};
pub use quadrature::{
    phase_space_integral_in, phase_space_integral_oracle, sublevel_centroid, sublevel_volume_in,
    sublevel_volume_oracle, OracleValue, PhaseSpaceIntegral, PhaseWeight, QuadBox, QuadratureParams,
};

use statrs::function::gamma::gamma;

/// Volume of the unit ball in `R^n`, `pi^{n/2} / Gamma(n/2 + 1)`.
pub fn unit_ball_volume(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    std::f64::consts::PI.powf(half) / gamma(half + 1.0)
}

/// Area of the unit sphere `S^{n-1}`.
pub fn sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// Surface area of the ball whose volume is `v`.
pub fn isoperimetric_area(n: usize, v: f64) -> f64 {
    let nf = n as f64;
    nf * unit_ball_volume(n).powf(1.0 / nf) * v.max(0.0).powf((nf - 1.0) / nf)
}
