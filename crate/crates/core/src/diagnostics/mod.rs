//! Monte Carlo and geometric checks, all reported in forward time `u`.

mod cover;
mod energy;
mod trace;

pub use cover::{cover_sweep, farthest_point_traversal, greedy_cover, CoverPoint, Traversal};
pub use energy::{energy_distance, energy_permutation_test, PermutationTest};
pub use trace::{
    check_trace_monotone, posvar_bound, localization_residual, mc_mean_trace, posvar_bound_ratio, trace_curve, Estimate,
    LocalizationReport, MonotoneReport, PosteriorBoundRatio, TraceCurve,
};
