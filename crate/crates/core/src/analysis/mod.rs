//! Benchmark-aligned analyses of a selected pool: how rare each benchmark's domain is in the
//! training data, which ability each skill cluster exercises, and how hard each benchmark is.

mod ability;
mod difficulty;
mod gaussian;
mod projection;
mod rarity;

pub use ability::{
    align_labels, assign_ability, kept_neighbors, mode_label, read_ability_labels,
    AbilityAssignment, AbilityLabel, ClusterAbility, DEFAULT_ALPHA, DEFAULT_TOP_K,
};
pub use difficulty::{
    compute_difficulty, difficulty, read_scores, BenchmarkScore, DifficultyScore,
};
pub use gaussian::{cholesky, fit_benchmark_gaussians, GaussianModel, DEFAULT_LAMBDA};
pub use projection::{PcaProjection, MAX_PROJECTION_DIMS};
pub use rarity::{
    assign_rarity, rarity_assignments, rarity_from_assignments, Rarity, RarityMode, RarityReport,
};
