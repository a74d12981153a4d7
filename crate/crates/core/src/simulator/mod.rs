//! Exactly solvable categorical policies, rollout sampling, the group
//! estimators, and Monte-Carlo checks against their analytic moments.

mod montecarlo;
mod policy;
mod rollout;
mod variance;

pub use montecarlo::{
    conditional_moments, empirical_covariance, mean_score, run_campaign, sample_success_counts,
    simulate, ConditionalMoments, EstimatorMoments, Moments, SimulationRow, VarianceDecomposition,
    MEAN_Z_LIMIT, TRACE_REL_TOL,
};
pub use policy::{oracle, PolicyOracle, SyntheticPolicy, MAX_STATES};
pub use rollout::{
    advantage_vector, estimate_gradient, sample_group, sample_group_at, trial_rng,
    AdvantageVector, EstimatorMode, RolloutGroup,
};
pub use variance::{analytic_variance_terms, analytic_variance_terms_with, VarianceTerms};
