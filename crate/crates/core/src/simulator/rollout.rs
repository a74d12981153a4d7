use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::policy::SyntheticPolicy;
use crate::coefficients::CoefficientTable;
use crate::error::{Error, Result};

/// Which group estimator to form from a rollout group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorMode {
    /// (β_{K−1}/N) Σ r_i S_i
    Direct,
    /// (1/N) Σ (β_{K−1} r_i − 1) S_i
    ControlVariate,
}

impl EstimatorMode {
    pub const ALL: [EstimatorMode; 2] = [EstimatorMode::Direct, EstimatorMode::ControlVariate];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorMode::Direct => "direct",
            EstimatorMode::ControlVariate => "control_variate",
        }
    }
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(EstimatorMode::Direct),
            "control_variate" | "cv" => Ok(EstimatorMode::ControlVariate),
            other => Err(Error::InvalidConfig(format!("unknown estimator mode '{other}'"))),
        }
    }
}

/// N rollouts of one prompt.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub states: Vec<usize>,
    pub rewards: Vec<bool>,
    pub k: usize,
    pub scores: Vec<DVector<f64>>,
}

impl RolloutGroup {
    pub fn n(&self) -> usize {
        self.rewards.len()
    }
}

/// Generator for trial `trial` of the run keyed by `seed`. Every trial owns a
/// separate ChaCha stream, so trials can be replayed individually and in any order.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Draws latent states into `out`, consuming the trial generator.
pub(crate) fn draw_states(policy: &SyntheticPolicy, rng: &mut ChaCha8Rng, out: &mut [usize]) {
    let sampler = policy.sampler();
    for slot in out.iter_mut() {
        *slot = sampler.sample(rng);
    }
}

/// Samples N i.i.d. rollouts; identical to trial 0 of a campaign with this seed.
pub fn sample_group(policy: &SyntheticPolicy, n: usize, seed: u64) -> RolloutGroup {
    sample_group_at(policy, n, seed, 0)
}

/// Samples the group used by trial `trial` of a campaign keyed by `seed`.
pub fn sample_group_at(policy: &SyntheticPolicy, n: usize, seed: u64, trial: u64) -> RolloutGroup {
    assert!(n >= 1, "a group needs at least one rollout");
    let mut rng = trial_rng(seed, trial);
    let mut states = vec![0; n];
    draw_states(policy, &mut rng, &mut states);
    let rewards: Vec<bool> = states.iter().map(|z| policy.is_correct(*z)).collect();
    let k = rewards.iter().filter(|r| **r).count();
    let scores = states.iter().map(|z| policy.score(*z)).collect();
    RolloutGroup {
        states,
        rewards,
        k,
        scores,
    }
}

fn check_sizes(group: &RolloutGroup, table: &CoefficientTable) -> Result<()> {
    if group.n() != table.n() {
        return Err(Error::InvalidConfig(format!(
            "group has {} rollouts but the table was built for N = {}",
            group.n(),
            table.n()
        )));
    }
    Ok(())
}

/// Sequence-level advantages A_i of a group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    pub mode: EstimatorMode,
}

/// Per-rollout advantages. An all-failure group gets 0 in direct mode and
/// −1 in control-variate mode.
pub fn advantage_vector(
    group: &RolloutGroup,
    table: &CoefficientTable,
    mode: EstimatorMode,
) -> Result<AdvantageVector> {
    check_sizes(group, table)?;
    let beta = if group.k == 0 { 0.0 } else { table.beta(group.k) };
    let offset = match mode {
        EstimatorMode::Direct => 0.0,
        EstimatorMode::ControlVariate => 1.0,
    };
    let values = group
        .rewards
        .iter()
        .map(|r| if *r { beta - offset } else { -offset })
        .collect();
    Ok(AdvantageVector { values, mode })
}

/// ĝ = (1/N) Σ A_i S_i with the advantages of [`advantage_vector`].
pub fn estimate_gradient(
    group: &RolloutGroup,
    table: &CoefficientTable,
    mode: EstimatorMode,
) -> Result<DVector<f64>> {
    let adv = advantage_vector(group, table, mode)?;
    let dim = group.scores.first().map_or(0, |s| s.len());
    let mut g = DVector::zeros(dim);
    for (a, s) in adv.values.iter().zip(&group.scores) {
        if *a != 0.0 {
            g.axpy(*a, s, 1.0);
        }
    }
    Ok(g / group.n() as f64)
}

/// Same estimator evaluated from per-state counts, using
/// Σ r_i S_i = c_correct − K π and Σ S_i = c − N π for softmax scores.
pub(crate) fn estimate_from_counts(
    policy: &SyntheticPolicy,
    counts: &[u32],
    k: usize,
    table: &CoefficientTable,
    mode: EstimatorMode,
    out: &mut [f64],
) {
    let n = table.n() as f64;
    let beta = if k == 0 { 0.0 } else { table.beta(k) };
    let pi = policy.probs();
    for z in 0..out.len() {
        let c = counts[z] as f64;
        let succ = if policy.is_correct(z) { c } else { 0.0 } - k as f64 * pi[z];
        out[z] = match mode {
            EstimatorMode::Direct => beta * succ / n,
            EstimatorMode::ControlVariate => (beta * succ - (c - n * pi[z])) / n,
        };
    }
}
