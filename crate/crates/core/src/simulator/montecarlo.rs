use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::policy::{oracle, PolicyOracle, SyntheticPolicy};
use super::rollout::{draw_states, estimate_from_counts, trial_rng, EstimatorMode};
use super::variance::{analytic_variance_terms_with, VarianceTerms};
use crate::coefficients::{CoefficientTable, GammaConfig};
use crate::error::{Error, Result};
use crate::objective::weight_series;

/// Trials per work unit. Fixed so that the reduction tree, and therefore every
/// floating-point result, does not depend on the number of worker threads.
const CHUNK: u64 = 4096;

/// Streaming mean and scatter matrix (Welford, merged with Chan's rule).
#[derive(Debug, Clone)]
struct Accumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    delta: Vec<f64>,
}

impl Accumulator {
    fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim * dim],
            delta: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        let d = self.mean.len();
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for j in 0..d {
            self.delta[j] = x[j] - self.mean[j];
            self.mean[j] += self.delta[j] * inv;
        }
        for i in 0..d {
            let di = self.delta[i];
            if di == 0.0 {
                continue;
            }
            let row = &mut self.m2[i * d..(i + 1) * d];
            for j in 0..d {
                row[j] += di * (x[j] - self.mean[j]);
            }
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            self.count = other.count;
            self.mean.copy_from_slice(&other.mean);
            self.m2.copy_from_slice(&other.m2);
            return;
        }
        let d = self.mean.len();
        let (na, nb) = (self.count as f64, other.count as f64);
        let total = na + nb;
        for j in 0..d {
            self.delta[j] = other.mean[j] - self.mean[j];
        }
        let w = na * nb / total;
        for i in 0..d {
            for j in 0..d {
                self.m2[i * d + j] += other.m2[i * d + j] + w * self.delta[i] * self.delta[j];
            }
        }
        for j in 0..d {
            self.mean[j] += self.delta[j] * nb / total;
        }
        self.count += other.count;
    }

    fn finish(&self) -> Moments {
        let d = self.mean.len();
        let cov = if self.count >= 2 {
            DMatrix::from_row_slice(d, d, &self.m2) / (self.count - 1) as f64
        } else {
            DMatrix::from_element(d, d, f64::NAN)
        };
        Moments {
            trials: self.count,
            mean: DVector::from_column_slice(&self.mean),
            cov,
        }
    }
}

/// Sample mean and unbiased sample covariance of a vector estimator.
/// The covariance is NaN when fewer than two trials were run.
#[derive(Debug, Clone)]
pub struct Moments {
    pub trials: u64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Moments {
    pub fn trace(&self) -> f64 {
        self.cov.trace()
    }

    /// Componentwise standard error of the mean (infinite below two trials).
    pub fn std_err(&self) -> DVector<f64> {
        if self.trials < 2 {
            return DVector::from_element(self.mean.len(), f64::INFINITY);
        }
        let n = self.trials as f64;
        DVector::from_iterator(self.mean.len(), self.cov.diagonal().iter().map(|v| (v.max(0.0) / n).sqrt()))
    }

    /// Largest |mean_j − target_j| / se_j. Components with zero spread count
    /// as 0 when they hit the target up to round-off and as infinite otherwise.
    pub fn max_abs_z(&self, target: &DVector<f64>) -> f64 {
        let se = self.std_err();
        self.mean
            .iter()
            .zip(target.iter())
            .zip(se.iter())
            .map(|((m, t), s)| {
                let err = (m - t).abs();
                if *s > 0.0 {
                    err / s
                } else if err <= 1e-12 * (1.0 + t.abs()) {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

struct Scratch {
    states: Vec<usize>,
    counts: Vec<u32>,
    est: Vec<f64>,
    est_cv: Vec<f64>,
}

impl Scratch {
    fn new(n: usize, dim: usize) -> Self {
        Self {
            states: vec![0; n],
            counts: vec![0; dim],
            est: vec![0.0; dim],
            est_cv: vec![0.0; dim],
        }
    }

    /// Draws trial `trial` and returns K; `counts` holds the per-state tallies.
    fn draw(&mut self, policy: &SyntheticPolicy, seed: u64, trial: u64) -> usize {
        let mut rng = trial_rng(seed, trial);
        draw_states(policy, &mut rng, &mut self.states);
        self.counts.iter_mut().for_each(|c| *c = 0);
        let mut k = 0;
        for z in &self.states {
            self.counts[*z] += 1;
            k += policy.is_correct(*z) as usize;
        }
        k
    }
}

/// Runs trials `0..trials` in fixed chunks on the rayon pool and folds the
/// per-chunk states in chunk order.
fn run_chunked<S, I, F, M>(trials: u64, init: I, step: F, merge: M) -> S
where
    S: Send,
    I: Fn() -> S + Sync,
    F: Fn(&mut S, u64) + Sync,
    M: Fn(&mut S, S),
{
    let chunks = trials.div_ceil(CHUNK);
    let parts: Vec<S> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = init();
            for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                step(&mut state, t);
            }
            state
        })
        .collect();
    let mut total = init();
    for part in parts {
        merge(&mut total, part);
    }
    total
}

/// Moments of both estimators for one coefficient table, on shared rollouts.
#[derive(Debug, Clone)]
pub struct EstimatorMoments {
    pub gamma: f64,
    pub direct: Moments,
    pub control_variate: Moments,
    /// Moments of direct − control-variate on the same groups.
    pub difference: Moments,
}

impl EstimatorMoments {
    pub fn mode(&self, mode: EstimatorMode) -> &Moments {
        match mode {
            EstimatorMode::Direct => &self.direct,
            EstimatorMode::ControlVariate => &self.control_variate,
        }
    }
}

/// Evaluates every table on the same sampled groups (common random numbers).
/// All tables must share one N.
pub fn run_campaign(
    policy: &SyntheticPolicy,
    tables: &[CoefficientTable],
    trials: u64,
    seed: u64,
) -> Result<Vec<EstimatorMoments>> {
    let Some(first) = tables.first() else {
        return Ok(Vec::new());
    };
    let n = first.n();
    if tables.iter().any(|t| t.n() != n) {
        return Err(Error::InvalidConfig("campaign tables must share one N".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("a campaign needs at least one trial".into()));
    }
    let dim = policy.num_states();
    let init = || {
        let accs = vec![Accumulator::new(dim); 3 * tables.len()];
        (accs, Scratch::new(n, dim))
    };
    let step = |(accs, s): &mut (Vec<Accumulator>, Scratch), trial: u64| {
        let k = s.draw(policy, seed, trial);
        for (i, table) in tables.iter().enumerate() {
            estimate_from_counts(policy, &s.counts, k, table, EstimatorMode::Direct, &mut s.est);
            estimate_from_counts(policy, &s.counts, k, table, EstimatorMode::ControlVariate, &mut s.est_cv);
            accs[3 * i].push(&s.est);
            accs[3 * i + 1].push(&s.est_cv);
            for j in 0..dim {
                s.est[j] -= s.est_cv[j];
            }
            accs[3 * i + 2].push(&s.est);
        }
    };
    let merge = |(total, _): &mut (Vec<Accumulator>, Scratch), (part, _): (Vec<Accumulator>, Scratch)| {
        for (t, p) in total.iter_mut().zip(&part) {
            t.merge(p);
        }
    };
    let (accs, _) = run_chunked(trials, init, step, merge);
    Ok(tables
        .iter()
        .enumerate()
        .map(|(i, table)| EstimatorMoments {
            gamma: table.gamma(),
            direct: accs[3 * i].finish(),
            control_variate: accs[3 * i + 1].finish(),
            difference: accs[3 * i + 2].finish(),
        })
        .collect())
}

/// Success counts K of trials `0..trials`, drawn from the same streams a campaign uses.
pub fn sample_success_counts(policy: &SyntheticPolicy, n: usize, trials: u64, seed: u64) -> Vec<usize> {
    assert!(n >= 1, "a group needs at least one rollout");
    let dim = policy.num_states();
    run_chunked(
        trials,
        || (Vec::new(), Scratch::new(n, dim)),
        |(ks, s): &mut (Vec<usize>, Scratch), t| ks.push(s.draw(policy, seed, t)),
        |(total, _), (part, _)| total.extend(part),
    )
    .0
}

/// Empirical covariance of the direct estimator next to the analytic
/// count and within-success variance terms.
#[derive(Debug, Clone)]
pub struct VarianceDecomposition {
    pub trials: u64,
    pub mean: DVector<f64>,
    pub total_cov: DMatrix<f64>,
    /// Var(a_K)‖μ‖²
    pub count_term: f64,
    /// E[a_K²/K] tr(Σ)
    pub within_term: f64,
}

impl VarianceDecomposition {
    pub fn analytic_trace(&self) -> f64 {
        self.count_term + self.within_term
    }

    pub fn empirical_trace(&self) -> f64 {
        self.total_cov.trace()
    }
}

pub fn empirical_covariance(
    policy: &SyntheticPolicy,
    table: &CoefficientTable,
    n_trials: u64,
    seed: u64,
) -> Result<VarianceDecomposition> {
    let orc = oracle(policy)?;
    let terms = analytic_variance_terms_with(table, orc.p)?;
    let m = run_campaign(policy, std::slice::from_ref(table), n_trials, seed)?.remove(0);
    Ok(VarianceDecomposition {
        trials: n_trials,
        mean: m.direct.mean,
        total_cov: m.direct.cov,
        count_term: terms.var_a_k * orc.norm_mu2(),
        within_term: terms.e_a2_over_k * orc.trace_sigma(),
    })
}

/// Direct-estimator moments restricted to groups with K = k.
#[derive(Debug, Clone)]
pub struct ConditionalMoments {
    pub k: usize,
    pub moments: Moments,
}

/// Splits the direct estimator's trials by success count. Entry k holds the
/// groups with exactly k successes.
pub fn conditional_moments(
    policy: &SyntheticPolicy,
    table: &CoefficientTable,
    trials: u64,
    seed: u64,
) -> Vec<ConditionalMoments> {
    let n = table.n();
    let dim = policy.num_states();
    let (accs, _) = run_chunked(
        trials,
        || (vec![Accumulator::new(dim); n + 1], Scratch::new(n, dim)),
        |(accs, s): &mut (Vec<Accumulator>, Scratch), t| {
            let k = s.draw(policy, seed, t);
            estimate_from_counts(policy, &s.counts, k, table, EstimatorMode::Direct, &mut s.est);
            accs[k].push(&s.est);
        },
        |(total, _), (part, _)| {
            for (t, p) in total.iter_mut().zip(&part) {
                t.merge(p);
            }
        },
    );
    accs.iter()
        .enumerate()
        .map(|(k, a)| ConditionalMoments { k, moments: a.finish() })
        .collect()
}

/// Monte-Carlo mean of a single score S_i over all rollouts (should vanish).
pub fn mean_score(policy: &SyntheticPolicy, n: usize, trials: u64, seed: u64) -> Moments {
    let dim = policy.num_states();
    let pi = policy.probs().to_vec();
    let (acc, _) = run_chunked(
        trials,
        || (Accumulator::new(dim), Scratch::new(n, dim)),
        |(acc, s): &mut (Accumulator, Scratch), t| {
            s.draw(policy, seed, t);
            for i in 0..n {
                let z = s.states[i];
                for j in 0..dim {
                    s.est[j] = -pi[j];
                }
                s.est[z] += 1.0;
                acc.push(&s.est);
            }
        },
        |(total, _), (part, _)| total.merge(&part),
    );
    acc.finish()
}

/// Number of standard errors allowed between the Monte-Carlo mean and the exact gradient.
pub const MEAN_Z_LIMIT: f64 = 4.0;
/// Relative tolerance between empirical and analytic covariance traces.
pub const TRACE_REL_TOL: f64 = 0.03;

/// One verification row per (γ, estimator mode).
#[derive(Debug, Clone)]
pub struct SimulationRow {
    pub gamma: f64,
    pub n: usize,
    pub mode: EstimatorMode,
    pub trials: u64,
    /// ‖mean − w(p)∇p‖₂
    pub mean_error_norm: f64,
    /// MEAN_Z_LIMIT times the largest componentwise standard error.
    pub ci_radius: f64,
    pub max_abs_z: f64,
    pub empirical_trace: f64,
    pub count_term: f64,
    pub within_term: f64,
    /// None when fewer than two trials make the check meaningless.
    pub mean_pass: Option<bool>,
    /// Only the direct estimator has an analytic trace; None otherwise.
    pub trace_pass: Option<bool>,
}

/// Full verification campaign: exact gradient and variance oracles against
/// Monte-Carlo moments of both estimators for every γ.
pub fn simulate(
    policy: &SyntheticPolicy,
    gammas: &[f64],
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<Vec<SimulationRow>> {
    let orc: PolicyOracle = oracle(policy)?;
    let tables = gammas
        .iter()
        .map(|g| Ok(CoefficientTable::new(GammaConfig::new(*g, n)?)))
        .collect::<Result<Vec<_>>>()?;
    let results = run_campaign(policy, &tables, trials, seed)?;
    let mut rows = Vec::with_capacity(2 * tables.len());
    for (table, res) in tables.iter().zip(&results) {
        let target = &orc.grad_p * weight_series(table.gamma(), n, orc.p).w;
        let VarianceTerms {
            var_a_k,
            e_a2_over_k,
        } = analytic_variance_terms_with(table, orc.p)?;
        let count_term = var_a_k * orc.norm_mu2();
        let within_term = e_a2_over_k * orc.trace_sigma();
        for mode in EstimatorMode::ALL {
            let m = res.mode(mode);
            let meaningful = m.trials >= 2;
            let max_abs_z = m.max_abs_z(&target);
            let empirical_trace = if meaningful { m.trace() } else { f64::NAN };
            let analytic = count_term + within_term;
            let trace_pass = (meaningful && mode == EstimatorMode::Direct)
                .then(|| (empirical_trace - analytic).abs() <= TRACE_REL_TOL * analytic);
            rows.push(SimulationRow {
                gamma: table.gamma(),
                n,
                mode,
                trials: m.trials,
                mean_error_norm: (&m.mean - &target).norm(),
                ci_radius: MEAN_Z_LIMIT * m.std_err().max(),
                max_abs_z,
                empirical_trace,
                count_term,
                within_term,
                mean_pass: meaningful.then_some(max_abs_z <= MEAN_Z_LIMIT),
                trace_pass,
            });
        }
    }
    Ok(rows)
}
