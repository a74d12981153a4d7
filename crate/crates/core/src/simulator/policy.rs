use nalgebra::{DMatrix, DVector};
use rand::distributions::WeightedIndex;

use crate::error::{Error, Result};

/// Largest latent space accepted; keeps every expectation an exact enumeration.
pub const MAX_STATES: usize = 64;

/// Softmax policy over a finite set of latent rollouts, a subset of which
/// the verifier marks correct. The parameters are the raw logits.
#[derive(Debug, Clone)]
pub struct SyntheticPolicy {
    logits: Vec<f64>,
    correct: Vec<bool>,
    probs: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl SyntheticPolicy {
    pub fn new(logits: Vec<f64>, correct: Vec<bool>) -> Result<Self> {
        if logits.len() < 2 || logits.len() > MAX_STATES {
            return Err(Error::InvalidConfig(format!(
                "latent space must have 2..={MAX_STATES} states, got {}",
                logits.len()
            )));
        }
        if logits.len() != correct.len() {
            return Err(Error::InvalidConfig(format!(
                "{} logits but {} correctness flags",
                logits.len(),
                correct.len()
            )));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidConfig("logits must be finite".into()));
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let sampler = WeightedIndex::new(&probs)
            .map_err(|e| Error::InvalidConfig(format!("cannot sample policy: {e}")))?;
        Ok(Self {
            logits,
            correct,
            probs,
            sampler,
        })
    }

    /// Uniform logits with the given correctness mask.
    pub fn uniform(correct: Vec<bool>) -> Result<Self> {
        Self::new(vec![0.0; correct.len()], correct)
    }

    pub fn num_states(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn correct(&self) -> &[bool] {
        &self.correct
    }

    pub fn is_correct(&self, z: usize) -> bool {
        self.correct[z]
    }

    /// m_θ(z) for every state.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Success probability Σ_{z correct} m_θ(z).
    pub fn success_prob(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.correct)
            .filter(|(_, c)| **c)
            .map(|(p, _)| p)
            .sum()
    }

    /// Score ∇_θ log m_θ(z) = e_z − π for softmax logits.
    pub fn score(&self, z: usize) -> DVector<f64> {
        let mut s = DVector::from_iterator(self.probs.len(), self.probs.iter().map(|p| -p));
        s[z] += 1.0;
        s
    }

    pub(crate) fn sampler(&self) -> &WeightedIndex<f64> {
        &self.sampler
    }
}

/// Exact success probability, its gradient and the success-conditioned
/// score moments of a [`SyntheticPolicy`].
#[derive(Debug, Clone)]
pub struct PolicyOracle {
    pub p: f64,
    pub grad_p: DVector<f64>,
    /// μ = E[S | r = 1] = ∇ log p.
    pub mu: DVector<f64>,
    /// Σ = Cov(S | r = 1).
    pub sigma: DMatrix<f64>,
}

impl PolicyOracle {
    pub fn norm_mu2(&self) -> f64 {
        self.mu.norm_squared()
    }

    pub fn trace_sigma(&self) -> f64 {
        self.sigma.trace()
    }
}

/// Enumerates the latent space to get p, ∇p, μ and Σ without sampling.
pub fn oracle(policy: &SyntheticPolicy) -> Result<PolicyOracle> {
    let probs = policy.probs();
    let dim = probs.len();
    let p = policy.success_prob();
    if !(p > 0.0) {
        return Err(Error::Degenerate(
            "no success mass; success-conditioned moments are undefined".into(),
        ));
    }
    // ∂p/∂θ_j = π_j (1{j correct} − p)
    let grad_p = DVector::from_iterator(
        dim,
        probs
            .iter()
            .zip(policy.correct())
            .map(|(pi, c)| pi * (if *c { 1.0 } else { 0.0 } - p)),
    );
    let mu = &grad_p / p;
    let mut sigma = DMatrix::zeros(dim, dim);
    for z in (0..dim).filter(|z| policy.is_correct(*z)) {
        let centered = policy.score(z) - &mu;
        sigma.ger(probs[z] / p, &centered, &centered, 1.0);
    }
    Ok(PolicyOracle {
        p,
        grad_p,
        mu,
        sigma,
    })
}
