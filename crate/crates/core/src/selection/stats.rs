use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error, Result};

/// (K + a)/(N + a + b): a Beta-smoothed success estimate that stays inside (0, 1).
pub fn smooth_p_hat(k: usize, n: usize, a: f64, b: f64) -> Result<f64> {
    if k > n {
        return Err(domain("smooth_p_hat", format!("K = {k} exceeds N = {n}")));
    }
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(domain("smooth_p_hat", format!("smoothing a = {a}, b = {b} must be positive")));
    }
    Ok((k as f64 + a) / (n as f64 + a + b))
}

/// Validation metric v(p) whose marginal v'(p) weights each prompt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Pass1,
    /// pass@k = 1 − (1 − p)^k
    PassK(u32),
    /// log(p + τ)
    LogP(f64),
}

impl Metric {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Metric::PassK(0) => Err(Error::InvalidConfig("pass@k needs k >= 1".into())),
            Metric::LogP(tau) if !(tau > 0.0 && tau.is_finite()) => Err(Error::InvalidConfig(
                format!("log-success smoothing tau must be positive, got {tau}"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Pass1 => write!(f, "pass1"),
            Metric::PassK(k) => write!(f, "passk:{k}"),
            Metric::LogP(tau) => write!(f, "logp:{tau}"),
        }
    }
}

/// Accepts `pass1`, `passk:<k>` and `logp[:<tau>]` (τ defaults to 0.05).
impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad_arg = |a: &str| Error::InvalidConfig(format!("bad metric parameter '{a}' in '{s}'"));
        let metric = match (name, arg) {
            ("pass1", None) => Metric::Pass1,
            ("passk", Some(a)) => Metric::PassK(a.parse().map_err(|_| bad_arg(a))?),
            ("logp", None) => Metric::LogP(0.05),
            ("logp", Some(a)) => Metric::LogP(a.parse().map_err(|_| bad_arg(a))?),
            _ => return Err(Error::InvalidConfig(format!("unknown metric '{s}'"))),
        };
        metric.validate()?;
        Ok(metric)
    }
}

/// v'(p) for the metric.
pub fn metric_marginal(p: f64, metric: Metric) -> Result<f64> {
    metric.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(domain("metric_marginal", format!("p = {p} not in [0, 1]")));
    }
    Ok(match metric {
        Metric::Pass1 => 1.0,
        Metric::PassK(k) => k as f64 * (1.0 - p).powi(k as i32 - 1),
        Metric::LogP(tau) => 1.0 / (p + tau),
    })
}

/// Bernoulli-variance proxy p̂(1 − p̂) for the squared gradient norm ℓ_x.
pub fn ell_proxy(p_hat: f64) -> f64 {
    p_hat * (1.0 - p_hat)
}

/// Where the per-prompt statistics came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Smoothed success counts with the p̂(1 − p̂) proxy.
    Counts,
    /// Supplied by the caller.
    Direct,
}

/// Calibration statistics of one prompt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromptStats {
    pub p_hat: f64,
    pub ell: f64,
    pub v_prime: f64,
    /// ‖μ_x‖², used only by the variance proxy.
    pub norm_mu2: f64,
    /// tr(Σ_x), used only by the variance proxy.
    pub tr_sigma: f64,
}

impl PromptStats {
    /// Record with unit norm factors.
    pub fn new(p_hat: f64, ell: f64, v_prime: f64) -> Self {
        Self {
            p_hat,
            ell,
            v_prime,
            norm_mu2: 1.0,
            tr_sigma: 1.0,
        }
    }

    fn check(&self, i: usize) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.p_hat)
            && self.ell >= 0.0
            && self.ell.is_finite()
            && self.v_prime.is_finite()
            && self.norm_mu2 >= 0.0
            && self.norm_mu2.is_finite()
            && self.tr_sigma >= 0.0
            && self.tr_sigma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("prompt {i} has invalid statistics {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationStats {
    records: Vec<PromptStats>,
    provenance: Provenance,
}

impl CalibrationStats {
    /// Builds stats from success counts with smoothing (a, b).
    pub fn from_counts(ks: &[usize], n: usize, metric: Metric, a: f64, b: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("rollout budget N must be at least 1".into()));
        }
        metric.validate()?;
        let records = ks
            .iter()
            .map(|k| {
                let p_hat = smooth_p_hat(*k, n, a, b)?;
                Ok(PromptStats::new(p_hat, ell_proxy(p_hat), metric_marginal(p_hat, metric)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            records,
            provenance: Provenance::Counts,
        })
    }

    pub fn from_records(records: Vec<PromptStats>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            r.check(i)?;
        }
        Ok(Self {
            records,
            provenance: Provenance::Direct,
        })
    }

    /// Replaces the ℓ proxy by externally estimated squared gradient norms.
    pub fn with_ell(mut self, ell: &[f64]) -> Result<Self> {
        self.check_len(ell.len(), "ell")?;
        for (r, e) in self.records.iter_mut().zip(ell) {
            r.ell = *e;
        }
        self.revalidate()
    }

    /// Supplies ‖μ_x‖² and tr(Σ_x) for the variance proxy.
    pub fn with_norms(mut self, norm_mu2: &[f64], tr_sigma: &[f64]) -> Result<Self> {
        self.check_len(norm_mu2.len(), "norm_mu2")?;
        self.check_len(tr_sigma.len(), "tr_sigma")?;
        for ((r, m), t) in self.records.iter_mut().zip(norm_mu2).zip(tr_sigma) {
            r.norm_mu2 = *m;
            r.tr_sigma = *t;
        }
        self.revalidate()
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.records.len() {
            return Err(Error::InvalidConfig(format!(
                "{what} has {len} entries for {} prompts",
                self.records.len()
            )));
        }
        Ok(())
    }

    fn revalidate(self) -> Result<Self> {
        for (i, r) in self.records.iter().enumerate() {
            r.check(i)?;
        }
        Ok(self)
    }

    pub fn records(&self) -> &[PromptStats] {
        &self.records
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Copy with every ℓ multiplied by `c`.
    pub fn scale_ell(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.records.iter_mut().for_each(|r| r.ell *= c);
        out
    }
}
