//! Estimator coefficients indexed by the success count K of a rollout group.
//!
//! For a group of N binary rewards with K successes the unbiased estimator is
//! `(β_{K-1} / N) Σ r_i S_i = α_K S̄_K`, where
//!
//! ```text
//! β_{K-1} = Γ(N+γ)/Γ(N) · Γ(K)/Γ(K+γ)        α_K = (K/N) β_{K-1}
//! ```
//!
//! The closed form is evaluated in log space. [`beta_by_sum`] evaluates the
//! same coefficient through its finite hypergeometric sum and serves as an
//! independent check; the truncated (triad) family with M < N only has the
//! sum form.

use crate::error::{Error, Result};
use crate::specfun::log_gamma;

/// Objective parameter γ, rollout budget N and truncation order M ≤ N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaConfig {
    gamma: f64,
    n_rollouts: usize,
    m_trunc: usize,
}

impl GammaConfig {
    /// Full family (M = N).
    pub fn new(gamma: f64, n_rollouts: usize) -> Result<Self> {
        Self::triad(gamma, n_rollouts, n_rollouts)
    }

    pub fn triad(gamma: f64, m_trunc: usize, n_rollouts: usize) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be finite and nonnegative, got {gamma}"
            )));
        }
        if n_rollouts == 0 {
            return Err(Error::InvalidConfig("rollout budget N must be at least 1".into()));
        }
        if m_trunc == 0 || m_trunc > n_rollouts {
            return Err(Error::InvalidConfig(format!(
                "truncation order M must satisfy 1 <= M <= N = {n_rollouts}, got {m_trunc}"
            )));
        }
        Ok(Self {
            gamma,
            n_rollouts,
            m_trunc,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_rollouts(&self) -> usize {
        self.n_rollouts
    }

    pub fn m_trunc(&self) -> usize {
        self.m_trunc
    }

    pub fn is_full(&self) -> bool {
        self.m_trunc == self.n_rollouts
    }
}

/// Immutable table of β_{K-1} and α_K for K = 1..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    config: GammaConfig,
    beta: Vec<f64>,
    alpha: Vec<f64>,
}

impl CoefficientTable {
    /// Builds the table for any config. The full family uses the gamma-ratio
    /// closed form, truncated configs use the finite sum.
    pub fn new(config: GammaConfig) -> Self {
        let n = config.n_rollouts;
        let beta: Vec<f64> = (1..=n)
            .map(|k| {
                if config.is_full() {
                    beta_closed_form(config.gamma, n, k)
                } else {
                    truncated_sum(config.gamma, config.m_trunc, n, k)
                }
            })
            .collect();
        let alpha = beta
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let k = i + 1;
                match integer_ratio(config.gamma, n, k).filter(|_| config.is_full()) {
                    Some((num, den)) => (k as f64 * num) / (n as f64 * den),
                    None => k as f64 / n as f64 * b,
                }
            })
            .collect();
        Self {
            config,
            beta,
            alpha,
        }
    }

    pub fn config(&self) -> &GammaConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.config.n_rollouts
    }

    pub fn gamma(&self) -> f64 {
        self.config.gamma
    }

    /// β_{K-1} for K ≥ 1.
    pub fn beta(&self, k: usize) -> f64 {
        assert!(k >= 1 && k <= self.n(), "K = {k} outside 1..={}", self.n());
        self.beta[k - 1]
    }

    /// α_K for K ≥ 1.
    pub fn alpha(&self, k: usize) -> f64 {
        assert!(k >= 1 && k <= self.n(), "K = {k} outside 1..={}", self.n());
        self.alpha[k - 1]
    }

    /// α_K · 1{K ≥ 1}: the scale applied to S̄_K, zero for all-failure groups.
    pub fn scale(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.alpha(k)
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }
}

/// Table for the full family; rejects truncated configs.
pub fn beta_table(config: GammaConfig) -> Result<CoefficientTable> {
    if !config.is_full() {
        return Err(Error::InvalidConfig(format!(
            "beta_table expects M = N, got M = {} and N = {}",
            config.m_trunc, config.n_rollouts
        )));
    }
    Ok(CoefficientTable::new(config))
}

fn lgamma(x: f64) -> f64 {
    log_gamma(x).expect("coefficient arguments are positive")
}

/// For integer γ, β_{K-1} = Π_{j<γ} (N+j)/(K+j). Returns the numerator and
/// denominator products when both are exact in f64, so the ratio is
/// correctly rounded (γ = 1 gives exactly N/K).
fn integer_ratio(gamma: f64, n: usize, k: usize) -> Option<(f64, f64)> {
    const EXACT: f64 = 9_007_199_254_740_992.0; // 2^53
    if gamma.fract() != 0.0 || gamma > 16.0 {
        return None;
    }
    let (mut num, mut den) = (1.0f64, 1.0f64);
    for j in 0..gamma as usize {
        num *= (n + j) as f64;
        den *= (k + j) as f64;
        if num * n as f64 >= EXACT || den * n as f64 >= EXACT {
            return None;
        }
    }
    Some((num, den))
}

/// β_{K-1} = exp(ln Γ(N+γ) − ln Γ(N) + ln Γ(K) − ln Γ(K+γ)), evaluated as an
/// exact rational for small integer γ.
pub fn beta_closed_form(gamma: f64, n: usize, k: usize) -> f64 {
    assert!(k >= 1 && k <= n, "need 1 <= K <= N");
    if let Some((num, den)) = integer_ratio(gamma, n, k) {
        return num / den;
    }
    let (n, k) = (n as f64, k as f64);
    let log_beta = (lgamma(n + gamma) - lgamma(n)) + (lgamma(k) - lgamma(k + gamma));
    log_beta.exp()
}

/// Σ_{m=0}^{upper} ((γ)_m / m!) · C(N−K, m) / C(N−1, m), with upper ≤ N − K.
///
/// Every term is nonnegative and each is obtained from the previous by the
/// factor (γ+m−1)/m · (N−K−m+1)/(N−m), so no gamma functions are involved.
fn truncated_sum(gamma: f64, m_trunc: usize, n: usize, k: usize) -> f64 {
    let upper = (m_trunc - 1).min(n - k);
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..=upper {
        let mf = m as f64;
        term *= (gamma + mf - 1.0) / mf * ((n - k - m + 1) as f64) / ((n - m) as f64);
        sum += term;
    }
    sum
}

/// β_{K-1} through the finite hypergeometric sum.
pub fn beta_by_sum(gamma: f64, n: usize, k: usize) -> f64 {
    assert!(k >= 1 && k <= n, "need 1 <= K <= N");
    truncated_sum(gamma, n, n, k)
}

/// Group update scale α_K for the config (truncated sum when M < N).
pub fn alpha(config: &GammaConfig, k: usize) -> f64 {
    let n = config.n_rollouts;
    assert!(k >= 1 && k <= n, "need 1 <= K <= N");
    if config.is_full() {
        if let Some((num, den)) = integer_ratio(config.gamma, n, k) {
            return (k as f64 * num) / (n as f64 * den);
        }
        k as f64 / n as f64 * beta_closed_form(config.gamma, n, k)
    } else {
        alpha_triad(config.gamma, config.m_trunc, n, k)
    }
}

/// α_K^{(γ,M,N)} = (K/N) Σ_{m=0}^{min(M−1, N−K)} ((γ)_m/m!) C(N−K,m)/C(N−1,m).
pub fn alpha_triad(gamma: f64, m_trunc: usize, n: usize, k: usize) -> f64 {
    assert!(k >= 1 && k <= n, "need 1 <= K <= N");
    assert!(m_trunc >= 1 && m_trunc <= n, "need 1 <= M <= N");
    k as f64 / n as f64 * truncated_sum(gamma, m_trunc, n, k)
}

pub(crate) fn ln_binomial(n: usize, k: usize) -> f64 {
    lgamma(n as f64 + 1.0) - lgamma(k as f64 + 1.0) - lgamma((n - k) as f64 + 1.0)
}

/// Bernstein basis polynomial C(d, m) p^m (1−p)^{d−m}.
pub fn bernstein_basis(m: usize, degree: usize, p: f64) -> f64 {
    assert!(m <= degree, "basis index exceeds degree");
    debug_assert!((0.0..=1.0).contains(&p));
    if p <= 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if m == degree { 1.0 } else { 0.0 };
    }
    let log = ln_binomial(degree, m) + m as f64 * p.ln() + (degree - m) as f64 * (-p).ln_1p();
    log.exp()
}

/// Population weight Σ_j β_j B_{j,N−1}(p) realised by the table's estimator.
pub fn weight_from_bernstein(table: &CoefficientTable, p: f64) -> f64 {
    let degree = table.n() - 1;
    table
        .betas()
        .iter()
        .enumerate()
        .map(|(j, b)| b * bernstein_basis(j, degree, p))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const GAMMAS: [f64; 7] = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0];

    fn table(gamma: f64, n: usize) -> CoefficientTable {
        beta_table(GammaConfig::new(gamma, n).unwrap()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(GammaConfig::new(-0.1, 4).is_err());
        assert!(GammaConfig::new(f64::NAN, 4).is_err());
        assert!(GammaConfig::new(1.0, 0).is_err());
        assert!(GammaConfig::triad(1.0, 5, 4).is_err());
        assert!(GammaConfig::triad(1.0, 0, 4).is_err());
        let c = GammaConfig::new(0.7, 8).unwrap();
        assert_eq!(c.m_trunc(), 8);
        assert!(beta_table(GammaConfig::triad(1.0, 2, 4).unwrap()).is_err());
    }

    #[test]
    fn integer_gamma_is_exact_rational() {
        for n in 1..=64 {
            let t = table(1.0, n);
            for k in 1..=n {
                assert_eq!(t.beta(k), n as f64 / k as f64);
                assert_eq!(t.alpha(k), 1.0);
            }
        }
        // lgamma route and rational route agree
        for g in [2.0, 3.0, 4.0] {
            for (n, k) in [(8, 3), (64, 1), (33, 17)] {
                let (nf, kf) = (n as f64, k as f64);
                let via_logs = ((lgamma(nf + g) - lgamma(nf)) + (lgamma(kf) - lgamma(kf + g))).exp();
                assert_relative_eq!(beta_closed_form(g, n, k), via_logs, max_relative = 1e-13);
            }
        }
        // products too large for exact f64 fall back to the log form
        assert!(integer_ratio(16.0, 1 << 20, 1).is_none());
        assert!(beta_closed_form(16.0, 1 << 20, 1).is_finite());
    }

    #[test]
    fn beta_examples() {
        assert_relative_eq!(table(1.0, 32).beta(4), 8.0, max_relative = 1e-12);
        for k in 1..=32 {
            assert_relative_eq!(table(0.0, 32).beta(k), 1.0, max_relative = 1e-14);
        }
        assert_relative_eq!(table(2.0, 4).beta(1), 10.0, max_relative = 1e-12);
        assert_relative_eq!(beta_by_sum(2.0, 4, 1), 10.0, max_relative = 1e-14);
    }

    #[test]
    fn beta_by_sum_examples() {
        assert_eq!(beta_by_sum(1.0, 32, 32), 1.0);
        assert_relative_eq!(beta_by_sum(1.0, 32, 4), 8.0, max_relative = 1e-13);
        assert_relative_eq!(
            beta_by_sum(0.5, 8, 2),
            table(0.5, 8).beta(2),
            max_relative = 1e-12
        );
    }

    #[test]
    fn alpha_examples() {
        assert_relative_eq!(
            alpha(&GammaConfig::new(0.0, 32).unwrap(), 4),
            0.125,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            alpha(&GammaConfig::new(1.0, 32).unwrap(), 7),
            1.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            alpha(&GammaConfig::new(2.0, 4).unwrap(), 1),
            2.5,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            alpha(&GammaConfig::triad(2.0, 2, 4).unwrap(), 1),
            alpha_triad(2.0, 2, 4, 1)
        );
    }

    #[test]
    fn alpha_triad_examples() {
        assert_relative_eq!(alpha_triad(1.0, 4, 4, 1), 1.0, max_relative = 1e-14);
        assert_relative_eq!(alpha_triad(2.0, 1, 4, 1), 0.25, max_relative = 1e-14);
        assert_relative_eq!(alpha_triad(2.0, 4, 4, 1), 2.5, max_relative = 1e-14);
        for k in 1..=16 {
            assert_relative_eq!(
                alpha_triad(1.7, 16, 16, k),
                table(1.7, 16).alpha(k),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn table_invariants() {
        for &g in &GAMMAS {
            for n in [1, 2, 4, 8, 32, 64] {
                let t = table(g, n);
                assert_eq!(t.alpha(n), 1.0, "gamma={g} N={n}");
                for k in 1..=n {
                    assert!(t.beta(k).is_finite() && t.beta(k) > 0.0);
                    assert_relative_eq!(
                        t.alpha(k),
                        k as f64 / n as f64 * t.beta(k),
                        max_relative = 1e-15
                    );
                }
                for k in 1..n {
                    let ratio = t.alpha(k + 1) / t.alpha(k);
                    let want = (k as f64 + 1.0) / (k as f64 + g);
                    assert!((ratio - want).abs() <= 1e-10 * want, "gamma={g} N={n} K={k}");
                }
            }
        }
        assert_eq!(table(0.3, 5).scale(0), 0.0);
    }

    #[test]
    fn large_budget_is_finite() {
        let t = table(4.0, 1024);
        let want = 1024.0 * 1025.0 * 1026.0 * 1027.0 / 24.0;
        assert_relative_eq!(t.beta(1), want, max_relative = 1e-12);
        assert_eq!(t.alpha(1024), 1.0);
    }

    #[test]
    fn regime_law() {
        for &g in &GAMMAS {
            for n in [2, 4, 8, 32] {
                let t = table(g, n);
                for k in 1..n {
                    let (a, next) = (t.alpha(k), t.alpha(k + 1));
                    let kn = k as f64 / n as f64;
                    if g == 0.0 {
                        assert_relative_eq!(a, kn, max_relative = 1e-14);
                    } else if g < 1.0 {
                        assert!(next > a && kn < a && a < 1.0, "gamma={g} N={n} K={k}");
                    } else if g == 1.0 {
                        assert!((a - 1.0).abs() <= 1e-12);
                    } else {
                        assert!(next < a && a > 1.0, "gamma={g} N={n} K={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn bernstein_examples() {
        assert_eq!(bernstein_basis(0, 3, 0.0), 1.0);
        assert_eq!(bernstein_basis(3, 3, 1.0), 1.0);
        assert_eq!(bernstein_basis(1, 3, 1.0), 0.0);
        assert_relative_eq!(bernstein_basis(1, 2, 0.5), 0.5, max_relative = 1e-14);
        let total: f64 = (0..=31).map(|m| bernstein_basis(m, 31, 0.37)).sum();
        assert!((total - 1.0).abs() <= 1e-12);
        let total: f64 = (0..=1023).map(|m| bernstein_basis(m, 1023, 0.61)).sum();
        assert!((total - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn bernstein_weight_examples() {
        for n in [1, 3, 16] {
            for p in [0.0, 0.2, 0.9, 1.0] {
                assert_relative_eq!(
                    weight_from_bernstein(&table(0.0, n), p),
                    1.0,
                    max_relative = 1e-12
                );
            }
        }
        assert_relative_eq!(
            weight_from_bernstein(&table(1.0, 2), 0.5),
            1.5,
            max_relative = 1e-12
        );
        // MaxRL weight is the geometric partial sum (1 − (1−p)^N) / p.
        let p: f64 = 0.23;
        let want = (1.0 - (1.0 - p).powi(10)) / p;
        assert_relative_eq!(
            weight_from_bernstein(&table(1.0, 10), p),
            want,
            max_relative = 1e-12
        );
    }

    #[test]
    fn triad_nondecreasing_in_m() {
        for &g in GAMMAS.iter().filter(|g| **g > 0.0) {
            for n in [4, 32] {
                for k in 1..=n {
                    let mut prev = 0.0;
                    for m in 1..=n {
                        let a = alpha_triad(g, m, n, k);
                        assert!(a >= prev, "gamma={g} N={n} K={k} M={m}");
                        prev = a;
                    }
                }
            }
        }
    }

    #[test]
    fn triad_table_uses_truncated_sum() {
        let t = CoefficientTable::new(GammaConfig::triad(2.0, 3, 8).unwrap());
        for k in 1..=8 {
            assert_relative_eq!(t.alpha(k), alpha_triad(2.0, 3, 8, k), max_relative = 1e-15);
        }
        assert_eq!(t.alpha(8), 1.0);
    }

    proptest! {
        #[test]
        fn closed_form_matches_sum(gamma in 0.0f64..4.0, n in 1usize..=64, k_frac in 0.0f64..1.0) {
            let k = 1 + ((n - 1) as f64 * k_frac).round() as usize;
            let closed = beta_closed_form(gamma, n, k);
            let sum = beta_by_sum(gamma, n, k);
            prop_assert!((closed - sum).abs() <= 1e-10 * sum, "closed={} sum={}", closed, sum);
        }
    }
}
