//! The objective family φ_γ, its rollout-budget truncation J_{γ,N}, and the
//! population weight
//!
//! ```text
//! w_{γ,N}(p) = Σ_{m=0}^{N-1} ((γ)_m / m!) (1-p)^m
//! ```
//!
//! together with its first and second derivatives in γ.

use crate::error::{domain, Error, Result};
use crate::specfun::{digamma, trigamma};

/// Below this distance from γ = 1 the antiderivative switches to a series.
const PHI_SERIES_BAND: f64 = 1e-8;

/// φ_γ(p) = (p^{1−γ} − 1)/(1 − γ), with the log p limit at γ = 1.
pub fn phi(gamma: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(domain("phi", format!("p = {p}, expected 0 < p <= 1")));
    }
    let log_p = p.ln();
    let u = 1.0 - gamma;
    if u.abs() < PHI_SERIES_BAND {
        // expm1(u L)/u = L (1 + uL/2 + (uL)^2/6 + ...)
        let ul = u * log_p;
        return Ok(log_p * (1.0 + ul / 2.0 + ul * ul / 6.0));
    }
    Ok((u * log_p).exp_m1() / u)
}

/// pass@k = 1 − (1 − p)^k.
pub fn pass_at_k(p: f64, k: usize) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if p >= 1.0 {
        return 1.0;
    }
    -(k as f64 * (-p).ln_1p()).exp_m1()
}

/// Rising-factorial coefficients (γ)_m / m! for m = 0..n, by the
/// multiplicative recurrence so (0)_m is exactly zero for m ≥ 1.
fn rising_coefficients(gamma: f64, n: usize) -> Vec<f64> {
    let mut coeffs = Vec::with_capacity(n);
    let mut c = 1.0;
    for m in 0..n {
        if m > 0 {
            c *= (gamma + m as f64 - 1.0) / m as f64;
        }
        coeffs.push(c);
    }
    coeffs
}

/// J_{γ,N}(p) = Σ_{k=1}^N (γ)_{k−1} / ((k−1)! k) · pass@k(p).
pub fn truncated_objective(gamma: f64, n: usize, p: f64) -> f64 {
    assert!(n >= 1, "rollout budget must be at least 1");
    rising_coefficients(gamma, n)
        .iter()
        .enumerate()
        .map(|(m, c)| c / (m + 1) as f64 * pass_at_k(p, m + 1))
        .sum()
}

/// γ-derivatives of the weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightDerivs {
    pub dw: f64,
    pub ddw: f64,
}

/// Weight value plus, for γ > 0, its first and second γ-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightEval {
    pub w: f64,
    derivs: Option<WeightDerivs>,
}

impl WeightEval {
    pub fn derivs(&self) -> Result<WeightDerivs> {
        self.derivs.ok_or_else(|| {
            Error::UnsupportedPoint("gamma-derivatives of the weight are undefined at gamma = 0".into())
        })
    }

    /// ∂_γ w.
    pub fn dw(&self) -> Result<f64> {
        self.derivs().map(|d| d.dw)
    }

    /// ∂²_γ w.
    pub fn ddw(&self) -> Result<f64> {
        self.derivs().map(|d| d.ddw)
    }

    pub fn has_derivs(&self) -> bool {
        self.derivs.is_some()
    }
}

/// w_{γ,N} as a polynomial in (1 − p), with the coefficient vectors of its
/// γ-derivatives precomputed so that many prompts can be evaluated at one γ.
#[derive(Debug, Clone)]
pub struct WeightPolynomial {
    gamma: f64,
    coeffs: Vec<f64>,
    d_coeffs: Option<(Vec<f64>, Vec<f64>)>,
}

impl WeightPolynomial {
    pub fn new(gamma: f64, n: usize) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be finite and nonnegative, got {gamma}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidConfig("rollout budget N must be at least 1".into()));
        }
        let coeffs = rising_coefficients(gamma, n);
        let d_coeffs = if gamma > 0.0 {
            // ∂_γ (γ)_m = (γ)_m (ψ(γ+m) − ψ(γ))
            let psi0 = digamma(gamma)?;
            let tri0 = trigamma(gamma)?;
            let mut first = vec![0.0; n];
            let mut second = vec![0.0; n];
            for m in 1..n {
                let x = gamma + m as f64;
                let dpsi = digamma(x)? - psi0;
                let dtri = trigamma(x)? - tri0;
                first[m] = coeffs[m] * dpsi;
                second[m] = coeffs[m] * (dpsi * dpsi + dtri);
            }
            Some((first, second))
        } else {
            None
        };
        Ok(Self {
            gamma,
            coeffs,
            d_coeffs,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    /// Weight value only.
    pub fn value(&self, p: f64) -> f64 {
        horner(&self.coeffs, 1.0 - p)
    }

    pub fn eval(&self, p: f64) -> WeightEval {
        let x = 1.0 - p;
        WeightEval {
            w: horner(&self.coeffs, x),
            derivs: self.d_coeffs.as_ref().map(|(first, second)| WeightDerivs {
                dw: horner(first, x),
                ddw: horner(second, x),
            }),
        }
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// w_{γ,N}(p) and, when γ > 0, its γ-derivatives.
///
/// # Panics
///
/// Panics if γ is negative or not finite, or if n = 0.
pub fn weight_series(gamma: f64, n: usize, p: f64) -> WeightEval {
    debug_assert!((0.0..=1.0).contains(&p));
    WeightPolynomial::new(gamma, n)
        .expect("weight_series requires gamma >= 0 and n >= 1")
        .eval(p)
}

/// The untruncated weight p^{−γ}.
pub fn weight_limit(gamma: f64, p: f64) -> f64 {
    p.powf(-gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{beta_table, weight_from_bernstein, GammaConfig};
    use crate::specfun::reg_upper_inc_gamma;
    use approx::assert_relative_eq;

    #[test]
    fn phi_examples() {
        assert_relative_eq!(phi(0.0, 0.3).unwrap(), -0.7, max_relative = 1e-14);
        assert_relative_eq!(phi(1.0, 0.5).unwrap(), 0.5f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(phi(2.0, 0.5).unwrap(), -1.0, max_relative = 1e-14);
        assert!(matches!(phi(1.0, 0.0), Err(Error::Domain { .. })));
        assert!(phi(1.0, -0.2).is_err());
    }

    #[test]
    fn phi_is_continuous_at_one() {
        for p in [0.1f64, 0.5, 0.9] {
            for g in [1.0 - 1e-6, 1.0 + 1e-6, 1.0 - 1e-9, 1.0 + 1e-9] {
                let v = phi(g, p).unwrap();
                assert!((v - p.ln()).abs() <= 1e-5 * p.ln().abs(), "gamma={g} p={p}");
            }
        }
    }

    #[test]
    fn phi_derivative_is_power_weight() {
        let h = 1e-6;
        for g in [0.0, 0.5, 1.0, 1.7, 3.0] {
            for p in [0.1f64, 0.4, 0.8] {
                let fd = (phi(g, p + h).unwrap() - phi(g, p - h).unwrap()) / (2.0 * h);
                let want = p.powf(-g);
                assert!((fd - want).abs() <= 1e-6 * want, "gamma={g} p={p}");
            }
        }
    }

    #[test]
    fn pass_at_k_examples() {
        assert_eq!(pass_at_k(1.0, 1), 1.0);
        assert_relative_eq!(pass_at_k(0.5, 2), 0.75, max_relative = 1e-15);
        assert_relative_eq!(pass_at_k(0.1, 32), 1.0 - 0.9f64.powi(32), max_relative = 1e-14);
        assert_eq!(pass_at_k(0.0, 7), 0.0);
        let mut prev = 0.0;
        for k in 1..40 {
            let v = pass_at_k(0.07, k);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn truncated_objective_examples() {
        for p in [0.0, 0.2, 0.7, 1.0] {
            assert_relative_eq!(truncated_objective(0.0, 5, p), p, epsilon = 1e-15);
        }
        // MaxRL: Σ_{k≤T} pass@k / k
        for t in [1, 3, 10] {
            let p = 0.35;
            let want: f64 = (1..=t).map(|k| pass_at_k(p, k) / k as f64).sum();
            assert_relative_eq!(truncated_objective(1.0, t, p), want, max_relative = 1e-14);
        }
        // J_{1,N}(p) − J_{1,N}(1) = log p + Σ_{k>N} (1−p)^k / k.
        let (n, p) = (64, 0.5f64);
        let tail: f64 = (n + 1..400).map(|k| 0.5f64.powi(k as i32) / k as f64).sum();
        let lhs = truncated_objective(1.0, n, p) - truncated_objective(1.0, n, 1.0);
        assert!((lhs - (p.ln() + tail)).abs() <= 1e-14);
        assert!((lhs - p.ln()).abs() <= 2f64.powi(-64) + 1e-15);
    }

    #[test]
    fn objective_gradient_is_weight() {
        let h = 1e-5;
        for g in [0.0, 0.5, 1.0, 2.0] {
            for n in [1, 4, 32] {
                for i in 0..=18 {
                    let p = 0.05 + 0.05 * i as f64;
                    let fd = (truncated_objective(g, n, p + h) - truncated_objective(g, n, p - h))
                        / (2.0 * h);
                    let w = weight_series(g, n, p).w;
                    assert!((fd - w).abs() <= 1e-6 * w.max(1.0), "gamma={g} N={n} p={p}");
                }
            }
        }
    }

    #[test]
    fn weight_examples() {
        let e = weight_series(0.0, 8, 0.3);
        assert_eq!(e.w, 1.0);
        assert!(!e.has_derivs());
        assert!(matches!(e.dw(), Err(Error::UnsupportedPoint(_))));
        assert!(matches!(e.ddw(), Err(Error::UnsupportedPoint(_))));
        assert_relative_eq!(weight_series(1.0, 2, 0.5).w, 1.5, max_relative = 1e-15);
        for g in [0.0, 0.3, 1.0, 2.5] {
            for n in [1, 5, 64] {
                let e = weight_series(g, n, 1.0);
                assert_eq!(e.w, 1.0);
                if g > 0.0 {
                    assert_eq!(e.dw().unwrap(), 0.0);
                    assert_eq!(e.ddw().unwrap(), 0.0);
                }
            }
        }
        // partial sum at p = 0
        assert_relative_eq!(weight_series(1.0, 10, 0.0).w, 10.0, max_relative = 1e-15);
        assert!(WeightPolynomial::new(-1.0, 4).is_err());
        assert!(WeightPolynomial::new(1.0, 0).is_err());
    }

    #[test]
    fn weight_is_at_least_one() {
        for g in [0.0, 0.2, 1.0, 3.5] {
            for n in [1, 7, 50] {
                for i in 0..=20 {
                    assert!(weight_series(g, n, i as f64 / 20.0).w >= 1.0);
                }
            }
        }
    }

    #[test]
    fn weight_limit_examples() {
        assert_relative_eq!(weight_limit(1.0, 0.25), 4.0, max_relative = 1e-15);
        assert_eq!(weight_limit(0.0, 0.42), 1.0);
        assert_relative_eq!(weight_limit(1.5, 0.5), 2f64.powf(1.5), max_relative = 1e-15);
    }

    #[test]
    fn bernstein_expansion_matches_series() {
        for g in [0.0, 0.5, 1.0, 1.5, 2.0, 4.0] {
            for n in [1, 2, 16, 64] {
                let table = beta_table(GammaConfig::new(g, n).unwrap()).unwrap();
                for i in 0..=40 {
                    let p = i as f64 / 40.0;
                    let direct = weight_series(g, n, p).w;
                    let bern = weight_from_bernstein(&table, p);
                    assert!((direct - bern).abs() <= 1e-10 * direct, "gamma={g} N={n} p={p}");
                }
            }
        }
    }

    #[test]
    fn derivatives_match_harmonic_sums() {
        // ψ(γ+m) − ψ(γ) = Σ_{j<m} 1/(γ+j); ψ₁(γ+m) − ψ₁(γ) = −Σ_{j<m} 1/(γ+j)²
        for g in [0.05, 0.4, 1.0, 2.7] {
            for n in [2, 9, 40] {
                for p in [0.0, 0.15, 0.6] {
                    let x: f64 = 1.0 - p;
                    let (mut c, mut h1, mut h2) = (1.0, 0.0, 0.0);
                    let (mut dw, mut ddw) = (0.0, 0.0);
                    for m in 1..n {
                        let j = (m - 1) as f64;
                        c *= (g + j) / m as f64;
                        h1 += 1.0 / (g + j);
                        h2 += 1.0 / ((g + j) * (g + j));
                        dw += c * h1 * x.powi(m as i32);
                        ddw += c * (h1 * h1 - h2) * x.powi(m as i32);
                    }
                    let e = weight_series(g, n, p);
                    assert!((e.dw().unwrap() - dw).abs() <= 1e-11 * dw.abs().max(1.0));
                    assert!((e.ddw().unwrap() - ddw).abs() <= 1e-10 * ddw.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for i in 0..=29 {
            let g = 0.1 + 0.1 * i as f64;
            for n in [2, 8, 32] {
                for p in [0.05, 0.3, 0.8] {
                    let e = weight_series(g, n, p);
                    let up = weight_series(g + h, n, p);
                    let down = weight_series(g - h, n, p);
                    let fd = (up.w - down.w) / (2.0 * h);
                    let dw = e.dw().unwrap();
                    assert!((fd - dw).abs() <= 1e-6 * dw.abs().max(1.0), "dw gamma={g} N={n} p={p}");
                    let fd2 = (up.dw().unwrap() - down.dw().unwrap()) / (2.0 * h);
                    let ddw = e.ddw().unwrap();
                    assert!((fd2 - ddw).abs() <= 1e-5 * ddw.abs().max(1.0), "ddw gamma={g} N={n} p={p}");
                }
            }
        }
    }

    #[test]
    fn tail_converges_toward_power_weight() {
        // The envelope p^{-γ} Q(γ, pN) is an approximation; the 1.5 factor is
        // a test tolerance. Cases where the tail is below round-off are skipped.
        for g in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0] {
            for p in [0.05, 0.1, 0.2, 0.3, 0.5, 0.9] {
                let target = weight_limit(g, p);
                let mut prev = f64::INFINITY;
                for n in [1, 2, 4, 8, 16, 32, 64, 128, 256] {
                    let err = (weight_series(g, n, p).w - target).abs();
                    assert!(err <= prev + 4.0 * f64::EPSILON * target, "gamma={g} p={p} N={n}");
                    prev = err;
                    let pn = p * n as f64;
                    let envelope = target * reg_upper_inc_gamma(g, pn).unwrap() * 1.5;
                    if pn >= 5.0 && envelope > 1e-12 * target {
                        assert!(err <= envelope, "gamma={g} p={p} N={n} err={err} env={envelope}");
                    }
                }
            }
        }
    }
}
