use super::stats::CalibrationStats;
use crate::coefficients::{CoefficientTable, GammaConfig};
use crate::error::{Error, Result};
use crate::objective::WeightPolynomial;
use crate::simulator::analytic_variance_terms_with;

/// Floor on B(γ) inside the square root of U.
pub const B_FLOOR: f64 = 1e-8;

/// γ-derivatives of A and B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbDerivs {
    pub da: f64,
    pub dda: f64,
    pub db: f64,
    pub ddb: f64,
}

/// A(γ) = Σ v'ℓw and B(γ) = Σ ℓw², with derivatives when γ > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbCurves {
    pub a: f64,
    pub b: f64,
    pub derivs: Option<AbDerivs>,
}

impl AbCurves {
    /// U = A/√max(B, B_FLOOR).
    pub fn u(&self) -> f64 {
        self.a / self.b.max(B_FLOOR).sqrt()
    }

    /// F = 2A'B − AB', whose sign is that of U'.
    pub fn f(&self) -> Result<f64> {
        let d = self.require()?;
        Ok(2.0 * d.da * self.b - self.a * d.db)
    }

    /// F' = 2A''B + A'B' − AB''.
    pub fn f_prime(&self) -> Result<f64> {
        let d = self.require()?;
        Ok(2.0 * d.dda * self.b + d.da * d.db - self.a * d.ddb)
    }

    /// U' = F / (2B^{3/2}).
    pub fn u_prime(&self) -> Result<f64> {
        Ok(self.f()? / (2.0 * self.b.powf(1.5)))
    }

    fn require(&self) -> Result<AbDerivs> {
        self.derivs.ok_or_else(|| {
            Error::UnsupportedPoint("derivatives of A and B are undefined at gamma = 0".into())
        })
    }
}

fn nonempty(stats: &CalibrationStats) -> Result<()> {
    if stats.is_empty() {
        return Err(Error::EmptyInput("calibration statistics contain no prompts".into()));
    }
    Ok(())
}

pub fn ab_curves(stats: &CalibrationStats, gamma: f64, n: usize) -> Result<AbCurves> {
    nonempty(stats)?;
    let poly = WeightPolynomial::new(gamma, n)?;
    let mut a = 0.0;
    let mut b = 0.0;
    let mut d = AbDerivs {
        da: 0.0,
        dda: 0.0,
        db: 0.0,
        ddb: 0.0,
    };
    for r in stats.records() {
        let ev = poly.eval(r.p_hat);
        let w = ev.w;
        a += r.v_prime * r.ell * w;
        b += r.ell * w * w;
        if let Ok(wd) = ev.derivs() {
            d.da += r.v_prime * r.ell * wd.dw;
            d.dda += r.v_prime * r.ell * wd.ddw;
            d.db += 2.0 * r.ell * w * wd.dw;
            d.ddb += 2.0 * r.ell * (wd.dw * wd.dw + w * wd.ddw);
        }
    }
    Ok(AbCurves {
        a,
        b,
        derivs: (gamma > 0.0).then_some(d),
    })
}

/// U(γ) = A(γ)/√B(γ), with B floored at [`B_FLOOR`].
pub fn u_value(stats: &CalibrationStats, gamma: f64, n: usize) -> Result<f64> {
    nonempty(stats)?;
    let poly = WeightPolynomial::new(gamma, n)?;
    let (mut a, mut b) = (0.0, 0.0);
    for r in stats.records() {
        let w = poly.value(r.p_hat);
        a += r.v_prime * r.ell * w;
        b += r.ell * w * w;
    }
    Ok(a / b.max(B_FLOOR).sqrt())
}

/// Closed-form U'(γ); requires γ > 0.
pub fn u_prime(stats: &CalibrationStats, gamma: f64, n: usize) -> Result<f64> {
    ab_curves(stats, gamma, n)?.u_prime()
}

/// R(γ) = Σ_x Var(a_K)‖μ_x‖² + E[a_K²/K] tr(Σ_x) with K ~ Binomial(N, p̂_x).
pub fn variance_proxy(
    stats: &CalibrationStats,
    gamma: f64,
    n: usize,
    norm_mu2: &[f64],
    tr_sigma: &[f64],
) -> Result<f64> {
    nonempty(stats)?;
    if norm_mu2.len() != stats.len() || tr_sigma.len() != stats.len() {
        return Err(Error::InvalidConfig(format!(
            "norm factors must have one entry per prompt ({})",
            stats.len()
        )));
    }
    if norm_mu2.iter().chain(tr_sigma).any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidConfig("norm factors must be nonnegative".into()));
    }
    let table = CoefficientTable::new(GammaConfig::new(gamma, n)?);
    let mut total = 0.0;
    for ((r, m), t) in stats.records().iter().zip(norm_mu2).zip(tr_sigma) {
        total += analytic_variance_terms_with(&table, r.p_hat)?.combine(*m, *t);
    }
    Ok(total)
}

/// R(γ) using the norm factors stored in the stats (1 unless supplied).
pub fn variance_proxy_stored(stats: &CalibrationStats, gamma: f64, n: usize) -> Result<f64> {
    let m: Vec<f64> = stats.records().iter().map(|r| r.norm_mu2).collect();
    let t: Vec<f64> = stats.records().iter().map(|r| r.tr_sigma).collect();
    variance_proxy(stats, gamma, n, &m, &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::weight_series;
    use crate::selection::stats::{ell_proxy, Metric, PromptStats};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn stats(ps: &[f64], metric: Metric) -> CalibrationStats {
        let recs = ps
            .iter()
            .map(|p| {
                PromptStats::new(*p, ell_proxy(*p), crate::selection::metric_marginal(*p, metric).unwrap())
            })
            .collect();
        CalibrationStats::from_records(recs).unwrap()
    }

    #[test]
    fn gamma_zero_sums() {
        let s = stats(&[0.1, 0.4, 0.7], Metric::LogP(0.05));
        let c = ab_curves(&s, 0.0, 16).unwrap();
        let a: f64 = s.records().iter().map(|r| r.v_prime * r.ell).sum();
        let b: f64 = s.records().iter().map(|r| r.ell).sum();
        assert_relative_eq!(c.a, a, max_relative = 1e-15);
        assert_relative_eq!(c.b, b, max_relative = 1e-15);
        assert!(c.derivs.is_none());
        assert!(matches!(c.f(), Err(Error::UnsupportedPoint(_))));
    }

    #[test]
    fn single_pass1_prompt_is_gamma_invariant() {
        let s = stats(&[0.3], Metric::Pass1);
        let want = ell_proxy(0.3).sqrt();
        for g in [0.0, 0.2, 1.0, 2.7] {
            assert_relative_eq!(u_value(&s, g, 32).unwrap(), want, max_relative = 1e-13);
        }
        let s = stats(&[0.1, 0.9, 0.4], Metric::Pass1);
        let total: f64 = s.records().iter().map(|r| r.ell).sum();
        assert_relative_eq!(u_value(&s, 0.0, 8).unwrap(), total.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn two_prompt_direct_summation() {
        let s = stats(&[0.1, 0.9], Metric::Pass1);
        for g in [0.5, 1.0, 1.7] {
            let c = ab_curves(&s, g, 8).unwrap();
            let (mut a, mut b) = (0.0, 0.0);
            for p in [0.1f64, 0.9] {
                // geometric-free resummation of w by its definition
                let mut coef = 1.0;
                let mut w = 1.0;
                for m in 1..8 {
                    coef *= (g + m as f64 - 1.0) / m as f64;
                    w += coef * (1.0 - p).powi(m);
                }
                a += ell_proxy(p) * w;
                b += ell_proxy(p) * w * w;
            }
            assert_relative_eq!(c.a, a, max_relative = 1e-13);
            assert_relative_eq!(c.b, b, max_relative = 1e-13);
            assert_relative_eq!(c.u(), a / b.sqrt(), max_relative = 1e-13);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let s = stats(&[0.05, 0.3, 0.8], Metric::LogP(0.05));
        let n = 16;
        let h = 1e-4;
        for g in [0.3, 1.0, 2.2] {
            let c = ab_curves(&s, g, n).unwrap();
            let up = ab_curves(&s, g + h, n).unwrap();
            let dn = ab_curves(&s, g - h, n).unwrap();
            let d = c.derivs.unwrap();
            let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1.0);
            assert!(rel((up.a - dn.a) / (2.0 * h), d.da) < 1e-6);
            assert!(rel((up.b - dn.b) / (2.0 * h), d.db) < 1e-6);
            assert!(rel((up.a - 2.0 * c.a + dn.a) / (h * h), d.dda) < 1e-5);
            assert!(rel((up.b - 2.0 * c.b + dn.b) / (h * h), d.ddb) < 1e-5);
            let fu = up.f().unwrap();
            let fd = dn.f().unwrap();
            assert!(rel((fu - fd) / (2.0 * h), c.f_prime().unwrap()) < 1e-5);
        }
    }

    #[test]
    fn variance_proxy_examples() {
        let s = stats(&[0.5], Metric::Pass1);
        assert_relative_eq!(variance_proxy(&s, 1.0, 2, &[1.0], &[1.0]).unwrap(), 0.8125, max_relative = 1e-14);
        assert_relative_eq!(variance_proxy(&s, 0.0, 2, &[1.0], &[1.0]).unwrap(), 0.375, max_relative = 1e-14);
        assert!(variance_proxy(&s, 1.0, 2, &[1.0, 1.0], &[1.0]).is_err());
        assert!(variance_proxy(&s, 1.0, 2, &[-1.0], &[1.0]).is_err());
    }

    #[test]
    fn variance_proxy_increases_in_gamma() {
        let s = stats(&[0.1], Metric::Pass1);
        let mut prev = 0.0;
        for i in 0..=80 {
            let g = 2.0 * i as f64 / 80.0;
            let r = variance_proxy_stored(&s, g, 32).unwrap();
            assert!(r >= prev * (1.0 - 1e-14), "γ={g}");
            prev = r;
        }
    }

    #[test]
    fn variance_proxy_matches_weight_mean() {
        // Var(a_K) + E[a_K]² = E[a_K²] and E[a_K] = p w(p)
        let p = 0.3;
        let s = stats(&[p], Metric::Pass1);
        let r_count = variance_proxy(&s, 1.5, 8, &[1.0], &[0.0]).unwrap();
        let mean = p * weight_series(1.5, 8, p).w;
        let table = CoefficientTable::new(GammaConfig::new(1.5, 8).unwrap());
        let second: f64 = (1..=8)
            .map(|k| crate::coefficients::bernstein_basis(k, 8, p) * table.alpha(k).powi(2))
            .sum();
        assert_relative_eq!(r_count + mean * mean, second, max_relative = 1e-12);
    }

    #[test]
    fn empty_stats_rejected() {
        let s = CalibrationStats::from_records(vec![]).unwrap();
        assert!(matches!(ab_curves(&s, 1.0, 4), Err(Error::EmptyInput(_))));
        assert!(matches!(u_value(&s, 1.0, 4), Err(Error::EmptyInput(_))));
    }

    proptest! {
        #[test]
        fn u_prime_matches_finite_differences(
            ps in proptest::collection::vec(0.02f64..0.98, 1..6),
            ells in proptest::collection::vec(0.01f64..1.0, 6),
            tau in 0.01f64..0.5,
            g in 0.2f64..2.5,
        ) {
            let recs = ps.iter().zip(&ells).map(|(p, l)| PromptStats::new(*p, *l, 1.0 / (p + tau))).collect();
            let s = CalibrationStats::from_records(recs).unwrap();
            let h = 1e-5;
            let fd = (u_value(&s, g + h, 16).unwrap() - u_value(&s, g - h, 16).unwrap()) / (2.0 * h);
            let an = u_prime(&s, g, 16).unwrap();
            prop_assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "fd {} an {}", fd, an);
        }

        #[test]
        fn u_scales_with_sqrt_ell(
            ps in proptest::collection::vec(0.02f64..0.98, 1..6),
            c in 0.01f64..100.0,
            g in 0.0f64..2.5,
        ) {
            let s = stats(&ps, Metric::PassK(4));
            let scaled = s.scale_ell(c);
            let u = u_value(&s, g, 16).unwrap();
            let us = u_value(&scaled, g, 16).unwrap();
            prop_assert!((us - c.sqrt() * u).abs() <= 1e-12 * us.abs().max(1e-300) + 1e-15);
        }
    }
}
