use crate::coefficients::{bernstein_basis, CoefficientTable, GammaConfig};
use crate::error::{domain, Result};

/// Moments of a_K = α_K·1{K ≥ 1} under K ~ Binomial(N, p).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceTerms {
    /// Var(a_K)
    pub var_a_k: f64,
    /// E[a_K²/K], with the K = 0 term set to 0.
    pub e_a2_over_k: f64,
}

impl VarianceTerms {
    /// Var(a_K)‖μ‖² + E[a_K²/K] tr(Σ).
    pub fn combine(&self, norm_mu2: f64, trace_sigma: f64) -> f64 {
        self.var_a_k * norm_mu2 + self.e_a2_over_k * trace_sigma
    }
}

pub fn analytic_variance_terms(p: f64, gamma: f64, n: usize) -> Result<VarianceTerms> {
    let table = CoefficientTable::new(GammaConfig::new(gamma, n)?);
    analytic_variance_terms_with(&table, p)
}

/// Exact binomial sums for a prebuilt table.
pub fn analytic_variance_terms_with(table: &CoefficientTable, p: f64) -> Result<VarianceTerms> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain("analytic_variance_terms", format!("p = {p} not in [0, 1]")));
    }
    let n = table.n();
    let pmf: Vec<f64> = (0..=n).map(|k| bernstein_basis(k, n, p)).collect();
    let mean: f64 = (1..=n).map(|k| pmf[k] * table.alpha(k)).sum();
    let mut var_a_k = pmf[0] * mean * mean;
    let mut e_a2_over_k = 0.0;
    for k in 1..=n {
        let a = table.alpha(k);
        var_a_k += pmf[k] * (a - mean) * (a - mean);
        e_a2_over_k += pmf[k] * a * a / k as f64;
    }
    Ok(VarianceTerms {
        var_a_k,
        e_a2_over_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::weight_series;
    use approx::assert_relative_eq;

    #[test]
    fn enumerated_examples() {
        let t = analytic_variance_terms(0.5, 1.0, 2).unwrap();
        assert_relative_eq!(t.var_a_k, 0.1875, max_relative = 1e-14);
        assert_relative_eq!(t.e_a2_over_k, 0.625, max_relative = 1e-14);
        let t = analytic_variance_terms(0.5, 0.0, 2).unwrap();
        assert_relative_eq!(t.var_a_k, 0.125, max_relative = 1e-14);
        assert_relative_eq!(t.e_a2_over_k, 0.25, max_relative = 1e-14);
    }

    #[test]
    fn certain_success() {
        for n in [1, 4, 32] {
            let t = analytic_variance_terms(1.0, 1.0, n).unwrap();
            assert!(t.var_a_k.abs() <= 1e-15);
            assert_relative_eq!(t.e_a2_over_k, 1.0 / n as f64, max_relative = 1e-14);
        }
        let t = analytic_variance_terms(0.0, 2.0, 8).unwrap();
        assert_eq!((t.var_a_k, t.e_a2_over_k), (0.0, 0.0));
    }

    #[test]
    fn two_point_and_binomial_laws() {
        for n in [2, 8, 32] {
            for p in [0.05f64, 0.3, 0.7] {
                let q0 = (1.0 - p).powi(n as i32);
                let t = analytic_variance_terms(p, 1.0, n).unwrap();
                assert_relative_eq!(t.var_a_k, q0 * (1.0 - q0), max_relative = 1e-12);
                let t = analytic_variance_terms(p, 0.0, n).unwrap();
                assert_relative_eq!(t.var_a_k, p * (1.0 - p) / n as f64, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn mean_of_scale_is_p_times_weight() {
        // E[a_K] = p w(p) gives an independent check of the pmf sums
        for gamma in [0.0, 0.5, 1.0, 2.0, 3.5] {
            for n in [1, 2, 8, 32] {
                for p in [0.02, 0.3, 0.9] {
                    let table = CoefficientTable::new(GammaConfig::new(gamma, n).unwrap());
                    let e: f64 = (1..=n).map(|k| bernstein_basis(k, n, p) * table.alpha(k)).sum();
                    let w = weight_series(gamma, n, p).w;
                    assert_relative_eq!(e, p * w, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_probability() {
        assert!(analytic_variance_terms(1.5, 1.0, 4).is_err());
        assert!(analytic_variance_terms(f64::NAN, 1.0, 4).is_err());
    }
}
