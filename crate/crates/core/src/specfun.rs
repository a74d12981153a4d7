//! Real special functions on the positive axis: log-gamma, digamma, trigamma
//! and the regularized upper incomplete gamma function with its inverse.
//!
//! Only positive, well-conditioned arguments occur in the coefficient and
//! selection code, so nothing here handles reflection to negative arguments.

use crate::error::{domain, Error, Result};

/// Tolerance and iteration cap for the iterative evaluations
/// (incomplete gamma series/continued fraction and its inverse).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecFunConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SpecFunConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iter: 200,
        }
    }
}

impl SpecFunConfig {
    pub fn new(rel_tol: f64, max_iter: usize) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rel_tol must be positive, got {rel_tol}"
            )));
        }
        if max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(Self { rel_tol, max_iter })
    }
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// ζ(k) for k = 2..=30, used by the Taylor series of ln Γ around 1.
const ZETA: [f64; 29] = [
    1.644_934_066_848_226_4,
    1.202_056_903_159_594_3,
    1.082_323_233_711_138_2,
    1.036_927_755_143_370_0,
    1.017_343_061_984_449_1,
    1.008_349_277_381_922_8,
    1.004_077_356_197_944_3,
    1.002_008_392_826_082_2,
    1.000_994_575_127_818_1,
    1.000_494_188_604_119_5,
    1.000_246_086_553_308_0,
    1.000_122_713_347_578_5,
    1.000_061_248_135_058_7,
    1.000_030_588_236_307_0,
    1.000_015_282_259_408_7,
    1.000_007_637_197_637_9,
    1.000_003_817_293_265_0,
    1.000_001_908_212_716_6,
    1.000_000_953_962_033_9,
    1.000_000_476_932_986_8,
    1.000_000_238_450_502_7,
    1.000_000_119_219_926_0,
    1.000_000_059_608_189_1,
    1.000_000_029_803_503_5,
    1.000_000_014_901_554_8,
    1.000_000_007_450_711_8,
    1.000_000_003_725_334_0,
    1.000_000_001_862_659_7,
    1.000_000_000_931_327_4,
];

/// Stirling series coefficients B_{2k} / (2k (2k-1)), k = 1..=7.
const STIRLING: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
];

/// B_{2k} / (2k), k = 1..=7, for the digamma asymptotic series.
const DIGAMMA_ASYMP: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
];

/// B_{2k}, k = 1..=7, for the trigamma asymptotic series.
const TRIGAMMA_ASYMP: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

fn check_positive(func: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(domain(func, format!("x = {x}, expected 0 < x < inf")))
    }
}

/// ln Γ(1 + eps) for |eps| ≤ 0.2 by its Taylor series.
fn log_gamma_near_one(eps: f64) -> f64 {
    let mut sum = 0.0;
    let mut pow = -eps;
    for (i, zeta) in ZETA.iter().enumerate() {
        let k = (i + 2) as f64;
        pow *= -eps;
        sum += zeta * pow / k;
    }
    sum - EULER_GAMMA * eps
}

fn stirling(z: f64) -> f64 {
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut corr = 0.0;
    let mut pow = inv;
    for c in STIRLING {
        corr += c * pow;
        pow *= inv2;
    }
    (z - 0.5) * z.ln() - z + HALF_LN_2PI + corr
}

/// Natural logarithm of the gamma function for x > 0.
///
/// Integers up to 20 are exact factorials; arguments near the two zeros
/// (x = 1, 2) use the Taylor series at 1 so the result keeps full relative
/// precision; everything else shifts upward to x ≥ 15 and applies Stirling.
pub fn log_gamma(x: f64) -> Result<f64> {
    check_positive("log_gamma", x)?;
    if x <= 20.0 && x.fract() == 0.0 {
        let n = x as u64;
        let fact: f64 = (1..n).map(|k| k as f64).product();
        return Ok(fact.ln());
    }
    if (x - 1.0).abs() <= 0.2 {
        return Ok(log_gamma_near_one(x - 1.0));
    }
    if (x - 2.0).abs() <= 0.2 {
        let eps = x - 2.0;
        return Ok(eps.ln_1p() + log_gamma_near_one(eps));
    }
    let mut z = x;
    let mut prod = 1.0;
    while z < 15.0 {
        prod *= z;
        z += 1.0;
    }
    Ok(stirling(z) - prod.ln())
}

/// Digamma ψ(x) = d/dx ln Γ(x) for x > 0.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma", x)?;
    let mut acc = 0.0;
    let mut z = x;
    while z < 10.0 {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let mut series = 0.0;
    let mut pow = inv2;
    for c in DIGAMMA_ASYMP {
        series += c * pow;
        pow *= inv2;
    }
    Ok(acc + z.ln() - 0.5 / z - series)
}

/// Trigamma ψ₁(x) = d²/dx² ln Γ(x) for x > 0.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive("trigamma", x)?;
    let mut acc = 0.0;
    let mut z = x;
    while z < 10.0 {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // 1/z + 1/(2z²) + Σ B_{2k} / z^{2k+1}
    let mut series = 0.0;
    let mut pow = inv * inv2;
    for c in TRIGAMMA_ASYMP {
        series += c * pow;
        pow *= inv2;
    }
    Ok(acc + inv + 0.5 * inv2 + series)
}

/// Regularized upper incomplete gamma Q(s, x) = Γ(s, x) / Γ(s) with default tolerances.
pub fn reg_upper_inc_gamma(s: f64, x: f64) -> Result<f64> {
    reg_upper_inc_gamma_with(s, x, &SpecFunConfig::default())
}

/// Q(s, x) using the lower series for x < s + 1 and the Lentz continued
/// fraction otherwise.
pub fn reg_upper_inc_gamma_with(s: f64, x: f64, cfg: &SpecFunConfig) -> Result<f64> {
    check_positive("reg_upper_inc_gamma", s)?;
    if !(x >= 0.0) {
        return Err(domain(
            "reg_upper_inc_gamma",
            format!("x = {x}, expected x >= 0"),
        ));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    // Internal convergence uses machine precision; cfg.rel_tol governs the inverse.
    let eps = f64::EPSILON;
    let log_prefactor = s * x.ln() - x - log_gamma(s)?;
    if x < s + 1.0 {
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut converged = false;
        for n in 1..=cfg.max_iter.max(1) {
            term *= x / (s + n as f64);
            sum += term;
            if term.abs() < sum.abs() * eps {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                routine: "incomplete gamma series",
                iterations: cfg.max_iter,
            });
        }
        let lower = (sum.ln() + log_prefactor).exp();
        Ok((1.0 - lower).clamp(0.0, 1.0))
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        let mut converged = false;
        for i in 1..=cfg.max_iter.max(1) {
            let i = i as f64;
            let an = -i * (i - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < eps {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                routine: "incomplete gamma continued fraction",
                iterations: cfg.max_iter,
            });
        }
        Ok((log_prefactor + h.ln()).exp().clamp(0.0, 1.0))
    }
}

/// Inverse of x ↦ Q(s, x) with default tolerances.
pub fn inv_reg_upper_inc_gamma(s: f64, q: f64) -> Result<f64> {
    inv_reg_upper_inc_gamma_with(s, q, &SpecFunConfig::default())
}

/// Solves Q(s, x) = q for x > 0.
///
/// s = 1 is answered in closed form (−ln q). Otherwise the root is bracketed
/// by doubling from the s = 1 seed, then refined with Newton steps that fall
/// back to bisection whenever they leave the bracket.
pub fn inv_reg_upper_inc_gamma_with(s: f64, q: f64, cfg: &SpecFunConfig) -> Result<f64> {
    check_positive("inv_reg_upper_inc_gamma", s)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(
            "inv_reg_upper_inc_gamma",
            format!("q = {q}, expected 0 < q < 1"),
        ));
    }
    if s == 1.0 {
        return Ok(-q.ln());
    }
    let log_gamma_s = log_gamma(s)?;
    let mut lo = 0.0_f64;
    let mut hi = (-q.ln()).max(1.0) * s.max(1.0);
    let mut steps = 0;
    while reg_upper_inc_gamma_with(s, hi, cfg)? > q {
        lo = hi;
        hi *= 2.0;
        steps += 1;
        if steps > 1100 {
            return Err(Error::NoConvergence {
                routine: "inverse incomplete gamma bracketing",
                iterations: steps,
            });
        }
    }
    // Small-x seed from P(s, x) ≈ x^s / Γ(s+1); tightens the lower end when
    // the root sits many decades below the upper bracket.
    let mut x = if lo == 0.0 {
        let mut probe = (((-q).ln_1p() + log_gamma(s + 1.0)?) / s).exp().min(0.5 * hi);
        steps = 0;
        while probe > f64::MIN_POSITIVE && reg_upper_inc_gamma_with(s, probe, cfg)? < q {
            hi = probe;
            probe *= 0.5;
            steps += 1;
            if steps > 1100 {
                return Err(Error::NoConvergence {
                    routine: "inverse incomplete gamma bracketing",
                    iterations: steps,
                });
            }
        }
        lo = probe;
        probe
    } else {
        0.5 * (lo + hi)
    };

    for _ in 0..cfg.max_iter {
        let f = reg_upper_inc_gamma_with(s, x, cfg)? - q;
        if f.abs() <= cfg.rel_tol * q {
            return Ok(x);
        }
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(x);
        }
        // dQ/dx = -x^{s-1} e^{-x} / Γ(s)
        let deriv = -((s - 1.0) * x.ln() - x - log_gamma_s).exp();
        let newton = x - f / deriv;
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if lo > 0.0 && hi > 4.0 * lo {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NoConvergence {
        routine: "inverse incomplete gamma",
        iterations: cfg.max_iter,
    })
}
