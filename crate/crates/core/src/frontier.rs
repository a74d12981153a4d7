//! Truncation-order analysis for the (γ, M, N) family: how large M must be
//! for a relative tail error δ at p ≥ p_min, and how large it may be before
//! the K = 1 update scale exceeds A_max.

use crate::coefficients::alpha_triad;
use crate::error::{Error, Result};
use crate::specfun::{inv_reg_upper_inc_gamma, log_gamma};

/// Linear scan up to this N, binary search above.
const SCAN_LIMIT: usize = 256;

/// Guards ceil/floor of values that are integers in exact arithmetic
/// against landing one ulp on the wrong side.
const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierSpec {
    gamma: f64,
    n: usize,
    p_min: f64,
    delta: f64,
    a_max: f64,
}

impl FrontierSpec {
    pub fn new(gamma: f64, n: usize, p_min: f64, delta: f64, a_max: f64) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(gamma > 0.0 && gamma.is_finite()) {
            return bad(format!("gamma must be positive and finite, got {gamma}"));
        }
        if n == 0 {
            return bad("rollout budget N must be at least 1".into());
        }
        if !(p_min > 0.0 && p_min <= 1.0) {
            return bad(format!("p_min must lie in (0, 1], got {p_min}"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {delta}"));
        }
        if !(a_max >= 1.0 && a_max.is_finite()) {
            return bad(format!("A_max must be finite and at least 1, got {a_max}"));
        }
        Ok(Self {
            gamma,
            n,
            p_min,
            delta,
            a_max,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrontierResult {
    pub m_need: usize,
    pub m_cap_exact: usize,
    pub m_cap_approx: usize,
    pub feasible: bool,
    /// [m_need, min(m_cap_exact, N)] when nonempty.
    pub window: Option<(usize, usize)>,
}

fn to_count(x: f64) -> usize {
    if x >= usize::MAX as f64 {
        usize::MAX
    } else {
        x as usize
    }
}

/// ⌈Q⁻¹(γ, δ)/p_min⌉, at least 1.
pub fn m_need(spec: &FrontierSpec) -> Result<usize> {
    let x = inv_reg_upper_inc_gamma(spec.gamma, spec.delta)? / spec.p_min;
    Ok(to_count((x * (1.0 - ROUNDING_SLACK)).ceil()).max(1))
}

/// Largest M ≤ N with α₁^{(γ,M,N)} ≤ A_max; 0 if no M qualifies.
pub fn m_cap_exact(spec: &FrontierSpec) -> usize {
    let n = spec.n;
    let ok = |m: usize| alpha_triad(spec.gamma, m, n, 1) <= spec.a_max;
    if n <= SCAN_LIMIT {
        return (1..=n).take_while(|m| ok(*m)).last().unwrap_or(0);
    }
    // α₁ is nondecreasing in M
    if !ok(1) {
        return 0;
    }
    let (mut lo, mut hi) = (1, n + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// ⌊(Γ(γ+1) A_max N)^{1/γ}⌋ clamped to N, from α₁ ≈ M^γ/(Γ(γ+1) N).
pub fn m_cap_approx(spec: &FrontierSpec) -> Result<usize> {
    let log = (log_gamma(spec.gamma + 1.0)? + spec.a_max.ln() + (spec.n as f64).ln()) / spec.gamma;
    let x = if log > 700.0 { f64::INFINITY } else { log.exp() };
    Ok(to_count((x * (1.0 + ROUNDING_SLACK)).floor()).min(spec.n))
}

pub fn feasible_window(spec: &FrontierSpec) -> Result<FrontierResult> {
    let need = m_need(spec)?;
    let cap = m_cap_exact(spec);
    let approx = m_cap_approx(spec)?;
    let hi = cap.min(spec.n);
    let feasible = cap >= 1 && need <= hi;
    Ok(FrontierResult {
        m_need: need,
        m_cap_exact: cap,
        m_cap_approx: approx,
        feasible,
        window: feasible.then_some((need, hi)),
    })
}

/// Frontier rows for a γ grid at fixed (N, p_min, δ, A_max).
pub fn frontier_sweep(
    gammas: &[f64],
    n: usize,
    p_min: f64,
    delta: f64,
    a_max: f64,
) -> Result<Vec<(f64, FrontierResult)>> {
    gammas
        .iter()
        .map(|g| Ok((*g, feasible_window(&FrontierSpec::new(*g, n, p_min, delta, a_max)?)?)))
        .collect()
}
