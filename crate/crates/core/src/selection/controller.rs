use rayon::prelude::*;

use super::curves::{ab_curves, u_value, variance_proxy_stored};
use super::stats::{CalibrationStats, Metric};
use crate::error::{Error, Result};

/// Lower projection bound for Newton when the interval starts at γ = 0,
/// where the derivatives are undefined.
pub const NEWTON_GAMMA_FLOOR: f64 = 1e-3;
/// Newton stops once |F'| falls below this.
pub const FP_TOL: f64 = 1e-10;
/// Objective values closer than this (relative to max(1, |best|)) count as tied,
/// so round-off cannot pull the choice away from the smallest tied γ.
pub const TIE_REL_TOL: f64 = 1e-10;

fn tie_tol(best: f64) -> f64 {
    TIE_REL_TOL * best.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub grid_points: usize,
    pub newton_iters: usize,
    /// Warm-start target blended with the grid argmax.
    pub gamma_init: f64,
    pub lambda_var: f64,
    pub metric: Metric,
    pub a: f64,
    pub b: f64,
    pub n_rollouts: usize,
}

impl SelectionConfig {
    /// Defaults for everything except the required λ_var and N.
    pub fn new(n_rollouts: usize, lambda_var: f64) -> Self {
        Self {
            gamma_min: 1e-3,
            gamma_max: 1.5,
            grid_points: 41,
            newton_iters: 8,
            gamma_init: 0.8,
            lambda_var,
            metric: Metric::Pass1,
            a: 1.0,
            b: 1.0,
            n_rollouts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.gamma_min >= 0.0 && self.gamma_min < self.gamma_max && self.gamma_max.is_finite()) {
            return bad(format!(
                "need 0 <= gamma_min < gamma_max, got [{}, {}]",
                self.gamma_min, self.gamma_max
            ));
        }
        if self.grid_points < 2 {
            return bad(format!("grid_points must be at least 2, got {}", self.grid_points));
        }
        if !(self.lambda_var >= 0.0 && self.lambda_var.is_finite()) {
            return bad(format!("lambda_var must be finite and nonnegative, got {}", self.lambda_var));
        }
        if !self.gamma_init.is_finite() {
            return bad("gamma_init must be finite".into());
        }
        if !(self.a > 0.0 && self.b > 0.0) {
            return bad(format!("smoothing a, b must be positive, got {}, {}", self.a, self.b));
        }
        if self.n_rollouts == 0 {
            return bad("rollout budget N must be at least 1".into());
        }
        self.metric.validate()
    }

    pub fn grid(&self) -> Vec<f64> {
        let m = self.grid_points - 1;
        (0..=m)
            .map(|i| {
                if i == m {
                    self.gamma_max
                } else {
                    self.gamma_min + (self.gamma_max - self.gamma_min) * i as f64 / m as f64
                }
            })
            .collect()
    }

    fn newton_bounds(&self) -> (f64, f64) {
        let lo = if self.gamma_min > 0.0 {
            self.gamma_min
        } else {
            NEWTON_GAMMA_FLOOR.min(0.5 * self.gamma_max)
        };
        (lo, self.gamma_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub gamma: f64,
    pub u: f64,
    pub r: f64,
    /// U − λ_var √R
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStep {
    /// 0 for the blended warm start, then one per extra grid candidate.
    pub run: usize,
    pub gamma: f64,
    pub f: f64,
    pub f_prime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChosenBy {
    Grid,
    Newton,
    Boundary,
}

impl ChosenBy {
    pub fn as_str(self) -> &'static str {
        match self {
            ChosenBy::Grid => "grid",
            ChosenBy::Newton => "newton",
            ChosenBy::Boundary => "boundary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub gamma_star: f64,
    pub objective_star: f64,
    pub trace: Vec<TracePoint>,
    pub newton_path: Vec<NewtonStep>,
    pub chosen_by: ChosenBy,
}

/// Index of the grid maximum, preferring the smallest γ among near-ties.
fn tie_broken_argmax(values: &[f64]) -> usize {
    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|v| *v >= best - tie_tol(best)).unwrap_or(0)
}

/// Projected Newton on F(γ) = 2A'B − AB'. Returns the final iterate.
fn newton(
    stats: &CalibrationStats,
    config: &SelectionConfig,
    start: f64,
    run: usize,
    path: &mut Vec<NewtonStep>,
) -> Result<f64> {
    let (lo, hi) = config.newton_bounds();
    let n = config.n_rollouts;
    let mut gamma = start.clamp(lo, hi);
    for _ in 0..config.newton_iters {
        let c = ab_curves(stats, gamma, n)?;
        let (f, fp) = (c.f()?, c.f_prime()?);
        path.push(NewtonStep {
            run,
            gamma,
            f,
            f_prime: fp,
        });
        if f == 0.0 || fp.abs() < FP_TOL {
            return Ok(gamma);
        }
        let next = (gamma - f / fp).clamp(lo, hi);
        if !next.is_finite() {
            return Ok(gamma);
        }
        gamma = next;
    }
    let c = ab_curves(stats, gamma, n)?;
    path.push(NewtonStep {
        run,
        gamma,
        f: c.f()?,
        f_prime: c.f_prime()?,
    });
    Ok(gamma)
}

/// Grid search over the penalized objective, refined by projected Newton on
/// the unpenalized U when λ_var = 0.
pub fn select_gamma(stats: &CalibrationStats, config: &SelectionConfig) -> Result<SelectionResult> {
    config.validate()?;
    if stats.is_empty() {
        return Err(Error::EmptyInput("calibration statistics contain no prompts".into()));
    }
    let n = config.n_rollouts;
    let lambda = config.lambda_var;
    let trace = config
        .grid()
        .into_par_iter()
        .map(|gamma| {
            let u = u_value(stats, gamma, n)?;
            let r = variance_proxy_stored(stats, gamma, n)?;
            Ok(TracePoint {
                gamma,
                u,
                r,
                objective: u - lambda * r.sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = trace.iter().map(|t| t.objective).collect();
    let best = tie_broken_argmax(&values);
    let mut gamma_star = trace[best].gamma;
    let mut objective_star = trace[best].objective;
    let mut chosen_by = if best == 0 || best + 1 == trace.len() {
        ChosenBy::Boundary
    } else {
        ChosenBy::Grid
    };

    let mut newton_path = Vec::new();
    if lambda == 0.0 {
        let (lo, hi) = config.newton_bounds();
        let blended = (0.5 * gamma_star + 0.5 * config.gamma_init).clamp(lo, hi);
        let mut order: Vec<usize> = (0..trace.len()).collect();
        order.sort_by(|i, j| values[*j].total_cmp(&values[*i]).then(i.cmp(j)));
        let mut starts = vec![blended];
        starts.extend(order.iter().take(3).map(|i| trace[*i].gamma));
        for (run, start) in starts.into_iter().enumerate() {
            let g = newton(stats, config, start, run, &mut newton_path)?;
            let u = u_value(stats, g, n)?;
            if u > objective_star + tie_tol(objective_star) {
                gamma_star = g;
                objective_star = u;
                chosen_by = ChosenBy::Newton;
            }
        }
    }
    Ok(SelectionResult {
        gamma_star,
        objective_star,
        trace,
        newton_path,
        chosen_by,
    })
}

/// Smoothed counts → stats → [`select_gamma`].
pub fn select_gamma_from_counts(ks: &[usize], config: &SelectionConfig) -> Result<SelectionResult> {
    config.validate()?;
    let stats = CalibrationStats::from_counts(ks, config.n_rollouts, config.metric, config.a, config.b)?;
    select_gamma(&stats, config)
}
