use crate::error::{Error, Result};

/// Root-mean-square advantage over response tokens:
/// √(Σ_i Σ_t m_{i,t} A_{i,t}² / Σ_i Σ_t m_{i,t}).
pub fn arms(advantages: &[Vec<f64>], masks: &[Vec<bool>]) -> Result<f64> {
    if advantages.len() != masks.len() {
        return Err(Error::InvalidConfig(format!(
            "{} advantage rows but {} mask rows",
            advantages.len(),
            masks.len()
        )));
    }
    let mut sum = 0.0;
    let mut tokens = 0usize;
    for (i, (a, m)) in advantages.iter().zip(masks).enumerate() {
        if a.len() != m.len() {
            return Err(Error::InvalidConfig(format!("sequence {i}: advantage and mask lengths differ")));
        }
        for (v, keep) in a.iter().zip(m) {
            if *keep {
                sum += v * v;
                tokens += 1;
            }
        }
    }
    if tokens == 0 {
        return Err(Error::EmptyInput("no response tokens".into()));
    }
    Ok((sum / tokens as f64).sqrt())
}

/// Copies each sequence-level advantage onto its response tokens (0 elsewhere).
pub fn broadcast_to_tokens(sequence_advantages: &[f64], masks: &[Vec<bool>]) -> Vec<Vec<f64>> {
    sequence_advantages
        .iter()
        .zip(masks)
        .map(|(a, m)| m.iter().map(|keep| if *keep { *a } else { 0.0 }).collect())
        .collect()
}

/// Exponential moving average of a series; None for an empty series.
pub fn ema(series: &[f64], decay: f64) -> Option<f64> {
    let (first, rest) = series.split_first()?;
    Some(rest.iter().fold(*first, |acc, x| decay * acc + (1.0 - decay) * x))
}

/// η_ref · clip(arms_ref / (arms_γ + ε), lo, hi).
pub fn calibrate_lr(eta_ref: f64, arms_ref: f64, arms_gamma: f64, eps_rms: f64, clip: (f64, f64)) -> Result<f64> {
    let (lo, hi) = clip;
    if !(eta_ref > 0.0) || !(eps_rms > 0.0) || !(lo <= hi) || arms_ref < 0.0 || arms_gamma < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "calibrate_lr needs eta_ref > 0, eps_rms > 0, nonnegative RMS values and lo <= hi \
             (got eta_ref = {eta_ref}, eps_rms = {eps_rms}, clip = [{lo}, {hi}])"
        )));
    }
    Ok(eta_ref * (arms_ref / (arms_gamma + eps_rms)).clamp(lo, hi))
}
