//! Choosing γ from calibration statistics: the metric-gain curve U, the
//! variance proxy R, the penalized grid/Newton controller, reward ingestion
//! and learning-rate calibration by advantage RMS.

mod arms;
mod controller;
mod curves;
mod ingest;
mod stats;

pub use arms::{arms, broadcast_to_tokens, calibrate_lr, ema};
pub use controller::{
    select_gamma, select_gamma_from_counts, ChosenBy, NewtonStep, SelectionConfig, SelectionResult,
    TracePoint, FP_TOL, NEWTON_GAMMA_FLOOR, TIE_REL_TOL,
};
pub use curves::{ab_curves, u_prime, u_value, variance_proxy, variance_proxy_stored, AbCurves, AbDerivs, B_FLOOR};
pub use ingest::{
    collect_k_by_id, collect_k_contiguous, counts_to_ks, parse_counts, read_counts, write_counts,
    CountRecord, COUNTS_HEADER,
};
pub use stats::{ell_proxy, metric_marginal, smooth_p_hat, CalibrationStats, Metric, PromptStats, Provenance};
