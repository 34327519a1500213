//! Upper-bound collapse monitoring across corpus checkpoints.
//!
//! From each checkpoint's observed summary `(G_A, n_A, n_k)` the monitor
//! derives a worst-case tail-energy budget `β̂ = (n_k − n_A)·ρ` (every
//! unobserved column can contribute at most `ρ` of squared norm to any
//! direction) and two scalar tracks:
//!
//! * Track I, the envelope gain
//!   `G_KF = log det(G_A + (β̂+δ)I) − m·log(β̂+δ) = Σ_i log(1 + λ_i/(β̂+δ))`,
//!   the certified upper envelope's excess over its own floor;
//! * Track II, the covariance-normalized statistic
//!   `U_LLN,cov = log det(G_A + δI) − m·log n_A`, a consistent log-volume
//!   proxy that is independent of the corpus total.
//!
//! Collapse shows up as drift of these tracks against a baseline
//! checkpoint; the series report carries final drifts and least-squares
//! slopes per track. Track I depends on the checkpoint's own total count
//! through `β̂`, so when totals grow its drift mixes spectral change with
//! corpus growth; Track II is count-free by construction and saturates at
//! the floor `m·log δ − m·log n_A` when the observed spectrum dies.

use crate::gram::GramSummary;
use crate::linalg::{shifted_logdet_report, LinalgError};
use std::fmt;

#[derive(Debug)]
pub enum MonitorError {
    BadConfig(String),
    BadCounts { n_observed: u64, n_total: u64 },
    EmptySeries,
    NonMonotoneCheckpoints { index: usize },
    /// Drift comparability needs one fixed observed-block size per series.
    MixedObservedCounts { index: usize, expected: u64, got: u64 },
    CapMismatch { index: usize, expected: f64, got: f64 },
    DimMismatch { index: usize, expected: usize, got: usize },
    BaselineMismatch { expected: u64, got: u64 },
    Metric { checkpoint: u64, source: LinalgError },
}

impl fmt::Display for MonitorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonitorError::BadConfig(msg) => write!(f, "bad monitor config: {msg}"),
            MonitorError::BadCounts { n_observed, n_total } => {
                write!(f, "bad counts: n_observed {n_observed} vs n_total {n_total}")
            }
            MonitorError::EmptySeries => write!(f, "empty checkpoint series"),
            MonitorError::NonMonotoneCheckpoints { index } => {
                write!(f, "checkpoints must be strictly increasing (violated at index {index})")
            }
            MonitorError::MixedObservedCounts { index, expected, got } => write!(
                f,
                "observed-block size must be fixed per series: index {index} has {got}, expected {expected}"
            ),
            MonitorError::CapMismatch { index, expected, got } => write!(
                f,
                "summary at index {index} was built under energy cap {got}, config says {expected}"
            ),
            MonitorError::DimMismatch { index, expected, got } => {
                write!(f, "dimension changed at index {index}: {got} vs {expected}")
            }
            MonitorError::BaselineMismatch { expected, got } => {
                write!(f, "series starts at checkpoint {got}, config baseline is {expected}")
            }
            MonitorError::Metric { checkpoint, source } => {
                write!(f, "metric failed at checkpoint {checkpoint}: {source}")
            }
        }
    }
}

impl std::error::Error for MonitorError {}

/// Knobs shared by every checkpoint of a monitoring run. The same `delta`
/// must be reused across a series; changing it mid-run would make drifts
/// incomparable.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig {
    pub delta: f64,
    pub energy_cap: f64,
    pub alpha: f64,
    pub n_observed_target: u64,
    pub baseline_checkpoint: u64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            energy_cap: 1.0,
            alpha: 0.05,
            n_observed_target: 2000,
            baseline_checkpoint: 0,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<(), MonitorError> {
        if !(self.delta > 0.0) {
            return Err(MonitorError::BadConfig(format!("delta {} must be positive", self.delta)));
        }
        if !(self.energy_cap > 0.0) {
            return Err(MonitorError::BadConfig(format!(
                "energy cap {} must be positive",
                self.energy_cap
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(MonitorError::BadConfig(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Worst-case spectral budget for the unobserved block: each of the
/// `n_total − n_observed` missing columns adds at most `energy_cap` to any
/// eigenvalue, so `β̂ = (n_total − n_observed)·energy_cap ≥ λ_max(G_B)`.
pub fn beta_budget(n_total: u64, n_observed: u64, energy_cap: f64) -> Result<f64, MonitorError> {
    if !(energy_cap > 0.0) {
        return Err(MonitorError::BadConfig(format!("energy cap {energy_cap} must be positive")));
    }
    if n_observed > n_total {
        return Err(MonitorError::BadCounts { n_observed, n_total });
    }
    Ok((n_total - n_observed) as f64 * energy_cap)
}

/// One checkpoint's monitoring output. `delta_used` and
/// `jitter_escalations` surface what the factorization had to do: a rising
/// escalation count is itself a collapse symptom, not a detail to hide.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackMetrics {
    pub checkpoint: u64,
    /// `log det(G_A + δI)` at the configured shift.
    pub s_k: f64,
    pub beta_hat: f64,
    /// Track I: envelope gain, always nonnegative.
    pub g_kf: f64,
    /// Track II: `s_k − m·log n_observed`.
    pub u_lln_cov: f64,
    pub delta_used: f64,
    pub jitter_escalations: u32,
}

/// Compute both tracks for one summary under the given config.
pub fn track_metrics(
    summary: &GramSummary,
    config: &MonitorConfig,
) -> Result<TrackMetrics, MonitorError> {
    config.validate()?;
    let ck = summary.checkpoint;
    let m = summary.dim() as f64;
    let beta_hat = beta_budget(summary.n_total, summary.n_observed, config.energy_cap)?;

    let wrap = |e: LinalgError| MonitorError::Metric { checkpoint: ck, source: e };
    let s_report = shifted_logdet_report(&summary.gram_observed, config.delta).map_err(wrap)?;
    let g_report =
        shifted_logdet_report(&summary.gram_observed, beta_hat + config.delta).map_err(wrap)?;

    // The gain is Σ log(1 + λ_i/(β̂+δ)) ≥ 0; clamp factorization rounding.
    let g_kf = (g_report.value - m * g_report.delta_used.ln()).max(0.0);
    let u_lln_cov = s_report.value - m * (summary.n_observed as f64).ln();
    Ok(TrackMetrics {
        checkpoint: ck,
        s_k: s_report.value,
        beta_hat,
        g_kf,
        u_lln_cov,
        delta_used: s_report.delta_used,
        jitter_escalations: s_report.escalations.max(g_report.escalations),
    })
}

/// Track I alone: `log det(G_A + (β̂+δ)I) − m·log(β̂+δ)`.
pub fn track1_gain(summary: &GramSummary, config: &MonitorConfig) -> Result<f64, MonitorError> {
    track_metrics(summary, config).map(|t| t.g_kf)
}

/// Track II alone: `log det(G_A + δI) − m·log n_observed`.
pub fn track2_cov(summary: &GramSummary, config: &MonitorConfig) -> Result<f64, MonitorError> {
    track_metrics(summary, config).map(|t| t.u_lln_cov)
}

/// Drift of both tracks at one checkpoint relative to the series baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftPoint {
    pub checkpoint: u64,
    pub delta_u_lln_cov: f64,
    pub delta_g_kf: f64,
}

/// Final drifts and per-track least-squares slopes of a drift curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSummary {
    pub ols_slope_track1: f64,
    pub ols_slope_track2: f64,
    pub final_drift_track1: f64,
    pub final_drift_track2: f64,
}

/// Unweighted least-squares slopes of drift against checkpoint index over
/// all points, baseline included; final drifts are the last point's values.
/// A single-point series has slope 0 by convention.
pub fn summarize_drifts(points: &[DriftPoint]) -> DriftSummary {
    let n = points.len() as f64;
    let last = points.last().expect("summarize_drifts needs at least one point");
    let mean_x = points.iter().map(|p| p.checkpoint as f64).sum::<f64>() / n;
    let mut sxx = 0.0;
    let (mut sxg, mut sxu) = (0.0, 0.0);
    for p in points {
        let dx = p.checkpoint as f64 - mean_x;
        sxx += dx * dx;
        sxg += dx * p.delta_g_kf;
        sxu += dx * p.delta_u_lln_cov;
    }
    let (slope_g, slope_u) = if sxx > 0.0 { (sxg / sxx, sxu / sxx) } else { (0.0, 0.0) };
    DriftSummary {
        ols_slope_track1: slope_g,
        ols_slope_track2: slope_u,
        final_drift_track1: last.delta_g_kf,
        final_drift_track2: last.delta_u_lln_cov,
    }
}

/// A full monitoring run: per-checkpoint metrics, drifts against the
/// baseline (first checkpoint), and the drift summary.
#[derive(Debug, Clone)]
pub struct DriftSeries {
    pub baseline: TrackMetrics,
    pub metrics: Vec<TrackMetrics>,
    pub points: Vec<DriftPoint>,
    pub ols_slope_track1: f64,
    pub ols_slope_track2: f64,
    pub final_drift_track1: f64,
    pub final_drift_track2: f64,
}

/// Run the monitoring loop over an ordered checkpoint series. The first
/// summary is the baseline; checkpoints must strictly increase and the
/// observed-block size, dimension, and energy cap must stay fixed.
pub fn monitor_series(
    summaries: &[GramSummary],
    config: &MonitorConfig,
) -> Result<DriftSeries, MonitorError> {
    config.validate()?;
    let first = summaries.first().ok_or(MonitorError::EmptySeries)?;
    if first.checkpoint != config.baseline_checkpoint {
        return Err(MonitorError::BaselineMismatch {
            expected: config.baseline_checkpoint,
            got: first.checkpoint,
        });
    }
    for (i, s) in summaries.iter().enumerate() {
        if i > 0 && s.checkpoint <= summaries[i - 1].checkpoint {
            return Err(MonitorError::NonMonotoneCheckpoints { index: i });
        }
        if s.n_observed != first.n_observed {
            return Err(MonitorError::MixedObservedCounts {
                index: i,
                expected: first.n_observed,
                got: s.n_observed,
            });
        }
        if s.dim() != first.dim() {
            return Err(MonitorError::DimMismatch {
                index: i,
                expected: first.dim(),
                got: s.dim(),
            });
        }
        if (s.energy_cap - config.energy_cap).abs() > 1e-12 {
            return Err(MonitorError::CapMismatch {
                index: i,
                expected: config.energy_cap,
                got: s.energy_cap,
            });
        }
    }

    let metrics: Vec<TrackMetrics> = summaries
        .iter()
        .map(|s| track_metrics(s, config))
        .collect::<Result<_, _>>()?;
    let baseline = metrics[0].clone();
    let points: Vec<DriftPoint> = metrics
        .iter()
        .map(|t| DriftPoint {
            checkpoint: t.checkpoint,
            delta_u_lln_cov: t.u_lln_cov - baseline.u_lln_cov,
            delta_g_kf: t.g_kf - baseline.g_kf,
        })
        .collect();
    let summary = summarize_drifts(&points);
    Ok(DriftSeries {
        baseline,
        metrics,
        points,
        ols_slope_track1: summary.ols_slope_track1,
        ols_slope_track2: summary.ols_slope_track2,
        final_drift_track1: summary.final_drift_track1,
        final_drift_track2: summary.final_drift_track2,
    })
}

/// Parse a drift-table CSV (`generation,delta_u,delta_g` header, one row
/// per checkpoint) into drift points, for replaying recorded curves.
pub fn read_drift_table<R: std::io::BufRead>(
    reader: R,
) -> Result<Vec<DriftPoint>, crate::gram::io::FormatError> {
    use crate::gram::io::FormatError;
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(FormatError::BadHeader(String::new())),
        }
    };
    if header.trim() != "generation,delta_u,delta_g" {
        return Err(FormatError::BadHeader(header));
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(FormatError::WrongArity { line: line_no, expected: 3, got: fields.len() });
        }
        let bad = |field: usize| FormatError::BadField {
            line: line_no,
            field,
            text: fields[field - 1].to_string(),
        };
        let checkpoint: u64 = fields[0].trim().parse().map_err(|_| bad(1))?;
        let delta_u: f64 = fields[1].trim().parse().map_err(|_| bad(2))?;
        let delta_g: f64 = fields[2].trim().parse().map_err(|_| bad(3))?;
        points.push(DriftPoint { checkpoint, delta_u_lln_cov: delta_u, delta_g_kf: delta_g });
    }
    if points.is_empty() {
        return Err(FormatError::BadHeader("drift table has no rows".into()));
    }
    Ok(points)
}
