//! Spectral monitoring of embedding corpora.
//!
//! The library tracks the volume of an embedding cloud through the
//! log-determinant of its Gram matrix and exposes two kinds of machinery
//! around that quantity:
//!
//! * certified deterministic bounds that sandwich the full-corpus
//!   log-determinant from a partial view, and
//! * stochastic estimators with confidence intervals that scale a
//!   subsample's log-determinant up to the full corpus.
//!
//! On top of those sit streaming collapse diagnostics (drift of two upper
//! bound tracks across generations), cheap token-level proxies
//! (distinct-n, concentration indices), and a simulation toolkit that
//! exercises every bound against synthetic ground truth.

// Negated float comparisons are deliberate: `!(x > 0.0)` rejects NaN,
// `x <= 0.0` lets it through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod rng;
pub mod linalg;
pub mod gram;
pub mod bounds;
pub mod sigma_ub;
pub mod proxies;
pub mod simgen;

pub use bounds::{BoundsError, DeterministicBoundReport, ScalingEstimate};
pub use gram::{EmbeddingBlock, GramError, GramSummary};
pub use linalg::{LinalgError, LogDet, Spectrum, SymmetricMatrix};
pub use proxies::{ProxyError, ProxyStats, TokenizedCorpus};
pub use rng::CounterRng;
pub use sigma_ub::{
    DriftPoint, DriftSeries, DriftSummary, MonitorConfig, MonitorError, TrackMetrics,
};
pub use simgen::{CollapseSchedule, CovarianceModel, ScheduleMode, SimError, SuiteOutcome};
