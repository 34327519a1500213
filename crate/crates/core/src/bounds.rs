//! Determinant bounds and estimators for partially observed Gram matrices.
//!
//! Three results drive this module. With `G = G_A + G_B` split into an
//! observed and an unobserved part:
//!
//! * a deterministic sandwich: `log det G_A ≤ log det G ≤ Σ_i log(λ_i(G_A) + β)`
//!   where `β` bounds the spectral radius of `G_B`;
//! * a stochastic scaling estimate for i.i.d. columns:
//!   `L̂ = log det G_A + m · log(n_total / n_observed)`, with a CLT-based
//!   confidence interval of half-width `z_{α/2} · σ · √(1/n_A − 1/n_k)`;
//! * a sample-size rule inverting that half-width: `n_A ≈ (z_{α/2} σ / ε)²`.
//!
//! The variance scale `σ` is the standard deviation of the Mahalanobis
//! statistic `Z = vᵀ Ĉ⁻¹ v` under the plug-in covariance `Ĉ = G_A / n_A`,
//! which satisfies `E[Z] = m` exactly. The overestimation ratio quantifies
//! how anisotropy inflates the upper bound track.

use crate::gram::{EmbeddingBlock, GramSummary, N_TOTAL_UNKNOWN};
use crate::linalg::{
    logdet_from_spectrum, psd_inverse, shifted_logdet_report, sym_eigenvalues, LinalgError,
    Spectrum, SymmetricMatrix,
};
use std::fmt;

/// Fallback shift when the observed Gram matrix is singular; matches the
/// monitoring default so bound reports stay comparable across modules.
pub const DEFAULT_SHIFT: f64 = 1e-3;

#[derive(Debug)]
pub enum BoundsError {
    BadAlpha(f64),
    BadEpsilon(f64),
    BadCounts { n_observed: u64, n_total: u64 },
    /// The plug-in covariance is not invertible; the observed block is
    /// rank-deficient (needs n_observed > m in general position).
    SingularCovariance,
    DomainError(String),
    Linalg(LinalgError),
}

impl fmt::Display for BoundsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundsError::BadAlpha(a) => write!(f, "alpha {a} outside (0, 1)"),
            BoundsError::BadEpsilon(e) => write!(f, "epsilon {e} must be positive"),
            BoundsError::BadCounts { n_observed, n_total } => {
                write!(f, "bad counts: n_observed {n_observed} vs n_total {n_total}")
            }
            BoundsError::SingularCovariance => {
                write!(f, "plug-in covariance is singular; need more observed columns than dims")
            }
            BoundsError::DomainError(msg) => write!(f, "domain error: {msg}"),
            BoundsError::Linalg(e) => write!(f, "linear algebra failure: {e}"),
        }
    }
}

impl std::error::Error for BoundsError {}

impl From<LinalgError> for BoundsError {
    fn from(e: LinalgError) -> Self {
        BoundsError::Linalg(e)
    }
}

/// Both sides of the deterministic sandwich, plus the shift that made a
/// singular observed matrix reportable. `delta_used` is 0 for full-rank
/// inputs; near collapse it records the jitter actually applied, never
/// hiding that the bound is shifted.
#[derive(Debug, Clone)]
pub struct DeterministicBoundReport {
    pub logdet_lower: f64,
    pub logdet_upper: f64,
    pub beta_used: f64,
    pub observed_spectrum: Spectrum,
    pub delta_used: f64,
}

/// Sandwich the full-corpus log-determinant from the observed summary and a
/// spectral budget `beta ≥ λ_max(G_B)`:
/// `logdet_lower = log det(G_A + δI)` and
/// `logdet_upper = Σ_i log(λ_i(G_A) + β + δ)`, with `δ = 0` unless `G_A` is
/// singular, in which case the default shift (escalated as needed) is used
/// on both sides and recorded.
pub fn deterministic_bounds(
    summary: &GramSummary,
    beta: f64,
) -> Result<DeterministicBoundReport, BoundsError> {
    if !(beta >= 0.0) {
        return Err(BoundsError::DomainError(format!("negative beta {beta}")));
    }
    let g = &summary.gram_observed;
    let spectrum = sym_eigenvalues(g)?.clamp_psd(g.inf_norm())?;

    let strict = if spectrum.min() > 0.0 { shifted_logdet_report(g, 0.0).ok() } else { None };
    let (logdet_lower, delta_used) = match strict {
        Some(r) => (r.value, r.delta_used),
        None => {
            let r = shifted_logdet_report(g, DEFAULT_SHIFT)?;
            (r.value, r.delta_used)
        }
    };
    let logdet_upper = logdet_from_spectrum(&spectrum, beta + delta_used)?;
    debug_assert!(logdet_lower <= logdet_upper + 1e-9);
    Ok(DeterministicBoundReport {
        logdet_lower,
        logdet_upper,
        beta_used: beta,
        observed_spectrum: spectrum,
        delta_used,
    })
}

/// Exact spectral radius of the unobserved block's Gram matrix,
/// `λ_max(B·Bᵀ)`. Only verification paths can afford this; monitoring uses
/// the count-based budget instead.
pub fn beta_exact(unobserved: &EmbeddingBlock) -> Result<f64, BoundsError> {
    if unobserved.is_empty() {
        return Err(BoundsError::DomainError("beta_exact needs a nonempty block".into()));
    }
    let mut gram = SymmetricMatrix::zeros(unobserved.dim());
    for j in 0..unobserved.count() {
        gram.add_outer(unobserved.column(j), 1.0);
    }
    let spectrum = sym_eigenvalues(&gram)?.clamp_psd(gram.inf_norm())?;
    Ok(spectrum.max())
}

/// The scaling estimator with its confidence interval. `l_hat` is absent
/// when the corpus total is unknown; the half-width is still meaningful
/// because `√(1/n_A − 1/n_k)` degrades to `1/√n_A` as `n_k → ∞`.
#[derive(Debug, Clone)]
pub struct ScalingEstimate {
    pub l_hat: Option<f64>,
    /// `log det(G_A + δI)`, the observed-side anchor of the estimate.
    pub observed_logdet: f64,
    pub sigma_hat: f64,
    pub alpha: f64,
    pub ci_half_width: f64,
    pub n_observed: u64,
    /// `None` when the summary carried the unknown-total sentinel.
    pub n_total: Option<u64>,
    pub delta_used: f64,
}

impl ScalingEstimate {
    /// `[l_hat − w, l_hat + w]`; absent when the corpus total is unknown.
    pub fn interval(&self) -> Option<(f64, f64)> {
        self.l_hat.map(|l| (l - self.ci_half_width, l + self.ci_half_width))
    }

    /// Observed-block size needed to hit half-width `epsilon` at this
    /// estimate's variance scale and confidence level.
    pub fn required_n_observed_for(&self, epsilon: f64) -> Result<u64, BoundsError> {
        required_sample_size(self.sigma_hat, epsilon, self.alpha)
    }
}

/// Extrapolate the observed log-determinant to the full corpus:
/// `L̂ = log det(G_A + δI) + m · log(n_total / n_observed)`, with the CLT
/// interval `L̂ ± z_{α/2} · σ̂ · √(1/n_observed − 1/n_total)`.
pub fn scaling_estimate(
    summary: &GramSummary,
    sigma_hat: f64,
    alpha: f64,
    delta: f64,
) -> Result<ScalingEstimate, BoundsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BoundsError::BadAlpha(alpha));
    }
    if !(sigma_hat >= 0.0) {
        return Err(BoundsError::DomainError(format!("negative sigma_hat {sigma_hat}")));
    }
    let n_a = summary.n_observed;
    let n_k = summary.n_total;
    if n_a < 1 || n_a > n_k {
        return Err(BoundsError::BadCounts { n_observed: n_a, n_total: n_k });
    }
    let report = shifted_logdet_report(&summary.gram_observed, delta)?;
    let m = summary.dim() as f64;
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let (l_hat, n_total, spread) = if n_k == N_TOTAL_UNKNOWN {
        (None, None, (1.0 / n_a as f64).sqrt())
    } else {
        let ratio = n_k as f64 / n_a as f64;
        let spread = (1.0 / n_a as f64 - 1.0 / n_k as f64).sqrt();
        (Some(report.value + m * ratio.ln()), Some(n_k), spread)
    };
    Ok(ScalingEstimate {
        l_hat,
        observed_logdet: report.value,
        sigma_hat,
        alpha,
        ci_half_width: z * sigma_hat * spread,
        n_observed: n_a,
        n_total,
        delta_used: report.delta_used,
    })
}

/// Mahalanobis scores `Z_j = v_jᵀ Ĉ⁻¹ v_j` of the observed columns under
/// the plug-in covariance `Ĉ = G_A / n_observed`. Their mean is exactly
/// `m · (n−1)/n + 1/n`-close to `m`; their spread calibrates the CI.
pub fn mahalanobis_scores(observed: &EmbeddingBlock) -> Result<Vec<f64>, BoundsError> {
    let m = observed.dim();
    let n = observed.count();
    if n <= m {
        return Err(BoundsError::BadCounts { n_observed: n as u64, n_total: m as u64 });
    }
    let mut gram = SymmetricMatrix::zeros(m);
    for j in 0..n {
        gram.add_outer(observed.column(j), 1.0);
    }
    let cov = gram.scale(1.0 / n as f64);
    let inv = match psd_inverse(&cov) {
        Ok(inv) => inv,
        Err(LinalgError::CholeskyFailure { .. }) => return Err(BoundsError::SingularCovariance),
        Err(e) => return Err(e.into()),
    };
    Ok((0..n)
        .map(|j| {
            let v = observed.column(j);
            let iv = inv.mul_vec(v);
            v.iter().zip(&iv).map(|(a, b)| a * b).sum()
        })
        .collect())
}

/// Sample standard deviation of the Mahalanobis scores; the `σ` plugged
/// into the scaling estimate's interval.
pub fn estimate_sigma(observed: &EmbeddingBlock) -> Result<f64, BoundsError> {
    let scores = mahalanobis_scores(observed)?;
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let ss: f64 = scores.iter().map(|z| (z - mean) * (z - mean)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}

/// Observed-block size achieving CI half-width `epsilon`:
/// `ceil((z_{α/2} · σ / ε)²)`, at least 1.
pub fn required_sample_size(sigma_hat: f64, epsilon: f64, alpha: f64) -> Result<u64, BoundsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BoundsError::BadAlpha(alpha));
    }
    if !(epsilon > 0.0) {
        return Err(BoundsError::BadEpsilon(epsilon));
    }
    if !(sigma_hat >= 0.0) {
        return Err(BoundsError::DomainError(format!("negative sigma_hat {sigma_hat}")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let raw = (z * sigma_hat / epsilon).powi(2);
    Ok((raw.ceil() as u64).max(1))
}

/// How much the spectral scaling heuristic overshoots under anisotropy:
/// `R = ∏_j (f + (1−f) · λ_max(C)/λ_j(C))` at sample fraction `f`. Equals 1
/// for isotropic covariance or full observation, and grows with condition
/// number.
pub fn overestimation_ratio(cov_spectrum: &Spectrum, sample_fraction: f64) -> Result<f64, BoundsError> {
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(BoundsError::DomainError(format!(
            "sample fraction {sample_fraction} outside (0, 1]"
        )));
    }
    let lambda_max = cov_spectrum.max();
    let mut ratio = 1.0;
    for &l in cov_spectrum.eigenvalues() {
        if !(l > 0.0) {
            return Err(BoundsError::DomainError(format!("non-positive eigenvalue {l}")));
        }
        ratio *= sample_fraction + (1.0 - sample_fraction) * lambda_max / l;
    }
    Ok(ratio)
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal inverse CDF, absolute error below 1e-8: a rational
/// approximation in three regimes, then one Halley step against the
/// erfc-based CDF.
pub fn normal_quantile(p: f64) -> Result<f64, BoundsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(BoundsError::DomainError(format!("quantile argument {p} outside (0, 1)")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    // One Halley step against the exact CDF.
    let err = normal_cdf(x) - p;
    let u = err * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x -= u / (1.0 + x * u / 2.0);
    Ok(x)
}
