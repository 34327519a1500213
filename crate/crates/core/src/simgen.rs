//! Synthetic corpus generation and randomized verification suites.
//!
//! Columns are drawn from a Gaussian factor model x = R (Λ^{1/2} z) with
//! z ~ N(0, I), so the population covariance is C = R Λ Rᵀ and the expected
//! Gram matrix after n draws is n·C.  Collapse is modelled as a schedule on
//! the spectrum Λ: a restart schedule damps the base spectrum by a fixed
//! factor once per generation, while a carryover schedule compounds the
//! factor, λ_i^{(g)} = λ_i · f^g, driving log det C_g down linearly in g.
//!
//! The verification suites replay the identities the rest of the crate
//! depends on against brute-force oracles on randomly generated instances:
//!
//!   * Cauchy–Binet: det(M Mᵀ) = Σ_{|J| = m} det(M_J)² over all column
//!     subsets J, checked against an LU determinant of the dense Gram matrix.
//!   * The deterministic sandwich log det(G_A + δI) ≤ log det(G + δI)
//!     ≤ Σ_i log(λ_i(G_A) + β + δ) with β the true top eigenvalue of the
//!     unobserved block's Gram matrix.
//!   * The scaling law log det G ≈ log det G_A + m log(n_k / n_A), with
//!     residuals sized by σ̂ √(1/n_A − 1/n_k).
//!   * Confidence interval coverage of the scaling estimator at level α.
//!   * The budget envelope log det(G + δI) ≤ log det(G_A + (β̂ + δ)I) for
//!     per-column energy caps, and the gap bound
//!     0 ≤ env(β̂) − env(β) ≤ m log((β̂ + δ)/(β + δ)).
//!   * Flatness of t ↦ √t · ‖t G_t⁻¹ − C⁻¹‖_op, the deviation rate of the
//!     inverse Gram matrix around its population limit.
//!
//! Every suite is deterministic given its seed and reports the worst margin
//! it saw, so a failure can be replayed exactly.

use crate::bounds::{self, BoundsError};
use crate::gram::{self, EmbeddingBlock, GramError, GramSummary};
use crate::linalg::{self, LinalgError, SymmetricMatrix};
use crate::rng::CounterRng;
use crate::sigma_ub::{self, DriftSeries, MonitorConfig, MonitorError};

/// Largest row count accepted by the subset-enumeration oracle.
pub const ORACLE_MAX_DIM: usize = 6;
/// Largest column count accepted by the subset-enumeration oracle.
pub const ORACLE_MAX_COLS: usize = 16;

/// Errors raised by generators, oracles, and verification suites.
#[derive(Debug)]
pub enum SimError {
    /// Covariance model parameters are unusable.
    BadModel(String),
    /// Collapse schedule parameters are unusable.
    BadSchedule(String),
    /// A driver was called with out-of-range parameters.
    BadParams(String),
    /// Instance too large for exhaustive subset enumeration.
    TooLarge { dim: usize, cols: usize },
    Gram(GramError),
    Bounds(BoundsError),
    Monitor(MonitorError),
    Linalg(LinalgError),
}

impl std::fmt::Display for SimError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimError::BadModel(msg) => write!(f, "bad covariance model: {msg}"),
            SimError::BadSchedule(msg) => write!(f, "bad collapse schedule: {msg}"),
            SimError::BadParams(msg) => write!(f, "bad parameters: {msg}"),
            SimError::TooLarge { dim, cols } => write!(
                f,
                "instance {dim}x{cols} exceeds oracle limits \
                 {ORACLE_MAX_DIM}x{ORACLE_MAX_COLS}"
            ),
            SimError::Gram(e) => write!(f, "gram accumulation failed: {e}"),
            SimError::Bounds(e) => write!(f, "bound computation failed: {e}"),
            SimError::Monitor(e) => write!(f, "monitoring failed: {e}"),
            SimError::Linalg(e) => write!(f, "linear algebra failed: {e}"),
        }
    }
}

impl std::error::Error for SimError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            SimError::Gram(e) => Some(e),
            SimError::Bounds(e) => Some(e),
            SimError::Monitor(e) => Some(e),
            SimError::Linalg(e) => Some(e),
            _ => None,
        }
    }
}

impl From<GramError> for SimError {
    fn from(e: GramError) -> Self {
        SimError::Gram(e)
    }
}

impl From<BoundsError> for SimError {
    fn from(e: BoundsError) -> Self {
        SimError::Bounds(e)
    }
}

impl From<MonitorError> for SimError {
    fn from(e: MonitorError) -> Self {
        SimError::Monitor(e)
    }
}

impl From<LinalgError> for SimError {
    fn from(e: LinalgError) -> Self {
        SimError::Linalg(e)
    }
}

/// Population covariance C = R Λ Rᵀ with a strictly positive spectrum Λ and
/// an optional orthogonal rotation R, plus the base seed for sampling.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    dim: usize,
    eigenvalues: Vec<f64>,
    rotation: Option<Vec<f64>>,
    seed: u64,
}

/// Maximum tolerated deviation of RᵀR from the identity.
const TOL_ORTHOGONAL: f64 = 1e-10;

impl CovarianceModel {
    /// Axis-aligned model C = diag(eigenvalues).
    pub fn diagonal(eigenvalues: Vec<f64>, seed: u64) -> Result<Self, SimError> {
        if eigenvalues.is_empty() {
            return Err(SimError::BadModel("empty spectrum".to_string()));
        }
        for (i, &l) in eigenvalues.iter().enumerate() {
            if !l.is_finite() || l <= 0.0 {
                return Err(SimError::BadModel(format!(
                    "eigenvalue {i} is {l}, must be finite and positive"
                )));
            }
        }
        Ok(CovarianceModel {
            dim: eigenvalues.len(),
            eigenvalues,
            rotation: None,
            seed,
        })
    }

    /// Installs a row-major rotation matrix, rejecting non-orthogonal input.
    pub fn with_rotation(mut self, rotation: Vec<f64>) -> Result<Self, SimError> {
        let m = self.dim;
        if rotation.len() != m * m {
            return Err(SimError::BadModel(format!(
                "rotation has {} entries, expected {}",
                rotation.len(),
                m * m
            )));
        }
        for i in 0..m {
            for j in i..m {
                let mut dot = 0.0;
                for k in 0..m {
                    dot += rotation[k * m + i] * rotation[k * m + j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                if !dot.is_finite() || (dot - target).abs() > TOL_ORTHOGONAL {
                    return Err(SimError::BadModel(format!(
                        "columns {i} and {j} have inner product {dot}, \
                         not orthonormal within {TOL_ORTHOGONAL:e}"
                    )));
                }
            }
        }
        self.rotation = Some(rotation);
        Ok(self)
    }

    /// Replaces the sampling seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Keeps the rotation and seed but swaps in a new spectrum.
    pub fn with_spectrum(&self, eigenvalues: Vec<f64>) -> Result<Self, SimError> {
        if eigenvalues.len() != self.dim {
            return Err(SimError::BadModel(format!(
                "spectrum has {} entries, expected {}",
                eigenvalues.len(),
                self.dim
            )));
        }
        let mut next = CovarianceModel::diagonal(eigenvalues, self.seed)?;
        next.rotation = self.rotation.clone();
        Ok(next)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Σ_i λ_i, the expected squared norm of a sampled column.
    pub fn expected_energy(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Dense covariance C = R Λ Rᵀ.
    pub fn covariance(&self) -> SymmetricMatrix {
        self.congruence(&self.eigenvalues)
    }

    /// Dense inverse covariance C⁻¹ = R Λ⁻¹ Rᵀ.
    pub fn inverse_covariance(&self) -> SymmetricMatrix {
        let inverted: Vec<f64> = self.eigenvalues.iter().map(|l| 1.0 / l).collect();
        self.congruence(&inverted)
    }

    fn congruence(&self, diag: &[f64]) -> SymmetricMatrix {
        let m = self.dim;
        match &self.rotation {
            None => SymmetricMatrix::from_diagonal(diag),
            Some(r) => {
                let mut s = SymmetricMatrix::zeros(m);
                for i in 0..m {
                    for j in i..m {
                        let mut acc = 0.0;
                        for k in 0..m {
                            acc += r[i * m + k] * diag[k] * r[j * m + k];
                        }
                        s.set(i, j, acc);
                    }
                }
                s
            }
        }
    }
}

/// Haar-like random rotation built by orthonormalizing a Gaussian matrix.
///
/// Two passes of modified Gram–Schmidt leave RᵀR within ~1e-14 of the
/// identity, comfortably inside the model's acceptance tolerance.
pub fn random_rotation(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = CounterRng::stream(seed, 0x526f74);
    let mut cols = vec![vec![0.0f64; dim]; dim];
    for col in cols.iter_mut() {
        for x in col.iter_mut() {
            *x = rng.next_gaussian();
        }
    }
    for _pass in 0..2 {
        for j in 0..dim {
            for i in 0..j {
                let (head, tail) = cols.split_at_mut(j);
                let ci = &head[i];
                let cj = &mut tail[0];
                let dot: f64 = ci.iter().zip(cj.iter()).map(|(a, b)| a * b).sum();
                for (x, &y) in cj.iter_mut().zip(ci) {
                    *x -= dot * y;
                }
            }
            let norm: f64 = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in cols[j].iter_mut() {
                *x /= norm;
            }
        }
    }
    let mut rotation = vec![0.0; dim * dim];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..dim {
            rotation[i * dim + j] = col[i];
        }
    }
    rotation
}

/// Draws n columns x = R (Λ^{1/2} z), z ~ N(0, I), on stream `seed` of the
/// model's base seed.  Identical arguments reproduce identical blocks.
pub fn sample_block(
    model: &CovarianceModel,
    n: usize,
    seed: u64,
) -> Result<EmbeddingBlock, SimError> {
    if n == 0 {
        return Err(SimError::BadParams("cannot sample zero columns".to_string()));
    }
    let m = model.dim;
    let sqrt_l: Vec<f64> = model.eigenvalues.iter().map(|l| l.sqrt()).collect();
    let mut rng = CounterRng::stream(model.seed, seed);
    let mut data = Vec::with_capacity(m * n);
    let mut z = vec![0.0f64; m];
    for _ in 0..n {
        for (zi, s) in z.iter_mut().zip(&sqrt_l) {
            *zi = s * rng.next_gaussian();
        }
        match &model.rotation {
            None => data.extend_from_slice(&z),
            Some(r) => {
                for i in 0..m {
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += r[i * m + j] * z[j];
                    }
                    data.push(acc);
                }
            }
        }
    }
    Ok(EmbeddingBlock::from_columns(m, data)?)
}

/// Samples like [`sample_block`] but rescales any column whose squared norm
/// exceeds `energy_cap` back onto the cap sphere, so the block is valid under
/// the per-column energy budget by construction.
pub fn sample_block_capped(
    model: &CovarianceModel,
    n: usize,
    seed: u64,
    energy_cap: f64,
) -> Result<EmbeddingBlock, SimError> {
    if !energy_cap.is_finite() || energy_cap <= 0.0 {
        return Err(SimError::BadParams(format!(
            "energy cap {energy_cap} must be finite and positive"
        )));
    }
    let block = sample_block(model, n, seed)?;
    let m = block.dim();
    let mut data = Vec::with_capacity(m * n);
    for j in 0..block.count() {
        let col = block.column(j);
        let sq: f64 = col.iter().map(|x| x * x).sum();
        if sq > energy_cap {
            let scale = (energy_cap / sq).sqrt();
            data.extend(col.iter().map(|x| x * scale));
        } else {
            data.extend_from_slice(col);
        }
    }
    Ok(EmbeddingBlock::from_columns(m, data)?)
}

/// Wraps a block in a checkpoint summary, deriving the energy cap from the
/// largest observed column so validation is vacuous.  Convenience for
/// verification paths where the cap plays no role.
pub fn summarize_block(
    block: &EmbeddingBlock,
    n_total: u64,
    checkpoint: u64,
) -> Result<GramSummary, SimError> {
    let mut cap = 0.0f64;
    for j in 0..block.count() {
        let sq: f64 = block.column(j).iter().map(|x| x * x).sum();
        cap = cap.max(sq);
    }
    Ok(gram::accumulate(block, cap.max(1.0), n_total, checkpoint)?)
}

/// Determinant of a dense row-major square matrix by partial-pivot LU, with
/// exact cofactor expansions below dimension four.
pub fn dense_det(matrix: &[f64], m: usize) -> f64 {
    assert_eq!(matrix.len(), m * m, "matrix storage does not match dimension");
    match m {
        0 => 1.0,
        1 => matrix[0],
        2 => matrix[0] * matrix[3] - matrix[1] * matrix[2],
        3 => {
            matrix[0] * (matrix[4] * matrix[8] - matrix[5] * matrix[7])
                - matrix[1] * (matrix[3] * matrix[8] - matrix[5] * matrix[6])
                + matrix[2] * (matrix[3] * matrix[7] - matrix[4] * matrix[6])
        }
        _ => {
            let mut a = matrix.to_vec();
            let mut det = 1.0;
            for k in 0..m {
                let mut pivot = k;
                for i in k + 1..m {
                    if a[i * m + k].abs() > a[pivot * m + k].abs() {
                        pivot = i;
                    }
                }
                if a[pivot * m + k] == 0.0 {
                    return 0.0;
                }
                if pivot != k {
                    for j in 0..m {
                        a.swap(k * m + j, pivot * m + j);
                    }
                    det = -det;
                }
                det *= a[k * m + k];
                for i in k + 1..m {
                    let factor = a[i * m + k] / a[k * m + k];
                    for j in k + 1..m {
                        a[i * m + j] -= factor * a[k * m + j];
                    }
                }
            }
            det
        }
    }
}

/// det(M Mᵀ) through the dense Gram matrix, the comparison target for the
/// subset-enumeration oracle.
pub fn dense_gram_det(block: &EmbeddingBlock) -> f64 {
    let m = block.dim();
    let mut g = vec![0.0f64; m * m];
    for j in 0..block.count() {
        let col = block.column(j);
        for r in 0..m {
            for c in 0..m {
                g[r * m + c] += col[r] * col[c];
            }
        }
    }
    dense_det(&g, m)
}

fn for_each_subset(n: usize, k: usize, visit: &mut impl FnMut(&[usize])) {
    fn recurse(
        start: usize,
        n: usize,
        remaining: usize,
        chosen: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        if remaining == 0 {
            visit(chosen);
            return;
        }
        for i in start..=(n - remaining) {
            chosen.push(i);
            recurse(i + 1, n, remaining - 1, chosen, visit);
            chosen.pop();
        }
    }
    if k > n {
        return;
    }
    let mut chosen = Vec::with_capacity(k);
    recurse(0, n, k, &mut chosen, visit);
}

/// Σ_{|J| = m} det(M_J)² over every m-column subset of the block.
///
/// Exhaustive enumeration costs C(n, m) determinants, so instances are capped
/// at [`ORACLE_MAX_DIM`] × [`ORACLE_MAX_COLS`].  Fewer columns than rows
/// yields an empty sum, matching the rank-deficient Gram determinant.
pub fn cauchy_binet_oracle(block: &EmbeddingBlock) -> Result<f64, SimError> {
    let m = block.dim();
    let n = block.count();
    if m > ORACLE_MAX_DIM || n > ORACLE_MAX_COLS {
        return Err(SimError::TooLarge { dim: m, cols: n });
    }
    let mut sum = 0.0;
    let mut minor = vec![0.0f64; m * m];
    for_each_subset(n, m, &mut |subset| {
        for (c, &j) in subset.iter().enumerate() {
            let col = block.column(j);
            for r in 0..m {
                minor[r * m + c] = col[r];
            }
        }
        let d = dense_det(&minor, m);
        sum += d * d;
    });
    Ok(sum)
}

/// How the scheduled spectrum evolves across generations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    /// Each generation damps the base spectrum once: λ_i · f for g ≥ 1.
    Restart,
    /// Damping compounds across generations: λ_i · f^g.
    Carryover,
}

/// Spectrum schedule for a simulated collapse run.
#[derive(Debug, Clone)]
pub struct CollapseSchedule {
    pub mode: ScheduleMode,
    /// Per-generation damping factor in (0, 1].
    pub contraction_factor: f64,
    /// Number of generations after the baseline checkpoint.
    pub generations: u32,
    /// Lower clamp applied to every scheduled eigenvalue.
    pub floor: f64,
}

impl CollapseSchedule {
    pub fn validate(&self) -> Result<(), SimError> {
        if !self.contraction_factor.is_finite()
            || self.contraction_factor <= 0.0
            || self.contraction_factor > 1.0
        {
            return Err(SimError::BadSchedule(format!(
                "contraction factor {} must lie in (0, 1]",
                self.contraction_factor
            )));
        }
        if !self.floor.is_finite() || self.floor < 0.0 {
            return Err(SimError::BadSchedule(format!(
                "floor {} must be finite and nonnegative",
                self.floor
            )));
        }
        Ok(())
    }

    /// Scheduled spectrum at generation g (g = 0 is the undamped baseline).
    pub fn spectrum_at(&self, base: &[f64], generation: u32) -> Vec<f64> {
        let exponent = match self.mode {
            ScheduleMode::Restart => u32::from(generation > 0),
            ScheduleMode::Carryover => generation,
        };
        let damp = self.contraction_factor.powi(exponent as i32);
        base.iter().map(|l| (l * damp).max(self.floor)).collect()
    }
}

/// Runs a scheduled collapse: at each generation g = 0..=G it samples
/// `n_observed` capped columns from the scheduled covariance, summarizes them
/// at checkpoint g with corpus size `n_total`, and feeds the series through
/// the two-track monitor.
pub fn run_collapse_sim(
    model: &CovarianceModel,
    schedule: &CollapseSchedule,
    n_total: u64,
    n_observed: usize,
    config: &MonitorConfig,
) -> Result<DriftSeries, SimError> {
    schedule.validate()?;
    config.validate().map_err(SimError::Monitor)?;
    if n_observed as u64 != config.n_observed_target {
        return Err(SimError::BadParams(format!(
            "sampling {} columns but the monitor expects {}",
            n_observed, config.n_observed_target
        )));
    }
    if config.baseline_checkpoint != 0 {
        return Err(SimError::BadParams(
            "collapse runs index generations from checkpoint 0".to_string(),
        ));
    }
    let mut summaries = Vec::with_capacity(schedule.generations as usize + 1);
    for g in 0..=schedule.generations {
        let spectrum = schedule.spectrum_at(&model.eigenvalues, g);
        let scheduled = model.with_spectrum(spectrum)?;
        let block = sample_block_capped(&scheduled, n_observed, u64::from(g), config.energy_cap)?;
        summaries.push(gram::accumulate(
            &block,
            config.energy_cap,
            n_total,
            u64::from(g),
        )?);
    }
    Ok(sigma_ub::monitor_series(&summaries, config)?)
}

/// Median of √t · ‖t G_t⁻¹ − C⁻¹‖_op over repeated draws, one entry per t.
///
/// The deviation of the inverse Gram matrix from its population limit decays
/// like 1/√t, so the rescaled norm should be flat in t; callers compare the
/// medians across a geometric range of t.
pub fn deviation_rate_check(
    model: &CovarianceModel,
    t_values: &[usize],
    trials: u32,
) -> Result<Vec<(usize, f64)>, SimError> {
    if trials < 30 {
        return Err(SimError::BadParams(format!(
            "need at least 30 trials for a stable median, got {trials}"
        )));
    }
    let m = model.dim;
    for &t in t_values {
        if t <= 4 * m {
            return Err(SimError::BadParams(format!(
                "sample size {t} too small for dimension {m}, need t > {}",
                4 * m
            )));
        }
    }
    let inverse_cov = model.inverse_covariance();
    let mut medians = Vec::with_capacity(t_values.len());
    for (ti, &t) in t_values.iter().enumerate() {
        let mut scaled = Vec::with_capacity(trials as usize);
        for trial in 0..trials {
            let seed = ((ti as u64) << 32) | u64::from(trial);
            let block = sample_block(model, t, seed)?;
            let mut gram_t = SymmetricMatrix::zeros(m);
            for j in 0..t {
                gram_t.add_outer(block.column(j), 1.0);
            }
            let gram_inv = linalg::psd_inverse(&gram_t)?;
            let mut deviation = SymmetricMatrix::zeros(m);
            for r in 0..m {
                for c in r..m {
                    deviation.set(r, c, t as f64 * gram_inv.entry(r, c) - inverse_cov.entry(r, c));
                }
            }
            let spectrum = linalg::sym_eigenvalues(&deviation)?;
            let op_norm = spectrum
                .eigenvalues()
                .iter()
                .fold(0.0f64, |acc, &l| acc.max(l.abs()));
            scaled.push((t as f64).sqrt() * op_norm);
        }
        medians.push((t, median(&mut scaled)));
    }
    Ok(medians)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let n = values.len();
    assert!(n > 0, "median of empty sample");
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Result of one randomized verification suite.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    /// Stable suite name as exposed on the command line.
    pub suite: &'static str,
    pub seed: u64,
    pub trials: u64,
    pub violations: u64,
    /// Worst margin observed; nonnegative when every trial respected the
    /// property being checked.  Semantics per suite are given in `detail`.
    pub worst: f64,
    pub detail: String,
    pub passed: bool,
}

/// Slack below which a bound comparison counts as violated.
const SUITE_SLACK: f64 = 1e-9;

/// Checks det(M Mᵀ) against the exhaustive squared-minor sum on random
/// integer matrices with entries in [−3, 3], m ≤ 3, n ≤ 7.
pub fn verify_cauchy_binet(trials: u64, seed: u64) -> Result<SuiteOutcome, SimError> {
    let mut rng = CounterRng::stream(seed, 0xCB);
    let mut violations = 0u64;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let m = 1 + rng.next_index(3);
        let n = 1 + rng.next_index(7);
        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m * n {
            data.push(rng.next_index(7) as f64 - 3.0);
        }
        let block = EmbeddingBlock::from_columns(m, data)?;
        let subset_sum = cauchy_binet_oracle(&block)?;
        let direct = dense_gram_det(&block);
        let rel = (subset_sum - direct).abs() / direct.abs().max(1.0);
        worst = worst.max(rel);
        if rel > SUITE_SLACK {
            violations += 1;
        }
    }
    Ok(SuiteOutcome {
        suite: "cb",
        seed,
        trials,
        violations,
        worst,
        detail: format!("worst relative determinant mismatch {worst:.3e}"),
        passed: violations == 0,
    })
}

/// Checks the deterministic sandwich on random Gaussian instances with
/// random observed/unobserved splits and β taken as the exact top eigenvalue
/// of the unobserved Gram block.
pub fn verify_deterministic_sandwich(trials: u64, seed: u64) -> Result<SuiteOutcome, SimError> {
    let mut rng = CounterRng::stream(seed, 0x7411);
    let mut violations = 0u64;
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let m = 1 + rng.next_index(6);
        let n = 2 + rng.next_index(39);
        let n_observed = 1 + rng.next_index(n - 1);
        let eigenvalues: Vec<f64> = (0..m).map(|_| 0.2 + 4.0 * rng.next_f64()).collect();
        let model = CovarianceModel::diagonal(eigenvalues, rng.next_u64())?;
        let block = sample_block(&model, n, 0)?;
        let (observed, unobserved) = gram::split_observed(&block, n_observed, rng.next_u64())?;
        let summary = summarize_block(&observed, n as u64, 0)?;
        let beta = bounds::beta_exact(&unobserved)?;
        let report = bounds::deterministic_bounds(&summary, beta)?;
        let full = summarize_block(&block, n as u64, 0)?;
        let truth = linalg::shifted_logdet(&full.gram_observed, report.delta_used)?;
        let slack = (truth - report.logdet_lower).min(report.logdet_upper - truth);
        worst = worst.min(slack);
        if slack < -SUITE_SLACK {
            violations += 1;
        }
    }
    Ok(SuiteOutcome {
        suite: "thm1",
        seed,
        trials,
        violations,
        worst,
        detail: format!("smallest sandwich slack {worst:.3e}"),
        passed: violations == 0,
    })
}

/// Spectrum used by the scaling-law and coverage suites.
const SCALING_SPECTRUM: [f64; 5] = [4.0, 2.0, 1.0, 0.5, 0.25];
const SCALING_N_OBSERVED: usize = 2000;
const SCALING_N_TOTAL: usize = 10000;

fn scaling_trial(
    seed: u64,
    trial: u64,
    alpha: f64,
) -> Result<(bounds::ScalingEstimate, f64), SimError> {
    let model = CovarianceModel::diagonal(SCALING_SPECTRUM.to_vec(), seed)?;
    let block = sample_block(&model, SCALING_N_TOTAL, trial)?;
    let (observed, _) = gram::split_observed(&block, SCALING_N_OBSERVED, trial ^ 0x5117)?;
    let summary = summarize_block(&observed, SCALING_N_TOTAL as u64, 0)?;
    let sigma_hat = bounds::estimate_sigma(&observed)?;
    let estimate = bounds::scaling_estimate(&summary, sigma_hat, alpha, 0.0)?;
    let full = summarize_block(&block, SCALING_N_TOTAL as u64, 0)?;
    let truth = linalg::shifted_logdet(&full.gram_observed, 0.0)?;
    Ok((estimate, truth))
}

/// Checks the scaling law: the median absolute residual of the extrapolated
/// log-determinant must stay within 4 median(σ̂) √(1/n_A − 1/n_k).
pub fn verify_scaling_law(trials: u64, seed: u64) -> Result<SuiteOutcome, SimError> {
    let mut residuals = Vec::with_capacity(trials as usize);
    let mut sigmas = Vec::with_capacity(trials as usize);
    for trial in 0..trials {
        let (estimate, truth) = scaling_trial(seed, trial, 0.05)?;
        let l_hat = estimate.l_hat.expect("known corpus size");
        residuals.push((l_hat - truth).abs());
        sigmas.push(estimate.sigma_hat);
    }
    let spread =
        (1.0 / SCALING_N_OBSERVED as f64 - 1.0 / SCALING_N_TOTAL as f64).sqrt();
    let median_residual = median(&mut residuals);
    let allowance = 4.0 * median(&mut sigmas) * spread;
    let passed = median_residual <= allowance;
    Ok(SuiteOutcome {
        suite: "thm2",
        seed,
        trials,
        violations: u64::from(!passed),
        worst: allowance - median_residual,
        detail: format!(
            "median |residual| {median_residual:.4} against allowance {allowance:.4}"
        ),
        passed,
    })
}

/// Coverage acceptance window for the confidence interval suite.
const COVERAGE_LOW: f64 = 0.91;
const COVERAGE_HIGH: f64 = 0.985;
/// Standardized residual windows for the confidence interval suite.
const RESIDUAL_MEAN_MAX: f64 = 0.15;
const RESIDUAL_SD_LOW: f64 = 0.85;
const RESIDUAL_SD_HIGH: f64 = 1.15;

/// Checks confidence interval coverage and the standardized residual
/// distribution of the scaling estimator at level α.
pub fn verify_coverage(trials: u64, alpha: f64, seed: u64) -> Result<SuiteOutcome, SimError> {
    if trials < 2 {
        return Err(SimError::BadParams(
            "coverage needs at least two trials".to_string(),
        ));
    }
    let spread =
        (1.0 / SCALING_N_OBSERVED as f64 - 1.0 / SCALING_N_TOTAL as f64).sqrt();
    let mut covered = 0u64;
    let mut standardized = Vec::with_capacity(trials as usize);
    for trial in 0..trials {
        let (estimate, truth) = scaling_trial(seed, trial, alpha)?;
        let l_hat = estimate.l_hat.expect("known corpus size");
        let (lo, hi) = estimate.interval().expect("known corpus size");
        if truth >= lo && truth <= hi {
            covered += 1;
        }
        standardized.push((l_hat - truth) / (estimate.sigma_hat * spread));
    }
    let coverage = covered as f64 / trials as f64;
    let mean = standardized.iter().sum::<f64>() / trials as f64;
    let var = standardized
        .iter()
        .map(|z| (z - mean) * (z - mean))
        .sum::<f64>()
        / (trials as f64 - 1.0);
    let sd = var.sqrt();
    let passed = (COVERAGE_LOW..=COVERAGE_HIGH).contains(&coverage)
        && mean.abs() <= RESIDUAL_MEAN_MAX
        && (RESIDUAL_SD_LOW..=RESIDUAL_SD_HIGH).contains(&sd);
    Ok(SuiteOutcome {
        suite: "thm3",
        seed,
        trials,
        violations: trials - covered,
        worst: coverage,
        detail: format!(
            "coverage {coverage:.3}, standardized residual mean {mean:.3}, sd {sd:.3}"
        ),
        passed,
    })
}

/// Checks the budget envelope on full-knowledge instances: columns capped at
/// the energy budget must satisfy
/// log det(G + δI) ≤ log det(G_A + (β̂ + δ)I) with β̂ = (n_k − n_A) ρ.
pub fn verify_envelope(trials: u64, seed: u64) -> Result<SuiteOutcome, SimError> {
    let mut rng = CounterRng::stream(seed, 0xE17);
    let delta = 1e-3;
    let rho = 1.0;
    let mut violations = 0u64;
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let m = 2 + rng.next_index(5);
        let n_total = 20 + rng.next_index(101);
        let n_observed = 1 + rng.next_index(n_total - 1);
        let scale = 0.05 + 0.4 * rng.next_f64();
        let eigenvalues: Vec<f64> = (0..m)
            .map(|_| scale * (0.1 + 0.9 * rng.next_f64()))
            .collect();
        let model = CovarianceModel::diagonal(eigenvalues, rng.next_u64())?;
        let block = sample_block_capped(&model, n_total, 1, rho)?;
        let (observed, _) = gram::split_observed(&block, n_observed, rng.next_u64())?;
        let full = gram::accumulate(&block, rho, n_total as u64, 0)?;
        let part = gram::accumulate(&observed, rho, n_total as u64, 0)?;
        let beta_hat = sigma_ub::beta_budget(n_total as u64, n_observed as u64, rho)?;
        let lhs = linalg::shifted_logdet(&full.gram_observed, delta)?;
        let rhs = linalg::shifted_logdet(&part.gram_observed, beta_hat + delta)?;
        let slack = rhs - lhs;
        worst = worst.min(slack);
        if slack < 0.0 {
            violations += 1;
        }
    }
    Ok(SuiteOutcome {
        suite: "envelope",
        seed,
        trials,
        violations,
        worst,
        detail: format!("smallest envelope slack {worst:.3e}"),
        passed: violations == 0,
    })
}

/// Checks the budget looseness bound
/// 0 ≤ env(β̂) − env(β) ≤ m log((β̂ + δ)/(β + δ)) on random observed blocks
/// and random β ≤ β̂ pairs.
pub fn verify_gap_bound(trials: u64, seed: u64) -> Result<SuiteOutcome, SimError> {
    let mut rng = CounterRng::stream(seed, 0x6A9);
    let delta = 1e-3;
    let mut violations = 0u64;
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let m = 1 + rng.next_index(6);
        let n = 1 + rng.next_index(12);
        let eigenvalues: Vec<f64> = (0..m).map(|_| 0.2 + 4.0 * rng.next_f64()).collect();
        let model = CovarianceModel::diagonal(eigenvalues, rng.next_u64())?;
        let block = sample_block(&model, n, 2)?;
        let summary = summarize_block(&block, n as u64, 0)?;
        let beta = 20.0 * rng.next_f64();
        let beta_hat = beta + 20.0 * rng.next_f64();
        let tight = linalg::shifted_logdet(&summary.gram_observed, beta + delta)?;
        let loose = linalg::shifted_logdet(&summary.gram_observed, beta_hat + delta)?;
        let gap = loose - tight;
        let cap = m as f64 * ((beta_hat + delta) / (beta + delta)).ln();
        let slack = gap.min(cap - gap);
        worst = worst.min(slack);
        if slack < -SUITE_SLACK {
            violations += 1;
        }
    }
    Ok(SuiteOutcome {
        suite: "gap",
        seed,
        trials,
        violations,
        worst,
        detail: format!("smallest gap-bound slack {worst:.3e}"),
        passed: violations == 0,
    })
}

/// Sample sizes probed by the deviation-rate suite.
const RATE_T_VALUES: [usize; 3] = [500, 2000, 8000];
/// Largest tolerated ratio between the rescaled deviation medians.
const RATE_FLATNESS_FACTOR: f64 = 3.0;

/// Checks that √t ‖t G_t⁻¹ − C⁻¹‖_op stays flat across a 16× range of t for
/// an isotropic three-dimensional model.
pub fn verify_deviation_rate(trials: u32, seed: u64) -> Result<SuiteOutcome, SimError> {
    let model = CovarianceModel::diagonal(vec![1.0; 3], seed)?;
    let medians = deviation_rate_check(&model, &RATE_T_VALUES, trials)?;
    let lo = medians
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::INFINITY, f64::min);
    let hi = medians.iter().map(|&(_, v)| v).fold(0.0f64, f64::max);
    let ratio = hi / lo;
    let passed = ratio <= RATE_FLATNESS_FACTOR;
    let listing: Vec<String> = medians
        .iter()
        .map(|(t, v)| format!("t={t}: {v:.4}"))
        .collect();
    Ok(SuiteOutcome {
        suite: "rate",
        seed,
        trials: trials as u64,
        violations: u64::from(!passed),
        worst: ratio,
        detail: format!(
            "median spread ratio {ratio:.3} across {{{}}}",
            listing.join(", ")
        ),
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_covariance(block: &EmbeddingBlock) -> Vec<f64> {
        let m = block.dim();
        let n = block.count() as f64;
        let mut cov = vec![0.0f64; m * m];
        for j in 0..block.count() {
            let col = block.column(j);
            for r in 0..m {
                for c in 0..m {
                    cov[r * m + c] += col[r] * col[c] / n;
                }
            }
        }
        cov
    }

    #[test]
    fn sample_block_matches_isotropic_covariance() {
        let model = CovarianceModel::diagonal(vec![1.0, 1.0], 7).unwrap();
        let block = sample_block(&model, 100_000, 0).unwrap();
        let cov = sample_covariance(&block);
        for r in 0..2 {
            for c in 0..2 {
                let target = if r == c { 1.0 } else { 0.0 };
                assert!(
                    (cov[r * 2 + c] - target).abs() < 0.02,
                    "entry ({r},{c}) = {}",
                    cov[r * 2 + c]
                );
            }
        }
    }

    #[test]
    fn sample_block_tracks_anisotropic_variances() {
        let model = CovarianceModel::diagonal(vec![4.0, 1.0], 11).unwrap();
        let block = sample_block(&model, 100_000, 3).unwrap();
        let cov = sample_covariance(&block);
        assert!((cov[0] - 4.0).abs() < 0.1, "var(x_0) = {}", cov[0]);
        assert!((cov[3] - 1.0).abs() < 0.05, "var(x_1) = {}", cov[3]);
    }

    #[test]
    fn sample_block_is_deterministic_per_seed() {
        let model = CovarianceModel::diagonal(vec![2.0, 0.5, 1.0], 42).unwrap();
        let a = sample_block(&model, 64, 9).unwrap();
        let b = sample_block(&model, 64, 9).unwrap();
        let c = sample_block(&model, 64, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rotation_is_orthogonal_and_preserves_spectrum() {
        let rotation = random_rotation(4, 5);
        let model = CovarianceModel::diagonal(vec![3.0, 2.0, 1.0, 0.5], 1)
            .unwrap()
            .with_rotation(rotation)
            .unwrap();
        let cov = model.covariance();
        let spectrum = linalg::sym_eigenvalues(&cov).unwrap();
        let expected = [3.0, 2.0, 1.0, 0.5];
        for (got, want) in spectrum.eigenvalues().iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-10, "eigenvalue {got} vs {want}");
        }
        let inv = model.inverse_covariance();
        let mut product_err = 0.0f64;
        let dense_cov = cov.to_dense();
        let dense_inv = inv.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += dense_cov[i * 4 + k] * dense_inv[k * 4 + j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                product_err = product_err.max((acc - target).abs());
            }
        }
        assert!(product_err < 1e-10, "C C^-1 deviates by {product_err}");
    }

    #[test]
    fn skewed_rotation_is_rejected() {
        let mut rotation = random_rotation(3, 2);
        rotation[1] += 1e-6;
        let err = CovarianceModel::diagonal(vec![1.0, 1.0, 1.0], 0)
            .unwrap()
            .with_rotation(rotation)
            .unwrap_err();
        assert!(matches!(err, SimError::BadModel(_)));
    }

    #[test]
    fn capped_sampling_respects_energy_budget() {
        let model = CovarianceModel::diagonal(vec![5.0, 5.0], 3).unwrap();
        let capped = sample_block_capped(&model, 5000, 0, 4.0).unwrap();
        let mut clipped = 0usize;
        for j in 0..capped.count() {
            let sq: f64 = capped.column(j).iter().map(|x| x * x).sum();
            assert!(sq <= 4.0 + 1e-12, "column {j} has energy {sq}");
            if (sq - 4.0).abs() < 1e-9 {
                clipped += 1;
            }
        }
        assert!(clipped > 0, "cap never engaged at these scales");
    }

    #[test]
    fn dense_det_matches_cofactor_cases() {
        assert_eq!(dense_det(&[7.0], 1), 7.0);
        assert_eq!(dense_det(&[1.0, 2.0, 3.0, 4.0], 2), -2.0);
        let singular = [1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0];
        assert_eq!(dense_det(&singular, 3), 0.0);
        let a4 = [
            2.0, 0.0, 0.0, 1.0, //
            0.0, 3.0, 0.0, 0.0, //
            0.0, 0.0, 4.0, 0.0, //
            1.0, 0.0, 0.0, 2.0,
        ];
        assert!((dense_det(&a4, 4) - 36.0).abs() < 1e-12);
    }

    #[test]
    fn subset_sum_matches_hand_example() {
        let block =
            EmbeddingBlock::from_columns(2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let sum = cauchy_binet_oracle(&block).unwrap();
        assert!((sum - 3.0).abs() < 1e-12, "subset sum {sum}");
        assert!((dense_gram_det(&block) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn square_case_reduces_to_squared_determinant() {
        let block = EmbeddingBlock::from_columns(2, vec![1.0, 3.0, 2.0, 4.0]).unwrap();
        let sum = cauchy_binet_oracle(&block).unwrap();
        assert!((sum - 4.0).abs() < 1e-12, "det([[1,2],[3,4]])^2 = 4, got {sum}");
    }

    #[test]
    fn wide_instances_are_rejected_by_the_oracle() {
        let block = EmbeddingBlock::from_columns(1, vec![1.0; 17]).unwrap();
        assert!(matches!(
            cauchy_binet_oracle(&block),
            Err(SimError::TooLarge { dim: 1, cols: 17 })
        ));
    }

    #[test]
    fn fewer_columns_than_rows_gives_zero() {
        let block = EmbeddingBlock::from_columns(3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(cauchy_binet_oracle(&block).unwrap(), 0.0);
        assert!(dense_gram_det(&block).abs() < 1e-12);
    }

    #[test]
    fn schedule_spectra_follow_their_mode() {
        let base = [4.0, 1.0];
        let restart = CollapseSchedule {
            mode: ScheduleMode::Restart,
            contraction_factor: 0.5,
            generations: 3,
            floor: 0.0,
        };
        assert_eq!(restart.spectrum_at(&base, 0), vec![4.0, 1.0]);
        assert_eq!(restart.spectrum_at(&base, 1), vec![2.0, 0.5]);
        assert_eq!(restart.spectrum_at(&base, 3), vec![2.0, 0.5]);
        let carryover = CollapseSchedule {
            mode: ScheduleMode::Carryover,
            contraction_factor: 0.5,
            generations: 3,
            floor: 0.3,
        };
        assert_eq!(carryover.spectrum_at(&base, 0), vec![4.0, 1.0]);
        assert_eq!(carryover.spectrum_at(&base, 2), vec![1.0, 0.3]);
        let bad = CollapseSchedule {
            mode: ScheduleMode::Restart,
            contraction_factor: 1.5,
            generations: 1,
            floor: 0.0,
        };
        assert!(matches!(bad.validate(), Err(SimError::BadSchedule(_))));
    }

    fn collapse_config(n_observed: u64) -> MonitorConfig {
        MonitorConfig {
            delta: 1e-3,
            energy_cap: 120.0,
            alpha: 0.05,
            n_observed_target: n_observed,
            baseline_checkpoint: 0,
        }
    }

    #[test]
    fn null_schedule_drifts_stay_near_zero() {
        let model = CovarianceModel::diagonal(vec![2.0, 1.0, 0.5, 0.25], 17).unwrap();
        let schedule = CollapseSchedule {
            mode: ScheduleMode::Carryover,
            contraction_factor: 1.0,
            generations: 10,
            floor: 0.0,
        };
        let n = 1000usize;
        let series =
            run_collapse_sim(&model, &schedule, n as u64 * 5, n, &collapse_config(n as u64))
                .unwrap();
        let bound = 5.0 * 4.0 / (n as f64).sqrt();
        assert!(
            series.final_drift_track2.abs() <= bound,
            "null drift {} exceeds {bound}",
            series.final_drift_track2
        );
    }

    #[test]
    fn carryover_drift_tracks_scheduled_logdet() {
        let model = CovarianceModel::diagonal(vec![4.0, 2.0, 1.0], 23).unwrap();
        let schedule = CollapseSchedule {
            mode: ScheduleMode::Carryover,
            contraction_factor: 0.9,
            generations: 20,
            floor: 0.0,
        };
        let n = 1500usize;
        let series =
            run_collapse_sim(&model, &schedule, n as u64 * 4, n, &collapse_config(n as u64))
                .unwrap();
        let expected = 3.0 * 20.0 * 0.9f64.ln();
        assert!(
            (series.final_drift_track2 - expected).abs() < 0.4,
            "carryover drift {} vs scheduled {expected}",
            series.final_drift_track2
        );
        let restart = CollapseSchedule {
            mode: ScheduleMode::Restart,
            ..schedule
        };
        let restart_series =
            run_collapse_sim(&model, &restart, n as u64 * 4, n, &collapse_config(n as u64))
                .unwrap();
        let restart_expected = 3.0 * 0.9f64.ln();
        assert!(
            (restart_series.final_drift_track2 - restart_expected).abs() < 0.4,
            "restart drift {} vs scheduled {restart_expected}",
            restart_series.final_drift_track2
        );
        assert!(
            series.final_drift_track2 <= 5.0 * restart_series.final_drift_track2,
            "carryover {} not deeper than 5x restart {}",
            series.final_drift_track2,
            restart_series.final_drift_track2
        );
    }

    #[test]
    fn deviation_rate_is_flat_in_sample_size() {
        let model = CovarianceModel::diagonal(vec![1.0, 1.0], 29).unwrap();
        let medians = deviation_rate_check(&model, &[100, 400], 30).unwrap();
        assert_eq!(medians.len(), 2);
        for &(_, v) in &medians {
            assert!(v.is_finite() && v > 0.0);
        }
        let ratio = medians[1].1.max(medians[0].1) / medians[1].1.min(medians[0].1);
        assert!(ratio < 3.0, "rescaled medians differ by {ratio}");
    }

    #[test]
    fn deviation_rate_rejects_thin_samples() {
        let model = CovarianceModel::diagonal(vec![1.0; 4], 0).unwrap();
        assert!(matches!(
            deviation_rate_check(&model, &[16], 30),
            Err(SimError::BadParams(_))
        ));
        assert!(matches!(
            deviation_rate_check(&model, &[100], 10),
            Err(SimError::BadParams(_))
        ));
    }

    #[test]
    fn cauchy_binet_suite_passes_on_integer_instances() {
        let outcome = verify_cauchy_binet(50, 1).unwrap();
        assert!(outcome.passed, "{}", outcome.detail);
        assert_eq!(outcome.violations, 0);
    }

    #[test]
    fn sandwich_suite_sees_no_violations() {
        let outcome = verify_deterministic_sandwich(60, 2).unwrap();
        assert!(outcome.passed, "{}", outcome.detail);
        assert!(outcome.worst >= -1e-9, "worst slack {}", outcome.worst);
    }

    #[test]
    fn scaling_law_suite_stays_within_allowance() {
        let outcome = verify_scaling_law(40, 3).unwrap();
        assert!(outcome.passed, "{}", outcome.detail);
    }

    #[test]
    fn envelope_suite_sees_no_violations() {
        let outcome = verify_envelope(60, 4).unwrap();
        assert!(outcome.passed, "{}", outcome.detail);
    }

    #[test]
    fn gap_suite_sees_no_violations() {
        let outcome = verify_gap_bound(80, 5).unwrap();
        assert!(outcome.passed, "{}", outcome.detail);
    }
}
