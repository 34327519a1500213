//! Dense symmetric linear algebra at small fixed dimension.
//!
//! Everything here is sized for embedding dimensions up to a few thousand:
//! Cholesky-based log-determinants, a Jacobi eigensolver, and PSD utilities.
//! All log-determinants are computed in the log domain (sum of log-pivots),
//! which stays finite where a raw determinant would under- or overflow.

use std::fmt;

/// Absolute eigenvalue tolerance, scaled by `max(1, ||S||_inf)` where noted.
pub const TOL_EIG: f64 = 1e-10;

/// Maximum `||S·S⁻¹ − I||_inf` accepted from [`psd_inverse`].
pub const TOL_INVERSE: f64 = 1e-8;

/// Maximum number of extra-shift retries in the Cholesky jitter policy.
pub const MAX_JITTER_ESCALATIONS: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// Factorization hit a non-positive pivot even after jitter escalation:
    /// the matrix is not positive definite within tolerance.
    CholeskyFailure { dim: usize, pivot: f64, delta: f64 },
    /// The Jacobi sweep cap was exceeded; the input is pathological.
    NoConvergence { dim: usize, sweeps: usize },
    /// An argument left the mathematical domain of the operation.
    DomainError(String),
    /// The matrix is not PSD within tolerance (an eigenvalue is too negative).
    NotPsd { min_eigenvalue: f64, tolerance: f64 },
    /// Matrix/vector dimensions do not agree.
    DimensionMismatch { expected: usize, got: usize },
    /// A matrix entry is NaN or infinite.
    NonFiniteEntry { row: usize, col: usize },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::CholeskyFailure { dim, pivot, delta } => write!(
                f,
                "cholesky failed on {dim}x{dim} matrix (pivot {pivot:.3e} at shift {delta:.3e})"
            ),
            LinalgError::NoConvergence { dim, sweeps } => {
                write!(f, "eigensolver did not converge on {dim}x{dim} matrix after {sweeps} sweeps")
            }
            LinalgError::DomainError(msg) => write!(f, "domain error: {msg}"),
            LinalgError::NotPsd { min_eigenvalue, tolerance } => write!(
                f,
                "matrix is not PSD: min eigenvalue {min_eigenvalue:.3e} below -{tolerance:.3e}"
            ),
            LinalgError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            LinalgError::NonFiniteEntry { row, col } => {
                write!(f, "non-finite entry at ({row}, {col})")
            }
        }
    }
}

impl std::error::Error for LinalgError {}

/// Dense real symmetric matrix. Only the upper triangle is stored, so
/// `entry(i, j) == entry(j, i)` holds by construction rather than by promise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    /// Row-major packed upper triangle: (i, j) with i <= j lives at
    /// `i*dim - i*(i+1)/2 + j`.
    upper: Vec<f64>,
}

impl SymmetricMatrix {
    fn packed_len(dim: usize) -> usize {
        dim * (dim + 1) / 2
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        r * self.dim - r * (r + 1) / 2 + c
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim, upper: vec![0.0; Self::packed_len(dim)] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut s = Self::zeros(dim);
        for i in 0..dim {
            s.set(i, i, 1.0);
        }
        s
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut s = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            s.set(i, i, d);
        }
        s
    }

    /// Build from a full row-major buffer, verifying symmetry and finiteness.
    pub fn from_dense(dim: usize, data: &[f64]) -> Result<Self, LinalgError> {
        if data.len() != dim * dim {
            return Err(LinalgError::DimensionMismatch { expected: dim * dim, got: data.len() });
        }
        let mut s = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let a = data[i * dim + j];
                let b = data[j * dim + i];
                if !a.is_finite() {
                    return Err(LinalgError::NonFiniteEntry { row: i, col: j });
                }
                let scale = a.abs().max(b.abs()).max(1.0);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(LinalgError::DomainError(format!(
                        "asymmetric input: ({i},{j})={a} vs ({j},{i})={b}"
                    )));
                }
                s.set(i, j, a);
            }
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.upper[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.idx(i, j);
        self.upper[k] = value;
    }

    /// Rank-one update `S += w · v vᵀ`.
    pub fn add_outer(&mut self, v: &[f64], w: f64) {
        debug_assert_eq!(v.len(), self.dim);
        let dim = self.dim;
        let mut k = 0;
        for i in 0..dim {
            let vi = w * v[i];
            for &vj in &v[i..dim] {
                self.upper[k] += vi * vj;
                k += 1;
            }
        }
    }

    /// Entrywise sum; dimensions must agree.
    pub fn add(&self, other: &SymmetricMatrix) -> Result<SymmetricMatrix, LinalgError> {
        if self.dim != other.dim {
            return Err(LinalgError::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut out = self.clone();
        for (a, b) in out.upper.iter_mut().zip(&other.upper) {
            *a += b;
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> SymmetricMatrix {
        let mut out = self.clone();
        for a in out.upper.iter_mut() {
            *a *= c;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.entry(i, i)).sum()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let e = self.entry(i, j);
                sum += e * e;
            }
        }
        sum
    }

    /// Max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.entry(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().all(|x| x.is_finite())
    }

    /// Expand to a full row-major buffer.
    pub fn to_dense(&self) -> Vec<f64> {
        let dim = self.dim;
        let mut out = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                out[i * dim + j] = self.entry(i, j);
            }
        }
        out
    }

    /// `v ↦ S·v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.entry(i, j) * v[j]).sum())
            .collect()
    }
}

/// Eigenvalues of a symmetric matrix, sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    /// Wrap a raw eigenvalue list; sorts descending.
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("NaN eigenvalue"));
        Self { eigenvalues }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn min(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// PSD clamp: eigenvalues in `[-tol·scale, 0)` are set to 0; anything
    /// more negative rejects the spectrum as non-PSD. Gram matrices are PSD
    /// by construction, so a real violation means upstream corruption.
    pub fn clamp_psd(mut self, scale: f64) -> Result<Spectrum, LinalgError> {
        let tol = TOL_EIG * scale.max(1.0);
        for ev in self.eigenvalues.iter_mut() {
            if *ev < 0.0 {
                if *ev < -tol {
                    return Err(LinalgError::NotPsd { min_eigenvalue: *ev, tolerance: tol });
                }
                *ev = 0.0;
            }
        }
        Ok(self)
    }
}

/// Result of a shifted Cholesky log-determinant, including what the jitter
/// policy actually did. `delta_used` is the shift that succeeded and
/// `escalations` counts how many ×10 retries it took; monitoring surfaces
/// both rather than hiding them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    pub value: f64,
    pub delta_used: f64,
    pub escalations: u32,
}

/// Plain Cholesky of `dense + delta·I` in place, returning `log det`.
/// `dense` is a full row-major buffer; on success its lower triangle holds L.
fn cholesky_logdet_inplace(dense: &mut [f64], dim: usize, delta: f64) -> Result<f64, f64> {
    let mut logdet = 0.0;
    for i in 0..dim {
        dense[i * dim + i] += delta;
    }
    for j in 0..dim {
        let mut d = dense[j * dim + j];
        for k in 0..j {
            let l = dense[j * dim + k];
            d -= l * l;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(d);
        }
        let ljj = d.sqrt();
        dense[j * dim + j] = ljj;
        logdet += ljj.ln();
        for i in (j + 1)..dim {
            let mut s = dense[i * dim + j];
            for k in 0..j {
                s -= dense[i * dim + k] * dense[j * dim + k];
            }
            dense[i * dim + j] = s / ljj;
        }
    }
    Ok(2.0 * logdet)
}

/// `log det(S + delta·I)` via Cholesky, with the jitter escalation policy:
/// on a non-positive pivot the shift is retried at ×10, at most
/// [`MAX_JITTER_ESCALATIONS`] times, and the retries are reported in the
/// result. A zero `delta` cannot escalate (0·10 = 0), so strictly singular
/// inputs at `delta = 0` fail immediately.
pub fn shifted_logdet_report(s: &SymmetricMatrix, delta: f64) -> Result<LogDet, LinalgError> {
    if !(delta >= 0.0) {
        return Err(LinalgError::DomainError(format!("negative shift {delta}")));
    }
    if !s.is_finite() {
        return Err(LinalgError::NonFiniteEntry { row: 0, col: 0 });
    }
    let dim = s.dim();
    let base = s.to_dense();
    let mut shift = delta;
    let mut last_pivot = f64::NAN;
    for escalations in 0..=MAX_JITTER_ESCALATIONS {
        let mut work = base.clone();
        match cholesky_logdet_inplace(&mut work, dim, shift) {
            Ok(value) => return Ok(LogDet { value, delta_used: shift, escalations }),
            Err(pivot) => last_pivot = pivot,
        }
        if shift == 0.0 {
            break;
        }
        shift *= 10.0;
    }
    Err(LinalgError::CholeskyFailure { dim, pivot: last_pivot, delta: shift })
}

/// `log det(S + delta·I)`; see [`shifted_logdet_report`] for the jitter policy.
pub fn shifted_logdet(s: &SymmetricMatrix, delta: f64) -> Result<f64, LinalgError> {
    shifted_logdet_report(s, delta).map(|r| r.value)
}

/// Eigenvalues of a symmetric matrix via cyclic Jacobi, descending.
///
/// Cubic in the dimension with a handful of sweeps in practice; the sweep cap
/// is far above anything a finite input should need, so hitting it signals a
/// pathological matrix rather than slow convergence.
pub fn sym_eigenvalues(s: &SymmetricMatrix) -> Result<Spectrum, LinalgError> {
    if !s.is_finite() {
        return Err(LinalgError::NonFiniteEntry { row: 0, col: 0 });
    }
    let n = s.dim();
    if n == 1 {
        return Ok(Spectrum::from_eigenvalues(vec![s.entry(0, 0)]));
    }
    let mut a = s.to_dense();
    let scale = s.inf_norm().max(1.0);
    let stop = TOL_EIG * scale;
    let max_sweeps = 100 * n;

    for _sweep in 0..max_sweeps {
        // Off-diagonal Frobenius mass decides convergence.
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += 2.0 * a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() <= stop {
            let eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
            return Ok(Spectrum::from_eigenvalues(eig));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                // Stable tangent of the rotation angle.
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - sn * akq;
                    a[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - sn * aqk;
                    a[q * n + k] = sn * apk + c * aqk;
                }
            }
        }
    }
    Err(LinalgError::NoConvergence { dim: n, sweeps: max_sweeps })
}

/// `Σ_j log(λ_j + shift)`; the eigenvalue route to the log-determinant.
pub fn logdet_from_spectrum(spectrum: &Spectrum, shift: f64) -> Result<f64, LinalgError> {
    let mut sum = 0.0;
    for &ev in spectrum.eigenvalues() {
        let x = ev + shift;
        if x <= 0.0 {
            return Err(LinalgError::DomainError(format!(
                "log of non-positive value: eigenvalue {ev} + shift {shift}"
            )));
        }
        sum += x.ln();
    }
    Ok(sum)
}

/// Inverse of a strictly positive definite matrix via Cholesky.
pub fn psd_inverse(s: &SymmetricMatrix) -> Result<SymmetricMatrix, LinalgError> {
    let n = s.dim();
    let mut l = s.to_dense();
    cholesky_logdet_inplace(&mut l, n, 0.0)
        .map_err(|pivot| LinalgError::CholeskyFailure { dim: n, pivot, delta: 0.0 })?;

    // Invert L in place (lower triangular), then S⁻¹ = L⁻ᵀ L⁻¹.
    let mut linv = vec![0.0; n * n];
    for i in 0..n {
        linv[i * n + i] = 1.0 / l[i * n + i];
        for j in 0..i {
            let mut s_acc = 0.0;
            for k in j..i {
                s_acc += l[i * n + k] * linv[k * n + j];
            }
            linv[i * n + j] = -s_acc / l[i * n + i];
        }
    }
    let mut inv = SymmetricMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in j.max(i)..n {
                acc += linv[k * n + i] * linv[k * n + j];
            }
            inv.set(i, j, acc);
        }
    }
    Ok(inv)
}
