//! Task data model, synthetic generators, and spectral utilities.
//!
//! A task is a fixed design matrix with labels from the shared linear model
//! `y = X w + noise`. Everything downstream (estimators, theory) reads tasks
//! through the types here.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::linalg;

/// Eigenvalues smaller than this are treated as exactly zero: the direction
/// carries no information and takes the zero-eigenvalue branch everywhere.
pub const EIGENVALUE_CLAMP: f64 = 1e-12;

/// One task's design matrix and labels.
#[derive(Debug, Clone)]
pub struct TaskData {
    features: Array2<f64>,
    labels: Array1<f64>,
}

impl TaskData {
    pub fn new(features: Array2<f64>, labels: Array1<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "features have {} rows but labels have length {}",
                features.nrows(),
                labels.len()
            )));
        }
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(CoreError::InvalidParameter(
                "task must have at least one sample and one feature".into(),
            ));
        }
        if features.iter().any(|v| !v.is_finite()) || labels.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidParameter("task data must be finite".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    pub fn sample_size(&self) -> usize {
        self.features.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.features.ncols()
    }
}

/// The data-generating linear model: true parameter and noise variance.
#[derive(Debug, Clone)]
pub struct TrueModel {
    coefficients: Array1<f64>,
    noise_variance: f64,
}

impl TrueModel {
    pub fn new(coefficients: Array1<f64>, noise_variance: f64) -> Result<Self> {
        if noise_variance < 0.0 || !noise_variance.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "noise variance must be finite and nonnegative, got {noise_variance}"
            )));
        }
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidParameter("true parameter must be finite".into()));
        }
        Ok(Self { coefficients, noise_variance })
    }

    pub fn coefficients(&self) -> &Array1<f64> {
        &self.coefficients
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn dimension(&self) -> usize {
        self.coefficients.len()
    }
}

/// Identifier tying a projected error vector to the basis it was computed in.
/// Derived from the basis entries, so equal bases get equal ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisId(u64);

fn basis_fingerprint(basis: &Array2<f64>) -> BasisId {
    let mut h = 0xcbf29ce484222325u64;
    for v in basis.iter() {
        h ^= v.to_bits();
        h = h.wrapping_mul(0x100000001b3);
    }
    BasisId(h)
}

/// Eigenbasis and eigenvalues of one task covariance.
#[derive(Debug, Clone)]
pub struct TaskSpectrum {
    basis: Array2<f64>,
    eigenvalues: Array1<f64>,
    sample_size: usize,
}

impl TaskSpectrum {
    /// Builds a spectrum from an explicit orthogonal basis and eigenvalues.
    /// Eigenvalues below [`EIGENVALUE_CLAMP`] are clamped to exactly zero.
    pub fn new(basis: Array2<f64>, eigenvalues: Array1<f64>, sample_size: usize) -> Result<Self> {
        let p = basis.nrows();
        if basis.ncols() != p {
            return Err(CoreError::DimensionMismatch("basis must be square".into()));
        }
        if eigenvalues.len() != p {
            return Err(CoreError::DimensionMismatch(format!(
                "basis is {}x{} but {} eigenvalues were given",
                p,
                p,
                eigenvalues.len()
            )));
        }
        if sample_size == 0 {
            return Err(CoreError::InvalidParameter("sample size must be positive".into()));
        }
        let gram = basis.t().dot(&basis);
        let eye: Array2<f64> = Array2::eye(p);
        let defect = linalg::frobenius_norm(&(&gram - &eye));
        if defect > 1e-10 {
            return Err(CoreError::InvalidParameter(format!(
                "basis is not orthogonal: Frobenius defect {defect:e}"
            )));
        }
        if eigenvalues.iter().any(|&v| v < -EIGENVALUE_CLAMP) {
            return Err(CoreError::InvalidParameter(
                "covariance eigenvalues must be nonnegative".into(),
            ));
        }
        let eigenvalues = eigenvalues.mapv(|v| if v < EIGENVALUE_CLAMP { 0.0 } else { v });
        Ok(Self { basis, eigenvalues, sample_size })
    }

    /// Spectrum of a task's empirical covariance.
    pub fn from_task(task: &TaskData) -> Result<Self> {
        let cov = empirical_covariance(task);
        spectral_decompose(&cov, task.sample_size())
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn dimension(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis_id(&self) -> BasisId {
        basis_fingerprint(&self.basis)
    }

    /// Reassembles the covariance `U diag(gamma) U^T`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let p = self.dimension();
        let mut scaled = self.basis.clone();
        for j in 0..p {
            let g = self.eigenvalues[j];
            scaled.column_mut(j).mapv_inplace(|v| v * g);
        }
        scaled.dot(&self.basis.t())
    }
}

/// Squared projections of an estimation error onto a spectrum's eigenbasis.
#[derive(Debug, Clone)]
pub struct ProjectedErrorVector {
    values: Array1<f64>,
    basis_id: BasisId,
}

impl ProjectedErrorVector {
    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn basis_id(&self) -> BasisId {
        self.basis_id
    }

    pub fn total(&self) -> f64 {
        self.values.sum()
    }
}

/// Empirical covariance `X^T X / n` of a task.
pub fn empirical_covariance(task: &TaskData) -> Array2<f64> {
    let x = task.features();
    let mut cov = x.t().dot(x);
    let n = task.sample_size() as f64;
    cov.mapv_inplace(|v| v / n);
    // Force exact symmetry; the product can drift at the last ulp.
    let p = cov.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let s = 0.5 * (cov[[i, j]] + cov[[j, i]]);
            cov[[i, j]] = s;
            cov[[j, i]] = s;
        }
    }
    cov
}

/// Symmetric eigendecomposition of a covariance into a [`TaskSpectrum`].
///
/// Eigenvalues come back sorted descending; each eigenvector's first nonzero
/// component is positive, so repeated runs agree bit for bit.
pub fn spectral_decompose(cov: &Array2<f64>, sample_size: usize) -> Result<TaskSpectrum> {
    let scale = linalg::frobenius_norm(cov).max(1.0);
    linalg::require_symmetric(cov, 1e-10 * scale)?;
    let (values, vectors) = linalg::symmetric_eigen(cov)?;
    TaskSpectrum::new(vectors, values, sample_size)
}

/// Worst-pair commutator size of a family of covariances, normalized by the
/// product of Frobenius norms. Zero (within 1e-10) exactly when the family
/// shares an eigenbasis.
pub fn commutability_defect(covariances: &[Array2<f64>]) -> Result<f64> {
    if covariances.is_empty() {
        return Ok(0.0);
    }
    let p = covariances[0].nrows();
    for c in covariances {
        if c.nrows() != p || c.ncols() != p {
            return Err(CoreError::DimensionMismatch(
                "all covariances must share one dimension".into(),
            ));
        }
        linalg::require_symmetric(c, 1e-8 * linalg::frobenius_norm(c).max(1.0))?;
    }
    let mut worst = 0.0f64;
    for a in 0..covariances.len() {
        for b in (a + 1)..covariances.len() {
            let ab = covariances[a].dot(&covariances[b]);
            let ba = covariances[b].dot(&covariances[a]);
            let comm = linalg::frobenius_norm(&(&ab - &ba));
            let denom = linalg::frobenius_norm(&covariances[a])
                * linalg::frobenius_norm(&covariances[b])
                + f64::EPSILON;
            worst = worst.max(comm / denom);
        }
    }
    Ok(worst)
}

fn labels_from_features<R: Rng>(
    features: &Array2<f64>,
    model: &TrueModel,
    rng: &mut R,
) -> Array1<f64> {
    let mut labels = features.dot(model.coefficients());
    let sd = model.noise_variance().sqrt();
    if sd > 0.0 {
        for y in labels.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *y += sd * z;
        }
    }
    labels
}

/// Standard-normal features; labels from the model plus Gaussian noise.
///
/// Draw order is fixed (features row-major, then noise), so a given stream
/// always produces the same task.
pub fn generate_iid_task<R: Rng>(
    dimension: usize,
    sample_size: usize,
    model: &TrueModel,
    rng: &mut R,
) -> Result<TaskData> {
    if dimension == 0 || sample_size == 0 {
        return Err(CoreError::InvalidParameter("dimension and sample size must be >= 1".into()));
    }
    if model.dimension() != dimension {
        return Err(CoreError::DimensionMismatch(format!(
            "model has dimension {} but task wants {}",
            model.dimension(),
            dimension
        )));
    }
    let features =
        Array2::from_shape_simple_fn((sample_size, dimension), || rng.sample(StandardNormal));
    let labels = labels_from_features(&features, model, rng);
    TaskData::new(features, labels)
}

/// Covariate-shift generator: per-coordinate variances are drawn as 1 with
/// probability 0.99 and 100 with probability 0.01, then features are
/// Gaussian with that diagonal covariance.
///
/// Draw order: eigenvalues (one uniform each), then features, then noise.
pub fn generate_shift_task<R: Rng>(
    dimension: usize,
    sample_size: usize,
    model: &TrueModel,
    rng: &mut R,
) -> Result<TaskData> {
    if dimension == 0 || sample_size == 0 {
        return Err(CoreError::InvalidParameter("dimension and sample size must be >= 1".into()));
    }
    if model.dimension() != dimension {
        return Err(CoreError::DimensionMismatch(format!(
            "model has dimension {} but task wants {}",
            model.dimension(),
            dimension
        )));
    }
    let scales: Vec<f64> = (0..dimension)
        .map(|_| if rng.gen::<f64>() < 0.01 { 100.0f64.sqrt() } else { 1.0 })
        .collect();
    let mut features =
        Array2::from_shape_simple_fn((sample_size, dimension), || rng.sample(StandardNormal));
    for (j, &s) in scales.iter().enumerate() {
        if s != 1.0 {
            features.column_mut(j).mapv_inplace(|v| v * s);
        }
    }
    let labels = labels_from_features(&features, model, rng);
    TaskData::new(features, labels)
}

/// Projects an estimate's error onto a spectrum's eigenbasis:
/// `values_j = (u_j . (estimate - w))^2`.
pub fn project_error(
    estimate: &Array1<f64>,
    model: &TrueModel,
    spectrum: &TaskSpectrum,
) -> Result<ProjectedErrorVector> {
    let p = spectrum.dimension();
    if estimate.len() != p || model.dimension() != p {
        return Err(CoreError::DimensionMismatch(format!(
            "estimate ({}), model ({}), and spectrum ({}) dimensions must agree",
            estimate.len(),
            model.dimension(),
            p
        )));
    }
    let diff = estimate - model.coefficients();
    let projections = spectrum.basis().t().dot(&diff);
    Ok(ProjectedErrorVector {
        values: projections.mapv(|v| v * v),
        basis_id: spectrum.basis_id(),
    })
}

/// Deterministic design matrix whose empirical covariance is exactly
/// `U diag(gamma) U^T`: row `i < k` is `sqrt(n * gamma_i) u_i^T`, the rest
/// are zero. Used by fixed-design scenarios where the theory must hold
/// exactly. Requires the number of nonzero eigenvalues to fit in `n`.
pub fn design_with_spectrum(
    basis: &Array2<f64>,
    eigenvalues: &Array1<f64>,
    sample_size: usize,
) -> Result<Array2<f64>> {
    let p = basis.nrows();
    if basis.ncols() != p || eigenvalues.len() != p {
        return Err(CoreError::DimensionMismatch("basis/eigenvalue shapes disagree".into()));
    }
    let nonzero: Vec<usize> =
        (0..p).filter(|&j| eigenvalues[j] > EIGENVALUE_CLAMP).collect();
    if nonzero.len() > sample_size {
        return Err(CoreError::InvalidParameter(format!(
            "{} nonzero eigenvalues cannot be realized with {} samples",
            nonzero.len(),
            sample_size
        )));
    }
    let n = sample_size as f64;
    let mut x = Array2::zeros((sample_size, p));
    for (row, &j) in nonzero.iter().enumerate() {
        let scale = (n * eigenvalues[j]).sqrt();
        for i in 0..p {
            x[[row, i]] = scale * basis[[i, j]];
        }
    }
    Ok(x)
}
