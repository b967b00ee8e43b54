//! The five update rules and the sequence driver.
//!
//! All estimators start from the zero vector and consume tasks one at a
//! time. The generalized l2-regularized update is the workhorse; continual
//! ridge is the same update with a scalar weight matrix, the minimum norm
//! estimator is its vanishing-regularization limit, and early stopping
//! reproduces it through gradient descent with a matrix learning rate.

use ndarray::{Array1, Array2};

use crate::error::{CoreError, Result};
use crate::linalg::{self, CholeskyOutcome};
use crate::model::{empirical_covariance, TaskData, TrueModel};

/// Relative tolerance for interpolation-feasibility checks.
const CONSISTENCY_TOL: f64 = 1e-8;

/// Spectral form of a regularization weight matrix: basis columns carry
/// per-direction penalties, and pinned directions stand for an infinite
/// penalty (the estimate copies the previous value there exactly).
#[derive(Debug, Clone)]
pub struct SpectralWeights {
    basis: Array2<f64>,
    lambdas: Array1<f64>,
    pinned: Vec<bool>,
}

/// Symmetric PSD regularization weight matrix, optionally with a spectral
/// form and per-direction pin flags.
#[derive(Debug, Clone)]
pub struct RegWeights {
    matrix: Array2<f64>,
    spectral: Option<SpectralWeights>,
}

impl RegWeights {
    /// General constructor from an explicit matrix. Validates symmetry and
    /// positive semidefiniteness (via a full eigendecomposition, so prefer
    /// the structured constructors in hot paths).
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        let scale = linalg::frobenius_norm(&matrix).max(1.0);
        linalg::require_symmetric(&matrix, 1e-10 * scale)?;
        let (values, _) = linalg::symmetric_eigen(&matrix)?;
        if values.iter().any(|&v| v < -1e-12 * scale) {
            return Err(CoreError::InvalidParameter(
                "regularization weights must be positive semidefinite".into(),
            ));
        }
        Ok(Self { matrix, spectral: None })
    }

    /// Scalar ridge `lambda * I`.
    pub fn ridge(lambda: f64, dimension: usize) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "ridge weight must be finite and nonnegative, got {lambda}"
            )));
        }
        let matrix = Array2::from_diag(&Array1::from_elem(dimension, lambda));
        Ok(Self { matrix, spectral: None })
    }

    /// Spectral constructor: `U diag(lambda) U^T` plus pin flags. Pinned
    /// directions contribute nothing to the finite matrix; their stored
    /// lambda is ignored.
    pub fn from_spectral(
        basis: Array2<f64>,
        lambdas: Array1<f64>,
        pinned: Vec<bool>,
    ) -> Result<Self> {
        let p = basis.nrows();
        if basis.ncols() != p || lambdas.len() != p || pinned.len() != p {
            return Err(CoreError::DimensionMismatch(
                "spectral weights need a square basis and matching lambda/pin lengths".into(),
            ));
        }
        let gram = basis.t().dot(&basis);
        let eye: Array2<f64> = Array2::eye(p);
        if linalg::frobenius_norm(&(&gram - &eye)) > 1e-8 {
            return Err(CoreError::InvalidParameter("spectral basis is not orthogonal".into()));
        }
        for (j, &l) in lambdas.iter().enumerate() {
            if !pinned[j] && (l < -1e-12 || !l.is_finite()) {
                return Err(CoreError::InvalidParameter(format!(
                    "lambda[{j}] = {l} must be finite and nonnegative"
                )));
            }
        }
        let lambdas = lambdas.mapv(|l| l.max(0.0));
        let mut scaled = basis.clone();
        for j in 0..p {
            let l = if pinned[j] { 0.0 } else { lambdas[j] };
            scaled.column_mut(j).mapv_inplace(|v| v * l);
        }
        let matrix = scaled.dot(&basis.t());
        Ok(Self { matrix, spectral: Some(SpectralWeights { basis, lambdas, pinned }) })
    }

    /// Nonnegative combination of covariance matrices plus a ridge,
    /// `sum_k coeff_k * cov_k + base_ridge * I`. PSD by construction, so no
    /// eigendecomposition is run; this is the fast path for accumulated
    /// task covariances.
    pub fn from_covariance_combination(
        parts: &[(f64, &Array2<f64>)],
        base_ridge: f64,
        dimension: usize,
    ) -> Result<Self> {
        if base_ridge < 0.0 {
            return Err(CoreError::InvalidParameter("base ridge must be nonnegative".into()));
        }
        let mut matrix = Array2::from_diag(&Array1::from_elem(dimension, base_ridge));
        for &(coeff, cov) in parts {
            if coeff < 0.0 {
                return Err(CoreError::InvalidParameter(
                    "covariance coefficients must be nonnegative".into(),
                ));
            }
            if cov.nrows() != dimension || cov.ncols() != dimension {
                return Err(CoreError::DimensionMismatch(
                    "covariance dimension mismatch in weight combination".into(),
                ));
            }
            matrix.scaled_add(coeff, cov);
        }
        let scale = linalg::frobenius_norm(&matrix).max(1.0);
        linalg::require_symmetric(&matrix, 1e-10 * scale)?;
        Ok(Self { matrix, spectral: None })
    }

    /// Every direction pinned: the update copies the previous estimate.
    pub fn all_pinned(dimension: usize) -> Self {
        Self {
            matrix: Array2::zeros((dimension, dimension)),
            spectral: Some(SpectralWeights {
                basis: Array2::eye(dimension),
                lambdas: Array1::zeros(dimension),
                pinned: vec![true; dimension],
            }),
        }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn spectral(&self) -> Option<&SpectralWeights> {
        self.spectral.as_ref()
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    fn has_pins(&self) -> bool {
        self.spectral.as_ref().map_or(false, |s| s.pinned.iter().any(|&b| b))
    }
}

impl SpectralWeights {
    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    pub fn lambdas(&self) -> &Array1<f64> {
        &self.lambdas
    }

    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }
}

/// Learning-rate matrix of the early-stopping estimator.
#[derive(Debug, Clone)]
pub enum LearningRate {
    Matrix(Array2<f64>),
    /// `U diag(s) U^T` applied without materializing the matrix.
    Spectral { basis: Array2<f64>, rates: Array1<f64> },
}

/// Early-stopping schedule: learning-rate matrix and iteration count.
#[derive(Debug, Clone)]
pub struct ESSchedule {
    rate: LearningRate,
    steps: usize,
}

impl ESSchedule {
    pub fn new(rate: LearningRate, steps: usize) -> Result<Self> {
        match &rate {
            LearningRate::Matrix(m) => {
                let scale = linalg::frobenius_norm(m).max(1.0);
                linalg::require_symmetric(m, 1e-10 * scale)?;
            }
            LearningRate::Spectral { basis, rates } => {
                let p = basis.nrows();
                if basis.ncols() != p || rates.len() != p {
                    return Err(CoreError::DimensionMismatch(
                        "schedule basis and rates must agree".into(),
                    ));
                }
            }
        }
        Ok(Self { rate, steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn rate(&self) -> &LearningRate {
        &self.rate
    }

    pub fn dimension(&self) -> usize {
        match &self.rate {
            LearningRate::Matrix(m) => m.nrows(),
            LearningRate::Spectral { basis, .. } => basis.nrows(),
        }
    }

    /// Checks the no-divergence condition `|1 - s_j gamma_j| <= 1` against
    /// task eigenvalues in this schedule's own basis. Only meaningful for
    /// spectral schedules.
    pub fn check_stability(&self, eigenvalues: &Array1<f64>) -> Result<()> {
        if let LearningRate::Spectral { rates, .. } = &self.rate {
            for (j, (&s, &g)) in rates.iter().zip(eigenvalues.iter()).enumerate() {
                if g > 0.0 && (1.0 - s * g).abs() > 1.0 + 1e-12 {
                    return Err(CoreError::InvalidParameter(format!(
                        "schedule diverges in direction {j}: |1 - s*gamma| = {}",
                        (1.0 - s * g).abs()
                    )));
                }
            }
        }
        Ok(())
    }

    fn apply_rate(&self, v: &Array1<f64>) -> Array1<f64> {
        match &self.rate {
            LearningRate::Matrix(m) => m.dot(v),
            LearningRate::Spectral { basis, rates } => {
                let mut coords = basis.t().dot(v);
                coords.zip_mut_with(rates, |c, &s| *c *= s);
                basis.dot(&coords)
            }
        }
    }
}

/// Estimate sequence produced by one run over a task sequence.
#[derive(Debug, Clone)]
pub struct EstimateTrace {
    estimates: Vec<Array1<f64>>,
    per_task_errors: Option<Vec<f64>>,
    estimator: String,
    hyperparameters: String,
}

impl EstimateTrace {
    /// Estimates for t = 0..=T; index 0 is the zero initialization.
    pub fn estimates(&self) -> &[Array1<f64>] {
        &self.estimates
    }

    /// Realized squared errors per estimate when the true model was known.
    pub fn per_task_errors(&self) -> Option<&[f64]> {
        self.per_task_errors.as_deref()
    }

    pub fn estimator(&self) -> &str {
        &self.estimator
    }

    pub fn hyperparameters(&self) -> &str {
        &self.hyperparameters
    }

    pub fn num_tasks(&self) -> usize {
        self.estimates.len() - 1
    }
}

/// Pooled least squares over all tasks seen so far (the non-continual
/// baseline). Requires the pooled Gram matrix to have full rank.
pub fn fit_oracle(tasks: &[TaskData]) -> Result<Array1<f64>> {
    if tasks.is_empty() {
        return Err(CoreError::InvalidParameter("oracle needs at least one task".into()));
    }
    let p = tasks[0].dimension();
    let mut gram: Array2<f64> = Array2::zeros((p, p));
    let mut moment: Array1<f64> = Array1::zeros(p);
    for task in tasks {
        if task.dimension() != p {
            return Err(CoreError::DimensionMismatch(
                "all tasks must share one feature dimension".into(),
            ));
        }
        let x = task.features();
        gram += &x.t().dot(x);
        moment += &x.t().dot(task.labels());
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let s = 0.5 * (gram[[i, j]] + gram[[j, i]]);
            gram[[i, j]] = s;
            gram[[j, i]] = s;
        }
    }
    linalg::solve_spd(&gram, &moment)
}

/// Generalized l2-regularized update: minimizes
/// `||X w - y||^2 / n + (w - prev)^T H (w - prev)`.
///
/// Directions pinned in `weights` copy the previous estimate's component
/// exactly; the remaining directions solve the reduced normal equations.
pub fn gr_update(
    prev: &Array1<f64>,
    task: &TaskData,
    weights: &RegWeights,
) -> Result<Array1<f64>> {
    let p = task.dimension();
    if prev.len() != p || weights.dimension() != p {
        return Err(CoreError::DimensionMismatch(format!(
            "prev ({}), task ({}), and weights ({}) dimensions must agree",
            prev.len(),
            p,
            weights.dimension()
        )));
    }
    let cov = empirical_covariance(task);
    let n = task.sample_size() as f64;
    let xty = task.features().t().dot(task.labels()).mapv(|v| v / n);

    if !weights.has_pins() {
        let system = &cov + weights.matrix();
        let rhs = &xty + &weights.matrix().dot(prev);
        return match linalg::cholesky(&system)? {
            CholeskyOutcome::Factor(f) => Ok(f.solve(&rhs)),
            CholeskyOutcome::Deficient { .. } => Err(CoreError::SingularSystem {
                null_directions: linalg::null_directions(&system, 1e-10),
            }),
        };
    }

    // Pinned directions: solve for w = prev + V z with V the unpinned
    // basis columns, so the pinned components never move.
    let spectral = weights.spectral().expect("pins imply spectral form");
    let free: Vec<usize> = (0..p).filter(|&j| !spectral.pinned()[j]).collect();
    if free.is_empty() {
        return Ok(prev.clone());
    }
    let k = free.len();
    let mut v = Array2::zeros((p, k));
    for (col, &j) in free.iter().enumerate() {
        for i in 0..p {
            v[[i, col]] = spectral.basis()[[i, j]];
        }
    }
    let cov_v = cov.dot(&v);
    let mut system = v.t().dot(&cov_v);
    for (col, &j) in free.iter().enumerate() {
        system[[col, col]] += spectral.lambdas()[j];
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let s = 0.5 * (system[[i, j]] + system[[j, i]]);
            system[[i, j]] = s;
            system[[j, i]] = s;
        }
    }
    let residual_moment = &xty - &cov.dot(prev);
    let rhs = v.t().dot(&residual_moment);
    let z = match linalg::cholesky(&system)? {
        CholeskyOutcome::Factor(f) => f.solve(&rhs),
        CholeskyOutcome::Deficient { .. } => {
            let null_local = linalg::null_directions(&system, 1e-10);
            return Err(CoreError::SingularSystem {
                null_directions: null_local.into_iter().map(|c| free[c]).collect(),
            });
        }
    };
    Ok(prev + &v.dot(&z))
}

/// Continual ridge update: the generalized update with `H = lambda * I`.
pub fn crr_update(prev: &Array1<f64>, task: &TaskData, lambda: f64) -> Result<Array1<f64>> {
    if !(lambda > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "continual ridge requires lambda > 0, got {lambda}"
        )));
    }
    gr_update(prev, task, &RegWeights::ridge(lambda, task.dimension())?)
}

/// Minimum-displacement interpolation of the new task:
/// `prev + X^+ (y - X prev)`, computed by a least-norm solve on the
/// consistent system rather than forming the pseudo-inverse densely.
pub fn mn_update(prev: &Array1<f64>, task: &TaskData) -> Result<Array1<f64>> {
    let p = task.dimension();
    if prev.len() != p {
        return Err(CoreError::DimensionMismatch(format!(
            "prev has length {} but task dimension is {}",
            prev.len(),
            p
        )));
    }
    let x = task.features();
    let residual = task.labels() - &x.dot(prev);
    let y_scale = 1.0 + task.labels().dot(task.labels()).sqrt();
    if residual.dot(&residual).sqrt() <= f64::EPSILON * y_scale {
        return Ok(prev.clone());
    }
    let n = task.sample_size();
    let mut gram = x.dot(&x.t());
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (gram[[i, j]] + gram[[j, i]]);
            gram[[i, j]] = s;
            gram[[j, i]] = s;
        }
    }
    let multipliers = match linalg::cholesky(&gram)? {
        CholeskyOutcome::Factor(f) => f.solve(&residual),
        CholeskyOutcome::Deficient { .. } => {
            // Row-rank-deficient design: invert on the positive spectrum and
            // verify the constraints are actually satisfiable.
            let (values, vectors) = linalg::symmetric_eigen(&gram)?;
            let top = values[0].max(f64::MIN_POSITIVE);
            let coords = vectors.t().dot(&residual);
            let mut scaled = Array1::zeros(n);
            for i in 0..n {
                if values[i] > 1e-12 * top {
                    scaled[i] = coords[i] / values[i];
                }
            }
            vectors.dot(&scaled)
        }
    };
    let update = x.t().dot(&multipliers);
    let next = prev + &update;
    let feasibility = task.labels() - &x.dot(&next);
    let feasibility_norm = feasibility.dot(&feasibility).sqrt();
    let tolerance = CONSISTENCY_TOL * y_scale;
    if feasibility_norm > tolerance {
        return Err(CoreError::InconsistentSystem { residual: feasibility_norm, tolerance });
    }
    Ok(next)
}

/// Early-stopping update: `steps` exact gradient-descent iterations
/// `w <- w - (A/n) X^T (X w - y)` from the previous estimate.
pub fn es_update(
    prev: &Array1<f64>,
    task: &TaskData,
    schedule: &ESSchedule,
) -> Result<Array1<f64>> {
    let p = task.dimension();
    if prev.len() != p || schedule.dimension() != p {
        return Err(CoreError::DimensionMismatch(format!(
            "prev ({}), task ({}), and schedule ({}) dimensions must agree",
            prev.len(),
            p,
            schedule.dimension()
        )));
    }
    let x = task.features();
    let n = task.sample_size() as f64;
    let mut w = prev.clone();
    for _ in 0..schedule.steps() {
        let fitted = x.dot(&w);
        let gradient = x.t().dot(&(&fitted - task.labels())).mapv(|v| v / n);
        let step = schedule.apply_rate(&gradient);
        w -= &step;
    }
    Ok(w)
}

/// Which update rule drives a sequence run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Oracle,
    MinimumNorm,
    GeneralizedRidge,
    ContinualRidge,
    EarlyStopping,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::MinimumNorm => "minimum_norm",
            EstimatorKind::GeneralizedRidge => "generalized_ridge",
            EstimatorKind::ContinualRidge => "continual_ridge",
            EstimatorKind::EarlyStopping => "early_stopping",
        }
    }
}

/// Per-task hyperparameter source for a sequence run.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Oracle and minimum norm take no hyperparameters.
    None,
    /// Explicit weight matrices, one per task.
    FixedWeights(Vec<RegWeights>),
    /// Sample-size-weighted sum of previously seen empirical covariances
    /// (divided by the new task's sample size) plus a small ridge that keeps
    /// the first task well posed.
    PracticalWeights { base_ridge: f64 },
    /// Explicit ridge scalars, one per task.
    FixedLambdas(Vec<f64>),
    /// Scalar ridge schedule `lambda_t = (sigma^2/e0_bar + sum_{tau<t} n_tau) / n_t`,
    /// the single-lambda analogue of the optimal per-direction weights with
    /// unit eigenvalues and `e0_bar` the mean prior energy per coordinate.
    ScaledLambda { noise_variance: f64, mean_prior_energy: f64 },
    /// Explicit early-stopping schedules, one per task.
    Schedules(Vec<ESSchedule>),
}

impl Policy {
    fn describe(&self) -> String {
        match self {
            Policy::None => "none".into(),
            Policy::FixedWeights(w) => format!("explicit weights for {} tasks", w.len()),
            Policy::PracticalWeights { base_ridge } => {
                format!("accumulated covariances, base ridge {base_ridge:e}")
            }
            Policy::FixedLambdas(l) => format!("explicit lambdas for {} tasks", l.len()),
            Policy::ScaledLambda { noise_variance, mean_prior_energy } => format!(
                "information-scaled lambda (sigma2 {noise_variance}, prior {mean_prior_energy})"
            ),
            Policy::Schedules(s) => format!("explicit schedules for {} tasks", s.len()),
        }
    }
}

/// Runs one estimator over a task sequence, producing the estimate trace
/// (and realized errors when the true model is supplied).
pub fn run_sequence(
    tasks: &[TaskData],
    kind: EstimatorKind,
    policy: &Policy,
    model: Option<&TrueModel>,
) -> Result<EstimateTrace> {
    if tasks.is_empty() {
        return Err(CoreError::InvalidParameter("task sequence must be nonempty".into()));
    }
    let p = tasks[0].dimension();
    if tasks.iter().any(|t| t.dimension() != p) {
        return Err(CoreError::DimensionMismatch(
            "all tasks must share one feature dimension".into(),
        ));
    }
    if let Some(m) = model {
        if m.dimension() != p {
            return Err(CoreError::DimensionMismatch(
                "true model dimension must match the tasks".into(),
            ));
        }
    }
    check_policy(kind, policy, tasks.len())?;

    let mut estimates = Vec::with_capacity(tasks.len() + 1);
    estimates.push(Array1::zeros(p));

    // State for the incremental oracle and the practical-weights policy.
    let mut pooled_gram: Array2<f64> = Array2::zeros((p, p));
    let mut pooled_moment: Array1<f64> = Array1::zeros(p);
    let mut weighted_cov_sum: Array2<f64> = Array2::zeros((p, p));

    for (idx, task) in tasks.iter().enumerate() {
        let prev = estimates.last().expect("nonempty").clone();
        let next = match (kind, policy) {
            (EstimatorKind::Oracle, _) => {
                let x = task.features();
                pooled_gram += &x.t().dot(x);
                pooled_moment += &x.t().dot(task.labels());
                let mut gram = pooled_gram.clone();
                for i in 0..p {
                    for j in (i + 1)..p {
                        let s = 0.5 * (gram[[i, j]] + gram[[j, i]]);
                        gram[[i, j]] = s;
                        gram[[j, i]] = s;
                    }
                }
                linalg::solve_spd(&gram, &pooled_moment)?
            }
            (EstimatorKind::MinimumNorm, _) => mn_update(&prev, task)?,
            (EstimatorKind::GeneralizedRidge, Policy::FixedWeights(weights)) => {
                gr_update(&prev, task, &weights[idx])?
            }
            (EstimatorKind::GeneralizedRidge, Policy::PracticalWeights { base_ridge }) => {
                let n_t = task.sample_size() as f64;
                let weights = RegWeights::from_covariance_combination(
                    &[(1.0 / n_t, &weighted_cov_sum)],
                    *base_ridge,
                    p,
                )?;
                let next = gr_update(&prev, task, &weights)?;
                let cov = empirical_covariance(task);
                weighted_cov_sum.scaled_add(n_t, &cov);
                next
            }
            (EstimatorKind::ContinualRidge, Policy::FixedLambdas(lambdas)) => {
                crr_update(&prev, task, lambdas[idx])?
            }
            (
                EstimatorKind::ContinualRidge,
                Policy::ScaledLambda { noise_variance, mean_prior_energy },
            ) => {
                let prior_samples: usize = tasks[..idx].iter().map(|t| t.sample_size()).sum();
                if *mean_prior_energy <= 0.0 {
                    return Err(CoreError::InvalidParameter(
                        "scaled-lambda policy needs positive mean prior energy".into(),
                    ));
                }
                let lambda = (noise_variance / mean_prior_energy + prior_samples as f64)
                    / task.sample_size() as f64;
                crr_update(&prev, task, lambda)?
            }
            (EstimatorKind::EarlyStopping, Policy::Schedules(schedules)) => {
                es_update(&prev, task, &schedules[idx])?
            }
            _ => unreachable!("policy compatibility checked above"),
        };
        estimates.push(next);
    }

    let per_task_errors = model.map(|m| {
        estimates
            .iter()
            .map(|w| {
                let diff = w - m.coefficients();
                diff.dot(&diff)
            })
            .collect()
    });

    Ok(EstimateTrace {
        estimates,
        per_task_errors,
        estimator: kind.label().to_string(),
        hyperparameters: policy.describe(),
    })
}

fn check_policy(kind: EstimatorKind, policy: &Policy, num_tasks: usize) -> Result<()> {
    let ok = match (kind, policy) {
        (EstimatorKind::Oracle | EstimatorKind::MinimumNorm, Policy::None) => true,
        (EstimatorKind::GeneralizedRidge, Policy::FixedWeights(w)) => {
            if w.len() < num_tasks {
                return Err(CoreError::InvalidConfig(format!(
                    "{} weight matrices for {} tasks",
                    w.len(),
                    num_tasks
                )));
            }
            true
        }
        (EstimatorKind::GeneralizedRidge, Policy::PracticalWeights { base_ridge }) => {
            if *base_ridge < 0.0 {
                return Err(CoreError::InvalidConfig("base ridge must be nonnegative".into()));
            }
            true
        }
        (EstimatorKind::ContinualRidge, Policy::FixedLambdas(l)) => {
            if l.len() < num_tasks {
                return Err(CoreError::InvalidConfig(format!(
                    "{} lambdas for {} tasks",
                    l.len(),
                    num_tasks
                )));
            }
            true
        }
        (EstimatorKind::ContinualRidge, Policy::ScaledLambda { .. }) => true,
        (EstimatorKind::EarlyStopping, Policy::Schedules(s)) => {
            if s.len() < num_tasks {
                return Err(CoreError::InvalidConfig(format!(
                    "{} schedules for {} tasks",
                    s.len(),
                    num_tasks
                )));
            }
            true
        }
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(CoreError::InvalidConfig(format!(
            "estimator {:?} is incompatible with policy {}",
            kind,
            policy.describe()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_iid_task;
    use crate::rng::{StreamDomain, StreamKey};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn scalar_task(x: f64, y: f64) -> TaskData {
        TaskData::new(array![[x]], array![y]).unwrap()
    }

    #[test]
    fn oracle_pools_two_scalar_tasks() {
        let tasks = [scalar_task(1.0, 1.0), scalar_task(1.0, 3.0)];
        let w = fit_oracle(&tasks).unwrap();
        assert_abs_diff_eq!(w[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn oracle_interpolates_consistent_system() {
        // Two noise-free tasks jointly spanning R^2.
        let model = TrueModel::new(array![1.5, -0.5], 0.0).unwrap();
        let t1 = TaskData::new(array![[1.0, 0.0]], array![1.5]).unwrap();
        let t2 = TaskData::new(array![[0.0, 1.0], [1.0, 1.0]], array![-0.5, 1.0]).unwrap();
        let w = fit_oracle(&[t1, t2]).unwrap();
        for (a, b) in w.iter().zip(model.coefficients().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn oracle_rejects_underdetermined_single_task() {
        let task = TaskData::new(array![[1.0, 2.0]], array![1.0]).unwrap();
        assert!(matches!(fit_oracle(&[task]), Err(CoreError::RankDeficient { .. })));
    }

    #[test]
    fn oracle_residual_gradient_vanishes() {
        let model = TrueModel::new(array![1.0, -2.0, 0.5], 1.0).unwrap();
        let mut rng = StreamKey::new(5, StreamDomain::Design, 0, 0).rng();
        let tasks: Vec<TaskData> =
            (0..3).map(|_| generate_iid_task(3, 10, &model, &mut rng).unwrap()).collect();
        let w = fit_oracle(&tasks).unwrap();
        let mut grad: Array1<f64> = Array1::zeros(3);
        let mut moment_norm = 0.0f64;
        for t in &tasks {
            let fitted = t.features().dot(&w);
            grad += &t.features().t().dot(&(&fitted - t.labels()));
            let m = t.features().t().dot(t.labels());
            moment_norm += m.dot(&m);
        }
        let bound = 1e-8 * (1.0 + moment_norm.sqrt());
        assert!(grad.dot(&grad).sqrt() <= bound);
    }

    #[test]
    fn gr_hand_case() {
        // p = 1, X = [1], y = 2, prev = 0, H = [1]: minimize (w-2)^2 + w^2 -> w = 1.
        let task = scalar_task(1.0, 2.0);
        let w = gr_update(&array![0.0], &task, &RegWeights::ridge(1.0, 1).unwrap()).unwrap();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gr_zero_weights_full_rank_is_ols() {
        let model = TrueModel::new(array![2.0, -1.0], 1.0).unwrap();
        let mut rng = StreamKey::new(17, StreamDomain::Design, 0, 0).rng();
        let task = generate_iid_task(2, 12, &model, &mut rng).unwrap();
        let gr = gr_update(&array![0.3, 0.7], &task, &RegWeights::ridge(0.0, 2).unwrap()).unwrap();
        let ols = fit_oracle(std::slice::from_ref(&task)).unwrap();
        for (a, b) in gr.iter().zip(ols.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn gr_all_pinned_copies_prev() {
        let task = scalar_task(1.0, 2.0);
        let prev = array![0.25];
        let w = gr_update(&prev, &task, &RegWeights::all_pinned(1)).unwrap();
        assert_eq!(w[0], prev[0]);
    }

    #[test]
    fn gr_partial_pin_moves_only_free_directions() {
        // Identity basis: pin coordinate 0, regularize coordinate 1 lightly.
        let task = TaskData::new(array![[1.0, 0.0], [0.0, 1.0]], array![3.0, 5.0]).unwrap();
        let weights =
            RegWeights::from_spectral(Array2::eye(2), array![0.0, 0.5], vec![true, false])
                .unwrap();
        let prev = array![1.0, 0.0];
        let w = gr_update(&prev, &task, &weights).unwrap();
        assert_eq!(w[0], 1.0); // pinned exactly
        // Free coordinate: (gamma + lambda) w = x^T y / n -> (0.5 + 0.5) w = 2.5.
        assert_abs_diff_eq!(w[1], 2.5, epsilon = 1e-12);
    }

    #[test]
    fn gr_first_order_condition_residual() {
        let model = TrueModel::new(Array1::ones(4), 1.0).unwrap();
        let mut rng = StreamKey::new(23, StreamDomain::Design, 0, 0).rng();
        let task = generate_iid_task(4, 9, &model, &mut rng).unwrap();
        let prev = array![0.1, -0.2, 0.3, 0.0];
        let weights = RegWeights::ridge(0.7, 4).unwrap();
        let w = gr_update(&prev, &task, &weights).unwrap();
        let cov = empirical_covariance(&task);
        let n = task.sample_size() as f64;
        let xty = task.features().t().dot(task.labels()).mapv(|v| v / n);
        let foc = cov.dot(&w) + weights.matrix().dot(&(&w - &prev)) - &xty;
        let scale = 1.0 + xty.dot(&xty).sqrt();
        assert!(foc.dot(&foc).sqrt() <= 1e-8 * scale);
    }

    #[test]
    fn gr_singular_names_null_directions() {
        // One sample in R^2, no regularization: the orthogonal direction is null.
        let task = TaskData::new(array![[1.0, 0.0]], array![1.0]).unwrap();
        match gr_update(&array![0.0, 0.0], &task, &RegWeights::ridge(0.0, 2).unwrap()) {
            Err(CoreError::SingularSystem { null_directions }) => {
                assert!(!null_directions.is_empty());
            }
            other => panic!("expected singular system, got {other:?}"),
        }
    }

    #[test]
    fn crr_matches_gr_with_scalar_weights() {
        let model = TrueModel::new(Array1::ones(5), 1.0).unwrap();
        let mut rng = StreamKey::new(31, StreamDomain::Design, 0, 0).rng();
        let task = generate_iid_task(5, 20, &model, &mut rng).unwrap();
        let prev = array![0.1, 0.2, -0.3, 0.4, 0.0];
        let lambda = 0.37;
        let a = crr_update(&prev, &task, lambda).unwrap();
        let b = gr_update(&prev, &task, &RegWeights::ridge(lambda, 5).unwrap()).unwrap();
        assert_eq!(a, b); // same solve path, bitwise
    }

    #[test]
    fn crr_hand_case_and_dominant_penalty() {
        let task = scalar_task(1.0, 2.0);
        let w = crr_update(&array![0.0], &task, 1.0).unwrap();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-14);
        let prev = array![0.125];
        let w = crr_update(&prev, &task, 1e12).unwrap();
        assert!((w[0] - prev[0]).abs() < 1e-6);
    }

    #[test]
    fn crr_rejects_nonpositive_lambda() {
        let task = scalar_task(1.0, 2.0);
        assert!(crr_update(&array![0.0], &task, 0.0).is_err());
        assert!(crr_update(&array![0.0], &task, -1.0).is_err());
    }

    #[test]
    fn mn_hand_cases() {
        let task = TaskData::new(array![[1.0, 0.0]], array![1.0]).unwrap();
        let w = mn_update(&array![0.0, 0.0], &task).unwrap();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-12);

        let task = TaskData::new(array![[1.0, 1.0]], array![2.0]).unwrap();
        let w = mn_update(&array![0.0, 0.0], &task).unwrap();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mn_feasible_start_is_fixed_point() {
        let task = TaskData::new(array![[1.0, 1.0]], array![2.0]).unwrap();
        let prev = array![0.5, 1.5];
        let w = mn_update(&prev, &task).unwrap();
        assert_eq!(w, prev);
    }

    #[test]
    fn mn_interpolates_and_moves_in_row_space() {
        let model = TrueModel::new(Array1::ones(6), 1.0).unwrap();
        let mut rng = StreamKey::new(41, StreamDomain::Design, 0, 0).rng();
        let task = generate_iid_task(6, 3, &model, &mut rng).unwrap();
        let prev = array![0.1, -0.5, 0.2, 0.0, 0.3, -0.1];
        let w = mn_update(&prev, &task).unwrap();
        let fit = task.features().dot(&w) - task.labels();
        let y_scale = 1.0 + task.labels().dot(task.labels()).sqrt();
        assert!(fit.dot(&fit).sqrt() <= 1e-8 * y_scale);
        // Displacement lies in the row space: orthogonal to any null vector.
        let step = &w - &prev;
        let gram = task.features().t().dot(task.features());
        let (values, vectors) = linalg::symmetric_eigen(&gram).unwrap();
        for j in 0..6 {
            if values[j] <= 1e-10 * values[0] {
                let null_component = vectors.column(j).dot(&step);
                assert!(null_component.abs() <= 1e-8 * (1.0 + step.dot(&step).sqrt()));
            }
        }
    }

    #[test]
    fn mn_rejects_inconsistent_system() {
        // Duplicated row with contradictory labels.
        let task = TaskData::new(array![[1.0, 0.0], [1.0, 0.0]], array![1.0, 2.0]).unwrap();
        assert!(matches!(
            mn_update(&array![0.0, 0.0], &task),
            Err(CoreError::InconsistentSystem { .. })
        ));
    }

    #[test]
    fn es_hand_cases() {
        let task = scalar_task(1.0, 2.0);
        let half = ESSchedule::new(
            LearningRate::Spectral { basis: Array2::eye(1), rates: array![0.5] },
            1,
        )
        .unwrap();
        let w = es_update(&array![0.0], &task, &half).unwrap();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-14);

        let zero_steps = ESSchedule::new(LearningRate::Matrix(array![[0.5]]), 0).unwrap();
        let prev = array![0.75];
        let w = es_update(&prev, &task, &zero_steps).unwrap();
        assert_eq!(w, prev);

        // s * gamma = 1 contracts the data direction in one step: w = 2.
        let exact = ESSchedule::new(LearningRate::Matrix(array![[1.0]]), 1).unwrap();
        let w = es_update(&array![0.0], &task, &exact).unwrap();
        assert_abs_diff_eq!(w[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn run_sequence_minimum_norm_interpolates_each_task() {
        let model = TrueModel::new(Array1::ones(5), 1.0).unwrap();
        let mut rng = StreamKey::new(51, StreamDomain::Design, 0, 0).rng();
        let tasks: Vec<TaskData> =
            (0..3).map(|_| generate_iid_task(5, 2, &model, &mut rng).unwrap()).collect();
        let trace =
            run_sequence(&tasks, EstimatorKind::MinimumNorm, &Policy::None, Some(&model)).unwrap();
        assert_eq!(trace.estimates().len(), 4);
        assert!(trace.estimates()[0].iter().all(|&v| v == 0.0));
        for (t, task) in tasks.iter().enumerate() {
            let w = &trace.estimates()[t + 1];
            let gap = task.features().dot(w) - task.labels();
            let y_scale = 1.0 + task.labels().dot(task.labels()).sqrt();
            assert!(gap.dot(&gap).sqrt() <= 1e-8 * y_scale);
        }
    }

    #[test]
    fn run_sequence_all_pinned_stays_zero() {
        let model = TrueModel::new(Array1::ones(3), 1.0).unwrap();
        let mut rng = StreamKey::new(61, StreamDomain::Design, 0, 0).rng();
        let tasks: Vec<TaskData> =
            (0..4).map(|_| generate_iid_task(3, 5, &model, &mut rng).unwrap()).collect();
        let weights = vec![RegWeights::all_pinned(3); 4];
        let trace = run_sequence(
            &tasks,
            EstimatorKind::GeneralizedRidge,
            &Policy::FixedWeights(weights),
            Some(&model),
        )
        .unwrap();
        assert!(trace.estimates().last().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn run_sequence_rejects_mismatched_policy() {
        let task = scalar_task(1.0, 1.0);
        let err = run_sequence(
            std::slice::from_ref(&task),
            EstimatorKind::Oracle,
            &Policy::FixedLambdas(vec![1.0]),
            None,
        );
        assert!(matches!(err, Err(CoreError::InvalidConfig(_))));
    }

    #[test]
    fn oracle_objective_is_locally_minimal() {
        // Perturbing the pooled solution must never decrease the pooled RSS.
        let model = TrueModel::new(array![1.0, -1.0, 0.5], 1.0).unwrap();
        let mut rng = StreamKey::new(71, StreamDomain::Design, 0, 0).rng();
        let tasks: Vec<TaskData> =
            (0..2).map(|_| generate_iid_task(3, 8, &model, &mut rng).unwrap()).collect();
        let w = fit_oracle(&tasks).unwrap();
        let rss = |v: &Array1<f64>| -> f64 {
            tasks
                .iter()
                .map(|t| {
                    let r = t.features().dot(v) - t.labels();
                    r.dot(&r)
                })
                .sum()
        };
        let base = rss(&w);
        let mut dir_rng = StreamKey::new(71, StreamDomain::Noise, 0, 0).rng();
        for _ in 0..50 {
            let mut dir: Array1<f64> = Array1::zeros(3);
            for d in dir.iter_mut() {
                *d = rand::Rng::sample::<f64, _>(&mut dir_rng, rand_distr::StandardNormal);
            }
            let norm = dir.dot(&dir).sqrt();
            dir.mapv_inplace(|v| 1e-3 * v / norm);
            assert!(rss(&(&w + &dir)) >= base - 1e-12 * base.abs().max(1.0));
        }
    }
}
