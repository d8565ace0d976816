use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::FitnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Relative pivot below which a λ = 0 system is treated as singular.
const SINGULAR_TOL: f64 = 1e-12;

fn cholesky_solve(a: DMatrix<f64>, b: &DVector<f64>, strict: bool) -> Result<DVector<f64>, FitnessError> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let chol = Cholesky::new(a).ok_or_else(|| FitnessError::Singular("normal matrix is not positive definite".into()))?;
    if strict {
        let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, x| m.min(x * x));
        if min_pivot < SINGULAR_TOL * scale {
            return Err(FitnessError::Singular("design matrix is rank deficient".into()));
        }
    }
    Ok(chol.solve(b))
}

/// Minimizes Σ(y − b − x·w)² + λ‖w‖² with the intercept b unpenalized.
///
/// Works on centered data. With at most as many features as samples (or
/// λ = 0) it solves (XᵀX + λI)w = Xᵀy; otherwise the equivalent dual system
/// (XXᵀ + λI)α = y, w = Xᵀα, which is smaller.
pub fn ridge_fit(features: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<RidgeModel, FitnessError> {
    let n = features.len();
    if n == 0 {
        return Err(FitnessError::Invalid("no samples".into()));
    }
    if targets.len() != n {
        return Err(FitnessError::Invalid(format!("{n} feature rows but {} targets", targets.len())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(FitnessError::Invalid(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let p = features[0].len();
    if features.iter().any(|f| f.len() != p) {
        return Err(FitnessError::Dimension("feature rows differ in length".into()));
    }
    if features.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(FitnessError::Invalid("non-finite feature or target".into()));
    }
    let mut means = vec![0.0; p];
    for f in features {
        for (m, v) in means.iter_mut().zip(f) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let y_mean = targets.iter().sum::<f64>() / n as f64;
    let x = DMatrix::from_fn(n, p, |r, c| features[r][c] - means[c]);
    let y = DVector::from_iterator(n, targets.iter().map(|t| t - y_mean));

    let weights = if p == 0 {
        DVector::zeros(0)
    } else if p <= n || lambda == 0.0 {
        let mut a = x.tr_mul(&x);
        for i in 0..p {
            a[(i, i)] += lambda;
        }
        cholesky_solve(a, &x.tr_mul(&y), lambda == 0.0)?
    } else {
        let mut g = &x * x.transpose();
        for i in 0..n {
            g[(i, i)] += lambda;
        }
        let alpha = cholesky_solve(g, &y, false)?;
        x.tr_mul(&alpha)
    };
    let intercept = y_mean - weights.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>();
    let model = RidgeModel {
        weights: weights.iter().copied().collect(),
        intercept,
        lambda,
    };
    if model.weights.iter().any(|w| !w.is_finite()) || !intercept.is_finite() {
        return Err(FitnessError::Singular("solution is not finite".into()));
    }
    Ok(model)
}
