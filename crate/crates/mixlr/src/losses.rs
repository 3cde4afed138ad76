//! Min-loss, soft-min loss, soft-min probabilities, empirical losses, and
//! exact gradients.
//!
//! The per-sample residual of component j is `r_j = y - <x, theta_j>`. The
//! min-loss is `min_j r_j^2`; the soft-min loss weights the squared
//! residuals by a softmax over `-beta * r_j^2`. All exponentials are
//! max-shifted: the smallest `beta * r_j^2` is subtracted before
//! exponentiation, so no raw `exp` of large-magnitude arguments is ever
//! compared against another.

use ndarray::{Array1, ArrayView1};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{compensated_mean, dot};
use crate::params::ParameterSet;

/// Inverse-temperature sentinel selecting the hard minimum.
pub const HARD_MIN: f64 = f64::INFINITY;

/// Inverse temperature for the soft-min loss. `beta = 0` averages the
/// squared residuals uniformly; [`HARD_MIN`] recovers the min-loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftminConfig {
    pub beta: f64,
}

impl SoftminConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_nan() || beta < 0.0 {
            return Err(Error::InvalidInput(format!(
                "inverse temperature must be >= 0 (or +inf for hard-min), got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn hard_min() -> Self {
        Self { beta: HARD_MIN }
    }

    pub fn is_hard_min(&self) -> bool {
        self.beta.is_infinite()
    }
}

impl Default for SoftminConfig {
    fn default() -> Self {
        Self { beta: 1.0 }
    }
}

/// Which per-sample loss to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Min,
    Softmin(SoftminConfig),
}

fn check_dims(params: &ParameterSet, x: ArrayView1<'_, f64>) -> Result<()> {
    if params.dim() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "parameters have dimension {}, covariate has {}",
            params.dim(),
            x.len()
        )));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::InvalidInput(format!(
            "inverse temperature must be >= 0 (or +inf for hard-min), got {beta}"
        )));
    }
    Ok(())
}

/// Squared residuals `(y - <x, theta_j>)^2` for every component.
pub(crate) fn squared_residuals(params: &ParameterSet, x: ArrayView1<'_, f64>, y: f64) -> Vec<f64> {
    (0..params.k())
        .map(|j| {
            let r = y - dot(x, params.component(j));
            r * r
        })
        .collect()
}

/// Index of the smallest squared residual; ties go to the lowest index.
pub(crate) fn argmin_residual(r2: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in r2.iter().enumerate().skip(1) {
        if v < r2[best] {
            best = j;
        }
    }
    best
}

/// The smallest squared residual over the k components.
pub fn min_loss(params: &ParameterSet, x: ArrayView1<'_, f64>, y: f64) -> Result<f64> {
    check_dims(params, x)?;
    let r2 = squared_residuals(params, x, y);
    Ok(r2[argmin_residual(&r2)])
}

pub(crate) fn softmin_weights(beta: f64, r2: &[f64]) -> Vec<f64> {
    if beta.is_infinite() {
        let mut p = vec![0.0; r2.len()];
        p[argmin_residual(r2)] = 1.0;
        return p;
    }
    let scaled: Vec<f64> = r2.iter().map(|&v| beta * v).collect();
    let shift = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = scaled.iter().map(|&z| (-(z - shift)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Soft-min probabilities: entry j is `exp(-beta r_j^2) / sum_l exp(-beta r_l^2)`.
///
/// Nonnegative and summing to one for every `beta >= 0`, including the
/// hard-min sentinel (one-hot at the minimizing component, lowest index on
/// ties).
pub fn softmin_probabilities(
    params: &ParameterSet,
    beta: f64,
    x: ArrayView1<'_, f64>,
    y: f64,
) -> Result<Array1<f64>> {
    check_dims(params, x)?;
    check_beta(beta)?;
    let r2 = squared_residuals(params, x, y);
    Ok(Array1::from_vec(softmin_weights(beta, &r2)))
}

/// Soft-min loss: probability-weighted average of the squared residuals.
pub fn softmin_loss(params: &ParameterSet, beta: f64, x: ArrayView1<'_, f64>, y: f64) -> Result<f64> {
    check_dims(params, x)?;
    check_beta(beta)?;
    let r2 = squared_residuals(params, x, y);
    if beta.is_infinite() {
        // Hard-min shares the min-loss code path exactly.
        return Ok(r2[argmin_residual(&r2)]);
    }
    let p = softmin_weights(beta, &r2);
    Ok(p.iter().zip(&r2).map(|(&pi, &ri)| pi * ri).sum())
}

/// Per-sample loss under `kind`.
pub fn sample_loss(
    params: &ParameterSet,
    kind: LossKind,
    x: ArrayView1<'_, f64>,
    y: f64,
) -> Result<f64> {
    match kind {
        LossKind::Min => min_loss(params, x, y),
        LossKind::Softmin(cfg) => softmin_loss(params, cfg.beta, x, y),
    }
}

/// Mean of the per-sample losses over the dataset; compensated summation in
/// index-ascending order keeps the value independent of evaluation
/// parallelism.
pub fn empirical_loss(params: &ParameterSet, data: &Dataset, kind: LossKind) -> Result<f64> {
    if params.dim() != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "parameters have dimension {}, dataset has {}",
            params.dim(),
            data.dim()
        )));
    }
    if let LossKind::Softmin(cfg) = kind {
        check_beta(cfg.beta)?;
    }
    let losses = (0..data.n()).map(|i| {
        let (x, y) = data.sample(i);
        sample_loss(params, kind, x, y).expect("dimensions validated above")
    });
    Ok(compensated_mean(losses))
}

/// Exact gradient of the empirical soft-min loss with respect to component
/// `j`, including the dependence of the probabilities on `theta_j`.
///
/// Per sample, with `l` the soft-min loss value of that sample:
/// `d l / d theta_j = 2 p_j r_j (beta (r_j^2 - l) - 1) x`.
/// The hard-min sentinel is rejected (non-differentiable).
pub fn softmin_full_gradient(
    params: &ParameterSet,
    beta: f64,
    data: &Dataset,
    j: usize,
) -> Result<Array1<f64>> {
    check_beta(beta)?;
    if beta.is_infinite() {
        return Err(Error::InvalidInput(
            "hard-min loss is not differentiable; use a finite beta".into(),
        ));
    }
    if params.dim() != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "parameters have dimension {}, dataset has {}",
            params.dim(),
            data.dim()
        )));
    }
    if j >= params.k() {
        return Err(Error::InvalidInput(format!(
            "component index {} out of range for k = {}",
            j,
            params.k()
        )));
    }

    let d = params.dim();
    let mut grad = Array1::<f64>::zeros(d);
    for i in 0..data.n() {
        let (x, y) = data.sample(i);
        let r = y - dot(x, params.component(j));
        let r2_all = squared_residuals(params, x, y);
        let p = softmin_weights(beta, &r2_all);
        let loss: f64 = p.iter().zip(&r2_all).map(|(&pi, &ri)| pi * ri).sum();
        let c = (2.0 * p[j] * r) * (beta * (r2_all[j] - loss) - 1.0);
        for a in 0..d {
            grad[a] += c * x[a];
        }
    }
    grad /= data.n() as f64;
    Ok(grad)
}
