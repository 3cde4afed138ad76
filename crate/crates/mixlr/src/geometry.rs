//! Empirical geometric quantities of a parameter set on a dataset:
//! the optimal partition, misspecification lambda, separation Delta, the
//! smallest cell mass pi_min, and initializations at a controlled distance
//! from a reference parameter set.
//!
//! All quantities are sample-level: lambda is the largest own-component
//! absolute residual over each partition cell, Delta the smallest
//! other-component absolute residual, both achieved by recorded witness
//! samples.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::losses::{argmin_residual, squared_residuals};
use crate::params::ParameterSet;
use crate::rng::RngStream;

/// Initialization geometry: offsets drawn on the sphere surface or inside
/// the ball of radius `c_ini * ||theta*_j||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    pub c_ini: f64,
    pub mode: InitMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    SphereSurface,
    Ball,
}

impl InitConfig {
    pub fn sphere(c_ini: f64) -> Result<Self> {
        Self::new(c_ini, InitMode::SphereSurface)
    }

    pub fn new(c_ini: f64, mode: InitMode) -> Result<Self> {
        if c_ini.is_nan() || c_ini < 0.0 {
            return Err(Error::InvalidInput(format!(
                "c_ini must be >= 0, got {c_ini}"
            )));
        }
        Ok(Self { c_ini, mode })
    }
}

/// Outcome of the AM separation condition
/// `Delta > lambda + C1 (c_ini sqrt(log(1/pi_min)) max_j ||theta*_j|| + sqrt(1 + log(1/pi_min)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationCheck {
    pub holds: bool,
    /// Left-hand side: the measured separation Delta.
    pub delta: f64,
    /// Right-hand side: lambda plus the initialization/measure term.
    pub threshold: f64,
}

/// Empirical geometry of (params, data).
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    pub lambda_hat: f64,
    /// +inf when k = 1 (no other component to separate from).
    pub delta_hat: f64,
    pub pi_min_hat: f64,
    /// Partition cell sizes; they sum to n.
    pub counts: Vec<usize>,
    /// Sample index achieving lambda_hat.
    pub lambda_witness: Option<usize>,
    /// (sample index, other component) achieving delta_hat.
    pub delta_witness: Option<(usize, usize)>,
    /// Set when some cell is empty: pi_min_hat = 0 and the configuration is
    /// degenerate for the separation theory.
    pub degenerate: bool,
    /// Filled by [`check_am_separation`].
    pub separation_condition_am: Option<SeparationCheck>,
}

/// Assigns every sample to the component with the strictly smallest squared
/// residual; ties go to the lowest index. The k sets partition `0..n`.
pub fn optimal_partition(params: &ParameterSet, data: &Dataset) -> Result<Vec<Vec<usize>>> {
    if params.dim() != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "parameters have dimension {}, dataset has {}",
            params.dim(),
            data.dim()
        )));
    }
    let mut sets = vec![Vec::new(); params.k()];
    for i in 0..data.n() {
        let (x, y) = data.sample(i);
        let r2 = squared_residuals(params, x, y);
        sets[argmin_residual(&r2)].push(i);
    }
    Ok(sets)
}

/// Largest own-component absolute residual over the optimal partition.
pub fn estimate_lambda(params: &ParameterSet, data: &Dataset) -> Result<f64> {
    Ok(compute_report(params, data)?.lambda_hat)
}

/// Smallest other-component absolute residual over the optimal partition;
/// +inf when k = 1.
pub fn estimate_delta(params: &ParameterSet, data: &Dataset) -> Result<f64> {
    Ok(compute_report(params, data)?.delta_hat)
}

/// Smallest partition cell mass, `min_j |cell_j| / n`.
pub fn estimate_pi_min(params: &ParameterSet, data: &Dataset) -> Result<f64> {
    Ok(compute_report(params, data)?.pi_min_hat)
}

/// Computes lambda, Delta, pi_min, and the partition counts in one pass.
pub fn compute_report(params: &ParameterSet, data: &Dataset) -> Result<GeometryReport> {
    let sets = optimal_partition(params, data)?;
    let k = params.k();
    let n = data.n();

    let mut lambda_hat = 0.0;
    let mut lambda_witness = None;
    let mut delta_hat = f64::INFINITY;
    let mut delta_witness = None;

    for (j, set) in sets.iter().enumerate() {
        for &i in set {
            let (x, y) = data.sample(i);
            let own = (y - dot(x, params.component(j))).abs();
            if lambda_witness.is_none() || own > lambda_hat {
                lambda_hat = own;
                lambda_witness = Some(i);
            }
            for l in 0..k {
                if l == j {
                    continue;
                }
                let other = (y - dot(x, params.component(l))).abs();
                if other < delta_hat {
                    delta_hat = other;
                    delta_witness = Some((i, l));
                }
            }
        }
    }

    let counts: Vec<usize> = sets.iter().map(Vec::len).collect();
    let pi_min_hat = counts.iter().copied().min().unwrap_or(0) as f64 / n as f64;
    Ok(GeometryReport {
        lambda_hat,
        delta_hat,
        pi_min_hat,
        degenerate: counts.contains(&0),
        counts,
        lambda_witness,
        delta_witness,
        separation_condition_am: None,
    })
}

/// Evaluates the AM separation condition with the supplied fitted constant
/// in place of the unnamed universal constant. Returns both sides for
/// logging; rejects degenerate reports (some cell empty).
pub fn check_am_separation(
    report: &GeometryReport,
    params: &ParameterSet,
    c_ini: f64,
    fitted_constant: f64,
) -> Result<SeparationCheck> {
    if report.pi_min_hat <= 0.0 {
        return Err(Error::Degenerate(
            "pi_min = 0: some component explains no sample".into(),
        ));
    }
    let log_term = (1.0 / report.pi_min_hat).ln();
    let threshold = report.lambda_hat
        + fitted_constant
            * (c_ini * log_term.sqrt() * params.max_component_norm() + (1.0 + log_term).sqrt());
    Ok(SeparationCheck {
        holds: report.delta_hat > threshold,
        delta: report.delta_hat,
        threshold,
    })
}

/// Draws `theta*_j + u_j` with `u_j` uniform on the sphere surface or in the
/// ball of radius `c_ini * ||theta*_j||`; the norm condition holds exactly
/// in SphereSurface mode.
pub fn sample_initialization(
    theta_star: &ParameterSet,
    cfg: &InitConfig,
    rng: &RngStream,
) -> Result<ParameterSet> {
    let mut gen = rng.generator();
    let d = theta_star.dim();
    let mut rows = Vec::with_capacity(theta_star.k());
    for j in 0..theta_star.k() {
        let radius = cfg.c_ini * theta_star.component_norm(j);
        let direction = loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut gen)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|a| a / norm).collect::<Vec<f64>>();
            }
        };
        let r = match cfg.mode {
            InitMode::SphereSurface => radius,
            InitMode::Ball => {
                let u: f64 = gen.random();
                radius * u.powf(1.0 / d as f64)
            }
        };
        let row: Vec<f64> = theta_star
            .component(j)
            .iter()
            .zip(&direction)
            .map(|(t, u)| t + r * u)
            .collect();
        rows.push(row);
    }
    ParameterSet::from_rows(&rows)
}
