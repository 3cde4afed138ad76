//! Generalization probes for the soft-min loss class over bounded data:
//! the Lipschitz constant of the squared loss and a lower estimate of the
//! empirical Rademacher complexity against its `4 k R (1 + R) / sqrt(n)`
//! bound.
//!
//! The probability weights here fix the inverse temperature at one; the
//! class is `{(x, y) -> softmin loss at beta = 1 : ||theta_j|| <= R}` over
//! `||x|| <= 1`, `|y| <= 1`.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{compensated_mean, dot};
use crate::losses::{softmin_weights, squared_residuals};
use crate::params::ParameterSet;
use crate::rng::RngStream;

/// Inverse temperature used by every probe in this module.
pub const GENERALIZATION_BETA: f64 = 1.0;

/// Number of random restarts of the inner ascent.
const ASCENT_STARTS: usize = 8;

/// Result of the Lipschitz ratio search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzReport {
    /// Largest observed difference quotient of the squared loss in its
    /// prediction argument.
    pub max_ratio: f64,
    /// The claimed constant `2 (1 + R)`.
    pub bound: f64,
    /// Trials skipped because both predictions coincided.
    pub skipped: usize,
    pub trials: usize,
}

/// Samples `trials` tuples (x, y, theta1, theta2) with `||x|| <= 1`,
/// `|y| <= 1`, `||theta_i|| <= radius` and returns the largest ratio
/// `|l(h1(x), y) - l(h2(x), y)| / |h1(x) - h2(x)|`. Zero-denominator pairs
/// are skipped; with nothing observed the ratio reports 0.
pub fn lipschitz_probe(d: usize, radius: f64, trials: usize, rng: &RngStream) -> LipschitzReport {
    let mut gen = rng.generator();
    let mut max_ratio = 0.0f64;
    let mut skipped = 0usize;
    for _ in 0..trials {
        let x = sample_ball(&mut gen, d, 1.0);
        let y: f64 = gen.random_range(-1.0..=1.0);
        let t1 = sample_ball(&mut gen, d, radius);
        let t2 = sample_ball(&mut gen, d, radius);
        let h1: f64 = x.iter().zip(&t1).map(|(a, b)| a * b).sum();
        let h2: f64 = x.iter().zip(&t2).map(|(a, b)| a * b).sum();
        if h1 == h2 {
            skipped += 1;
            continue;
        }
        let l1 = (y - h1) * (y - h1);
        let l2 = (y - h2) * (y - h2);
        let ratio = (l1 - l2).abs() / (h1 - h2).abs();
        max_ratio = max_ratio.max(ratio);
    }
    LipschitzReport {
        max_ratio,
        bound: 2.0 * (1.0 + radius),
        skipped,
        trials,
    }
}

/// Lower estimate of the empirical Rademacher complexity of the soft-min
/// loss class, with the bound it must stay under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadEstimate {
    /// Mean over trials of the best ascent value; a lower estimate of the
    /// true complexity by construction.
    pub estimate: f64,
    /// `4 k R (1 + R) / sqrt(n)`.
    pub bound: f64,
    pub trials: usize,
    pub optimizer_budget: usize,
}

/// Estimates `E_sigma sup |1/n sum_i sigma_i loss_i|` from below: per trial
/// draws Rademacher signs and runs multi-start projected gradient ascent
/// over the k R-balls, spending `budget` gradient evaluations across
/// [`ASCENT_STARTS`] starts. The data must satisfy `||x_i|| <= 1`,
/// `|y_i| <= 1`.
pub fn rademacher_estimate(
    data: &Dataset,
    radius: f64,
    k: usize,
    trials: usize,
    budget: usize,
    rng: &RngStream,
) -> Result<RadEstimate> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    if radius.is_nan() || radius < 0.0 {
        return Err(Error::InvalidInput(format!(
            "radius must be >= 0, got {radius}"
        )));
    }
    let tol = 1.0 + 1e-12;
    for i in 0..data.n() {
        let (x, y) = data.sample(i);
        if dot(x, x).sqrt() > tol || y.abs() > tol {
            return Err(Error::InvalidInput(format!(
                "sample {i} violates the boundedness preconditions ||x|| <= 1, |y| <= 1"
            )));
        }
    }

    let n = data.n();
    let d = data.dim();
    let steps_per_start = (budget / ASCENT_STARTS).max(1);
    let mut trial_values = Vec::with_capacity(trials);

    for trial in 0..trials {
        // Trial t draws from stream `rng.stream + t`; callers space their
        // base streams far enough apart that trials never collide.
        let mut gen = rng
            .with_stream(rng.stream.wrapping_add(trial as u64))
            .generator();
        let signs: Vec<f64> = (0..n)
            .map(|_| if gen.random::<bool>() { 1.0 } else { -1.0 })
            .collect();

        let mut best = 0.0f64;
        for _start in 0..ASCENT_STARTS {
            let mut theta_rows: Vec<Vec<f64>> =
                (0..k).map(|_| sample_ball(&mut gen, d, radius)).collect();
            let mut params = ParameterSet::from_rows(&theta_rows)?;
            let value = signed_objective(&params, data, &signs);
            best = best.max(value.abs());

            for step in 0..steps_per_start {
                let (value, grads) = signed_objective_with_gradients(&params, data, &signs);
                let direction = if value >= 0.0 { 1.0 } else { -1.0 };
                // Normalized ascent step with a decaying schedule, projected
                // back onto the R-balls.
                let eta = 0.5 * radius.max(1e-12) / (1.0 + step as f64).sqrt();
                let mut norm2 = 0.0;
                for g in &grads {
                    norm2 += g.dot(g);
                }
                let norm = norm2.sqrt();
                if norm == 0.0 {
                    break;
                }
                for (j, row) in theta_rows.iter_mut().enumerate() {
                    for a in 0..d {
                        row[a] = params.component(j)[a] + direction * eta * grads[j][a] / norm;
                    }
                    let rn = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if rn > radius {
                        let scale = if radius == 0.0 { 0.0 } else { radius / rn };
                        for v in row.iter_mut() {
                            *v *= scale;
                        }
                    }
                }
                params = ParameterSet::from_rows(&theta_rows)?;
                let value = signed_objective(&params, data, &signs);
                best = best.max(value.abs());
            }
        }
        trial_values.push(best);
    }

    Ok(RadEstimate {
        estimate: compensated_mean(trial_values.iter().copied()),
        bound: 4.0 * k as f64 * radius * (1.0 + radius) / (n as f64).sqrt(),
        trials,
        optimizer_budget: budget,
    })
}

/// `G(theta) = (1/n) sum_i sigma_i * softmin_loss(theta; x_i, y_i)` at
/// beta = 1.
fn signed_objective(params: &ParameterSet, data: &Dataset, signs: &[f64]) -> f64 {
    let values = (0..data.n()).map(|i| {
        let (x, y) = data.sample(i);
        let r2 = squared_residuals(params, x, y);
        let p = softmin_weights(GENERALIZATION_BETA, &r2);
        let loss: f64 = p.iter().zip(&r2).map(|(&pi, &ri)| pi * ri).sum();
        signs[i] * loss
    });
    compensated_mean(values)
}

/// `G` and its exact gradient with respect to every component.
fn signed_objective_with_gradients(
    params: &ParameterSet,
    data: &Dataset,
    signs: &[f64],
) -> (f64, Vec<Array1<f64>>) {
    let n = data.n();
    let d = params.dim();
    let k = params.k();
    let mut grads = vec![Array1::<f64>::zeros(d); k];
    let mut total = 0.0;
    for i in 0..n {
        let (x, y) = data.sample(i);
        let r2 = squared_residuals(params, x, y);
        let p = softmin_weights(GENERALIZATION_BETA, &r2);
        let loss: f64 = p.iter().zip(&r2).map(|(&pi, &ri)| pi * ri).sum();
        total += signs[i] * loss;
        for j in 0..k {
            let r = y - dot(x, params.component(j));
            let c = signs[i] * (2.0 * p[j] * r) * (GENERALIZATION_BETA * (r2[j] - loss) - 1.0);
            for a in 0..d {
                grads[j][a] += c * x[a];
            }
        }
    }
    for g in &mut grads {
        *g /= n as f64;
    }
    (total / n as f64, grads)
}

/// Bounded data for the generalization probes: covariates uniform in the
/// unit ball, labels uniform in [-1, 1].
pub fn bounded_unit_dataset(rng: &RngStream, n: usize, d: usize) -> Result<Dataset> {
    let mut gen = rng.generator();
    let mut cov = Array2::<f64>::zeros((n.max(1), d.max(1)));
    let mut lab = Array1::<f64>::zeros(n.max(1));
    for i in 0..n {
        let x = sample_ball(&mut gen, d, 1.0);
        for (a, v) in x.iter().enumerate() {
            cov[[i, a]] = *v;
        }
        lab[i] = gen.random_range(-1.0..=1.0);
    }
    Dataset::new(cov, lab, None)
}

/// Uniform draw from the radius-`r` ball in d dimensions.
fn sample_ball<R: Rng>(gen: &mut R, d: usize, r: f64) -> Vec<f64> {
    let direction: Vec<f64> = loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(gen)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            break v.into_iter().map(|a| a / norm).collect();
        }
    };
    let u: f64 = gen.random();
    let radius = r * u.powf(1.0 / d as f64);
    direction.into_iter().map(|v| v * radius).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_radius_class_reports_zero_ratio() {
        let report = lipschitz_probe(3, 0.0, 500, &RngStream::new(3, 0));
        assert_eq!(report.max_ratio, 0.0);
        assert_eq!(report.skipped, 500);
        assert_eq!(report.bound, 2.0);
    }

    #[test]
    fn lipschitz_ratio_stays_under_bound() {
        for radius in [0.5, 1.0, 2.0] {
            let report = lipschitz_probe(2, radius, 5_000, &RngStream::new(17, 1));
            assert!(report.max_ratio <= report.bound);
            assert!(report.max_ratio > 0.0);
        }
    }

    #[test]
    fn singleton_class_matches_direct_monte_carlo() {
        // R = 0, k = 1: the class is the single function y^2; the estimate
        // is the average of |1/n sum sigma_i y_i^2| over the same sign
        // draws.
        let rng = RngStream::new(11, 0);
        let data = bounded_unit_dataset(&rng.with_stream(77), 64, 3).unwrap();
        let trials = 12;
        let est = rademacher_estimate(&data, 0.0, 1, trials, 40, &rng).unwrap();

        let mut expect = Vec::new();
        for trial in 0..trials {
            let mut gen = rng
                .with_stream(rng.stream.wrapping_add(trial as u64))
                .generator();
            let signs: Vec<f64> = (0..data.n())
                .map(|_| if gen.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let v = compensated_mean(
                (0..data.n()).map(|i| signs[i] * data.labels()[i] * data.labels()[i]),
            );
            expect.push(v.abs());
        }
        let expect = compensated_mean(expect.iter().copied());
        assert!((est.estimate - expect).abs() < 1e-12);
    }

    #[test]
    fn estimate_respects_bound() {
        let rng = RngStream::new(5, 0);
        let data = bounded_unit_dataset(&rng.with_stream(99), 128, 3).unwrap();
        let est = rademacher_estimate(&data, 1.0, 2, 6, 80, &rng).unwrap();
        assert!(est.estimate <= est.bound, "{} > {}", est.estimate, est.bound);
        assert!(est.estimate > 0.0);
    }

    #[test]
    fn rejects_unbounded_data() {
        let cov = ndarray::array![[2.0, 0.0]];
        let lab = ndarray::array![0.5];
        let data = Dataset::new(cov, lab, None).unwrap();
        assert!(rademacher_estimate(&data, 1.0, 1, 2, 8, &RngStream::new(1, 0)).is_err());
    }
}
