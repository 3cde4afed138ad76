//! Synthetic data for the realizable generative model and for controlled
//! misspecified (agnostic) regimes.
//!
//! Realizable data draws ground-truth components uniformly on a sphere,
//! Gaussian covariates, categorical assignments, and Gaussian label noise.
//! Agnostic data adds a bounded deterministic perturbation
//! `misspec_level * cos(<w, x>)` for a unit vector `w` drawn once per
//! dataset, with label noise truncated at three standard deviations so the
//! total deviation from the assigned line stays bounded.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::params::ParameterSet;
use crate::rng::RngStream;

/// Noise truncation radius, in standard deviations, for agnostic data.
pub const NOISE_CLIP_SIGMAS: f64 = 3.0;

/// Number of candidate draws used to probe label-bound feasibility.
const REJECTION_PROBE: usize = 1000;
/// Minimum acceptance rate over the probe batch.
const MIN_ACCEPT_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorMode {
    Realizable,
    Agnostic,
}

/// Declarative description of one synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub mode: GeneratorMode,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    /// Label noise standard deviation.
    pub sigma: f64,
    /// Simplex vector of length k; the smallest entry governs the realized
    /// partition mass.
    pub mixing_weights: Vec<f64>,
    /// Radius of the sphere the ground-truth components are drawn on.
    pub component_scale: f64,
    /// Target misspecification: amplitude of the cosine perturbation.
    pub misspec_level: f64,
    /// Reject-and-redraw bound on |y|, when set.
    pub label_bound: Option<f64>,
}

impl GeneratorSpec {
    pub fn realizable(n: usize, d: usize, k: usize) -> Self {
        Self {
            mode: GeneratorMode::Realizable,
            n,
            d,
            k,
            sigma: 0.0,
            mixing_weights: uniform_weights(k),
            component_scale: 1.0,
            misspec_level: 0.0,
            label_bound: None,
        }
    }

    pub fn agnostic(n: usize, d: usize, k: usize, misspec_level: f64) -> Self {
        Self {
            mode: GeneratorMode::Agnostic,
            misspec_level,
            ..Self::realizable(n, d, k)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.k == 0 {
            return Err(Error::InvalidInput(format!(
                "generator requires n, d, k >= 1, got n = {}, d = {}, k = {}",
                self.n, self.d, self.k
            )));
        }
        if self.sigma.is_nan() || self.sigma < 0.0 {
            return Err(Error::InvalidInput(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !self.component_scale.is_finite() || self.component_scale <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "component_scale must be > 0, got {}",
                self.component_scale
            )));
        }
        if self.misspec_level.is_nan() || self.misspec_level < 0.0 {
            return Err(Error::InvalidInput(format!(
                "misspec_level must be >= 0, got {}",
                self.misspec_level
            )));
        }
        if self.mixing_weights.len() != self.k {
            return Err(Error::InvalidInput(format!(
                "{} mixing weights for k = {}",
                self.mixing_weights.len(),
                self.k
            )));
        }
        if self.mixing_weights.iter().any(|&w| w.is_nan() || w < 0.0) {
            return Err(Error::InvalidInput("negative mixing weight".into()));
        }
        let total: f64 = self.mixing_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "mixing weights sum to {total}, expected 1"
            )));
        }
        if let Some(b) = self.label_bound {
            if b.is_nan() || b <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "label_bound must be > 0, got {b}"
                )));
            }
        }
        Ok(())
    }
}

pub fn uniform_weights(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k.max(1)]
}

/// A generated dataset plus generation bookkeeping.
#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: Dataset,
    /// Samples rejected and redrawn because of the label bound.
    pub rejected: usize,
}

/// Draws the realizable generative model. Requires `mode = Realizable`.
pub fn generate_realizable(spec: &GeneratorSpec, rng: &RngStream) -> Result<Generated> {
    if spec.mode != GeneratorMode::Realizable {
        return Err(Error::InvalidInput(
            "generate_realizable requires mode = Realizable".into(),
        ));
    }
    generate(spec, rng)
}

/// Draws the agnostic regime: realizable data plus the bounded cosine
/// perturbation, with label noise truncated at three sigma. Requires
/// `mode = Agnostic`.
pub fn generate_agnostic(spec: &GeneratorSpec, rng: &RngStream) -> Result<Generated> {
    if spec.mode != GeneratorMode::Agnostic {
        return Err(Error::InvalidInput(
            "generate_agnostic requires mode = Agnostic".into(),
        ));
    }
    generate(spec, rng)
}

/// Mode-dispatching generator; a pure function of (spec, rng).
pub fn generate(spec: &GeneratorSpec, rng: &RngStream) -> Result<Generated> {
    spec.validate()?;
    let mut gen = rng.generator();
    let agnostic = spec.mode == GeneratorMode::Agnostic;

    // Ground-truth components: uniform directions scaled to the sphere.
    let mut rows = Vec::with_capacity(spec.k);
    for _ in 0..spec.k {
        rows.push(unit_vector(&mut gen, spec.d, spec.component_scale));
    }
    let components = ParameterSet::from_rows(&rows)?;

    // Perturbation direction, fixed once per dataset.
    let w = if agnostic {
        Some(unit_vector(&mut gen, spec.d, 1.0))
    } else {
        None
    };

    let cumulative: Vec<f64> = spec
        .mixing_weights
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect();

    let mut covariates = Array2::<f64>::zeros((spec.n, spec.d));
    let mut labels = Array1::<f64>::zeros(spec.n);
    let mut assignments = vec![0usize; spec.n];
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    let attempt_cap = REJECTION_PROBE.max(400 * spec.n);

    while accepted < spec.n {
        attempts += 1;
        let x: Vec<f64> = (0..spec.d)
            .map(|_| StandardNormal.sample(&mut gen))
            .collect();
        let u: f64 = gen.random();
        let assignment = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(spec.k - 1);
        let z: f64 = if agnostic {
            // Truncated standard normal via redraw.
            loop {
                let z: f64 = StandardNormal.sample(&mut gen);
                if z.abs() <= NOISE_CLIP_SIGMAS {
                    break z;
                }
            }
        } else {
            StandardNormal.sample(&mut gen)
        };

        let theta = components.component(assignment);
        let signal: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
        let mut y = signal + spec.sigma * z;
        if let Some(wv) = &w {
            let proj: f64 = x.iter().zip(wv).map(|(a, b)| a * b).sum();
            y += spec.misspec_level * proj.cos();
        }

        if let Some(b) = spec.label_bound {
            if y.abs() > b {
                let rate = accepted as f64 / attempts as f64;
                if (attempts >= REJECTION_PROBE && rate < MIN_ACCEPT_RATE)
                    || attempts >= attempt_cap
                {
                    return Err(Error::InfeasibleLabelBound {
                        bound: b,
                        rate,
                        probed: attempts,
                    });
                }
                continue;
            }
        }

        for (c, v) in x.iter().enumerate() {
            covariates[[accepted, c]] = *v;
        }
        labels[accepted] = y;
        assignments[accepted] = assignment;
        accepted += 1;
    }

    let truth = GroundTruth {
        components,
        assignments,
        noise_sigma: spec.sigma,
        misspec_level: if agnostic { spec.misspec_level } else { 0.0 },
    };
    Ok(Generated {
        dataset: Dataset::new(covariates, labels, Some(truth))?,
        rejected: attempts - spec.n,
    })
}

fn unit_vector<R: Rng>(gen: &mut R, d: usize, scale: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(gen)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.iter().map(|a| a / norm * scale).collect();
        }
    }
}

/// Clamps labels to [-b, b]; covariates and truth unchanged. Returns the
/// clipped dataset and how many labels moved.
pub fn clip_labels(data: &Dataset, b: f64) -> Result<(Dataset, usize)> {
    if b.is_nan() || b <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "label bound must be > 0, got {b}"
        )));
    }
    let mut labels = data.labels().clone();
    let mut clamped = 0usize;
    for v in labels.iter_mut() {
        if v.abs() > b {
            *v = v.clamp(-b, b);
            clamped += 1;
        }
    }
    Ok((
        Dataset::new(data.covariates().clone(), labels, data.truth.clone())?,
        clamped,
    ))
}
