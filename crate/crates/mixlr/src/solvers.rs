//! Gradient AM and gradient EM with configurable sample splitting.
//!
//! Both solvers iterate two stages. Gradient AM partitions a batch by the
//! current parameters (strictly smallest squared residual, lowest index on
//! ties) and then moves each component along the gradient of the quadratic
//! loss restricted to its cell:
//!
//! `theta+_j = theta_j - (2 gamma / n') sum_{i in I_j} (<x_i, theta_j> - y_i) x_i`
//!
//! Gradient EM replaces the hard cells with soft-min probabilities:
//!
//! `theta+_j = theta_j - (2 gamma / n') sum_i p_ij (<x_i, theta_j> - y_i) x_i`
//!
//! With the hard-min inverse temperature the probability rows are exactly
//! the one-hot cell indicators, and the two solvers produce bitwise
//! identical iterates on the same blocks.
//!
//! Under `TwoTBlocks` the samples are split once, after a seeded shuffle,
//! into 2T contiguous blocks of n' = n / 2T; iteration t reserves block 2t
//! for the partition stage (its cell sizes or probability margins are what
//! the trajectory records) and block 2t+1 for the gradient stage, which
//! applies the current partition rule to its own fresh samples. Iterations
//! never reuse data, which removes inter-iteration dependence.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{compensated_mean, dot};
use crate::losses::{
    argmin_residual, empirical_loss, softmin_weights, squared_residuals, LossKind, SoftminConfig,
};
use crate::params::{param_distance, ParameterSet};
use crate::rng::{stream_id, RngStream, StreamPurpose};

/// How the n samples are distributed over the T iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// 2T disjoint blocks, a fresh (partition, gradient) pair per iteration.
    /// Requires n >= 2T.
    TwoTBlocks,
    /// One shuffled split into two halves, the same pair every iteration.
    PerIterationPair,
    /// Every iteration sees all n samples in both stages.
    NoSplit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Step size. Zero is allowed and leaves the iterates fixed.
    pub gamma: f64,
    /// Iteration count T.
    pub iterations: usize,
    pub split_mode: SplitMode,
    /// Inverse temperature for gradient EM; ignored by gradient AM.
    pub beta: SoftminConfig,
    /// Parameter snapshots are kept every `record_every` iterations.
    pub record_every: usize,
    /// Seed for the block shuffle; part of the config so a run is a pure
    /// function of (data, init, config).
    pub shuffle_seed: u64,
}

impl SolverConfig {
    pub fn new(gamma: f64, iterations: usize, split_mode: SplitMode) -> Self {
        Self {
            gamma,
            iterations,
            split_mode,
            beta: SoftminConfig::default(),
            record_every: 1,
            shuffle_seed: 0,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::InvalidInput(format!(
                "step size must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidInput("iteration count must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInput("record_every must be >= 1".into()));
        }
        match self.split_mode {
            SplitMode::TwoTBlocks => {
                if n < 2 * self.iterations {
                    return Err(Error::InsufficientSamples(format!(
                        "TwoTBlocks needs n >= 2T, got n = {n}, T = {}",
                        self.iterations
                    )));
                }
            }
            SplitMode::PerIterationPair => {
                if n < 2 {
                    return Err(Error::InsufficientSamples(
                        "PerIterationPair needs n >= 2".into(),
                    ));
                }
            }
            SplitMode::NoSplit => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    GradientAm,
    GradientEm,
}

/// Per-run record of iterates, truth-relative distances, losses, and
/// per-iteration stage statistics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub kind: SolverKind,
    pub iterations: usize,
    pub record_every: usize,
    /// (t, params) at t = 0, every `record_every`, and t = T.
    pub recorded_params: Vec<(usize, ParameterSet)>,
    /// `distances[t][j] = || theta_j^(t) - truth_match(j) ||`, with the
    /// matching fixed at t = 0; present when truth was supplied.
    pub distances: Option<Vec<Vec<f64>>>,
    /// Matching of init components to truth components used above.
    pub matching: Option<Vec<usize>>,
    /// Empirical loss on the full dataset at every t (min-loss for AM,
    /// soft-min at the configured beta for EM).
    pub losses: Vec<f64>,
    /// Partition-stage cell sizes per iteration (gradient AM).
    pub cell_sizes: Option<Vec<Vec<usize>>>,
    /// Partition-stage mean top-probability margin per iteration (gradient EM).
    pub margins: Option<Vec<f64>>,
    /// Wall-clock per iteration, milliseconds. Not part of deterministic
    /// serialization.
    pub millis: Vec<f64>,
}

impl Trajectory {
    pub fn final_params(&self) -> &ParameterSet {
        &self.recorded_params.last().expect("t = T always recorded").1
    }

    pub fn max_distance_at(&self, t: usize) -> Option<f64> {
        self.distances
            .as_ref()
            .map(|d| d[t].iter().copied().fold(0.0, f64::max))
    }

    pub fn initial_max_distance(&self) -> Option<f64> {
        self.max_distance_at(0)
    }

    pub fn final_max_distance(&self) -> Option<f64> {
        self.max_distance_at(self.iterations)
    }

    /// Distance series of one tracked component.
    pub fn component_distances(&self, j: usize) -> Option<Vec<f64>> {
        self.distances
            .as_ref()
            .map(|d| d.iter().map(|row| row[j]).collect())
    }
}

/// Partitions batch positions by the current parameters; identical
/// semantics to `geometry::optimal_partition` restricted to the batch.
pub fn am_partition_step(
    params: &ParameterSet,
    data: &Dataset,
    batch: &[usize],
) -> Result<Vec<Vec<usize>>> {
    check_solver_dims(params, data)?;
    let mut sets = vec![Vec::new(); params.k()];
    for (pos, &i) in batch.iter().enumerate() {
        let (x, y) = data.sample(i);
        let r2 = squared_residuals(params, x, y);
        sets[argmin_residual(&r2)].push(pos);
    }
    Ok(sets)
}

/// One gradient AM update over the batch with the given cells (positions
/// into the batch). Components with an empty cell are returned unchanged.
pub fn am_gradient_step(
    params: &ParameterSet,
    data: &Dataset,
    batch: &[usize],
    sets: &[Vec<usize>],
    gamma: f64,
) -> Result<ParameterSet> {
    check_solver_dims(params, data)?;
    if sets.len() != params.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} cells for k = {}",
            sets.len(),
            params.k()
        )));
    }
    let n_prime = batch.len();
    if n_prime == 0 {
        return Err(Error::InsufficientSamples("empty gradient batch".into()));
    }
    let d = params.dim();
    let scale = 2.0 * gamma / n_prime as f64;
    let mut rows = Vec::with_capacity(params.k());
    for (j, set) in sets.iter().enumerate() {
        let theta = params.component(j);
        if set.is_empty() {
            rows.push(theta.to_vec());
            continue;
        }
        let mut acc = vec![0.0f64; d];
        for &pos in set {
            let (x, y) = data.sample(batch[pos]);
            let coef = dot(x, theta) - y;
            for a in 0..d {
                acc[a] += coef * x[a];
            }
        }
        rows.push((0..d).map(|a| theta[a] - scale * acc[a]).collect());
    }
    ParameterSet::from_rows(&rows)
}

/// Soft-min probability rows for every batch sample; row i sums to one.
pub fn em_probability_step(
    params: &ParameterSet,
    beta: f64,
    data: &Dataset,
    batch: &[usize],
) -> Result<Array2<f64>> {
    check_solver_dims(params, data)?;
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::InvalidInput(format!(
            "inverse temperature must be >= 0 (or +inf for hard-min), got {beta}"
        )));
    }
    let k = params.k();
    let mut probs = Array2::<f64>::zeros((batch.len(), k));
    for (pos, &i) in batch.iter().enumerate() {
        let (x, y) = data.sample(i);
        let r2 = squared_residuals(params, x, y);
        let p = softmin_weights(beta, &r2);
        for j in 0..k {
            probs[[pos, j]] = p[j];
        }
    }
    Ok(probs)
}

/// One gradient EM update with the given probability rows. Zero-probability
/// terms are skipped, so one-hot rows reproduce the AM update exactly.
pub fn em_gradient_step(
    params: &ParameterSet,
    probs: &Array2<f64>,
    data: &Dataset,
    batch: &[usize],
    gamma: f64,
) -> Result<ParameterSet> {
    check_solver_dims(params, data)?;
    let n_prime = batch.len();
    if probs.nrows() != n_prime || probs.ncols() != params.k() {
        return Err(Error::DimensionMismatch(format!(
            "probability matrix is {}x{}, expected {}x{}",
            probs.nrows(),
            probs.ncols(),
            n_prime,
            params.k()
        )));
    }
    if n_prime == 0 {
        return Err(Error::InsufficientSamples("empty gradient batch".into()));
    }
    let d = params.dim();
    let scale = 2.0 * gamma / n_prime as f64;
    let mut rows = Vec::with_capacity(params.k());
    for j in 0..params.k() {
        let theta = params.component(j);
        let mut acc = vec![0.0f64; d];
        let mut touched = false;
        for (pos, &i) in batch.iter().enumerate() {
            let p = probs[[pos, j]];
            if p == 0.0 {
                continue;
            }
            touched = true;
            let (x, y) = data.sample(i);
            let base = dot(x, theta) - y;
            let coef = if p == 1.0 { base } else { p * base };
            for a in 0..d {
                acc[a] += coef * x[a];
            }
        }
        if touched {
            rows.push((0..d).map(|a| theta[a] - scale * acc[a]).collect());
        } else {
            rows.push(theta.to_vec());
        }
    }
    ParameterSet::from_rows(&rows)
}

/// Runs gradient AM for T iterations and records the trajectory.
pub fn run_gradient_am(
    data: &Dataset,
    init: &ParameterSet,
    cfg: &SolverConfig,
    truth: Option<&ParameterSet>,
) -> Result<Trajectory> {
    run_solver(SolverKind::GradientAm, data, init, cfg, truth)
}

/// Runs gradient EM for T iterations and records the trajectory.
pub fn run_gradient_em(
    data: &Dataset,
    init: &ParameterSet,
    cfg: &SolverConfig,
    truth: Option<&ParameterSet>,
) -> Result<Trajectory> {
    run_solver(SolverKind::GradientEm, data, init, cfg, truth)
}

fn run_solver(
    kind: SolverKind,
    data: &Dataset,
    init: &ParameterSet,
    cfg: &SolverConfig,
    truth: Option<&ParameterSet>,
) -> Result<Trajectory> {
    check_solver_dims(init, data)?;
    cfg.validate(data.n())?;
    if kind == SolverKind::GradientEm && cfg.beta.beta.is_nan() {
        return Err(Error::InvalidInput("beta must not be NaN".into()));
    }

    let matching = match truth {
        Some(t) => Some(param_distance(init, t)?.matching),
        None => None,
    };
    let loss_kind = match kind {
        SolverKind::GradientAm => LossKind::Min,
        SolverKind::GradientEm => LossKind::Softmin(cfg.beta),
    };

    let plan = BlockPlan::build(data.n(), cfg)?;
    let t_max = cfg.iterations;
    let mut params = init.clone();

    let mut recorded_params = vec![(0usize, params.clone())];
    let mut distances = matching
        .as_ref()
        .map(|m| vec![tracked_distances(&params, truth.unwrap(), m)]);
    let mut losses = vec![empirical_loss(&params, data, loss_kind)?];
    let mut cell_sizes: Option<Vec<Vec<usize>>> = match kind {
        SolverKind::GradientAm => Some(Vec::with_capacity(t_max)),
        SolverKind::GradientEm => None,
    };
    let mut margins: Option<Vec<f64>> = match kind {
        SolverKind::GradientAm => None,
        SolverKind::GradientEm => Some(Vec::with_capacity(t_max)),
    };
    let mut millis = Vec::with_capacity(t_max);

    for t in 0..t_max {
        let started = Instant::now();
        let (partition_block, gradient_block) = plan.pair(t);
        let same_blocks = std::ptr::eq(partition_block, gradient_block);

        match kind {
            SolverKind::GradientAm => {
                let stage_sets = am_partition_step(&params, data, partition_block)?;
                let grad_sets = if same_blocks {
                    stage_sets.clone()
                } else {
                    am_partition_step(&params, data, gradient_block)?
                };
                cell_sizes
                    .as_mut()
                    .unwrap()
                    .push(stage_sets.iter().map(Vec::len).collect());
                params = am_gradient_step(&params, data, gradient_block, &grad_sets, cfg.gamma)?;
            }
            SolverKind::GradientEm => {
                let stage_probs =
                    em_probability_step(&params, cfg.beta.beta, data, partition_block)?;
                margins.as_mut().unwrap().push(mean_top_margin(&stage_probs));
                let grad_probs = if same_blocks {
                    stage_probs
                } else {
                    em_probability_step(&params, cfg.beta.beta, data, gradient_block)?
                };
                params =
                    em_gradient_step(&params, &grad_probs, data, gradient_block, cfg.gamma)?;
            }
        }

        millis.push(started.elapsed().as_secs_f64() * 1e3);
        if let (Some(d), Some(m)) = (distances.as_mut(), matching.as_ref()) {
            d.push(tracked_distances(&params, truth.unwrap(), m));
        }
        losses.push(empirical_loss(&params, data, loss_kind)?);
        let t1 = t + 1;
        if t1 == t_max || t1 % cfg.record_every == 0 {
            recorded_params.push((t1, params.clone()));
        }
    }

    Ok(Trajectory {
        kind,
        iterations: t_max,
        record_every: cfg.record_every,
        recorded_params,
        distances,
        matching,
        losses,
        cell_sizes,
        margins,
        millis,
    })
}

fn tracked_distances(params: &ParameterSet, truth: &ParameterSet, matching: &[usize]) -> Vec<f64> {
    (0..params.k())
        .map(|j| {
            let diff = &params.component(j) - &truth.component(matching[j]);
            diff.dot(&diff).sqrt()
        })
        .collect()
}

/// Mean over rows of (largest probability - second largest).
fn mean_top_margin(probs: &Array2<f64>) -> f64 {
    let margins = (0..probs.nrows()).map(|i| {
        let row = probs.row(i);
        let mut top = 0.0f64;
        let mut second = 0.0f64;
        for &v in row {
            if v > top {
                second = top;
                top = v;
            } else if v > second {
                second = v;
            }
        }
        top - second
    });
    compensated_mean(margins)
}

fn check_solver_dims(params: &ParameterSet, data: &Dataset) -> Result<()> {
    if params.dim() != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "parameters have dimension {}, dataset has {}",
            params.dim(),
            data.dim()
        )));
    }
    Ok(())
}

/// The resolved block layout for one run.
struct BlockPlan {
    indices: Vec<usize>,
    layout: Layout,
}

enum Layout {
    /// (partition, gradient) = (block 2t, block 2t+1), each of n' samples.
    Fresh { n_prime: usize },
    /// Fixed halves (first, second) reused every iteration.
    Halves { half: usize },
    /// Everything, twice.
    Whole,
}

impl BlockPlan {
    fn build(n: usize, cfg: &SolverConfig) -> Result<Self> {
        let mut indices: Vec<usize> = (0..n).collect();
        let layout = match cfg.split_mode {
            SplitMode::TwoTBlocks => {
                shuffle(&mut indices, cfg.shuffle_seed);
                Layout::Fresh {
                    n_prime: n / (2 * cfg.iterations),
                }
            }
            SplitMode::PerIterationPair => {
                shuffle(&mut indices, cfg.shuffle_seed);
                Layout::Halves { half: n / 2 }
            }
            SplitMode::NoSplit => Layout::Whole,
        };
        Ok(Self { indices, layout })
    }

    fn pair(&self, t: usize) -> (&[usize], &[usize]) {
        match self.layout {
            Layout::Fresh { n_prime } => {
                let a = 2 * t * n_prime;
                let b = (2 * t + 1) * n_prime;
                (
                    &self.indices[a..a + n_prime],
                    &self.indices[b..b + n_prime],
                )
            }
            Layout::Halves { half } => (&self.indices[..half], &self.indices[half..2 * half]),
            Layout::Whole => {
                let all = &self.indices[..];
                (all, all)
            }
        }
    }
}

fn shuffle(indices: &mut [usize], seed: u64) {
    let mut gen = RngStream::new(seed, stream_id(StreamPurpose::BlockShuffle, 0, 0)).generator();
    indices.shuffle(&mut gen);
}
