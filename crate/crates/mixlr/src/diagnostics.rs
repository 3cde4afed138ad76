//! Empirical verification of the convergence theory: contraction and
//! error-floor fitting, misassignment probability, restricted-Gaussian
//! spectra and norms, and soft-min concentration.
//!
//! Inequalities whose constants are unnamed universal constants are probed
//! as monotonicity and scaling statements, never as absolute thresholds.

use ndarray::{Array1, ArrayView2};

use crate::datagen::{generate, GeneratorSpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{compute_report, optimal_partition, sample_initialization, InitConfig};
use crate::linalg::{
    compensated_mean, linear_fit, psd_min_eigenvalue, quantile, second_moment, weighted_linear_fit,
};
use crate::losses::{softmin_weights, squared_residuals};
use crate::params::ParameterSet;
use crate::rng::{stream_id, RngStream, StreamPurpose};
use crate::solvers::{run_gradient_am, run_gradient_em, SolverConfig, SolverKind, Trajectory};

/// Fitted parameters of the per-step recursion
/// `dist_{t+1} <= rho * dist_t + eps`, whose trajectory is
/// `dist_t = rho^t (d_0 - floor) + floor` with steady state
/// `floor = eps / (1 - rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionFit {
    /// Fitted per-step rate; >= 1 flags a sequence with no decay.
    pub rho_hat: f64,
    /// Fitted steady-state error floor.
    pub floor_hat: f64,
    /// `floor_hat * (1 - rho_hat)`, the per-step slack.
    pub per_step_epsilon: f64,
    /// Root-mean-square misfit of the model in linear space.
    pub fit_residual: f64,
}

impl ContractionFit {
    pub fn is_contraction(&self) -> bool {
        self.rho_hat < 1.0
    }
}

/// Fits the contraction model to every tracked component of a trajectory.
/// Requires truth-relative distances and at least 10 recorded iterations.
/// Non-decaying or divergent sequences are flagged via `rho_hat >= 1`, not
/// errored.
pub fn fit_contraction(traj: &Trajectory) -> Result<Vec<ContractionFit>> {
    let distances = traj.distances.as_ref().ok_or_else(|| {
        Error::InvalidInput("contraction fit needs truth-relative distances".into())
    })?;
    if distances.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "contraction fit needs >= 10 recorded iterations, got {}",
            distances.len()
        )));
    }
    let k = distances[0].len();
    Ok((0..k)
        .map(|j| {
            let series: Vec<f64> = distances.iter().map(|row| row[j]).collect();
            fit_series(&series)
        })
        .collect())
}

/// Fits `dist_t = rho^t (d0 - floor) + floor` to one distance series by a
/// floor grid search over [0, min dist] refined by golden-section, with rho
/// from a log-linear regression on `dist_t - floor`.
pub fn fit_series(series: &[f64]) -> ContractionFit {
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // Constant sequence: no decay to fit.
    if max - min <= 1e-15 * max.max(1e-300) {
        return ContractionFit {
            rho_hat: 1.0,
            floor_hat: min,
            per_step_epsilon: 0.0,
            fit_residual: 0.0,
        };
    }

    // SSE of the model `A rho^t + floor` with the amplitude solved in
    // closed form for the given (floor, rho).
    let sse_at = |floor: f64, rho: f64| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, &d) in series.iter().enumerate() {
            let p = rho.powi(t as i32);
            num += (d - floor) * p;
            den += p * p;
        }
        let amplitude = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
        let mut sse = 0.0;
        for (t, &d) in series.iter().enumerate() {
            let model = amplitude * rho.powi(t as i32) + floor;
            sse += (model - d) * (model - d);
        }
        sse
    };

    let score = |floor: f64| -> (f64, f64) {
        // (sse, rho) for this floor candidate. The log-linear regression,
        // weighted by z^2 so a long noisy plateau near the floor cannot
        // swamp the transient decay, seeds rho; a golden-section pass over
        // the linear-space SSE then refines it.
        let mut ts = Vec::new();
        let mut logs = Vec::new();
        let mut weights = Vec::new();
        for (t, &d) in series.iter().enumerate() {
            let z = d - floor;
            if z > 0.0 {
                ts.push(t as f64);
                logs.push(z.ln());
                weights.push(z * z);
            }
        }
        if ts.len() < 2 {
            return (f64::INFINITY, 1.0);
        }
        let (slope, _) = weighted_linear_fit(&ts, &logs, &weights);
        let seeded = slope.exp().clamp(1e-6, 1.25);

        let mut best_rho = seeded;
        let mut best_sse = sse_at(floor, seeded);
        for i in 0..=24 {
            let rho = 1.25 * i as f64 / 24.0;
            let sse = sse_at(floor, rho.max(1e-6));
            if sse < best_sse {
                best_sse = sse;
                best_rho = rho.max(1e-6);
            }
        }
        let (mut lo, mut hi) = ((best_rho - 0.06).max(1e-6), (best_rho + 0.06).min(1.25));
        for _ in 0..40 {
            let m1 = hi - 0.618_033_988_749_894_8 * (hi - lo);
            let m2 = lo + 0.618_033_988_749_894_8 * (hi - lo);
            if sse_at(floor, m1) <= sse_at(floor, m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let refined = 0.5 * (lo + hi);
        let refined_sse = sse_at(floor, refined);
        if refined_sse < best_sse {
            (refined_sse, refined)
        } else {
            (best_sse, best_rho)
        }
    };

    // Grid over the floor, then golden-section refinement around the best
    // bracket; the best evaluated point anywhere wins.
    const GRID: usize = 64;
    let mut best_floor = 0.0;
    let mut best = score(0.0);
    for i in 1..=GRID {
        let floor = min * i as f64 / GRID as f64;
        let s = score(floor);
        if s.0 < best.0 {
            best = s;
            best_floor = floor;
        }
    }

    let cell = min / GRID as f64;
    let mut lo = (best_floor - cell).max(0.0);
    let mut hi = (best_floor + cell).min(min);
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut m1 = hi - INV_PHI * (hi - lo);
    let mut m2 = lo + INV_PHI * (hi - lo);
    let mut s1 = score(m1);
    let mut s2 = score(m2);
    for _ in 0..60 {
        if s1.0 <= s2.0 {
            hi = m2;
            m2 = m1;
            s2 = s1;
            m1 = hi - INV_PHI * (hi - lo);
            s1 = score(m1);
            if s1.0 < best.0 {
                best = s1;
                best_floor = m1;
            }
        } else {
            lo = m1;
            m1 = m2;
            s1 = s2;
            m2 = lo + INV_PHI * (hi - lo);
            s2 = score(m2);
            if s2.0 < best.0 {
                best = s2;
                best_floor = m2;
            }
        }
        if hi - lo <= 1e-12 * min.max(1e-300) {
            break;
        }
    }

    let (sse, rho) = best;
    ContractionFit {
        rho_hat: rho,
        floor_hat: best_floor,
        per_step_epsilon: best_floor * (1.0 - rho).max(0.0),
        fit_residual: (sse / series.len() as f64).sqrt(),
    }
}

/// Misassignment rates between the truth-induced and current-induced
/// partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct PeReport {
    /// Per truth cell: fraction of members assigned elsewhere by `current`;
    /// None marks an empty (excluded) truth cell.
    pub per_cell: Vec<Option<f64>>,
    /// Mean over non-empty truth cells.
    pub pooled: f64,
    pub excluded_cells: usize,
}

/// Fraction of samples whose current-partition component differs from
/// their truth-partition component, per truth cell and pooled. Components
/// are compared by index: `current` is an initialization tracking `truth`.
pub fn empirical_pe(
    current: &ParameterSet,
    truth: &ParameterSet,
    data: &Dataset,
) -> Result<PeReport> {
    if current.k() != truth.k() || current.dim() != truth.dim() {
        return Err(Error::DimensionMismatch(format!(
            "current is ({}, {}), truth is ({}, {})",
            current.k(),
            current.dim(),
            truth.k(),
            truth.dim()
        )));
    }
    let truth_sets = optimal_partition(truth, data)?;
    let current_sets = optimal_partition(current, data)?;
    let mut current_of = vec![0usize; data.n()];
    for (j, set) in current_sets.iter().enumerate() {
        for &i in set {
            current_of[i] = j;
        }
    }
    let mut per_cell = Vec::with_capacity(truth.k());
    let mut rates = Vec::new();
    let mut excluded = 0usize;
    for (j, set) in truth_sets.iter().enumerate() {
        if set.is_empty() {
            per_cell.push(None);
            excluded += 1;
            continue;
        }
        let wrong = set.iter().filter(|&&i| current_of[i] != j).count();
        let rate = wrong as f64 / set.len() as f64;
        per_cell.push(Some(rate));
        rates.push(rate);
    }
    if rates.is_empty() {
        return Err(Error::Degenerate("every truth cell is empty".into()));
    }
    Ok(PeReport {
        per_cell,
        pooled: compensated_mean(rates.iter().copied()),
        excluded_cells: excluded,
    })
}

/// One row of the separation-decay table.
#[derive(Debug, Clone)]
pub struct SeparationLevel {
    pub level: usize,
    pub delta_hat: f64,
    pub lambda_hat: f64,
    /// `delta_hat - lambda_hat`, medianized over repetitions.
    pub gap: f64,
    /// Pooled misassignment rate, medianized over repetitions.
    pub pe: f64,
}

/// Separation-decay probe output: per-level gaps and misassignment rates,
/// plus the regression of `ln pe` on `gap^2` over the nonzero rows.
#[derive(Debug, Clone)]
pub struct SeparationDecayTable {
    pub levels: Vec<SeparationLevel>,
    /// Slope of `ln pe` against `gap^2`; None with fewer than two nonzero rows.
    pub slope: Option<f64>,
    pub correlation: Option<f64>,
    /// ln pe non-increasing in gap^2 over the nonzero rows.
    pub monotone: bool,
    pub zero_rows: usize,
}

/// Generates each family member, samples an initialization at `c_ini`, and
/// measures (Delta_hat - lambda_hat, pooled P_e), medianized over `reps`
/// repetitions. Rows with an exactly zero misassignment rate are excluded
/// from the regression and reported as zeros.
pub fn separation_decay_probe(
    family: &[GeneratorSpec],
    c_ini: f64,
    reps: usize,
    rng: &RngStream,
) -> Result<SeparationDecayTable> {
    if family.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "separation probe needs >= 3 levels, got {}",
            family.len()
        )));
    }
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be >= 1".into()));
    }
    let init_cfg = InitConfig::sphere(c_ini)?;
    let mut levels = Vec::with_capacity(family.len());
    for (cell, spec) in family.iter().enumerate() {
        let mut gaps = Vec::with_capacity(reps);
        let mut deltas = Vec::with_capacity(reps);
        let mut lambdas = Vec::with_capacity(reps);
        let mut pes = Vec::with_capacity(reps);
        for rep in 0..reps {
            let data_stream = rng.with_stream(stream_id(
                StreamPurpose::DataGeneration,
                cell as u64,
                rep as u64,
            ));
            let init_stream = rng.with_stream(stream_id(
                StreamPurpose::Initialization,
                cell as u64,
                rep as u64,
            ));
            let generated = generate(spec, &data_stream)?;
            let truth = generated
                .dataset
                .truth
                .as_ref()
                .expect("generated data always records truth")
                .components
                .clone();
            let report = compute_report(&truth, &generated.dataset)?;
            let init = sample_initialization(&truth, &init_cfg, &init_stream)?;
            let pe = empirical_pe(&init, &truth, &generated.dataset)?.pooled;
            gaps.push(report.delta_hat - report.lambda_hat);
            deltas.push(report.delta_hat);
            lambdas.push(report.lambda_hat);
            pes.push(pe);
        }
        levels.push(SeparationLevel {
            level: cell,
            delta_hat: quantile(&deltas, 0.5),
            lambda_hat: quantile(&lambdas, 0.5),
            gap: quantile(&gaps, 0.5),
            pe: quantile(&pes, 0.5),
        });
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut zero_rows = 0usize;
    for level in &levels {
        if level.pe == 0.0 {
            zero_rows += 1;
        } else {
            xs.push(level.gap * level.gap);
            ys.push(level.pe.ln());
        }
    }
    let (slope, correlation) = if xs.len() >= 2 {
        let (slope, _, corr) = linear_fit(&xs, &ys);
        (Some(slope), Some(corr))
    } else {
        (None, None)
    };

    // Monotone: sort the nonzero rows by gap^2 and require ln pe to never
    // increase.
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let monotone = order.windows(2).all(|w| ys[w[1]] <= ys[w[0]]);

    Ok(SeparationDecayTable {
        levels,
        slope,
        correlation,
        monotone,
        zero_rows,
    })
}

/// Moments of covariates restricted to a membership set.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedMoments {
    pub mean_hat: Array1<f64>,
    /// Smallest singular value of `(1/m) sum tau_i tau_i^T`; zero with the
    /// rank flag set when m < d.
    pub second_moment_min_singular: f64,
    pub sample_count: usize,
    /// `m / n`.
    pub volume_hat: f64,
    pub rank_deficient: bool,
}

/// Mean and second-moment smallest singular value of the member rows.
/// Exact symmetric eigensolve for d <= 64, iterative (tolerance 1e-8)
/// beyond.
pub fn restricted_moments(
    covariates: ArrayView2<'_, f64>,
    membership: &[usize],
) -> Result<RestrictedMoments> {
    if membership.is_empty() {
        return Err(Error::InvalidInput("empty membership set".into()));
    }
    let n = covariates.nrows();
    let d = covariates.ncols();
    if let Some(&bad) = membership.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidInput(format!(
            "membership index {bad} out of range for n = {n}"
        )));
    }
    let m = membership.len();
    let mut mean = Array1::<f64>::zeros(d);
    for &i in membership {
        mean += &covariates.row(i);
    }
    mean /= m as f64;

    let (sigma_min, rank_deficient) = if m < d {
        (0.0, true)
    } else {
        let gram = second_moment(covariates, membership);
        (psd_min_eigenvalue(gram.view(), 1e-8).max(0.0), false)
    };

    Ok(RestrictedMoments {
        mean_hat: mean,
        second_moment_min_singular: sigma_min,
        sample_count: m,
        volume_hat: m as f64 / n as f64,
        rank_deficient,
    })
}

/// Maximum member norm against the restricted-norm rate
/// `sqrt(d ln d ln(1/pi)) + sqrt(ln(1/pi))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormProbe {
    pub max_norm: f64,
    pub rate: f64,
    pub ratio: f64,
}

pub fn restricted_norm_probe(
    covariates: ArrayView2<'_, f64>,
    membership: &[usize],
    pi_min_hat: f64,
) -> Result<NormProbe> {
    if membership.is_empty() {
        return Err(Error::InvalidInput("empty membership set".into()));
    }
    if pi_min_hat.is_nan() || pi_min_hat <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "pi_min_hat must be > 0, got {pi_min_hat}"
        )));
    }
    let d = covariates.ncols() as f64;
    let max_norm = membership
        .iter()
        .map(|&i| {
            let row = covariates.row(i);
            row.dot(&row).sqrt()
        })
        .fold(0.0, f64::max);
    let log_pi = (1.0 / pi_min_hat).ln();
    let rate = (d * d.ln() * log_pi).sqrt() + log_pi.sqrt();
    Ok(NormProbe {
        max_norm,
        rate,
        ratio: max_norm / rate,
    })
}

/// Soft-min concentration of a partition: the smallest on-cell probability
/// (1 - eta) and the largest off-cell probability (eta').
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaReport {
    pub min_on_cell: f64,
    pub max_off_cell: f64,
    /// min_on_cell >= max_off_cell.
    pub ordered: bool,
    /// Delta_hat > lambda_hat on this (params, data): the regime where the
    /// ordering is asserted.
    pub gap_positive: bool,
    pub excluded_cells: usize,
}

/// Partitions the data by `params` and scans the soft-min probabilities:
/// minimum of `p_j` over members of cell j, maximum of `p_j` over
/// non-members. Empty cells are excluded.
pub fn eta_probe(params: &ParameterSet, beta: f64, data: &Dataset) -> Result<EtaReport> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::InvalidInput(format!(
            "inverse temperature must be >= 0, got {beta}"
        )));
    }
    let sets = optimal_partition(params, data)?;
    let report = compute_report(params, data)?;
    let k = params.k();
    let mut member_of = vec![0usize; data.n()];
    for (j, set) in sets.iter().enumerate() {
        for &i in set {
            member_of[i] = j;
        }
    }
    let mut min_on = f64::INFINITY;
    let mut max_off = 0.0f64;
    for i in 0..data.n() {
        let (x, y) = data.sample(i);
        let r2 = squared_residuals(params, x, y);
        let p = softmin_weights(beta, &r2);
        for j in 0..k {
            if member_of[i] == j {
                min_on = min_on.min(p[j]);
            } else {
                max_off = max_off.max(p[j]);
            }
        }
    }
    let excluded = sets.iter().filter(|s| s.is_empty()).count();
    Ok(EtaReport {
        min_on_cell: min_on,
        max_off_cell: max_off,
        ordered: min_on >= max_off,
        gap_positive: report.delta_hat > report.lambda_hat,
        excluded_cells: excluded,
    })
}

/// One grid cell of the floor-scaling probe.
#[derive(Debug, Clone, Copy)]
pub struct FloorCell {
    pub gamma: f64,
    pub misspec: f64,
    /// Median over repetitions of the mean per-component fitted floor.
    pub floor: f64,
    /// Median over repetitions of the mean per-component fitted rate.
    pub rho: f64,
    /// Median rho >= 1: excluded from monotonicity checks.
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct FloorScalingTable {
    pub cells: Vec<FloorCell>,
    pub gammas: Vec<f64>,
    pub misspecs: Vec<f64>,
    /// Floors non-decreasing along the gamma grid in every misspec row.
    pub monotone_in_gamma: bool,
    /// Floors non-decreasing along the misspec grid in every gamma column.
    pub monotone_in_misspec: bool,
    pub diverged_cells: usize,
}

impl FloorScalingTable {
    pub fn cell(&self, gamma_idx: usize, misspec_idx: usize) -> &FloorCell {
        &self.cells[gamma_idx * self.misspecs.len() + misspec_idx]
    }
}

/// Runs the solver over a (gamma, misspec) grid, fits floors per cell, and
/// checks that the fitted floor is non-decreasing in both the step size and
/// the misspecification level. Divergent cells are flagged and excluded.
#[allow(clippy::too_many_arguments)]
pub fn floor_scaling_probe(
    gen_base: &GeneratorSpec,
    solver_base: &SolverConfig,
    init: &InitConfig,
    solver: SolverKind,
    gammas: &[f64],
    misspecs: &[f64],
    reps: usize,
    rng: &RngStream,
) -> Result<FloorScalingTable> {
    if gammas.is_empty() || misspecs.is_empty() || reps == 0 {
        return Err(Error::InvalidInput(
            "floor probe needs nonempty grids and reps >= 1".into(),
        ));
    }
    use crate::datagen::GeneratorMode;
    if gen_base.mode == GeneratorMode::Realizable && misspecs.iter().any(|&m| m > 0.0) {
        return Err(Error::InvalidInput(
            "misspec grid over a realizable base; use an agnostic generator".into(),
        ));
    }

    let mut cells = Vec::with_capacity(gammas.len() * misspecs.len());
    for (gi, &gamma) in gammas.iter().enumerate() {
        for (mi, &misspec) in misspecs.iter().enumerate() {
            let cell_id = (gi * misspecs.len() + mi) as u64;
            let mut floors = Vec::with_capacity(reps);
            let mut rhos = Vec::with_capacity(reps);
            for rep in 0..reps {
                let spec = GeneratorSpec {
                    misspec_level: misspec,
                    ..gen_base.clone()
                };
                let data_stream = rng.with_stream(stream_id(
                    StreamPurpose::DataGeneration,
                    cell_id,
                    rep as u64,
                ));
                let init_stream = rng.with_stream(stream_id(
                    StreamPurpose::Initialization,
                    cell_id,
                    rep as u64,
                ));
                let generated = generate(&spec, &data_stream)?;
                let truth = generated
                    .dataset
                    .truth
                    .as_ref()
                    .expect("generated data records truth")
                    .components
                    .clone();
                let start = sample_initialization(&truth, init, &init_stream)?;
                let cfg = SolverConfig {
                    gamma,
                    shuffle_seed: rng.seed ^ (cell_id << 16) ^ rep as u64,
                    ..*solver_base
                };
                let traj = match solver {
                    SolverKind::GradientAm => {
                        run_gradient_am(&generated.dataset, &start, &cfg, Some(&truth))?
                    }
                    SolverKind::GradientEm => {
                        run_gradient_em(&generated.dataset, &start, &cfg, Some(&truth))?
                    }
                };
                let fits = fit_contraction(&traj)?;
                floors.push(compensated_mean(fits.iter().map(|f| f.floor_hat)));
                rhos.push(compensated_mean(fits.iter().map(|f| f.rho_hat)));
            }
            let rho = quantile(&rhos, 0.5);
            cells.push(FloorCell {
                gamma,
                misspec,
                floor: quantile(&floors, 0.5),
                rho,
                diverged: rho >= 1.0,
            });
        }
    }

    let diverged_cells = cells.iter().filter(|c| c.diverged).count();
    let at = |gi: usize, mi: usize| &cells[gi * misspecs.len() + mi];
    let mut monotone_in_gamma = true;
    for mi in 0..misspecs.len() {
        let usable: Vec<&FloorCell> = (0..gammas.len())
            .map(|gi| at(gi, mi))
            .filter(|c| !c.diverged)
            .collect();
        if usable.windows(2).any(|w| w[1].floor < w[0].floor) {
            monotone_in_gamma = false;
        }
    }
    let mut monotone_in_misspec = true;
    for gi in 0..gammas.len() {
        let usable: Vec<&FloorCell> = (0..misspecs.len())
            .map(|mi| at(gi, mi))
            .filter(|c| !c.diverged)
            .collect();
        if usable.windows(2).any(|w| w[1].floor < w[0].floor) {
            monotone_in_misspec = false;
        }
    }

    Ok(FloorScalingTable {
        cells,
        gammas: gammas.to_vec(),
        misspecs: misspecs.to_vec(),
        monotone_in_gamma,
        monotone_in_misspec,
        diverged_cells,
    })
}
