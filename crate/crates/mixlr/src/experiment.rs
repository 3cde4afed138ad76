//! Experiment orchestration: resolves a declarative [`ExperimentConfig`]
//! into generator/solver/probe calls and emits flat result records.
//!
//! Repetitions and sweep cells run concurrently up to a jobs limit; every
//! cell derives its own random streams from (seed, purpose, cell,
//! repetition), and records are emitted in (cell, repetition) order, so
//! identical configs produce byte-identical outputs regardless of
//! parallelism. Wall-clock timings are kept out of result files unless
//! explicitly requested.

use std::path::{Path, PathBuf};

use crate::config::{Algorithm, ExperimentConfig, ExperimentKind};
use crate::datagen::{generate, uniform_weights, GeneratorSpec};
use crate::dataset::Dataset;
use crate::diagnostics::{
    empirical_pe, eta_probe, fit_contraction, floor_scaling_probe, restricted_moments,
    restricted_norm_probe, separation_decay_probe,
};
use crate::error::{Error, Result};
use crate::generalization::{bounded_unit_dataset, lipschitz_probe, rademacher_estimate};
use crate::geometry::{check_am_separation, compute_report, sample_initialization};
use crate::linalg::compensated_mean;
use crate::params::ParameterSet;
use crate::records::{write_csv, write_jsonl, Record};
use crate::rng::{gaussian_matrix, stream_id, RngStream, StreamPurpose};
use crate::solvers::{run_gradient_am, run_gradient_em, SolverKind, Trajectory};

/// Execution options orthogonal to the experiment definition.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Concurrent repetitions / sweep cells.
    pub jobs: usize,
    /// Include wall-clock fields in serialized records. Off by default:
    /// timings break byte-for-byte determinism of result files.
    pub include_timings: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            include_timings: false,
        }
    }
}

/// Records plus the hard-assertion failures encountered while producing
/// them. A run with failures exits nonzero.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<Record>,
    pub failures: Vec<String>,
}

impl ExperimentOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Executes the configured experiment and returns its record stream.
pub fn run_experiment(cfg: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentOutcome> {
    match cfg.kind {
        ExperimentKind::Convergence => convergence_experiment(cfg, options),
        ExperimentKind::SeparationSweep => separation_experiment(cfg),
        ExperimentKind::SampleSweep => sample_sweep_experiment(cfg, options),
        ExperimentKind::StepSweep => step_sweep_experiment(cfg),
        ExperimentKind::RestrictedSpectra => restricted_spectra_experiment(cfg, options),
        ExperimentKind::Rademacher => rademacher_experiment(cfg, options),
    }
}

/// Writes the records to `path` (JSON lines) and, when `csv` is set, a
/// sibling `<path>.csv` projecting the experiment's primary record kind.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    records: &[Record],
    path: &Path,
    csv: bool,
) -> Result<()> {
    write_jsonl(records, path)?;
    if csv {
        let mut csv_path = path.as_os_str().to_os_string();
        csv_path.push(".csv");
        write_csv(records, primary_record_kind(cfg.kind), &PathBuf::from(csv_path))?;
    }
    Ok(())
}

/// The record kind projected into CSV for each experiment kind.
pub fn primary_record_kind(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Convergence => "trajectory",
        ExperimentKind::SeparationSweep => "separation_level",
        ExperimentKind::SampleSweep => "sample_level",
        ExperimentKind::StepSweep => "floor_cell",
        ExperimentKind::RestrictedSpectra => "restricted",
        ExperimentKind::Rademacher => "rademacher",
    }
}

/// One generated repetition: dataset, truth components, initialization.
struct Instance {
    data: Dataset,
    truth: ParameterSet,
    init: ParameterSet,
}

fn make_instance(cfg: &ExperimentConfig, spec: &GeneratorSpec, cell: u64, rep: u64) -> Result<Instance> {
    let data_stream = RngStream::new(cfg.seed, stream_id(StreamPurpose::DataGeneration, cell, rep));
    let init_stream =
        RngStream::new(cfg.seed, stream_id(StreamPurpose::Initialization, cell, rep));
    let generated = generate(spec, &data_stream)?;
    let truth = generated
        .dataset
        .truth
        .as_ref()
        .expect("generated data records truth")
        .components
        .clone();
    let init = sample_initialization(&truth, &cfg.init, &init_stream)?;
    Ok(Instance {
        data: generated.dataset,
        truth,
        init,
    })
}

fn solvers_for(algorithm: Algorithm) -> Vec<SolverKind> {
    match algorithm {
        Algorithm::Am => vec![SolverKind::GradientAm],
        Algorithm::Em => vec![SolverKind::GradientEm],
        Algorithm::Both => vec![SolverKind::GradientAm, SolverKind::GradientEm],
    }
}

fn solver_label(kind: SolverKind) -> &'static str {
    match kind {
        SolverKind::GradientAm => "am",
        SolverKind::GradientEm => "em",
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    instance: &Instance,
    kind: SolverKind,
    rep: u64,
) -> Result<Trajectory> {
    let algorithm = match kind {
        SolverKind::GradientAm => Algorithm::Am,
        SolverKind::GradientEm => Algorithm::Em,
    };
    let mut scfg = cfg.solver_config(algorithm);
    scfg.shuffle_seed = cfg.seed.wrapping_add(rep);
    match kind {
        SolverKind::GradientAm => {
            run_gradient_am(&instance.data, &instance.init, &scfg, Some(&instance.truth))
        }
        SolverKind::GradientEm => {
            run_gradient_em(&instance.data, &instance.init, &scfg, Some(&instance.truth))
        }
    }
}

/// Run record plus per-iteration trajectory records for one solver run.
fn trajectory_records(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    rep: u64,
    include_timings: bool,
) -> Vec<Record> {
    let solver = solver_label(traj.kind);
    let k = cfg.generator.k;
    let mut out = Vec::new();

    let mut run = Record::new("run")
        .str("solver", solver)
        .u64("rep", rep)
        .usize("n", cfg.generator.n)
        .usize("d", cfg.generator.d)
        .usize("k", k)
        .f64("gamma", cfg.gamma)
        .f64("beta", cfg.beta)
        .usize("iterations", traj.iterations);
    if let Some(d0) = traj.initial_max_distance() {
        run = run.f64("initial_dist", d0);
    }
    if let Some(df) = traj.final_max_distance() {
        run = run.f64("final_dist", df);
    }
    run = run
        .f64("initial_loss", traj.losses[0])
        .f64("final_loss", *traj.losses.last().unwrap());
    if traj.distances.as_ref().map_or(0, Vec::len) >= 10 {
        if let Ok(fits) = fit_contraction(traj) {
            for (j, fit) in fits.iter().enumerate() {
                run = run
                    .f64(&format!("rho_{}", j + 1), fit.rho_hat)
                    .f64(&format!("floor_{}", j + 1), fit.floor_hat);
            }
            run = run.bool("contraction", fits.iter().all(|f| f.is_contraction()));
        }
    }
    out.push(run);

    for t in 1..=traj.iterations {
        if t % traj.record_every != 0 && t != traj.iterations {
            continue;
        }
        let mut r = Record::new("trajectory")
            .str("solver", solver)
            .u64("rep", rep)
            .usize("t", t);
        if let Some(d) = &traj.distances {
            for (j, v) in d[t].iter().enumerate() {
                r = r.f64(&format!("dist_{}", j + 1), *v);
            }
        }
        r = r.f64("loss", traj.losses[t]);
        match traj.kind {
            SolverKind::GradientAm => {
                let sizes = &traj.cell_sizes.as_ref().unwrap()[t - 1];
                let cells: Vec<String> = sizes.iter().map(usize::to_string).collect();
                r = r.str("cells", &cells.join("|"));
            }
            SolverKind::GradientEm => {
                r = r.f64("margin", traj.margins.as_ref().unwrap()[t - 1]);
            }
        }
        if include_timings {
            r = r.f64("millis", traj.millis[t - 1]);
        }
        out.push(r);
    }
    out
}

fn convergence_experiment(
    cfg: &ExperimentConfig,
    options: &RunOptions,
) -> Result<ExperimentOutcome> {
    let reps = cfg.repetitions;
    let per_rep = run_indexed(reps, options.jobs, |rep| {
        let instance = make_instance(cfg, &cfg.generator, 0, rep as u64)?;
        let mut records = Vec::new();
        for kind in solvers_for(cfg.algorithm) {
            let traj = run_one(cfg, &instance, kind, rep as u64)?;
            records.extend(trajectory_records(cfg, &traj, rep as u64, options.include_timings));
        }
        Ok(records)
    })?;
    Ok(ExperimentOutcome {
        records: per_rep.into_iter().flatten().collect(),
        failures: Vec::new(),
    })
}

/// Runs both solvers on identical data, initialization, and shuffle seed.
/// Returns records plus per-rep wall-clock totals for display (timings stay
/// out of the records unless requested).
pub fn compare_solvers(
    cfg: &ExperimentConfig,
    options: &RunOptions,
) -> Result<(ExperimentOutcome, Vec<String>)> {
    if cfg.kind != ExperimentKind::Convergence {
        return Err(Error::Config(
            "kind: compare requires a convergence config".into(),
        ));
    }
    let per_rep = run_indexed(cfg.repetitions, options.jobs, |rep| {
        let instance = make_instance(cfg, &cfg.generator, 0, rep as u64)?;
        let mut records = Vec::new();
        let mut summary = Vec::new();
        for kind in [SolverKind::GradientAm, SolverKind::GradientEm] {
            let traj = run_one(cfg, &instance, kind, rep as u64)?;
            let fits = fit_contraction(&traj).ok();
            let total_millis: f64 = traj.millis.iter().sum();
            let mut r = Record::new("compare")
                .str("solver", solver_label(kind))
                .u64("rep", rep as u64);
            if let Some(fits) = &fits {
                r = r
                    .f64("rho_mean", compensated_mean(fits.iter().map(|f| f.rho_hat)))
                    .f64(
                        "floor_mean",
                        compensated_mean(fits.iter().map(|f| f.floor_hat)),
                    );
            }
            if let Some(df) = traj.final_max_distance() {
                r = r.f64("final_dist", df);
            }
            r = r.f64("final_loss", *traj.losses.last().unwrap());
            if let Some(margins) = &traj.margins {
                r = r.f64(
                    "margin_mean",
                    compensated_mean(margins.iter().copied()),
                );
            }
            if options.include_timings {
                r = r.f64("wall_millis", total_millis);
            }
            summary.push(format!(
                "rep {rep} {}: final_dist {:.3e}, wall {:.1} ms",
                solver_label(kind),
                traj.final_max_distance().unwrap_or(f64::NAN),
                total_millis
            ));
            records.push(r);
        }
        Ok((records, summary))
    })?;

    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for (r, s) in per_rep {
        records.extend(r);
        summaries.extend(s);
    }
    Ok((
        ExperimentOutcome {
            records,
            failures: Vec::new(),
        },
        summaries,
    ))
}

fn separation_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    if cfg.sweep.scales.len() < 3 {
        return Err(Error::Config(
            "sweep.scales: separation_sweep needs >= 3 levels".into(),
        ));
    }
    let family: Vec<GeneratorSpec> = cfg
        .sweep
        .scales
        .iter()
        .enumerate()
        .map(|(i, &scale)| {
            let k = cfg.sweep.ks.get(i).copied().unwrap_or(cfg.generator.k);
            GeneratorSpec {
                component_scale: scale,
                k,
                mixing_weights: uniform_weights(k),
                ..cfg.generator.clone()
            }
        })
        .collect();
    let table = separation_decay_probe(
        &family,
        cfg.init.c_ini,
        cfg.sweep.reps,
        &RngStream::new(cfg.seed, 0),
    )?;

    let mut records = Vec::new();
    for (level, spec) in table.levels.iter().zip(&family) {
        records.push(
            Record::new("separation_level")
                .usize("level", level.level)
                .f64("scale", spec.component_scale)
                .usize("k", spec.k)
                .f64("delta_hat", level.delta_hat)
                .f64("lambda_hat", level.lambda_hat)
                .f64("gap", level.gap)
                .f64("pe", level.pe),
        );
    }
    let mut summary = Record::new("separation_summary")
        .bool("monotone", table.monotone)
        .usize("zero_rows", table.zero_rows);
    if let Some(slope) = table.slope {
        summary = summary.f64("slope", slope);
    }
    if let Some(corr) = table.correlation {
        summary = summary.f64("correlation", corr);
    }
    records.push(summary);

    let mut failures = Vec::new();
    if !table.monotone {
        failures
            .push("separation_sweep: ln(pe) is not non-increasing in (delta - lambda)^2".into());
    }
    Ok(ExperimentOutcome { records, failures })
}

fn sample_sweep_experiment(
    cfg: &ExperimentConfig,
    options: &RunOptions,
) -> Result<ExperimentOutcome> {
    if cfg.sweep.ns.is_empty() {
        return Err(Error::Config("sweep.ns: sample_sweep needs levels".into()));
    }
    let cells = run_indexed(cfg.sweep.ns.len(), options.jobs, |cell| {
        let n = cfg.sweep.ns[cell];
        let spec = GeneratorSpec {
            n,
            ..cfg.generator.clone()
        };
        let mut successes = 0usize;
        let mut finals = Vec::with_capacity(cfg.repetitions);
        for rep in 0..cfg.repetitions {
            let instance = make_instance(cfg, &spec, cell as u64, rep as u64)?;
            let kind = match cfg.algorithm {
                Algorithm::Em => SolverKind::GradientEm,
                _ => SolverKind::GradientAm,
            };
            let traj = run_one(cfg, &instance, kind, rep as u64)?;
            let initial = traj.initial_max_distance().unwrap_or(f64::NAN);
            let fin = traj.final_max_distance().unwrap_or(f64::NAN);
            if fin <= cfg.sweep.success_ratio * initial {
                successes += 1;
            }
            finals.push(fin);
        }
        Ok(Record::new("sample_level")
            .usize("n", n)
            .usize("reps", cfg.repetitions)
            .f64(
                "success_rate",
                successes as f64 / cfg.repetitions as f64,
            )
            .f64("mean_final_dist", compensated_mean(finals.iter().copied())))
    })?;
    Ok(ExperimentOutcome {
        records: cells,
        failures: Vec::new(),
    })
}

fn step_sweep_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    if cfg.sweep.gammas.is_empty() || cfg.sweep.misspecs.is_empty() {
        return Err(Error::Config(
            "sweep.gammas / sweep.misspecs: step_sweep needs both grids".into(),
        ));
    }
    let solver = match cfg.algorithm {
        Algorithm::Am => SolverKind::GradientAm,
        Algorithm::Em => SolverKind::GradientEm,
        Algorithm::Both => {
            return Err(Error::Config(
                "solver.algorithm: step_sweep needs `am` or `em`, not `both`".into(),
            ))
        }
    };
    let base = cfg.solver_config(cfg.algorithm);
    let table = floor_scaling_probe(
        &cfg.generator,
        &base,
        &cfg.init,
        solver,
        &cfg.sweep.gammas,
        &cfg.sweep.misspecs,
        cfg.sweep.reps,
        &RngStream::new(cfg.seed, 0),
    )?;

    let mut records = Vec::new();
    for cell in &table.cells {
        records.push(
            Record::new("floor_cell")
                .f64("gamma", cell.gamma)
                .f64("misspec", cell.misspec)
                .f64("floor", cell.floor)
                .f64("rho", cell.rho)
                .bool("diverged", cell.diverged),
        );
    }
    records.push(
        Record::new("floor_summary")
            .bool("monotone_in_gamma", table.monotone_in_gamma)
            .bool("monotone_in_misspec", table.monotone_in_misspec)
            .usize("diverged_cells", table.diverged_cells),
    );

    let mut failures = Vec::new();
    if cfg.sweep.gammas.len() >= 2 && !table.monotone_in_gamma {
        failures.push("step_sweep: fitted floor is not non-decreasing in gamma".into());
    }
    if cfg.sweep.misspecs.len() >= 2 && !table.monotone_in_misspec {
        failures.push("step_sweep: fitted floor is not non-decreasing in misspec".into());
    }
    Ok(ExperimentOutcome { records, failures })
}

fn restricted_spectra_experiment(
    cfg: &ExperimentConfig,
    options: &RunOptions,
) -> Result<ExperimentOutcome> {
    if cfg.sweep.volumes.is_empty() {
        return Err(Error::Config(
            "sweep.volumes: restricted_spectra needs volumes".into(),
        ));
    }
    for &v in &cfg.sweep.volumes {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Config(format!(
                "sweep.volumes: volumes must lie in (0, 1], got {v}"
            )));
        }
    }
    let per_rep = run_indexed(cfg.repetitions, options.jobs, |rep| {
        let stream = RngStream::new(
            cfg.seed,
            stream_id(StreamPurpose::DataGeneration, 0, rep as u64),
        );
        let x = gaussian_matrix(&stream, cfg.generator.n, cfg.generator.d)?;
        let n = x.nrows();

        // Halfspace memberships along the first coordinate: the m samples
        // with the largest x_1, m = round(volume * n).
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| x[[b, 0]].total_cmp(&x[[a, 0]]));

        let mut records = Vec::new();
        let mut failures = Vec::new();
        for &volume in &cfg.sweep.volumes {
            let m = ((volume * n as f64).round() as usize).clamp(1, n);
            let membership: Vec<usize> = order[..m].to_vec();
            let nu = m as f64 / n as f64;
            let moments = restricted_moments(x.view(), &membership)?;
            let norm = restricted_norm_probe(x.view(), &membership, nu)?;
            let mean_norm_sq = moments.mean_hat.dot(&moments.mean_hat);
            let sigma_bound = 0.1 * nu * nu;
            let mean_bound = 4.0 * (1.0 / nu).ln();
            let sigma_ok = moments.second_moment_min_singular >= sigma_bound;
            let mean_ok = mean_norm_sq <= mean_bound;
            if !sigma_ok {
                failures.push(format!(
                    "restricted_spectra: rep {rep} volume {volume}: sigma_min {:.4e} < 0.1 nu^2 = {:.4e}",
                    moments.second_moment_min_singular, sigma_bound
                ));
            }
            if !mean_ok {
                failures.push(format!(
                    "restricted_spectra: rep {rep} volume {volume}: ||mean||^2 {:.4e} > 4 log(1/nu) = {:.4e}",
                    mean_norm_sq, mean_bound
                ));
            }
            records.push(
                Record::new("restricted")
                    .u64("rep", rep as u64)
                    .f64("volume", nu)
                    .usize("m", m)
                    .f64("sigma_min", moments.second_moment_min_singular)
                    .f64("sigma_bound", sigma_bound)
                    .f64("mean_norm_sq", mean_norm_sq)
                    .f64("mean_bound", mean_bound)
                    .f64("max_norm", norm.max_norm)
                    .f64("norm_ratio", norm.ratio)
                    .bool("sigma_ok", sigma_ok)
                    .bool("mean_ok", mean_ok),
            );
        }
        Ok((records, failures))
    })?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in per_rep {
        records.extend(r);
        failures.extend(f);
    }
    Ok(ExperimentOutcome { records, failures })
}

fn rademacher_experiment(
    cfg: &ExperimentConfig,
    options: &RunOptions,
) -> Result<ExperimentOutcome> {
    let rad = &cfg.rad;
    let mut grid = Vec::new();
    for &radius in &rad.radii {
        for &k in &rad.ks {
            for &n in &rad.ns {
                grid.push((radius, k, n));
            }
        }
    }
    if grid.is_empty() {
        return Err(Error::Config("rad.radii/rad.ks/rad.ns: empty grid".into()));
    }

    let cells = run_indexed(grid.len(), options.jobs, |cell| {
        let (radius, k, n) = grid[cell];
        let data_stream = RngStream::new(
            cfg.seed,
            stream_id(StreamPurpose::DataGeneration, cell as u64, 0),
        );
        let data = bounded_unit_dataset(&data_stream, n, cfg.generator.d)?;
        let est_stream = RngStream::new(
            cfg.seed,
            stream_id(StreamPurpose::Rademacher, cell as u64, 0),
        );
        let est = rademacher_estimate(&data, radius, k, rad.trials, rad.budget, &est_stream)?;
        let ok = est.estimate <= est.bound;
        let record = Record::new("rademacher")
            .f64("radius", radius)
            .usize("k", k)
            .usize("n", n)
            .usize("trials", est.trials)
            .usize("budget", est.optimizer_budget)
            .f64("estimate", est.estimate)
            .f64("bound", est.bound)
            .bool("within_bound", ok);
        let failure = (!ok).then(|| {
            format!(
                "rademacher: estimate {:.4e} exceeds bound {:.4e} at (R, k, n) = ({radius}, {k}, {n})",
                est.estimate, est.bound
            )
        });
        Ok((record, failure))
    })?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in cells {
        records.push(r);
        failures.extend(f);
    }

    for (i, &radius) in rad.radii.iter().enumerate() {
        let stream = RngStream::new(cfg.seed, stream_id(StreamPurpose::Probe, i as u64, 0));
        let report = lipschitz_probe(cfg.generator.d, radius, rad.lipschitz_trials, &stream);
        let ok = report.max_ratio <= report.bound;
        if !ok {
            failures.push(format!(
                "lipschitz: max ratio {:.6} exceeds 2(1+R) = {:.6} at R = {radius}",
                report.max_ratio, report.bound
            ));
        }
        records.push(
            Record::new("lipschitz")
                .f64("radius", radius)
                .usize("trials", report.trials)
                .usize("skipped", report.skipped)
                .f64("max_ratio", report.max_ratio)
                .f64("bound", report.bound)
                .bool("within_bound", ok),
        );
    }

    Ok(ExperimentOutcome { records, failures })
}

/// Geometry report of the generated data at its own truth components.
pub fn geometry_records(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let instance = make_instance(cfg, &cfg.generator, 0, 0)?;
    let report = compute_report(&instance.truth, &instance.data)?;
    let counts: Vec<String> = report.counts.iter().map(usize::to_string).collect();
    let mut r = Record::new("geometry")
        .usize("n", cfg.generator.n)
        .usize("d", cfg.generator.d)
        .usize("k", cfg.generator.k)
        .f64("lambda_hat", report.lambda_hat)
        .f64("delta_hat", report.delta_hat)
        .f64("pi_min_hat", report.pi_min_hat)
        .str("counts", &counts.join("|"))
        .bool("degenerate", report.degenerate);
    if !report.degenerate {
        let check = check_am_separation(&report, &instance.truth, cfg.init.c_ini, 1.0)?;
        r = r
            .bool("separation_holds", check.holds)
            .f64("separation_threshold", check.threshold);
    }
    Ok(ExperimentOutcome {
        records: vec![r],
        failures: Vec::new(),
    })
}

/// Convergence runs plus the per-run diagnostic probes (geometry, eta,
/// misassignment) on a single repetition.
pub fn diagnose_records(cfg: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentOutcome> {
    let mut outcome = geometry_records(cfg)?;
    let instance = make_instance(cfg, &cfg.generator, 0, 0)?;

    let eta = eta_probe(&instance.truth, cfg.beta.min(1e12), &instance.data)?;
    outcome.records.push(
        Record::new("eta")
            .f64("beta", cfg.beta)
            .f64("min_on_cell", eta.min_on_cell)
            .f64("max_off_cell", eta.max_off_cell)
            .bool("ordered", eta.ordered)
            .bool("gap_positive", eta.gap_positive)
            .usize("excluded_cells", eta.excluded_cells),
    );
    if eta.gap_positive && !eta.ordered {
        outcome.failures.push(
            "eta: min on-cell probability fell below max off-cell probability with delta > lambda"
                .into(),
        );
    }

    let pe = empirical_pe(&instance.init, &instance.truth, &instance.data)?;
    let cells: Vec<String> = pe
        .per_cell
        .iter()
        .map(|c| match c {
            Some(v) => format!("{v:.6}"),
            None => "-".into(),
        })
        .collect();
    outcome.records.push(
        Record::new("pe")
            .f64("c_ini", cfg.init.c_ini)
            .f64("pooled", pe.pooled)
            .str("per_cell", &cells.join("|"))
            .usize("excluded_cells", pe.excluded_cells),
    );

    let conv = convergence_experiment(cfg, options)?;
    outcome.records.extend(conv.records);
    outcome.failures.extend(conv.failures);
    Ok(outcome)
}

/// Runs `count` independent cells, preserving index order in the returned
/// vector. With jobs > 1 the cells run on a scoped rayon pool.
fn run_indexed<T, F>(count: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if jobs <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.min(count))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| (0..count).into_par_iter().map(f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::records::to_jsonl;

    fn quick_convergence_cfg() -> ExperimentConfig {
        ExperimentConfig::parse(
            "kind=convergence\nseed=7\nrepetitions=2\ngenerator.n=200\ngenerator.d=3\n\
             generator.k=2\ngenerator.component_scale=4\nsolver.gamma=0.4\n\
             solver.iterations=12\nsolver.split=none\ninit.c_ini=0.1\n",
        )
        .unwrap()
    }

    #[test]
    fn convergence_produces_run_and_trajectory_records() {
        let cfg = quick_convergence_cfg();
        let outcome = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert!(outcome.passed());
        let runs = outcome.records.iter().filter(|r| r.kind() == "run").count();
        let trajs = outcome
            .records
            .iter()
            .filter(|r| r.kind() == "trajectory")
            .count();
        assert_eq!(runs, 2);
        assert_eq!(trajs, 2 * 12);
    }

    #[test]
    fn identical_configs_yield_identical_bytes() {
        let cfg = quick_convergence_cfg();
        let a = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let b = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(to_jsonl(&a.records), to_jsonl(&b.records));
    }

    #[test]
    fn parallel_execution_preserves_record_order() {
        let cfg = quick_convergence_cfg();
        let serial = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let parallel = run_experiment(
            &cfg,
            &RunOptions {
                jobs: 4,
                include_timings: false,
            },
        )
        .unwrap();
        assert_eq!(to_jsonl(&serial.records), to_jsonl(&parallel.records));
    }

    #[test]
    fn zero_gamma_keeps_distances_constant() {
        let cfg = ExperimentConfig::parse(
            "kind=convergence\nseed=3\ngenerator.n=100\ngenerator.d=3\ngenerator.k=2\n\
             solver.gamma=0\nsolver.iterations=10\nsolver.split=none\ninit.c_ini=0.2\n",
        )
        .unwrap();
        let outcome = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let dists: Vec<f64> = outcome
            .records
            .iter()
            .filter(|r| r.kind() == "trajectory")
            .map(|r| r.get_f64("dist_1").unwrap())
            .collect();
        assert!(dists.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn compare_requires_convergence_kind() {
        let cfg = ExperimentConfig::parse("kind=rademacher\n").unwrap();
        assert!(compare_solvers(&cfg, &RunOptions::default()).is_err());
    }
}
