//! Acceptance suite: one test per release criterion, each printing a
//! single PASS/FAIL line. Every tolerance is pinned here, in code.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use common::*;
use mixlr::config::ExperimentConfig;
use mixlr::datagen::{generate, GeneratorSpec};
use mixlr::diagnostics::{fit_contraction, floor_scaling_probe, separation_decay_probe};
use mixlr::experiment::{run_experiment, write_outputs, RunOptions};
use mixlr::generalization::{bounded_unit_dataset, lipschitz_probe, rademacher_estimate};
use mixlr::geometry::{sample_initialization, InitConfig};
use mixlr::losses::{
    empirical_loss, min_loss, softmin_full_gradient, softmin_loss, LossKind, SoftminConfig,
};
use mixlr::records::to_jsonl;
use mixlr::rng::{stream_id, StreamPurpose};
use mixlr::solvers::{run_gradient_am, run_gradient_em, SolverConfig, SplitMode};
use mixlr::{diagnostics::eta_probe, geometry::compute_report, RngStream, SolverKind};
use ndarray::Array1;
use rand::Rng;

fn report(number: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "criterion {number:02} {name}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {number:02} {name}: {detail}");
}

/// Criterion 1: soft-min limits. On 1000 random instances whose smallest
/// two squared residuals are separated by at least 0.1, the soft-min loss
/// at beta = 1e6 matches the min-loss within 1e-6 and at beta = 0 matches
/// the mean of squared residuals within 1e-12.
#[test]
fn criterion_01_beta_limits() {
    let mut gen = rng(1001, 0);
    let mut max_hard_gap = 0.0f64;
    let mut max_mean_gap = 0.0f64;
    let mut produced = 0;
    while produced < 1000 {
        let k = gen.random_range(2..=5usize);
        let d = gen.random_range(1..=4usize);
        let params = random_params(&mut gen, k, d, 1.0);
        let x = random_vector(&mut gen, d);
        let y: f64 = gen.random_range(-2.0..2.0);
        let mut r2 = brute_squared_residuals(&params, x.view(), y);
        r2.sort_by(|a, b| a.total_cmp(b));
        if r2[1] - r2[0] < 0.1 {
            continue;
        }
        produced += 1;

        let hard = softmin_loss(&params, 1e6, x.view(), y).unwrap();
        let min = min_loss(&params, x.view(), y).unwrap();
        max_hard_gap = max_hard_gap.max((hard - min).abs());

        let soft0 = softmin_loss(&params, 0.0, x.view(), y).unwrap();
        let mean = r2.iter().sum::<f64>() / k as f64;
        max_mean_gap = max_mean_gap.max((soft0 - mean).abs());
    }
    let ok = max_hard_gap <= 1e-6 && max_mean_gap <= 1e-12;
    report(
        1,
        "beta-limits",
        ok,
        &format!("max |soft(1e6)-min| = {max_hard_gap:.2e}, max |soft(0)-mean| = {max_mean_gap:.2e}"),
    );
}

/// Criterion 2: the analytic soft-min gradient matches central finite
/// differences (step 1e-5) to relative error 1e-5 on 100 random instances
/// with d <= 5, k <= 3, beta <= 5, and equals the uniform-weight gradient
/// bit for bit at beta = 0.
#[test]
fn criterion_02_gradient_oracle() {
    let mut gen = rng(1002, 0);
    let mut worst = 0.0f64;
    let mut produced = 0;
    while produced < 100 {
        let k = gen.random_range(1..=3usize);
        let d = gen.random_range(1..=5usize);
        let beta: f64 = gen.random_range(0.1..=5.0);
        let params = random_params(&mut gen, k, d, 0.8);
        let data = random_dataset(&mut gen, 10, d);
        let j = gen.random_range(0..k);
        let grad = softmin_full_gradient(&params, beta, &data, j).unwrap();
        if grad.dot(&grad).sqrt() < 1e-3 {
            continue;
        }
        produced += 1;
        let fd = finite_difference_gradient(&params, j, 1e-5, |p| {
            empirical_loss(p, &data, LossKind::Softmin(SoftminConfig::new(beta).unwrap()))
                .unwrap()
        });
        worst = worst.max(relative_error(&grad, &fd));
    }

    let mut exact = true;
    for _ in 0..20 {
        let k = gen.random_range(1..=3usize);
        let params = random_params(&mut gen, k, 3, 1.0);
        let data = random_dataset(&mut gen, 8, 3);
        for j in 0..k {
            let got = softmin_full_gradient(&params, 0.0, &data, j).unwrap();
            let p = 1.0 / k as f64;
            let mut acc = Array1::<f64>::zeros(3);
            for i in 0..data.n() {
                let (x, y) = data.sample(i);
                let mut dot = 0.0;
                for a in 0..3 {
                    dot += x[a] * params.component(j)[a];
                }
                let coef = -2.0 * p * (y - dot);
                for a in 0..3 {
                    acc[a] += coef * x[a];
                }
            }
            acc /= data.n() as f64;
            exact &= (0..3).all(|a| got[a].to_bits() == acc[a].to_bits());
        }
    }
    let ok = worst <= 1e-5 && exact;
    report(
        2,
        "gradient-oracle",
        ok,
        &format!("worst FD relative error {worst:.2e}, beta=0 exact: {exact}"),
    );
}

/// Criterion 3: with the hard-min inverse temperature and TwoTBlocks on a
/// shared shuffle seed, gradient EM and gradient AM produce identical
/// iterates, exactly, for T = 20, k = 2, d = 10, n = 2000.
#[test]
fn criterion_03_am_em_equivalence() {
    let spec = GeneratorSpec {
        component_scale: 5.0,
        ..GeneratorSpec::realizable(2000, 10, 2)
    };
    let g = generate(&spec, &RngStream::new(42, 1)).unwrap();
    let truth = g.dataset.truth.as_ref().unwrap().components.clone();
    let init = sample_initialization(
        &truth,
        &InitConfig::sphere(0.1).unwrap(),
        &RngStream::new(43, 2),
    )
    .unwrap();
    let mut cfg = SolverConfig::new(0.5, 20, SplitMode::TwoTBlocks);
    cfg.shuffle_seed = 7;
    let am = run_gradient_am(&g.dataset, &init, &cfg, Some(&truth)).unwrap();
    let mut em_cfg = cfg;
    em_cfg.beta = SoftminConfig::hard_min();
    let em = run_gradient_em(&g.dataset, &init, &em_cfg, Some(&truth)).unwrap();

    assert_eq!(am.recorded_params.len(), 21);
    assert_eq!(em.recorded_params.len(), 21);
    let mut identical = true;
    for ((ta, pa), (te, pe)) in am.recorded_params.iter().zip(&em.recorded_params) {
        identical &= ta == te;
        for j in 0..2 {
            for a in 0..10 {
                identical &= pa.component(j)[a].to_bits() == pe.component(j)[a].to_bits();
            }
        }
    }
    report(
        3,
        "am-em-equivalence",
        identical,
        "all 21 iterates bitwise identical",
    );
}

/// Criterion 4: noiseless Theorem-1 regime (lambda = 0): k = 2, d = 10,
/// n = 4000, component scale 5, c_ini = 0.1, gamma = 0.5, T = 100. The
/// fitted rate is below one for both components and the final maximum
/// distance is at most 1e-2 of the initial one in at least 18 of 20 seeded
/// repetitions.
#[test]
fn criterion_04_noiseless_convergence() {
    let spec = GeneratorSpec {
        component_scale: 5.0,
        ..GeneratorSpec::realizable(4000, 10, 2)
    };
    let mut successes = 0;
    for rep in 0..20u64 {
        let g = generate(&spec, &RngStream::new(1000 + rep, 1)).unwrap();
        let truth = g.dataset.truth.as_ref().unwrap().components.clone();
        let init = sample_initialization(
            &truth,
            &InitConfig::sphere(0.1).unwrap(),
            &RngStream::new(2000 + rep, 2),
        )
        .unwrap();
        let mut cfg = SolverConfig::new(0.5, 100, SplitMode::TwoTBlocks);
        cfg.shuffle_seed = rep;
        let traj = run_gradient_am(&g.dataset, &init, &cfg, Some(&truth)).unwrap();
        let fits = fit_contraction(&traj).unwrap();
        let contracting = fits.iter().all(|f| f.is_contraction());
        let d0 = traj.initial_max_distance().unwrap();
        let df = traj.final_max_distance().unwrap();
        if contracting && df <= 1e-2 * d0 {
            successes += 1;
        }
    }
    report(
        4,
        "noiseless-convergence",
        successes >= 18,
        &format!("{successes}/20 repetitions converged"),
    );
}

/// Criterion 5: floor scaling in a noisy regime (sigma = 0.2). Halving the
/// step size changes the fitted floor by a factor in [0.3, 0.8]; doubling
/// the misspecification level changes it by a factor in [1.5, 2.5]; floors
/// are monotone across each 3-point grid.
#[test]
fn criterion_05_floor_scaling() {
    let gen_base = GeneratorSpec {
        sigma: 0.2,
        component_scale: 5.0,
        ..GeneratorSpec::agnostic(6000, 10, 2, 0.0)
    };
    let mut solver = SolverConfig::new(0.5, 150, SplitMode::TwoTBlocks);
    solver.record_every = 10;
    let init = InitConfig::sphere(0.4).unwrap();

    let gamma_table = floor_scaling_probe(
        &gen_base,
        &solver,
        &init,
        SolverKind::GradientAm,
        &[0.125, 0.25, 0.5],
        &[0.0],
        5,
        &RngStream::new(7, 0),
    )
    .unwrap();
    let halving = gamma_table.cell(1, 0).floor / gamma_table.cell(2, 0).floor;

    let misspec_table = floor_scaling_probe(
        &gen_base,
        &solver,
        &init,
        SolverKind::GradientAm,
        &[0.5],
        &[0.25, 0.5, 1.0],
        5,
        &RngStream::new(8, 0),
    )
    .unwrap();
    let doubling_a = misspec_table.cell(0, 1).floor / misspec_table.cell(0, 0).floor;
    let doubling_b = misspec_table.cell(0, 2).floor / misspec_table.cell(0, 1).floor;

    let ok = gamma_table.monotone_in_gamma
        && misspec_table.monotone_in_misspec
        && (0.3..=0.8).contains(&halving)
        && (1.5..=2.5).contains(&doubling_a)
        && (1.5..=2.5).contains(&doubling_b)
        && gamma_table.diverged_cells == 0
        && misspec_table.diverged_cells == 0;
    report(
        5,
        "floor-scaling",
        ok,
        &format!(
            "gamma-halving ratio {halving:.3}, misspec-doubling ratios {doubling_a:.3} / {doubling_b:.3}"
        ),
    );
}

/// Criterion 6: misassignment decay. Over four separation levels with
/// nonzero measured P_e, the regression of ln P_e on (Delta - lambda)^2
/// has correlation at most -0.9; and P_e is exactly zero at c_ini = 0.
#[test]
fn criterion_06_pe_separation_decay() {
    let levels: [(usize, f64); 4] = [(2, 22.0), (3, 30.0), (4, 33.0), (6, 17.0)];
    let family: Vec<GeneratorSpec> = levels
        .iter()
        .map(|&(k, scale)| GeneratorSpec {
            component_scale: scale,
            ..GeneratorSpec::realizable(1024, 8, k)
        })
        .collect();
    let table = separation_decay_probe(&family, 0.2, 25, &RngStream::new(11, 0)).unwrap();
    let nonzero = table.levels.iter().filter(|l| l.pe > 0.0).count();
    let corr = table.correlation.unwrap_or(0.0);
    let slope = table.slope.unwrap_or(0.0);

    let zero_table = separation_decay_probe(&family[..3], 0.0, 3, &RngStream::new(12, 0)).unwrap();
    let all_zero = zero_table.levels.iter().all(|l| l.pe == 0.0);

    let ok = nonzero >= 4 && corr <= -0.9 && slope < 0.0 && table.monotone && all_zero;
    report(
        6,
        "pe-separation-decay",
        ok,
        &format!(
            "{nonzero} nonzero levels, correlation {corr:.3}, slope {slope:.1}, zero at c_ini=0: {all_zero}"
        ),
    );
}

/// Criterion 7: restricted spectra on halfspace restrictions of 1e4
/// standard Gaussians in d = 10: the smallest singular value of the
/// restricted second moment is at least 0.1 nu^2 and the restricted mean
/// satisfies ||mean||^2 <= 4 log(1/nu), for nu in {0.5, 0.25, 0.1}.
#[test]
fn criterion_07_restricted_spectra() {
    let cfg = ExperimentConfig::parse(
        "kind=restricted_spectra\nseed=77\nrepetitions=2\ngenerator.n=10000\n\
         generator.d=10\nsweep.volumes=0.5,0.25,0.1\n",
    )
    .unwrap();
    let outcome = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let rows = outcome
        .records
        .iter()
        .filter(|r| r.kind() == "restricted")
        .count();
    let ok = outcome.passed() && rows == 6;
    report(
        7,
        "restricted-spectra",
        ok,
        &format!("{rows} volume rows, failures: {:?}", outcome.failures),
    );
}

/// Criterion 8: soft-min concentration at the truth on noiseless data: the
/// minimum on-cell probability is non-decreasing over a three-point
/// separation sweep and exceeds 0.99 at the largest separation with
/// beta = 10.
#[test]
fn criterion_08_eta_concentration() {
    let mut values = Vec::new();
    for (i, scale) in [2.0f64, 10.0, 50.0].iter().enumerate() {
        let spec = GeneratorSpec {
            component_scale: *scale,
            ..GeneratorSpec::realizable(64, 6, 2)
        };
        let stream = RngStream::new(21, stream_id(StreamPurpose::DataGeneration, i as u64, 0));
        let g = generate(&spec, &stream).unwrap();
        let truth = g.dataset.truth.as_ref().unwrap().components.clone();
        let probe = eta_probe(&truth, 10.0, &g.dataset).unwrap();
        let geometry = compute_report(&truth, &g.dataset).unwrap();
        assert!(geometry.delta_hat > geometry.lambda_hat);
        assert!(probe.ordered, "on/off ordering failed at scale {scale}");
        values.push(probe.min_on_cell);
    }
    let monotone = values.windows(2).all(|w| w[1] >= w[0]);
    let ok = monotone && *values.last().unwrap() > 0.99;
    report(
        8,
        "eta-concentration",
        ok,
        &format!("min on-cell over sweep: {values:?}"),
    );
}

/// Criterion 9: the squared loss over bounded data is Lipschitz in its
/// prediction with constant 2(1+R): the largest observed ratio over 1e5
/// bounded triples never exceeds the constant for R in {0.5, 1, 2} and
/// reaches at least 75% of it at R = 1.
#[test]
fn criterion_09_lipschitz_bound() {
    let mut within = true;
    let mut at_one = 0.0;
    for radius in [0.5, 1.0, 2.0] {
        let probe = lipschitz_probe(2, radius, 100_000, &RngStream::new(31, 4));
        within &= probe.max_ratio <= probe.bound;
        if radius == 1.0 {
            at_one = probe.max_ratio;
        }
    }
    let ok = within && (3.0..=4.0).contains(&at_one);
    report(
        9,
        "lipschitz-bound",
        ok,
        &format!("max ratio at R=1: {at_one:.3} (bound 4)"),
    );
}

/// Criterion 10: the Rademacher lower estimate stays under
/// 4kR(1+R)/sqrt(n) on the whole (k, R, n) grid, and quadrupling n shrinks
/// it by a factor in [0.35, 0.7].
#[test]
fn criterion_10_rademacher_bound() {
    let mut within = true;
    let mut ratios = Vec::new();
    for &k in &[1usize, 2, 4] {
        for &radius in &[0.5, 1.0] {
            let mut prev: Option<f64> = None;
            for &n in &[256usize, 1024, 4096] {
                let data_stream = RngStream::new(
                    5,
                    stream_id(StreamPurpose::DataGeneration, n as u64, k as u64),
                );
                let data = bounded_unit_dataset(&data_stream, n, 4).unwrap();
                let est_stream = RngStream::new(
                    5,
                    stream_id(StreamPurpose::Rademacher, (n + k) as u64, 0),
                );
                let est = rademacher_estimate(&data, radius, k, 16, 160, &est_stream).unwrap();
                within &= est.estimate <= est.bound;
                if let Some(p) = prev {
                    ratios.push(est.estimate / p);
                }
                prev = Some(est.estimate);
            }
        }
    }
    let shrink_ok = ratios.iter().all(|r| (0.35..=0.7).contains(r));
    let ok = within && shrink_ok;
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| {
        (lo.min(r), hi.max(r))
    });
    report(
        10,
        "rademacher-bound",
        ok,
        &format!("all under bound: {within}, shrink ratios in [{lo:.3}, {hi:.3}]"),
    );
}

/// Criterion 11: determinism. Representative acceptance configs rerun with
/// the same seed produce byte-identical result files.
#[test]
fn criterion_11_determinism() {
    let configs = [
        "kind=convergence\nseed=99\nrepetitions=2\ngenerator.n=400\ngenerator.d=5\n\
         generator.k=2\ngenerator.component_scale=5\ngenerator.sigma=0.1\n\
         solver.algorithm=both\nsolver.gamma=0.4\nsolver.iterations=20\ninit.c_ini=0.1\n",
        "kind=separation_sweep\nseed=99\ngenerator.n=256\ngenerator.d=4\n\
         sweep.scales=4,8,16\nsweep.reps=3\ninit.c_ini=0.2\n",
        "kind=rademacher\nseed=99\ngenerator.d=3\nrad.radii=0.5\nrad.ks=2\n\
         rad.ns=128,512\nrad.trials=4\nrad.budget=40\nrad.lipschitz_trials=1000\n",
        "kind=step_sweep\nseed=99\ngenerator.mode=agnostic\ngenerator.n=800\n\
         generator.d=5\ngenerator.sigma=0.2\ngenerator.component_scale=5\n\
         solver.gamma=0.5\nsolver.iterations=20\nsweep.gammas=0.25,0.5\n\
         sweep.misspecs=0.5\nsweep.reps=2\ninit.c_ini=0.4\n",
    ];
    let mut all_equal = true;
    for (i, text) in configs.iter().enumerate() {
        let cfg = ExperimentConfig::parse(text).unwrap();
        let a = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let b = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let bytes_a = to_jsonl(&a.records);
        let bytes_b = to_jsonl(&b.records);
        all_equal &= bytes_a == bytes_b;

        // And through the file writer, including the CSV projection.
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join(format!("{i}_run1.jsonl"));
        let p2 = dir.path().join(format!("{i}_run2.jsonl"));
        write_outputs(&cfg, &a.records, &p1, true).unwrap();
        write_outputs(&cfg, &b.records, &p2, true).unwrap();
        all_equal &= std::fs::read(&p1).unwrap() == std::fs::read(&p2).unwrap();
        let c1 = std::fs::read(p1.with_extension("jsonl.csv")).unwrap();
        let c2 = std::fs::read(p2.with_extension("jsonl.csv")).unwrap();
        all_equal &= c1 == c2;
    }
    report(
        11,
        "determinism",
        all_equal,
        &format!("{} configs byte-identical across reruns", configs.len()),
    );
}
