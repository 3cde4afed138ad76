//! Flat, line-oriented experiment configuration: `dotted.key=value` pairs,
//! `#` comments, blank lines ignored. Dotted keys group the generator,
//! solver, initialization, and sweep sections. Unknown keys are rejected
//! with a message naming the offender.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::datagen::{uniform_weights, GeneratorMode, GeneratorSpec};
use crate::error::{Error, Result};
use crate::geometry::{InitConfig, InitMode};
use crate::losses::{SoftminConfig, HARD_MIN};
use crate::solvers::{SolverConfig, SplitMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Convergence,
    SeparationSweep,
    SampleSweep,
    StepSweep,
    RestrictedSpectra,
    Rademacher,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::SeparationSweep => "separation_sweep",
            ExperimentKind::SampleSweep => "sample_sweep",
            ExperimentKind::StepSweep => "step_sweep",
            ExperimentKind::RestrictedSpectra => "restricted_spectra",
            ExperimentKind::Rademacher => "rademacher",
        }
    }
}

/// Which solver(s) a convergence experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Am,
    Em,
    Both,
}

/// Level lists for the sweep experiment kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Component scales, one per separation level.
    pub scales: Vec<f64>,
    /// Optional per-level k, zipped with `scales`.
    pub ks: Vec<usize>,
    pub gammas: Vec<f64>,
    pub misspecs: Vec<f64>,
    pub ns: Vec<usize>,
    /// Restriction volumes for restricted-spectra sweeps.
    pub volumes: Vec<f64>,
    /// Probe-internal repetitions (medians are taken over these).
    pub reps: usize,
    /// A convergence repetition counts as a success when the final max
    /// distance is below this multiple of the initial one.
    pub success_ratio: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            scales: Vec::new(),
            ks: Vec::new(),
            gammas: Vec::new(),
            misspecs: Vec::new(),
            ns: Vec::new(),
            volumes: vec![0.5, 0.25, 0.1],
            reps: 5,
            success_ratio: 0.01,
        }
    }
}

/// Grid for the Rademacher experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RadSpec {
    pub radii: Vec<f64>,
    pub ks: Vec<usize>,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub budget: usize,
    /// Trials for the Lipschitz ratio search run alongside.
    pub lipschitz_trials: usize,
}

impl Default for RadSpec {
    fn default() -> Self {
        Self {
            radii: vec![0.5, 1.0],
            ks: vec![1, 2, 4],
            ns: vec![256, 1024, 4096],
            trials: 16,
            budget: 160,
            lipschitz_trials: 100_000,
        }
    }
}

/// Full declarative description of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub repetitions: usize,
    pub output: Option<PathBuf>,
    pub generator: GeneratorSpec,
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub iterations: usize,
    /// None means the per-algorithm default: TwoTBlocks for AM, NoSplit
    /// for EM.
    pub split: Option<SplitMode>,
    pub beta: f64,
    pub record_every: usize,
    pub init: InitConfig,
    pub sweep: SweepSpec,
    pub rad: RadSpec,
}

impl ExperimentConfig {
    /// Resolved solver configuration for one algorithm.
    pub fn solver_config(&self, algorithm: Algorithm) -> SolverConfig {
        let split = self.split.unwrap_or(match algorithm {
            Algorithm::Em => SplitMode::NoSplit,
            _ => SplitMode::TwoTBlocks,
        });
        SolverConfig {
            gamma: self.gamma,
            iterations: self.iterations,
            split_mode: split,
            beta: SoftminConfig { beta: self.beta },
            record_every: self.record_every,
            shuffle_seed: self.seed,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_pairs(text)?;
        reject_unknown_keys(&map)?;
        let get = |key: &str| map.get(key).map(String::as_str);

        let kind = match get("kind") {
            Some("convergence") => ExperimentKind::Convergence,
            Some("separation_sweep") => ExperimentKind::SeparationSweep,
            Some("sample_sweep") => ExperimentKind::SampleSweep,
            Some("step_sweep") => ExperimentKind::StepSweep,
            Some("restricted_spectra") => ExperimentKind::RestrictedSpectra,
            Some("rademacher") => ExperimentKind::Rademacher,
            Some(other) => {
                return Err(Error::Config(format!("kind: unknown experiment `{other}`")))
            }
            None => return Err(Error::Config("kind: missing required key".into())),
        };

        let seed = parse_or(&map, "seed", 0u64, parse_u64)?;
        let repetitions = parse_or(&map, "repetitions", 1usize, parse_usize)?;
        if repetitions == 0 {
            return Err(Error::Config("repetitions: must be >= 1".into()));
        }
        let output = get("out").map(PathBuf::from);

        let mode = match get("generator.mode") {
            None | Some("realizable") => GeneratorMode::Realizable,
            Some("agnostic") => GeneratorMode::Agnostic,
            Some(other) => {
                return Err(Error::Config(format!(
                    "generator.mode: unknown mode `{other}`"
                )))
            }
        };
        let k = parse_or(&map, "generator.k", 2usize, parse_usize)?;
        let generator = GeneratorSpec {
            mode,
            n: parse_or(&map, "generator.n", 1000usize, parse_usize)?,
            d: parse_or(&map, "generator.d", 10usize, parse_usize)?,
            k,
            sigma: parse_or(&map, "generator.sigma", 0.0f64, parse_f64)?,
            mixing_weights: match get("generator.mixing_weights") {
                Some(s) => parse_f64_list("generator.mixing_weights", s)?,
                None => uniform_weights(k),
            },
            component_scale: parse_or(&map, "generator.component_scale", 1.0f64, parse_f64)?,
            misspec_level: parse_or(&map, "generator.misspec_level", 0.0f64, parse_f64)?,
            label_bound: match get("generator.label_bound") {
                Some(s) => Some(parse_f64("generator.label_bound", s)?),
                None => None,
            },
        };
        generator
            .validate()
            .map_err(|e| Error::Config(format!("generator: {e}")))?;

        let algorithm = match get("solver.algorithm") {
            None | Some("am") => Algorithm::Am,
            Some("em") => Algorithm::Em,
            Some("both") => Algorithm::Both,
            Some(other) => {
                return Err(Error::Config(format!(
                    "solver.algorithm: unknown algorithm `{other}`"
                )))
            }
        };
        let split = match get("solver.split") {
            None => None,
            Some("two_t_blocks") => Some(SplitMode::TwoTBlocks),
            Some("pair") => Some(SplitMode::PerIterationPair),
            Some("none") => Some(SplitMode::NoSplit),
            Some(other) => {
                return Err(Error::Config(format!(
                    "solver.split: unknown split mode `{other}`"
                )))
            }
        };
        let beta = match get("solver.beta") {
            None => 1.0,
            Some("inf") => HARD_MIN,
            Some(s) => parse_f64("solver.beta", s)?,
        };
        if beta.is_nan() || beta < 0.0 {
            return Err(Error::Config(format!(
                "solver.beta: must be >= 0 or `inf`, got {beta}"
            )));
        }

        let init_mode = match get("init.mode") {
            None | Some("sphere") => InitMode::SphereSurface,
            Some("ball") => InitMode::Ball,
            Some(other) => {
                return Err(Error::Config(format!("init.mode: unknown mode `{other}`")))
            }
        };
        let init = InitConfig::new(parse_or(&map, "init.c_ini", 0.1f64, parse_f64)?, init_mode)
            .map_err(|e| Error::Config(format!("init.c_ini: {e}")))?;

        let defaults = SweepSpec::default();
        let sweep = SweepSpec {
            scales: parse_list_or(&map, "sweep.scales", Vec::new(), parse_f64)?,
            ks: parse_list_or(&map, "sweep.ks", Vec::new(), parse_usize)?,
            gammas: parse_list_or(&map, "sweep.gammas", Vec::new(), parse_f64)?,
            misspecs: parse_list_or(&map, "sweep.misspecs", Vec::new(), parse_f64)?,
            ns: parse_list_or(&map, "sweep.ns", Vec::new(), parse_usize)?,
            volumes: parse_list_or(&map, "sweep.volumes", defaults.volumes.clone(), parse_f64)?,
            reps: parse_or(&map, "sweep.reps", defaults.reps, parse_usize)?,
            success_ratio: parse_or(&map, "sweep.success_ratio", defaults.success_ratio, parse_f64)?,
        };
        if !sweep.ks.is_empty() && sweep.ks.len() != sweep.scales.len() {
            return Err(Error::Config(format!(
                "sweep.ks: {} entries do not match sweep.scales ({})",
                sweep.ks.len(),
                sweep.scales.len()
            )));
        }

        let rad_defaults = RadSpec::default();
        let rad = RadSpec {
            radii: parse_list_or(&map, "rad.radii", rad_defaults.radii.clone(), parse_f64)?,
            ks: parse_list_or(&map, "rad.ks", rad_defaults.ks.clone(), parse_usize)?,
            ns: parse_list_or(&map, "rad.ns", rad_defaults.ns.clone(), parse_usize)?,
            trials: parse_or(&map, "rad.trials", rad_defaults.trials, parse_usize)?,
            budget: parse_or(&map, "rad.budget", rad_defaults.budget, parse_usize)?,
            lipschitz_trials: parse_or(
                &map,
                "rad.lipschitz_trials",
                rad_defaults.lipschitz_trials,
                parse_usize,
            )?,
        };

        Ok(ExperimentConfig {
            kind,
            seed,
            repetitions,
            output,
            generator,
            algorithm,
            gamma: parse_or(&map, "solver.gamma", 0.5f64, parse_f64)?,
            iterations: parse_or(&map, "solver.iterations", 100usize, parse_usize)?,
            split,
            beta,
            record_every: parse_or(&map, "solver.record_every", 1usize, parse_usize)?,
            init,
            sweep,
            rad,
        })
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected key=value, got `{line}`",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!("{key}: duplicate key")));
        }
    }
    Ok(map)
}

const KNOWN_KEYS: &[&str] = &[
    "kind",
    "seed",
    "repetitions",
    "out",
    "generator.mode",
    "generator.n",
    "generator.d",
    "generator.k",
    "generator.sigma",
    "generator.mixing_weights",
    "generator.component_scale",
    "generator.misspec_level",
    "generator.label_bound",
    "solver.algorithm",
    "solver.gamma",
    "solver.iterations",
    "solver.split",
    "solver.beta",
    "solver.record_every",
    "init.c_ini",
    "init.mode",
    "sweep.scales",
    "sweep.ks",
    "sweep.gammas",
    "sweep.misspecs",
    "sweep.ns",
    "sweep.volumes",
    "sweep.reps",
    "sweep.success_ratio",
    "rad.radii",
    "rad.ks",
    "rad.ns",
    "rad.trials",
    "rad.budget",
    "rad.lipschitz_trials",
];

fn reject_unknown_keys(map: &BTreeMap<String, String>) -> Result<()> {
    for key in map.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("{key}: unknown key")));
        }
    }
    Ok(())
}

fn parse_u64(key: &str, s: &str) -> Result<u64> {
    s.parse()
        .map_err(|e| Error::Config(format!("{key}: {e} (got `{s}`)")))
}

fn parse_usize(key: &str, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|e| Error::Config(format!("{key}: {e} (got `{s}`)")))
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|e| Error::Config(format!("{key}: {e} (got `{s}`)")))
}

fn parse_or<T>(
    map: &BTreeMap<String, String>,
    key: &str,
    default: T,
    parser: fn(&str, &str) -> Result<T>,
) -> Result<T> {
    match map.get(key) {
        Some(s) => parser(key, s),
        None => Ok(default),
    }
}

fn parse_f64_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|part| parse_f64(key, part.trim()))
        .collect()
}

fn parse_list_or<T>(
    map: &BTreeMap<String, String>,
    key: &str,
    default: Vec<T>,
    parser: fn(&str, &str) -> Result<T>,
) -> Result<Vec<T>> {
    match map.get(key) {
        Some(s) => s.split(',').map(|part| parser(key, part.trim())).collect(),
        None => Ok(default),
    }
}
