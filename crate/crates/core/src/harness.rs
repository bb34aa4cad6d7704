//! Declarative Monte-Carlo experiments.
//!
//! Every trial draws from its own stream seeded by `(seed, trial)`, trials
//! run on a rayon pool, and per-trial values are reduced in trial order with
//! compensated summation, so output is identical for any thread count.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{group_gain_per_element, scaling_laws};
use crate::channel::{sample_channels_with, ChannelDims, ChannelSet, FadingKind, FadingSpec};
use crate::error::{Error, Result};
use crate::estimate::{estimation_trial, group_patterns, theoretical_mse};
use crate::impair::{discrete_optimize, learn_codebook};
use crate::optimize::{admittance_align_ls, gain_bound, groupwise_solve, SisoSolver};
use crate::random::{mix_seed, rng};
use crate::scalar::CompensatedSum;
use crate::topology::{build_topology, Family, TopologyParams};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "BDRIS_THREADS";

const CHANNEL_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const TRAINING_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    M,
    #[serde(alias = "groupSize")]
    GroupSize,
    Sigma2,
    #[serde(alias = "power")]
    Pu,
    Bits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// Mean SISO gain of each solver; sweeps `m`.
    ScalingLaw { solvers: Vec<SisoSolver> },
    /// Group-connected and single-connected mean gains; sweeps `group_size`.
    GroupGain { m: usize },
    /// LS estimation error; sweeps `sigma2`, `pu` or `group_size`.
    Estimation { m: usize, group_size: usize, n: usize, sigma2: f64, pu: f64 },
    /// Discrete fully-connected design against the continuous optimum; sweeps `bits` or `m`.
    Discrete { m: usize, bits: u32, training: usize, sweeps: usize, kmeans_iters: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub trials: usize,
    pub experiment: Experiment,
    pub sweep: Sweep,
    /// Defaults to i.i.d. Rayleigh without a direct link.
    #[serde(default)]
    pub fading: Option<FadingSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
}

fn integral(v: f64, what: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{what} must be a positive integer, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let v = &self.sweep.values;
        if v.is_empty() {
            return Err(Error::Config("sweep values must be nonempty".into()));
        }
        if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sweep values must be finite and strictly increasing".into()));
        }
        use SweepAxis::*;
        let allowed: &[SweepAxis] = match &self.experiment {
            Experiment::ScalingLaw { .. } => &[M],
            Experiment::GroupGain { .. } => &[GroupSize],
            Experiment::Estimation { .. } => &[Sigma2, Pu, GroupSize],
            Experiment::Discrete { .. } => &[Bits, M],
        };
        if !allowed.contains(&self.sweep.axis) {
            return Err(Error::Config(format!("axis {:?} is not valid for this experiment", self.sweep.axis)));
        }
        for &x in v {
            match self.sweep.axis {
                M | GroupSize | Bits => {
                    integral(x, "sweep value")?;
                }
                Sigma2 if x < 0.0 => return Err(Error::Config("noise variance must be >= 0".into())),
                Pu if x <= 0.0 => return Err(Error::Config("pilot power must be positive".into())),
                _ => {}
            }
        }
        match &self.experiment {
            Experiment::ScalingLaw { solvers } if solvers.is_empty() => {
                return Err(Error::Config("at least one solver is required".into()));
            }
            Experiment::ScalingLaw { solvers } => {
                for s in solvers {
                    if let SisoSolver::Group { group_size } = s {
                        for &x in v {
                            if group_size == &0 || (x as usize) % group_size != 0 {
                                return Err(Error::Config(format!("group size {group_size} does not divide {x}")));
                            }
                        }
                    }
                }
            }
            Experiment::GroupGain { m } => {
                for &x in v {
                    if *m == 0 || m % (x as usize) != 0 {
                        return Err(Error::Config(format!("group size {x} does not divide {m}")));
                    }
                }
            }
            Experiment::Estimation { m, group_size, n, sigma2, pu } => {
                if *m == 0 || *n == 0 || !(*sigma2 >= 0.0) || !(*pu > 0.0) {
                    return Err(Error::Config("estimation needs m, n >= 1, sigma2 >= 0 and pu > 0".into()));
                }
                let sizes: Vec<usize> = if self.sweep.axis == GroupSize { v.iter().map(|x| *x as usize).collect() } else { vec![*group_size] };
                if sizes.iter().any(|g| *g == 0 || m % g != 0) {
                    return Err(Error::Config(format!("group size does not divide {m}")));
                }
            }
            Experiment::Discrete { m, bits, training, .. } => {
                if *m == 0 || *training == 0 || *bits == 0 || *bits > 16 {
                    return Err(Error::Config("discrete design needs m, training >= 1 and bits in 1..=16".into()));
                }
                if self.sweep.axis == Bits && v.iter().any(|x| *x > 16.0) {
                    return Err(Error::Config("bits must be at most 16".into()));
                }
            }
        }
        Ok(())
    }

    fn fading(&self) -> FadingSpec {
        self.fading.clone().unwrap_or(FadingSpec { direct_link: false, ..FadingSpec::rayleigh(self.seed) })
    }

    /// Closed-form SISO gains apply to unit-variance Rayleigh links without a direct path.
    fn theory_applies(&self) -> bool {
        let f = self.fading();
        f.kind == FadingKind::Rayleigh && !f.direct_link && (f.distances.is_none() || f.pathloss_exponent == 0.0)
    }
}

/// Reads and validates a JSON configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("cannot read config file {}: {e}", path.display())))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub sweep_value: f64,
    pub series: String,
    pub mean: f64,
    pub stderr: f64,
    pub theory: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub seed: u64,
    pub trials: usize,
    pub version: String,
    pub threads: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub name: String,
    pub axis: SweepAxis,
    pub rows: Vec<Row>,
    pub metadata: Metadata,
}

impl ExperimentResult {
    /// Rows for one sweep value.
    pub fn at(&self, sweep_value: f64) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.sweep_value == sweep_value)
    }

    pub fn row(&self, sweep_value: f64, series: &str) -> Option<&Row> {
        self.at(sweep_value).find(|r| r.series == series)
    }

    /// CSV with header `sweep_value,series,mean,stderr,theory`; timing is
    /// left out so reruns are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep_value,series,mean,stderr,theory\n");
        for r in &self.rows {
            let theory = r.theory.map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", r.sweep_value, r.series, r.mean, r.stderr, theory));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// Worker count from [`THREADS_ENV`], or `None` for rayon's default.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Runs an experiment with the worker count from the environment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(cfg, threads_from_env()?)
}

fn mean_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().collect::<CompensatedSum>().value() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let ss = values.map(|x| (x - mean) * (x - mean)).collect::<CompensatedSum>().value();
    (mean, (ss / (n - 1.0) / n).sqrt())
}

struct Point {
    series: Vec<(String, Option<f64>)>,
}

/// Runs an experiment on `threads` workers (rayon default when `None`).
pub fn run_experiment_with(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rows = Vec::new();
    for (pi, &x) in cfg.sweep.values.iter().enumerate() {
        let (point, per_trial) = pool.install(|| run_point(cfg, pi, x))?;
        for (k, (name, theory)) in point.series.into_iter().enumerate() {
            let (mean, stderr) = mean_stderr(per_trial.iter().map(|v| v[k]));
            rows.push(Row { sweep_value: x, series: name, mean, stderr, theory });
        }
    }
    Ok(ExperimentResult {
        name: cfg.name.clone(),
        axis: cfg.sweep.axis,
        rows,
        metadata: Metadata {
            seed: cfg.seed,
            trials: cfg.trials,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: pool.current_num_threads(),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

fn draw(cfg: &ExperimentConfig, trial: usize, dims: ChannelDims) -> Result<ChannelSet<f64>> {
    let mut stream = rng(mix_seed(cfg.seed, trial as u64, CHANNEL_STREAM));
    sample_channels_with(&mut stream, &cfg.fading(), dims)
}

fn trials<F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| f(t).map_err(|e| Error::Trial { index: t, source: Box::new(e) }))
        .collect()
}

fn solver_name(s: &SisoSolver) -> String {
    match s {
        SisoSolver::Dris => "dris".into(),
        SisoSolver::Unitary => "unitary".into(),
        SisoSolver::Tree => "tree".into(),
        SisoSolver::Group { group_size } => format!("group_{group_size}"),
        SisoSolver::Penalty { .. } => "penalty".into(),
    }
}

fn solver_theory(s: &SisoSolver, m: usize) -> Option<f64> {
    let laws = scaling_laws(m);
    match s {
        SisoSolver::Dris => Some(laws.dris),
        SisoSolver::Unitary | SisoSolver::Tree | SisoSolver::Penalty { .. } => Some(laws.bdris),
        SisoSolver::Group { group_size } => group_gain_per_element(m, *group_size).ok().map(|g| g * m as f64),
    }
}

fn run_point(cfg: &ExperimentConfig, _index: usize, x: f64) -> Result<(Point, Vec<Vec<f64>>)> {
    let theory_ok = cfg.theory_applies();
    let gate = |t: Option<f64>| if theory_ok { t } else { None };
    match &cfg.experiment {
        Experiment::ScalingLaw { solvers } => {
            let m = x as usize;
            let series = solvers.iter().map(|s| (solver_name(s), gate(solver_theory(s, m)))).collect();
            let values = trials(cfg, |t| {
                let ch = draw(cfg, t, ChannelDims::siso(m))?;
                solvers.iter().map(|s| Ok(s.solve(&ch.h_ri, &ch.h_it, 1.0 / ch.z0)?.objective)).collect()
            })?;
            Ok((Point { series }, values))
        }
        Experiment::GroupGain { m } => {
            let g = x as usize;
            let series = vec![
                ("group".to_string(), gate(group_gain_per_element(*m, g).ok().map(|v| v * *m as f64))),
                ("dris".to_string(), gate(Some(scaling_laws(*m).dris))),
            ];
            let values = trials(cfg, |t| {
                let ch = draw(cfg, t, ChannelDims::siso(*m))?;
                let y0 = 1.0 / ch.z0;
                let grp = groupwise_solve(&ch.h_ri, &ch.h_it, g, SisoSolver::Tree, y0)?.objective;
                let single = SisoSolver::Dris.solve(&ch.h_ri, &ch.h_it, y0)?.objective;
                Ok(vec![grp, single])
            })?;
            Ok((Point { series }, values))
        }
        Experiment::Estimation { m, group_size, n, sigma2, pu } => {
            let (mut gs, mut s2, mut p) = (*group_size, *sigma2, *pu);
            match cfg.sweep.axis {
                SweepAxis::Sigma2 => s2 = x,
                SweepAxis::Pu => p = x,
                _ => gs = x as usize,
            }
            let patterns = group_patterns::<f64>(*m, gs)?;
            let theory = theoretical_mse(&patterns, *n, s2, p)?;
            let dims = ChannelDims { n_r: *n, n_t: 1, m: *m };
            let values = trials(cfg, |t| {
                let ch = draw(cfg, t, dims)?;
                Ok(vec![estimation_trial(&ch, &patterns, s2, p, mix_seed(cfg.seed, t as u64, NOISE_STREAM))?])
            })?;
            Ok((Point { series: vec![("mse".into(), Some(theory))] }, values))
        }
        Experiment::Discrete { m, bits, training, sweeps, kmeans_iters } => {
            let (mut m, mut b) = (*m, *bits);
            match cfg.sweep.axis {
                SweepAxis::M => m = x as usize,
                _ => b = x as u32,
            }
            let topo = build_topology(Family::Fully, m, TopologyParams::default())?;
            let train = (0..*training)
                .map(|i| {
                    let mut stream = rng(mix_seed(cfg.seed, i as u64, TRAINING_STREAM));
                    sample_channels_with(&mut stream, &cfg.fading(), ChannelDims::siso(m))
                })
                .collect::<Result<Vec<ChannelSet<f64>>>>()?;
            let cb = learn_codebook(&train, &topo, b, *kmeans_iters, cfg.seed)?.codebook;
            let values = trials(cfg, |t| {
                let ch = draw(cfg, t, ChannelDims::siso(m))?;
                let d = discrete_optimize(&ch, &topo, &cb, *sweeps)?.objective;
                let cont = if ch.h_rt.iter().all(|z| z.norm_sqr() == 0.0) {
                    gain_bound(&ch.h_ri, &ch.h_it)
                } else {
                    admittance_align_ls(&topo, &ch.h_ri, &ch.h_it, 1.0 / ch.z0)?.objective
                };
                Ok(vec![d, cont])
            })?;
            let series = vec![("discrete".into(), None), ("continuous".into(), None)];
            Ok((Point { series }, values))
        }
    }
}

/// Writes rendered output, naming the path on failure.
pub fn write_output(result: &ExperimentResult, path: &Path, format: OutputFormat) -> Result<()> {
    std::fs::write(path, result.render(format)).map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))
}
