//! `bdris` command-line interface.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 when a
//! numerical routine fails.

mod selftest;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bdris::analysis::{group_gain_per_element, group_gain_ratio, optimal_complexity, scaling_laws, GroupDenominator};
use bdris::channel::ChannelSetDoc;
use bdris::harness::{self, Experiment, ExperimentConfig, OutputFormat, Sweep, SweepAxis};
use bdris::json::MatrixDoc;
use bdris::optimize::{gain_bound, miso_alternate, SisoSolver};
use bdris::Error;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "bdris", version, about = "Beyond-diagonal RIS modeling, optimization and estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of Monte-Carlo trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Write output to this file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads (defaults to BDRIS_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Law {
    Scaling,
    Group,
    Complexity,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte-Carlo experiment described by a JSON config.
    Simulate { config: PathBuf },
    /// Solve one channel realization read from a JSON file.
    Optimize {
        channel: PathBuf,
        /// dris, unitary, tree, penalty or group:<size>.
        #[arg(long, default_value = "tree")]
        solver: SolverArg,
        /// Transmit power for multi-antenna transmitters.
        #[arg(long, default_value_t = 1.0)]
        power: f64,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
    },
    /// Least-squares cascaded-channel estimation error against theory.
    Estimate {
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 4)]
        group_size: usize,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma2: f64,
        #[arg(long, default_value_t = 1.0)]
        pu: f64,
    },
    /// Print closed-form values.
    Analyze {
        #[arg(long, value_enum)]
        law: Law,
        #[arg(long, default_value_t = 64)]
        m: usize,
        #[arg(long)]
        group_size: Option<usize>,
        /// Base-station antennas (complexity law).
        #[arg(long, default_value_t = 1)]
        n_tx: usize,
        /// Comma-separated user antenna counts (complexity law).
        #[arg(long, value_delimiter = ',')]
        users: Vec<usize>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Clone, Copy, Debug)]
struct SolverArg(SisoSolver);

impl FromStr for SolverArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let solver = match s {
            "dris" => SisoSolver::Dris,
            "unitary" => SisoSolver::Unitary,
            "tree" => SisoSolver::Tree,
            "penalty" => SisoSolver::Penalty { rho: 10.0, max_iters: 2000 },
            _ => match s.strip_prefix("group:").map(str::parse::<usize>) {
                Some(Ok(g)) if g > 0 => SisoSolver::Group { group_size: g },
                _ => return Err(format!("unknown solver {s:?}")),
            },
        };
        Ok(SolverArg(solver))
    }
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// As [`run`], with explicit output streams.
pub fn run_with<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(&cli, stdout) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
        Err(Failure::Core(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("cannot write {}: {e}", p.display())))?,
        None => stdout.write_all(text.as_bytes()).map_err(|e| Error::Io(format!("stdout: {e}")))?,
    }
    Ok(())
}

fn read_channel(path: &Path) -> Result<ChannelSetDoc, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn threads(cli: &Cli) -> Result<Option<usize>, Failure> {
    match cli.threads {
        Some(0) => Err(Failure::Usage("--threads must be positive".into())),
        Some(n) => Ok(Some(n)),
        None => Ok(harness::threads_from_env()?),
    }
}

fn kv(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let json_out = matches!(cli.format, Some(Format::Json));
    match &cli.command {
        Command::Simulate { config } => {
            let mut cfg = harness::load_config(config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(t) = cli.trials {
                cfg.trials = t;
            }
            let result = harness::run_experiment_with(&cfg, threads(cli)?)?;
            let format = cli.format.map(OutputFormat::from).or(cfg.format).unwrap_or_default();
            let out = cli.out.clone().or(cfg.output.clone());
            emit(&result.render(format), out.as_deref(), stdout)?;
        }
        Command::Optimize { channel, solver, power, max_iters } => {
            let doc = read_channel(channel)?;
            let ch = doc.to_channels::<f64>()?;
            if ch.n_r() != 1 {
                return Err(Failure::Usage("optimize expects a single receive antenna".into()));
            }
            let (beam, res) = if ch.n_t() == 1 {
                let direct = ch.h_rt[(0, 0)].norm_sqr();
                if direct != 0.0 {
                    // The single-antenna solvers assume no direct path; the alternating
                    // driver handles it with a fixed unit beam.
                    let (w, r) = miso_alternate(&ch, *power, solver.0, *max_iters)?;
                    (Some(w), r)
                } else {
                    (None, solver.0.solve(&ch.h_ri, &ch.h_it, 1.0 / ch.z0)?)
                }
            } else {
                let (w, r) = miso_alternate(&ch, *power, solver.0, *max_iters)?;
                (Some(w), r)
            };
            let doc = json!({
                "objective": res.objective,
                "bound": gain_bound(&ch.h_ri, &ch.h_it),
                "iterations": res.iterations,
                "converged": res.converged,
                "residuals": res.residuals,
                "diagnostics": res.diagnostics,
                "theta": MatrixDoc::from_matrix(&res.theta),
                "beamformer": beam.as_ref().map(MatrixDoc::from_matrix),
            });
            emit(&(serde_json::to_string_pretty(&doc).expect("serializable") + "\n"), cli.out.as_deref(), stdout)?;
        }
        Command::Estimate { m, group_size, n, sigma2, pu } => {
            let cfg = ExperimentConfig {
                name: "estimate".into(),
                seed: cli.seed.unwrap_or(0),
                trials: cli.trials.unwrap_or(1000),
                experiment: Experiment::Estimation { m: *m, group_size: *group_size, n: *n, sigma2: *sigma2, pu: *pu },
                sweep: Sweep { axis: SweepAxis::Sigma2, values: vec![*sigma2] },
                fading: None,
                output: None,
                format: None,
            };
            let result = harness::run_experiment_with(&cfg, threads(cli)?)?;
            let format = cli.format.map(OutputFormat::from).unwrap_or_default();
            emit(&result.render(format), cli.out.as_deref(), stdout)?;
        }
        Command::Analyze { law, m, group_size, n_tx, users } => {
            if *m == 0 {
                return Err(Failure::Usage("--m must be positive".into()));
            }
            let pairs: Vec<(&str, String)> = match law {
                Law::Scaling => {
                    let s = scaling_laws(*m);
                    vec![
                        ("m", m.to_string()),
                        ("dris", s.dris.to_string()),
                        ("bdris", s.bdris.to_string()),
                        ("ratio", s.ratio.to_string()),
                    ]
                }
                Law::Group => {
                    let g = group_size.ok_or_else(|| Failure::Usage("--group-size is required".into()))?;
                    vec![
                        ("m", m.to_string()),
                        ("group_size", g.to_string()),
                        ("gain", (group_gain_per_element(*m, g)? * *m as f64).to_string()),
                        ("ratio", group_gain_ratio(*m, g, GroupDenominator::Corrected)?.to_string()),
                    ]
                }
                Law::Complexity => {
                    let c = optimal_complexity(*m, *n_tx, users);
                    vec![("m", m.to_string()), ("miso", c.miso.to_string()), ("mu_mimo", c.mu_mimo.to_string())]
                }
            };
            let text = if json_out {
                let map: serde_json::Map<String, serde_json::Value> = pairs
                    .iter()
                    .map(|(k, v)| (k.to_string(), serde_json::from_str(v).unwrap_or(json!(v))))
                    .collect();
                serde_json::to_string_pretty(&map).expect("serializable") + "\n"
            } else {
                kv(&pairs)
            };
            emit(&text, cli.out.as_deref(), stdout)?;
        }
        Command::Selftest => {
            let report = selftest::run(cli.seed.unwrap_or(7));
            emit(&report.text, cli.out.as_deref(), stdout)?;
            return Ok(if report.passed { 0 } else { 2 });
        }
    }
    Ok(0)
}
