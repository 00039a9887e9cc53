//! `lpcluster`: simulate heavy-tailed series, estimate cluster statistics and
//! run seeded Monte Carlo studies from the command line.
//!
//! Exit status is 0 on success, 2 for invalid configuration and 1 for
//! failures while running.

mod error;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lpcluster::estimators::HillCorrection;
use lpcluster::experiments::{
    AlphaPolicy, EstimatorSpec, FunctionalChoice, HeatmapConfig, McConfig, OracleSettings, PPolicy,
};
use lpcluster::models::ModelSpec;
use lpcluster::oracles::DEFAULT_HORIZON_EPS;
use lpcluster::{Execution, PExponent};

use crate::error::{CliError, Result};
use crate::run::{check_estimator, read_sidecar, run_and_record, Format, RunSpec, SeriesInput};

#[derive(Parser, Debug)]
#[command(name = "lpcluster", version, about = "Cluster inference for heavy-tailed time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 12_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        io: OutputArgs,
    },
    /// Estimate cluster statistics on one simulated or supplied series.
    Estimate {
        /// Model JSON; optional with --series unless --alpha model is used.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Series CSV with an `x` column instead of simulating.
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long, default_value_t = 12_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        est: EstimatorArgs,
        #[command(flatten)]
        io: OutputArgs,
    },
    /// Monte Carlo study: one CSV and summary per functional.
    Mc {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 12_000)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        /// Master seed; replicate seeds derive from it.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        est: EstimatorArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Skip the truth computation.
        #[arg(long)]
        no_oracle: bool,
        #[command(flatten)]
        io: OutputArgs,
    },
    /// SD and MSE over a (k, k') grid with Hill-estimated alpha.
    Heatmap {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 12_000)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// `a:b` doubles from a up to b (b included), or a comma list.
        #[arg(long, value_parser = parse_grid, default_value = "4:64")]
        k_grid: Grid,
        #[arg(long, value_parser = parse_grid, default_value = "100,200,500,1000,2000,4000")]
        kprime_grid: Grid,
        #[arg(long, value_enum, default_value_t = FunctionalArg::ExtremalIndex)]
        functional: FunctionalArg,
        #[arg(long)]
        j: Option<usize>,
        #[arg(long, value_enum, default_value_t = CorrectionArg::None)]
        correction: CorrectionArg,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        io: OutputArgs,
    },
    /// True cluster statistics of a model.
    Oracle {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = FunctionalArg::ExtremalIndex)]
        functional: FunctionalArg,
        #[arg(long, num_args = 1..)]
        j: Vec<usize>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        io: OutputArgs,
    },
    /// k-scaled variances of the alpha-blocks and classic extremal index estimators.
    VarianceCompare {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 12_000)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        io: OutputArgs,
    },
    /// Re-run from a `.config.json` written by an earlier run.
    Replay {
        config: PathBuf,
        /// Output path; defaults to the one recorded in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct ModelArg {
    /// Model JSON, e.g. {"kind": "ar1", "phi": 0.5, "alpha": 1.0}.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output file (or file prefix for `mc`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct EstimatorArgs {
    #[arg(long, value_enum, default_value_t = FunctionalArg::ExtremalIndex)]
    functional: FunctionalArg,
    /// Cluster sizes for `cluster-size`.
    #[arg(long, num_args = 1..)]
    j: Vec<usize>,
    /// Block modulus exponent: a number, `inf`, or `alpha`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_p, default_value = "alpha")]
    p: PPolicy,
    /// Tail index: a number, `model` (the model's own), or `hill`.
    #[arg(long, allow_hyphen_values = true, default_value = "model")]
    alpha: String,
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Upper order statistics for `--alpha hill`.
    #[arg(long, default_value_t = 2000)]
    kprime: usize,
    #[arg(long, value_enum, default_value_t = CorrectionArg::None)]
    correction: CorrectionArg,
    /// Block length; defaults to floor(sqrt(n / k)).
    #[arg(long)]
    b: Option<usize>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Cluster samples for Monte Carlo truths.
    #[arg(long, default_value_t = 10_000)]
    oracle_reps: usize,
    #[arg(long, default_value_t = OracleSettings::default().seed)]
    oracle_seed: u64,
    #[arg(long, default_value_t = DEFAULT_HORIZON_EPS)]
    horizon_eps: f64,
}

impl From<&OracleArgs> for OracleSettings {
    fn from(a: &OracleArgs) -> Self {
        OracleSettings {
            reps: a.oracle_reps,
            horizon_eps: a.horizon_eps,
            seed: a.oracle_seed,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FunctionalArg {
    ExtremalIndex,
    SumIndex,
    ClusterSize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CorrectionArg {
    None,
    ExpRegression,
}

impl From<CorrectionArg> for HillCorrection {
    fn from(c: CorrectionArg) -> Self {
        match c {
            CorrectionArg::None => HillCorrection::None,
            CorrectionArg::ExpRegression => HillCorrection::ExpRegression,
        }
    }
}

#[derive(Clone, Debug)]
struct Grid(Vec<usize>);

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let int = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a positive integer"));
    let v = if let Some((a, b)) = s.split_once(':') {
        let (a, b) = (int(a)?, int(b)?);
        if a == 0 || a > b {
            return Err(format!("range `{s}` needs 0 < a <= b"));
        }
        let mut v = Vec::new();
        let mut x = a;
        while x < b {
            v.push(x);
            x *= 2;
        }
        v.push(b);
        v
    } else {
        s.split(',').map(int).collect::<std::result::Result<Vec<_>, _>>()?
    };
    Ok(Grid(v))
}

fn parse_p(s: &str) -> std::result::Result<PPolicy, String> {
    if s.trim() == "alpha" {
        return Ok(PPolicy::Alpha);
    }
    s.parse::<PExponent>().map(PPolicy::Fixed).map_err(|e| e.to_string())
}

fn functionals(f: FunctionalArg, j: &[usize]) -> Result<Vec<FunctionalChoice>> {
    match f {
        FunctionalArg::ClusterSize => {
            if j.contains(&0) {
                return Err(CliError::config("j", "cluster sizes start at 1"));
            }
            if j.is_empty() {
                Ok(vec![FunctionalChoice::ClusterSize { j: 1 }])
            } else {
                Ok(j.iter().map(|&j| FunctionalChoice::ClusterSize { j }).collect())
            }
        }
        _ if !j.is_empty() => Err(CliError::config("j", "only used with --functional cluster-size")),
        FunctionalArg::ExtremalIndex => Ok(vec![FunctionalChoice::ExtremalIndex]),
        FunctionalArg::SumIndex => Ok(vec![FunctionalChoice::SumIndex]),
    }
}

fn read_model(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("model", format!("{}: {e}", path.display())))?;
    let model: ModelSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::config("model", format!("{}: {e}", path.display())))?;
    model.validate()?;
    Ok(model)
}

impl EstimatorArgs {
    fn alpha_policy(&self) -> Result<AlphaPolicy> {
        match self.alpha.trim() {
            "model" => Ok(AlphaPolicy::Model),
            "hill" => Ok(AlphaPolicy::Hill {
                k_prime: self.kprime,
                correction: self.correction.into(),
            }),
            other => match other.parse::<f64>() {
                Ok(alpha) if alpha.is_finite() && alpha > 0.0 => Ok(AlphaPolicy::Known { alpha }),
                _ => Err(CliError::config("alpha", format!("expected a positive number, `model` or `hill`, got `{other}`"))),
            },
        }
    }

    fn specs(&self) -> Result<Vec<EstimatorSpec>> {
        let alpha = self.alpha_policy()?;
        Ok(functionals(self.functional, &self.j)?
            .into_iter()
            .map(|functional| EstimatorSpec {
                functional,
                p: self.p,
                alpha,
                k: self.k,
                b: self.b,
            })
            .collect())
    }
}

/// Turns parsed arguments into a resolved run, output path, format and thread count.
fn resolve(command: Command) -> Result<(RunSpec, Option<PathBuf>, Format, Option<usize>)> {
    let (spec, io) = match command {
        Command::Simulate { model, n, seed, io } => {
            if n == 0 {
                return Err(CliError::config("n", "must be >= 1"));
            }
            (
                RunSpec::Simulate {
                    model: read_model(&model.model)?,
                    n,
                    seed,
                },
                io,
            )
        }
        Command::Estimate {
            model,
            series,
            n,
            seed,
            est,
            io,
        } => {
            let model = model.as_deref().map(read_model).transpose()?;
            let input = match (series, model) {
                (Some(path), model) => SeriesInput::File { path, model },
                (None, Some(model)) => SeriesInput::Simulated { model, n, seed },
                (None, None) => return Err(CliError::config("model", "give --model or --series")),
            };
            let estimators = est.specs()?;
            if let SeriesInput::Simulated { n, .. } = &input {
                estimators.iter().try_for_each(|e| check_estimator(e, *n))?;
            }
            (RunSpec::Estimate { input, estimators }, io)
        }
        Command::Mc {
            model,
            n,
            reps,
            seed,
            est,
            oracle,
            no_oracle,
            io,
        } => {
            let model = read_model(&model.model)?;
            let oracle = (!no_oracle).then(|| OracleSettings::from(&oracle));
            let runs: Vec<McConfig> = est
                .specs()?
                .into_iter()
                .map(|estimator| McConfig {
                    model: model.clone(),
                    n,
                    reps,
                    estimator,
                    master_seed: seed,
                    oracle,
                })
                .collect();
            runs.iter().try_for_each(|c| c.validate())?;
            (RunSpec::Mc { runs }, io)
        }
        Command::Heatmap {
            model,
            n,
            reps,
            seed,
            k_grid,
            kprime_grid,
            functional,
            j,
            correction,
            oracle,
            io,
        } => {
            let functional = match functionals(functional, &j.into_iter().collect::<Vec<_>>())?.as_slice() {
                [f] => *f,
                _ => unreachable!("at most one j"),
            };
            let config = HeatmapConfig {
                model: read_model(&model.model)?,
                n,
                reps,
                k_grid: k_grid.0,
                k_prime_grid: kprime_grid.0,
                functional,
                correction: correction.into(),
                master_seed: seed,
                oracle: (&oracle).into(),
            };
            (RunSpec::Heatmap { config }, io)
        }
        Command::Oracle {
            model,
            functional,
            j,
            oracle,
            io,
        } => (
            RunSpec::Oracle {
                model: read_model(&model.model)?,
                functionals: functionals(functional, &j)?,
                settings: (&oracle).into(),
            },
            io,
        ),
        Command::VarianceCompare {
            model,
            n,
            reps,
            k,
            seed,
            io,
        } => (
            RunSpec::VarianceCompare {
                model: read_model(&model.model)?,
                n,
                reps,
                k,
                master_seed: seed,
            },
            io,
        ),
        Command::Replay { config, out, threads } => {
            let sidecar = read_sidecar(&config)?;
            return Ok((sidecar.run, Some(out.unwrap_or(sidecar.out)), sidecar.format, threads));
        }
    };
    Ok((spec, io.out, io.format, io.threads))
}

fn run(cli: Cli) -> Result<String> {
    let (spec, out, format, threads) = resolve(cli.command)?;
    let out = out.unwrap_or_else(|| spec.default_out(format));
    match threads {
        Some(0) => Err(CliError::config("threads", "must be >= 1")),
        Some(1) => run_and_record(&spec, &out, format, Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::config("threads", e.to_string()))?;
            pool.install(|| run_and_record(&spec, &out, format, Execution::Parallel))
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => run_and_record(&spec, &out, format, Execution::Sequential),
        None => run_and_record(&spec, &out, format, Execution::Parallel),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
