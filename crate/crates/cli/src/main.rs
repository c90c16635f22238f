//! `sparsebeam`: select P of N transmit positions and design the waveform
//! correlation for several targets.

mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparsebeam::oracle::DEFAULT_ENUMERATION_CAP;
use sparsebeam::Error;

use crate::run::Status;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  error: bad config, I/O or solver failure
  2  artifacts written, but the budget needed trimming or a rank-1 fallback,
     or the budget could not be reached
  3  the enumeration exceeds --cap
  4  the nested layout does not fit the grid; pass an explicit mask

Every flag can also be set through an environment variable named
SPARSEBEAM_<FLAG>, e.g. SPARSEBEAM_SWEEP_DEG=0.5.";

#[derive(Parser)]
#[command(name = "sparsebeam", version, about, after_help = EXIT_CODES)]
struct Cli {
    #[command(flatten)]
    opts: Options,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Options {
    /// Scenario file (TOML). Without it the built-in reference scenario runs.
    #[arg(long, global = true, env = "SPARSEBEAM_CONFIG")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "SPARSEBEAM_OUT", default_value = "out")]
    pub out: PathBuf,

    /// Worker threads for enumeration and per-target solves.
    #[arg(long, global = true, env = "SPARSEBEAM_JOBS")]
    pub jobs: Option<usize>,

    /// Seed of the random baseline layout.
    #[arg(long, global = true, env = "SPARSEBEAM_SEED")]
    pub seed: Option<u64>,

    /// Beampattern sweep step in degrees.
    #[arg(long, global = true, env = "SPARSEBEAM_SWEEP_DEG")]
    pub sweep_deg: Option<f64>,

    /// Lower end of the sparsity weight bracket.
    #[arg(long, global = true, env = "SPARSEBEAM_MU_LOWER")]
    pub mu_lower: Option<f64>,

    /// Upper end of the sparsity weight bracket.
    #[arg(long, global = true, env = "SPARSEBEAM_MU_UPPER")]
    pub mu_upper: Option<f64>,

    /// Relative threshold separating active from inactive rows.
    #[arg(long, global = true, env = "SPARSEBEAM_GAMMA")]
    pub gamma: Option<f64>,

    /// Reweighting floor.
    #[arg(long, global = true, env = "SPARSEBEAM_EPSILON")]
    pub epsilon: Option<f64>,

    /// Absolute and relative solver tolerance.
    #[arg(long, global = true, env = "SPARSEBEAM_TOL")]
    pub tol: Option<f64>,

    /// Iteration limit per conic solve.
    #[arg(long, global = true, env = "SPARSEBEAM_MAX_ITERS")]
    pub max_iters: Option<usize>,

    /// Largest number of subsets the enumeration may visit.
    #[arg(long, global = true, env = "SPARSEBEAM_CAP", default_value_t = DEFAULT_ENUMERATION_CAP)]
    pub cap: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Select the active positions and design the correlation matrices.
    ///
    /// Writes report.json, result.json, trace.log, crosscorr.json,
    /// beampattern_composite.csv and beampattern_target_<l>.csv.
    Design,
    /// Score every subset of the budget size with the closed-form optimum.
    ///
    /// Writes enumeration.csv and enumeration.json. When the output
    /// directory holds a report.json for the same scenario, the gap of its
    /// design to the best subset is reported too.
    Enumerate,
    /// Evaluate the optimal design on a fixed layout.
    ///
    /// Writes the design artifacts with the layout name appended, e.g.
    /// report_ula.json and beampattern_composite_ula.csv.
    Baseline {
        #[arg(value_enum)]
        which: Layout,

        /// Explicit layout: a bit string such as 110010 or a comma separated
        /// list of zero-based positions.
        #[arg(long, required_if_eq("which", "mask"))]
        mask: Option<String>,
    },
    /// Recompute the pattern artifacts of a stored design or baseline.
    Eval {
        /// Directory holding report[_<tag>].json and result[_<tag>].json.
        /// Defaults to --out.
        #[arg(long)]
        from: Option<PathBuf>,

        /// Layout name of a baseline run; empty for the design.
        #[arg(long, default_value = "")]
        tag: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    /// The first P positions.
    Ula,
    /// A dense block followed by a sparse block.
    Nested,
    /// A uniformly drawn subset, reproducible through --seed.
    Random,
    /// The layout given by --mask.
    Mask,
}

impl Layout {
    pub fn tag(self) -> &'static str {
        match self {
            Layout::Ula => "ula",
            Layout::Nested => "nested",
            Layout::Random => "random",
            Layout::Mask => "mask",
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Budget(_)) => 2,
        Some(Error::EnumerationCap { .. }) => 3,
        Some(Error::Construction(_)) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.opts.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Design => run::design(&cli.opts),
        Command::Enumerate => run::enumerate(&cli.opts),
        Command::Baseline { which, mask } => run::baseline_cmd(&cli.opts, *which, mask.as_deref()),
        Command::Eval { from, tag } => run::eval_cmd(&cli.opts, from.as_deref(), tag),
    };
    match outcome {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Fallback) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
