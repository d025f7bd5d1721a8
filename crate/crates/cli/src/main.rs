mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use petabc::Error;

#[derive(Parser, Debug)]
#[command(
    name = "petabc",
    version,
    about = "Cached ABC, WLS and MCMC estimation for lp-ntPET time-activity curves"
)]
pub struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Scenario configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
    /// Tabulated reference curve (`t,value` or TAC CSV) replacing the built-in one.
    #[arg(long, global = true)]
    pub reference: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxChoice {
    /// The full prior.
    Prior,
    /// R1~U(0,5), k2~U(0,1), k2a~U(0,0.2), gamma~U(0,2).
    Narrowed,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Simulate the scenario TAC: clean.csv and noisy.csv.
    Simulate,
    /// Build a simulation cache.
    Cache(CacheArgs),
    /// Rejection or best-k ABC against a cache.
    Abc(AbcArgs),
    /// Weighted least squares over a sampled timing library.
    Wls(WlsArgs),
    /// Random-walk Metropolis under the Gaussian error model.
    Mcmc(McmcArgs),
    /// Sequential narrowing of the sampling box.
    Narrow(NarrowArgs),
    /// Posterior predictive bands.
    Ppc(PpcArgs),
    /// ABC / WLS / MCMC comparison over noise realisations.
    BatchCompare(BatchArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct CacheArgs {
    /// Entries; defaults to the scale profile.
    #[arg(long)]
    pub n: Option<usize>,
    /// Summary kinds to precompute, e.g. s1,s4.
    #[arg(long, value_delimiter = ',', default_value = "s1")]
    pub kinds: Vec<String>,
    #[arg(long = "box", value_enum, default_value_t = BoxChoice::Narrowed)]
    pub sampling_box: BoxChoice,
    /// Sampling box as JSON; overrides --box.
    #[arg(long)]
    pub box_file: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct AbcArgs {
    #[arg(long)]
    pub cache: PathBuf,
    /// Observed TAC CSV.
    #[arg(long)]
    pub obs: PathBuf,
    #[arg(long, default_value = "s1")]
    pub kind: String,
    /// Tolerance; `inf` keeps everything.
    #[arg(long, conflicts_with_all = ["k", "quantile"])]
    pub eps: Option<f64>,
    /// Keep the k closest entries; defaults to the scale profile.
    #[arg(long, conflicts_with = "quantile")]
    pub k: Option<usize>,
    /// Tolerance at this distance quantile.
    #[arg(long)]
    pub quantile: Option<f64>,
    #[arg(long)]
    pub nonneg: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct WlsArgs {
    #[arg(long)]
    pub obs: PathBuf,
    /// Timing library size; defaults to the scale profile.
    #[arg(long)]
    pub library_size: Option<usize>,
    #[arg(long)]
    pub nonneg: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct McmcArgs {
    #[arg(long)]
    pub obs: PathBuf,
    #[arg(long, default_value_t = petabc::mcmc::DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Start at the scenario truth instead of the prior centre.
    #[arg(long)]
    pub init_truth: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct NarrowArgs {
    #[arg(long)]
    pub obs: PathBuf,
    #[arg(long, default_value = "s1")]
    pub kind: String,
    #[arg(long, value_delimiter = ',', default_value = "200,50,10")]
    pub schedule: Vec<f64>,
    /// Cache size per stage; defaults to the scale profile.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct PpcArgs {
    /// Posterior JSONL written by `abc`.
    #[arg(long)]
    pub posterior: PathBuf,
    /// Clean TAC; when given, coverage is reported.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Simulate draws without noise.
    #[arg(long)]
    pub no_noise: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct BatchArgs {
    /// Defaults to the scale profile.
    #[arg(long)]
    pub realisations: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "abc,wls")]
    pub methods: Vec<String>,
    #[arg(long, default_value = "s1")]
    pub kind: String,
    #[arg(long)]
    pub cache_size: Option<usize>,
    #[arg(long)]
    pub best_k: Option<usize>,
    #[arg(long)]
    pub library_size: Option<usize>,
    #[arg(long, default_value_t = 20_000)]
    pub mcmc_steps: usize,
}

const USAGE: u8 = 2;
const DATA: u8 = 3;
const NUMERIC: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        NUMERIC
    } else if matches!(e, Error::InvalidArgument(_)) {
        USAGE
    } else {
        DATA
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
