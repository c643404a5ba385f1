//! Command-line arguments and the resolved configuration echoed into every
//! output.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use survregime::{CensorLimit, Method, SmoothingSpec, Stage1Features};

#[derive(Debug, Parser)]
#[command(
    name = "survregime",
    version,
    about = "Optimal treatment regimes for t-year survival"
)]
pub struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write to this file instead of stdout. `simulate` treats it as a prefix
    /// and writes `<prefix>.json` and `<prefix>.txt`.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the optimal linear regime at each `--time`.
    Estimate(DataArgs),
    /// Compare the estimated regime with treat-all and treat-none.
    Compare(DataArgs),
    /// Run a simulation study.
    Simulate(SimulateArgs),
    /// Monte-Carlo value of a regime under a simulation design.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Ipsw,
    Aipsw,
    Both,
}

impl MethodArg {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Ipsw => vec![Method::Ipsw],
            MethodArg::Aipsw => vec![Method::Aipsw],
            MethodArg::Both => vec![Method::Ipsw, Method::Aipsw],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeaturesArg {
    Full,
    InterimOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LimitArg {
    Left,
    Right,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "event")]
    pub event_col: String,
    /// Treatment column; the stage-0 treatment for two-stage data.
    #[arg(long, default_value = "treatment")]
    pub treatment_col: String,
    /// Covariates defining the regime, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub covariates: Vec<String>,
    /// Target time; repeat for several.
    #[arg(long = "time", required = true)]
    pub times: Vec<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    pub method: MethodArg,
    /// `logistic`, `constant`, or `known=<column>`. For two-stage data,
    /// `known=<p>` or `known=<p0>,<p1>` gives fixed probabilities.
    #[arg(long, default_value = "logistic")]
    pub ps: String,
    /// Use the indicator rule instead of the normal-CDF smoothed one.
    #[arg(long)]
    pub no_smooth: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub population: usize,
    #[arg(long, default_value_t = 200)]
    pub generations: usize,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Bootstrap replicates (at least 50). `estimate` adds a bootstrap
    /// interval when given; `compare` defaults to 500.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Re-run the regime search on every bootstrap resample.
    #[arg(long)]
    pub re_optimize: bool,
    /// Include the search trace in the output.
    #[arg(long)]
    pub trace: bool,
    #[arg(long, requires = "interim_time")]
    pub two_stage: bool,
    #[arg(long, requires = "two_stage")]
    pub interim_time: Option<f64>,
    #[arg(long, default_value = "stage1_treatment")]
    pub stage1_treatment_col: String,
    #[arg(long, value_delimiter = ',')]
    pub interim_covariates: Vec<String>,
    #[arg(long, value_enum, default_value_t = FeaturesArg::Full)]
    pub stage1_features: FeaturesArg,
    #[arg(long, value_enum, default_value_t = LimitArg::Left)]
    pub censor_limit: LimitArg,
}

impl DataArgs {
    pub fn smoothing(&self) -> SmoothingSpec {
        if self.no_smooth {
            SmoothingSpec::hard()
        } else {
            SmoothingSpec::smooth()
        }
    }

    pub fn features(&self) -> Stage1Features {
        match self.stage1_features {
            FeaturesArg::Full => Stage1Features::Full,
            FeaturesArg::InterimOnly => Stage1Features::InterimOnly,
        }
    }

    pub fn limit(&self) -> CensorLimit {
        match self.censor_limit {
            LimitArg::Left => CensorLimit::Left,
            LimitArg::Right => CensorLimit::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignArg {
    Single,
    TwoStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorArg {
    Extreme,
    Logistic,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = DesignArg::Single)]
    pub design: DesignArg,
    #[arg(long, value_enum, default_value_t = ErrorArg::Extreme)]
    pub error: ErrorArg,
    #[arg(long, default_value_t = 1)]
    pub scenario: u8,
    /// Target censoring rate.
    #[arg(long, default_value_t = 0.15)]
    pub censor: f64,
    /// Sample size; 250 single-stage, 500 two-stage when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    /// Target time of the single-stage design.
    #[arg(long, default_value_t = 2.0)]
    pub t: f64,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Estimator labels such as `S-I/T` or `A/F`: optional `S-` for
    /// smoothing, `I` or `A`, then `T` (true PS model) or `F` (intercept only).
    /// Defaults to `S-I/T,S-A/T`, or `S-I/T` for the two-stage design.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    #[arg(long, default_value_t = 500_000)]
    pub n_mc: usize,
    /// Bootstrap replicates per two-stage replication.
    #[arg(long, default_value_t = 100)]
    pub bootstrap: usize,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum, default_value_t = DesignArg::Single)]
    pub design: DesignArg,
    #[arg(long, value_enum, default_value_t = ErrorArg::Extreme)]
    pub error: ErrorArg,
    #[arg(long, default_value_t = 1)]
    pub scenario: u8,
    /// Single-stage regime `(intercept, x1, x2)`; the true rule when omitted.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub eta: Option<Vec<f64>>,
    /// Two-stage first rule `(intercept, x0)`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub eta0: Option<Vec<f64>>,
    /// Two-stage second rule `(intercept, x1)`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub eta1: Option<Vec<f64>>,
    /// Target time; 2 single-stage, the scenario's own otherwise.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long, default_value_t = 500_000)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Two-stage only: also search the first rule over this many angles.
    #[arg(long)]
    pub grid: Option<usize>,
}

/// Search settings as used.
#[derive(Debug, Clone, Serialize)]
pub struct SearchSettings {
    pub population: usize,
    pub generations: usize,
    pub restarts: usize,
    pub crossover: f64,
    pub mutation: f64,
    pub tolerance: f64,
}

/// Everything that determines a data-analysis run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub version: &'static str,
    pub input: PathBuf,
    pub time_col: String,
    pub event_col: String,
    pub treatment_col: String,
    pub covariates: Vec<String>,
    pub times: Vec<f64>,
    pub methods: Vec<Method>,
    pub ps: String,
    pub smoothing: SmoothingSpec,
    pub seed: u64,
    pub search: SearchSettings,
    pub level: f64,
    pub bootstrap: Option<usize>,
    pub re_optimize: bool,
    pub trace: bool,
    pub two_stage: Option<TwoStageConfig>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoStageConfig {
    pub interim_time: f64,
    pub stage1_treatment_col: String,
    pub interim_covariates: Vec<String>,
    pub stage1_features: Stage1Features,
    pub censor_limit: CensorLimit,
}
