use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::LevelFilter;

use riskaudit::{DegreeFilter, PriorBins, DEFAULT_GROUPS, DEFAULT_THRESHOLD};

#[derive(Debug, Parser)]
#[command(name = "riskaudit", version, about = "Fairness audits for decile risk scores")]
pub struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Only print errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn verbosity(&self) -> LevelFilter {
        if self.quiet {
            return LevelFilter::Error;
        }
        match self.verbose {
            0 => LevelFilter::Warn,
            1 => LevelFilter::Info,
            2 => LevelFilter::Debug,
            _ => LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full audit bundle: rates, calibration, penalty gaps, effect sizes, strata.
    Audit(AuditArgs),
    /// Calibration curves per group and the per-decile comparison.
    Calibration(CalibrationArgs),
    /// Penalty gaps under a two-level policy, with the overlap bound.
    Impact(ImpactArgs),
    /// Long-format data for figure 1 (calibration), 2 (stratified FPR) or 3 (histograms).
    Figures(FiguresArgs),
    /// Calibrated synthetic populations and Monte Carlo penalty gaps.
    Simulate(SimulateArgs),
    /// Check the FPR identity on every (group, threshold) slice and on random matrices.
    IdentityCheck(IdentityArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// The usual ProPublica screening-date and charge filters.
    Propublica,
}

/// Output destination and run metadata switches.
#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file (or directory for multi-table CSV); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Record the wall-clock time in the metadata (breaks byte-identical reruns).
    #[arg(long)]
    pub timestamp: bool,
}

/// Input dataset, column mapping and cohort.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    pub data: PathBuf,

    /// TOML file with the column mapping and row filters.
    #[arg(long)]
    pub schema: Option<PathBuf>,

    /// Built-in row filters, applied on top of the schema file.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,

    /// Group column (overrides the schema file).
    #[arg(long)]
    pub group_column: Option<String>,

    /// Decile score column (overrides the schema file).
    #[arg(long)]
    pub score_column: Option<String>,

    /// Binary outcome column (overrides the schema file).
    #[arg(long)]
    pub outcome_column: Option<String>,

    /// Groups to compare, first against second.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = DEFAULT_GROUPS.map(String::from))]
    pub groups: Vec<String>,

    /// Skip rows with invalid fields instead of failing.
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Debug, Args)]
pub struct AnalysisArgs {
    /// Scores strictly above this decile are high risk.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = clap::value_parser!(u8).range(0..=10))]
    pub threshold: u8,

    /// Confidence level of the Wilson intervals.
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// Penalty for a low-risk classification.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t_low: f64,

    /// Penalty for a high-risk classification.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub t_high: f64,
}

#[derive(Debug, Args)]
pub struct StrataArgs {
    /// Charge degree admitted to the prior-count strata.
    #[arg(long, default_value = "misdemeanor", value_parser = parse_degree)]
    pub degree: DegreeFilter,

    /// Prior-count bins, e.g. "0,1-3,4-6,7-10,11+".
    #[arg(long, default_value = "0,1-3,4-6,7-10,11+", value_parser = parse_bins)]
    pub bins: PriorBins,
}

fn parse_degree(s: &str) -> Result<DegreeFilter, String> {
    s.parse().map_err(|e: riskaudit::Error| e.to_string())
}

fn parse_bins(s: &str) -> Result<PriorBins, String> {
    s.parse().map_err(|e: riskaudit::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub strata: StrataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StratifyBy {
    ChargeDegree,
}

#[derive(Debug, Args)]
pub struct CalibrationArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,

    /// Deciles with fewer records are flagged low confidence.
    #[arg(long, default_value_t = riskaudit::fairness::DEFAULT_MIN_N)]
    pub min_n: u64,

    /// Also report curves within strata of a covariate.
    #[arg(long, value_enum)]
    pub stratify: Option<StratifyBy>,

    /// Stratify by a passthrough column instead.
    #[arg(long, conflicts_with = "stratify")]
    pub stratify_column: Option<String>,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ImpactArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct FiguresArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,

    /// 1 calibration, 2 stratified FPR, 3 score histograms.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub figure: u8,

    #[command(flatten)]
    pub strata: StrataArgs,

    /// Also write a static SVG rendering.
    #[arg(long)]
    pub svg: Option<PathBuf>,

    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Overrides the configured number of Monte Carlo replicates.
    #[arg(long)]
    pub reps: Option<u64>,

    /// Overrides the configured policy threshold.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=10))]
    pub threshold: Option<u8>,

    #[arg(long, allow_negative_numbers = true)]
    pub t_low: Option<f64>,

    #[arg(long, allow_negative_numbers = true)]
    pub t_high: Option<f64>,

    /// Write replicate 0 as a CSV in the default ingest schema.
    #[arg(long)]
    pub export: Option<PathBuf>,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct IdentityArgs {
    /// Dataset to sweep; only random matrices are checked when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,

    #[arg(long)]
    pub schema: Option<PathBuf>,

    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = DEFAULT_GROUPS.map(String::from))]
    pub groups: Vec<String>,

    #[arg(long)]
    pub skip_invalid: bool,

    /// Number of random confusion matrices.
    #[arg(long, default_value_t = 10_000)]
    pub random: u64,

    /// Largest cell count of a random matrix.
    #[arg(long, default_value_t = 1_000)]
    pub max_cell: u64,

    #[arg(long, default_value_t = riskaudit::simulate::DEFAULT_SEED)]
    pub seed: u64,

    /// Fail (exit 4) when any slice misses by more than this.
    #[arg(long, default_value_t = 1e-12)]
    pub tolerance: f64,

    #[command(flatten)]
    pub output: OutputArgs,
}
