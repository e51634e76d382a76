use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "axmap", version, about = "Approximate-multiplier mapping for quantized CNNs")]
pub struct Cli {
    /// Worker threads for batch-level parallelism (results do not depend on it).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-batch accuracy of the exact model and, with a mapping, the approximate one.
    Infer(InferArgs),
    /// Write the accuracy-drop trace of a fixed mapping.
    Trace(TraceArgs),
    /// Evaluate a query on trace files.
    Robustness(RobustnessArgs),
    /// Mine the maximum energy gain satisfying a query.
    Mine(MineArgs),
    /// Emit CSV and JSON tables from a mining bundle.
    Report(ReportArgs),
    /// Build or inspect multiplier lookup tables.
    #[command(subcommand)]
    Lut(LutCommand),
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Quantized model (AXQM).
    #[arg(long)]
    pub model: PathBuf,

    /// Evaluation images: AXDS, or IDX images together with --labels.
    #[arg(long)]
    pub dataset: PathBuf,

    /// IDX label file when --dataset is an IDX image file.
    #[arg(long)]
    pub labels: Option<PathBuf>,

    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
}

#[derive(Args, Debug)]
pub struct MultArgs {
    /// Mode tables: `m0=SPEC,m1=SPEC,m2=SPEC` with SPEC one of `exact`, `trunc:K` or an AXLU path.
    #[arg(long, default_value = "m0=exact,m1=trunc:2,m2=trunc:4")]
    pub mult: String,

    /// Energy per operation of M0, M1, M2 (defaults 1.0,0.8,0.6 or the AXLU values).
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub energy: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
#[group(required = false, multiple = false)]
pub struct MappingArgs {
    /// Mapping file (AXMAP).
    #[arg(long)]
    pub mapping: Option<PathBuf>,

    /// Fraction literal: `v1:v2` per layer, comma separated; or `exact`, `m2`.
    #[arg(long)]
    pub fv: Option<String>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mult: MultArgs,
    #[command(flatten)]
    pub mapping: MappingArgs,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mult: MultArgs,
    #[command(flatten)]
    pub mapping: MappingArgs,
    /// Output AXTR file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RobustnessArgs {
    /// Query file in the query DSL.
    #[arg(long)]
    pub query: PathBuf,

    /// AXTR trace files.
    #[arg(long = "trace", required = true, num_args = 1..)]
    pub traces: Vec<PathBuf>,

    /// Parameter values to evaluate; defaults to each trace's own energy gain.
    #[arg(long, value_delimiter = ',')]
    pub theta: Vec<f64>,

    /// Also print the per-batch breakdown against every per-batch bound.
    #[arg(long)]
    pub batches: bool,
}

#[derive(Args, Debug)]
pub struct MineArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mult: MultArgs,

    #[arg(long)]
    pub query: PathBuf,

    #[arg(long, default_value_t = 50)]
    pub iterations: usize,

    /// Fraction of batches (a prefix) used during the search.
    #[arg(long, default_value_t = 0.25)]
    pub subset: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,

    #[arg(long, default_value_t = 10.0)]
    pub initial_beta: f64,

    #[arg(long, default_value_t = 0.3)]
    pub target_accept: f64,

    /// Bundle directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Bundle directory written by `mine`.
    #[arg(long)]
    pub bundle: PathBuf,

    /// Output directory (defaults to the bundle).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum LutCommand {
    /// Tabulate a builtin mode into an AXLU file.
    Build {
        /// `exact` or `trunc:K`.
        #[arg(long)]
        mode: String,
        #[arg(long, default_value_t = 1.0)]
        energy: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print name, energy and error profile of an AXLU file.
    Inspect { path: PathBuf },
}
