use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use strandline::report::OutputFormat;
use strandline::{Interpolation, LossMode};

mod commands;
mod config;

use config::{FileConfig, RunConfig};

#[derive(Parser)]
#[command(name = "strandline", version)]
#[command(about = "Evaluate detections on YOLO datasets, audit set-prediction losses, and benchmark detectors")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct GlobalArgs {
    /// TOML config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Class names: comma-separated list or a file with one name per line
    #[arg(long, global = true)]
    classes: Option<String>,

    /// Output format: json, csv or markdown
    #[arg(long, global = true)]
    format: Option<OutputFormat>,

    /// IoU threshold for confusion-matrix matching
    #[arg(long, global = true)]
    iou: Option<f64>,

    /// Confidence threshold for confusion-matrix matching
    #[arg(long, global = true)]
    conf: Option<f64>,

    /// Loss form: verbatim or corrected
    #[arg(long, global = true)]
    loss_mode: Option<LossMode>,

    /// AP interpolation: coco101 or continuous
    #[arg(long, global = true)]
    interpolation: Option<Interpolation>,

    #[arg(long, global = true)]
    alpha: Option<f64>,

    #[arg(long, global = true)]
    gamma: Option<f64>,

    #[arg(long, global = true)]
    lambda_cls: Option<f64>,

    #[arg(long, global = true)]
    lambda_bbox: Option<f64>,

    #[arg(long, global = true)]
    lambda_giou: Option<f64>,

    /// Clamp for file-loaded probabilities, applied as [eps, 1 - eps]
    #[arg(long, global = true)]
    prob_eps: Option<f64>,

    /// Worker threads for per-image work
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// File listing image stems, one per line
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    /// Print the resolved configuration to stderr before running
    #[arg(long, global = true)]
    explain: bool,
}

impl GlobalArgs {
    fn as_file_config(&self) -> FileConfig {
        FileConfig {
            classes: self.classes.clone(),
            format: self.format,
            iou: self.iou,
            conf: self.conf,
            loss_mode: self.loss_mode,
            interpolation: self.interpolation,
            alpha: self.alpha,
            gamma: self.gamma,
            lambda_cls: self.lambda_cls,
            lambda_bbox: self.lambda_bbox,
            lambda_giou: self.lambda_giou,
            prob_eps: self.prob_eps,
            workers: self.workers,
            manifest: self.manifest.clone(),
        }
    }
}

#[derive(Subcommand)]
pub(crate) enum Command {
    /// Parse and check every label file of a split
    Validate {
        /// Split root (with images/ and labels/) or a labels directory
        dataset: PathBuf,
    },
    /// Precision, recall, mAP@50 and mAP@50-95 of predictions against labels
    Evaluate {
        gt: PathBuf,
        pred: PathBuf,
        /// Also write IoU-0.5 PR curves as CSV
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Confusion matrix with a background class
    Confusion { gt: PathBuf, pred: PathBuf },
    /// Loss terms of a JSON file of matched pairs
    LossAudit { pairs: PathBuf },
    /// Optimal assignment for a cost matrix or a prediction/target file
    Match { input: PathBuf },
    /// Time a detector adapter
    Bench {
        /// Directory of inputs, or a file listing one input per line
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        /// Built-in stub that sleeps this many milliseconds per call
        #[arg(long, conflicts_with = "adapter")]
        stub_ms: Option<f64>,
        /// Label used in the report
        #[arg(long)]
        label: Option<String>,
        /// Adapter command and arguments (after `--`)
        #[arg(last = true)]
        adapter: Vec<String>,
    },
    /// Efficiency comparison from a models file (JSON or CSV)
    Report { models: PathBuf },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<strandline::Error> for CliError {
    fn from(e: strandline::Error) -> Self {
        use strandline::Error as E;
        match e {
            E::Usage(_) => CliError::Usage(e.to_string()),
            E::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.global.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cfg = RunConfig::resolve(cli.global.as_file_config().or(file))?;
    if cli.global.explain {
        eprintln!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| commands::dispatch(cli.command, &cfg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
