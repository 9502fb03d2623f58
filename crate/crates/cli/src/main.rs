//! `agglofocus` command-line pipeline.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use agglofocus::contrast::{ContrastMethod, FocusSource, DEFAULT_THRESHOLD};
use agglofocus::focusmeas::Measure;
use agglofocus::graph::DEFAULT_TOUCH_RADIUS;
use agglofocus::metrics::{AccDenominator, Average, DEFAULT_IOU_THRESHOLD};
use agglofocus::raster::PostprocessOrder;

#[derive(Debug, Parser)]
#[command(
    name = "agglofocus",
    version,
    about = "Focus-contrast agglomeration classification"
)]
pub struct Cli {
    /// Worker threads for per-scene parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    pub log_level: LogLevel,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LogLevel {
    Off,
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Off => log::LevelFilter::Off,
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    C1,
    C2,
}

impl From<MethodArg> for ContrastMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::C1 => ContrastMethod::Contrast1,
            MethodArg::C2 => ContrastMethod::Contrast2,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceArg {
    Label,
    LaplacianMask,
    LaplacianContour,
    Brenner,
    Reblur,
}

impl From<SourceArg> for FocusSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Label => FocusSource::Label,
            SourceArg::LaplacianMask => FocusSource::Measure(Measure::LaplacianMask),
            SourceArg::LaplacianContour => FocusSource::Measure(Measure::LaplacianContour),
            SourceArg::Brenner => FocusSource::Measure(Measure::Brenner),
            SourceArg::Reblur => FocusSource::Measure(Measure::Reblur),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MeasureArg {
    All,
    LaplacianMask,
    LaplacianContour,
    Brenner,
    Reblur,
}

impl MeasureArg {
    fn measures(self) -> Vec<Measure> {
        match self {
            MeasureArg::All => Measure::ALL.to_vec(),
            MeasureArg::LaplacianMask => vec![Measure::LaplacianMask],
            MeasureArg::LaplacianContour => vec![Measure::LaplacianContour],
            MeasureArg::Brenner => vec![Measure::Brenner],
            MeasureArg::Reblur => vec![Measure::Reblur],
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    FillThenLargest,
    LargestThenFill,
}

impl From<OrderArg> for PostprocessOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::FillThenLargest => PostprocessOrder::FillThenLargest,
            OrderArg::LargestThenFill => PostprocessOrder::LargestThenFill,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AverageArg {
    Macro,
    Micro,
}

impl From<AverageArg> for Average {
    fn from(a: AverageArg) -> Self {
        match a {
            AverageArg::Macro => Average::Macro,
            AverageArg::Micro => Average::Micro,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AccArg {
    Matched,
    Gt,
}

impl From<AccArg> for AccDenominator {
    fn from(a: AccArg) -> Self {
        match a {
            AccArg::Matched => AccDenominator::Matched,
            AccArg::Gt => AccDenominator::Gt,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with exact ground truth.
    Synth {
        #[arg(long, default_value_t = 256)]
        width: u32,
        #[arg(long, default_value_t = 256)]
        height: u32,
        #[arg(long, default_value_t = 3)]
        layers: usize,
        /// Focal layer index (defaults to the middle layer).
        #[arg(long)]
        focal_layer: Option<usize>,
        #[arg(long, default_value_t = 25)]
        n: usize,
        /// Probability that a large crystal carries a breakage fragment.
        #[arg(long, default_value_t = 0.0)]
        breakage: f64,
        out_dir: std::path::PathBuf,
    },
    /// Expand a corpus with instance-blurred copies.
    Augment {
        /// Images per original, the original included.
        #[arg(long, default_value_t = 5)]
        copies: usize,
        /// Blurred share of instances as `low:high`.
        #[arg(long, default_value = "0.25:0.5")]
        fraction: String,
        #[arg(long, default_value = "11,13,15,17")]
        kernels: String,
        in_dir: std::path::PathBuf,
        out_dir: std::path::PathBuf,
    },
    /// Per-instance focus measures as CSV.
    FocusMeasure {
        #[arg(long, value_enum, default_value_t = MeasureArg::All)]
        measure: MeasureArg,
        /// Output CSV (standard output when omitted).
        #[arg(long)]
        out: Option<std::path::PathBuf>,
        /// Scene files or directories of scene files.
        #[arg(required = true)]
        inputs: Vec<std::path::PathBuf>,
    },
    /// Label every instance agglomerated or non-agglomerated.
    Classify {
        #[arg(long, value_enum, default_value_t = MethodArg::C2)]
        method: MethodArg,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = SourceArg::Label)]
        focus_source: SourceArg,
        #[arg(long, default_value_t = DEFAULT_TOUCH_RADIUS)]
        touch_radius: u32,
        /// Mask post-processing order.
        #[arg(long, value_enum, default_value_t = OrderArg::FillThenLargest)]
        order: OrderArg,
        /// Write the adjacency graph as JSON (a directory when classifying a directory).
        #[arg(long)]
        dump_graph: Option<std::path::PathBuf>,
        /// Scene file or directory.
        input: std::path::PathBuf,
        /// Output file or directory.
        output: std::path::PathBuf,
    },
    /// Score predictions against ground truth.
    Evaluate {
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        #[arg(long, value_enum, default_value_t = AverageArg::Macro)]
        average: AverageArg,
        #[arg(long, value_enum, default_value_t = AccArg::Matched)]
        acc_denominator: AccArg,
        /// Report JSON (standard output when omitted).
        #[arg(long)]
        out: Option<std::path::PathBuf>,
        /// Per-scene CSV table.
        #[arg(long)]
        csv: Option<std::path::PathBuf>,
        gt_dir: std::path::PathBuf,
        pred_dir: std::path::PathBuf,
    },
    /// Class-separation table of contrast focus per method.
    ContrastReport {
        #[arg(long, default_value_t = DEFAULT_TOUCH_RADIUS)]
        touch_radius: u32,
        /// Output CSV (standard output when omitted).
        #[arg(long)]
        out: Option<std::path::PathBuf>,
        /// Ground-truth scene files or directories (images alongside).
        #[arg(required = true)]
        inputs: Vec<std::path::PathBuf>,
    },
    /// Check scene files against the interchange format.
    Validate {
        #[arg(required = true)]
        inputs: Vec<std::path::PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level.filter())
        .format_timestamp(None)
        .init();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
    {
        eprintln!("error[internal]: {e}");
        return ExitCode::from(1);
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = commands::error_code(&e);
            eprintln!("error[{code}]: {e:#}");
            ExitCode::from(1)
        }
    }
}
