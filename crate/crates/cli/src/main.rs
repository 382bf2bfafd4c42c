//! `stereo`: inference, training, evaluation, synthetic data and point clouds.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "stereo", version, about = "Learned stereo depth from rectified image pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate disparity and confidence for one image pair.
    Infer(InferArgs),
    /// Train a model on a directory of labelled pairs.
    Train(TrainArgs),
    /// Score predicted disparity maps against ground truth; prints JSON.
    Eval(EvalArgs),
    /// Write a synthetic labelled dataset.
    Synth(SynthArgs),
    /// Convert a disparity map into a PLY point cloud.
    Cloud(CloudArgs),
}

/// `W x H` as written on the command line, e.g. `640x480`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size {
    pub width: usize,
    pub height: usize,
}

fn parse_size(s: &str) -> Result<Size, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    let size = Size {
        width: num(w)?,
        height: num(h)?,
    };
    if size.width == 0 || size.height == 0 {
        return Err(format!("size must be non-zero, got `{s}`"));
    }
    Ok(size)
}

fn parse_cv_scale(s: &str) -> Result<usize, String> {
    match s {
        "4" => Ok(4),
        "8" => Ok(8),
        _ => Err(format!("must be 4 or 8, got `{s}`")),
    }
}

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub ndisp: usize,
    #[arg(long, value_parser = parse_cv_scale)]
    pub cv_scale: usize,
    #[arg(long)]
    pub out_disp: PathBuf,
    #[arg(long)]
    pub out_conf: Option<PathBuf>,
    /// Also write `<out-disp stem>_filtered.pfm` with rejected pixels as NaN.
    #[arg(long)]
    pub filtered: bool,
    #[arg(long, default_value_t = 0.25)]
    pub conf_thresh: f64,
    #[arg(long, default_value_t = 2000)]
    pub min_region: usize,
    #[arg(long)]
    pub ply: Option<PathBuf>,
    /// Focal length in pixels; defaults to a 100 degree horizontal field of view.
    #[arg(long)]
    pub fx: Option<f64>,
    /// Camera baseline in metres.
    #[arg(long, default_value_t = 0.1)]
    pub baseline: f64,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset directory with one `NNNN/{left.png,right.png,disp.pfm}` per sample.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: usize,
    #[arg(long)]
    pub lr: f64,
    #[arg(long)]
    pub batch: usize,
    #[arg(long, value_parser = parse_size)]
    pub crop: Size,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_weights: PathBuf,
    /// Comma-separated subset of flip,jitter,noise,blur,shift.
    #[arg(long, default_value = "")]
    pub augment: String,
    #[arg(long, default_value_t = 16)]
    pub ndisp: usize,
    #[arg(long, default_value_t = 4)]
    pub cv_scale: usize,
    #[arg(long, default_value_t = 8)]
    pub feat_channels: usize,
    /// Held-out dataset directory; adds a validation EPE column to the log.
    #[arg(long)]
    pub val: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// A PFM file or a directory searched recursively for PFM files.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// PNG (non-zero is valid) or PFM (finite non-zero is valid), or a directory of them.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1.0,2.0,4.0")]
    pub thresholds: Vec<f64>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub count: usize,
    #[arg(long, value_parser = parse_size)]
    pub size: Size,
    #[arg(long)]
    pub ndisp: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CloudArgs {
    #[arg(long)]
    pub disp: PathBuf,
    #[arg(long)]
    pub fx: f64,
    #[arg(long)]
    pub fy: f64,
    #[arg(long)]
    pub cx: f64,
    #[arg(long)]
    pub cy: f64,
    #[arg(long)]
    pub baseline: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Voxel edge length in metres used for the occupancy count.
    #[arg(long, default_value_t = 0.02)]
    pub voxel: f64,
    /// Write the occupied voxel centres to this PLY as well.
    #[arg(long)]
    pub voxel_out: Option<PathBuf>,
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("STEREO_THREADS") {
        let n: usize = v.parse().map_err(|e| anyhow::anyhow!("STEREO_THREADS=`{v}`: {e}"))?;
        if n > 0 {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
    }
    Ok(())
}

/// Missing input files exit with 2, everything else with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    let missing = err
        .chain()
        .filter_map(|e| e.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::NotFound);
    if missing {
        2
    } else {
        1
    }
}

/// The error chain joined by `: `, skipping causes whose text the previous
/// message already ends with.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Infer(a) => commands::infer(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Cloud(a) => commands::cloud(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
