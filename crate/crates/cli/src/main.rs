//! `evego`: the event-camera hand pipeline as subcommands.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Serialize, Debug)]
#[command(name = "evego", version, about = "Event-camera egocentric hand reconstruction pipeline")]
pub struct Cli {
    /// Worker threads for every parallel stage [default: available cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for cloud sampling, model initialisation and scene texture
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Frame directory (PGM + manifest.txt) to an event text file
    Simulate(SimulateArgs),
    /// Events to one LNES PGM per window (positive channel)
    Lnes(LnesArgs),
    /// Events to an EVCL point cloud over a window history
    Cloud(CloudArgs),
    /// Events to a density-heuristic hand mask PGM
    Mask(MaskArgs),
    /// Events plus a mask to an EVCL cloud of the surviving events
    Filter(FilterArgs),
    /// MANO parameters through a rig to an OBJ mesh and joints JSON
    Forward(ForwardArgs),
    /// OBJ mesh to a silhouette mask PGM
    Project(ProjectArgs),
    /// Overfit the reconstruction head on a scene manifest
    TrainToy(TrainArgs),
    /// Predicted vs ground-truth parameters to a metric report and PCK CSV
    Evaluate(EvaluateArgs),
    /// Write a synthetic scene directory
    GenScene(GenSceneArgs),
}

#[derive(Args, Serialize, Debug)]
pub struct SimulateArgs {
    /// Directory of frame_*.pgm files and manifest.txt
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Log-intensity step per event (natural log units)
    #[arg(long, default_value_t = 0.2)]
    pub contrast_threshold: f64,
    /// Floor added to intensity in [0, 1] before the log
    #[arg(long, default_value_t = 1e-3)]
    pub log_eps: f64,
}

#[derive(Args, Serialize, Debug, Clone)]
pub struct WindowArgs {
    /// Event text file
    #[arg(long)]
    pub events: PathBuf,
    /// Window length in microseconds
    #[arg(long, default_value_t = 33_333)]
    pub window_us: i64,
    /// Number of windows ending at --index that feed the step
    #[arg(long, default_value_t = 3)]
    pub history: usize,
    /// Window index [default: the last window]
    #[arg(long)]
    pub index: Option<usize>,
}

#[derive(Args, Serialize, Debug)]
pub struct LnesArgs {
    #[command(flatten)]
    pub window: WindowArgs,
    /// Output directory for lnes_NNNN.pgm
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Serialize, Debug)]
pub struct CloudArgs {
    #[command(flatten)]
    pub window: WindowArgs,
    /// Points per cloud, real plus padding
    #[arg(long, default_value_t = 2048)]
    pub budget: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
pub struct MaskArgs {
    #[command(flatten)]
    pub window: WindowArgs,
    /// Box-blur radius in pixels
    #[arg(long, default_value_t = 4)]
    pub blur_radius: usize,
    /// Fraction of the peak blurred density a pixel must reach
    #[arg(long, default_value_t = 0.5)]
    pub density_threshold: f64,
    /// Smallest kept component, in pixels
    #[arg(long, default_value_t = 50)]
    pub min_area: usize,
    /// Largest components kept
    #[arg(long, default_value_t = 2)]
    pub max_components: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize, Debug)]
pub struct FilterArgs {
    #[command(flatten)]
    pub window: WindowArgs,
    /// Mask PGM with the event geometry; nonzero pixels are kept
    #[arg(long)]
    pub mask: PathBuf,
    /// Points per cloud, real plus padding
    #[arg(long, default_value_t = 2048)]
    pub budget: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinRig {
    /// 778-vertex procedural rig
    Standard,
    /// 16-vertex procedural rig
    Mini,
}

#[derive(Args, Serialize, Debug, Clone)]
pub struct RigArgs {
    /// HRIG file; overrides --builtin-rig for the hand side it describes
    #[arg(long)]
    pub rig: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BuiltinRig::Standard)]
    pub builtin_rig: BuiltinRig,
}

#[derive(Args, Serialize, Debug)]
pub struct ForwardArgs {
    /// JSON ManoParams (theta, beta, trans in m, rot axis-angle in rad, side)
    #[arg(long)]
    pub params: PathBuf,
    #[command(flatten)]
    pub rig: RigArgs,
    /// Posed mesh in meters
    #[arg(long)]
    pub obj: PathBuf,
    /// 20 joints plus wrist in meters
    #[arg(long)]
    pub joints: PathBuf,
}

#[derive(Args, Serialize, Debug)]
pub struct ProjectArgs {
    /// Mesh in camera coordinates, meters
    #[arg(long)]
    pub mesh: PathBuf,
    /// Sensor width in pixels
    #[arg(long, default_value_t = 346)]
    pub width: u32,
    /// Sensor height in pixels
    #[arg(long, default_value_t = 260)]
    pub height: u32,
    /// Focal length in pixels [default: 0.87 × width]
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Every event of the history
    All,
    /// Only events on ground-truth mask pixels
    Masked,
}

#[derive(Args, Serialize, Debug)]
pub struct TrainArgs {
    /// Scene manifest.jsonl
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Adam step size
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    /// Points per cloud
    #[arg(long, default_value_t = 1024)]
    pub budget: usize,
    #[arg(long, value_enum, default_value_t = InputKind::Masked)]
    pub input: InputKind,
    /// Per-epoch loss CSV
    #[arg(long)]
    pub log: PathBuf,
    /// EVHD checkpoint written after training
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
pub struct EvaluateArgs {
    /// JSON list of {left, right} parameter pairs (null for absent hands)
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth in the same format
    #[arg(long)]
    pub gt: PathBuf,
    #[command(flatten)]
    pub rig: RigArgs,
    /// Largest PCK threshold in millimeters
    #[arg(long, default_value_t = 100.0)]
    pub pck_max_mm: f64,
    /// PCK threshold step in millimeters
    #[arg(long, default_value_t = 1.0)]
    pub pck_step_mm: f64,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub pck: PathBuf,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Egocentric,
    MovingHand,
    MovingBackground,
    Static,
    TwoHands,
}

#[derive(Args, Serialize, Debug)]
pub struct GenSceneArgs {
    #[arg(long, value_enum, default_value_t = Preset::Egocentric)]
    pub preset: Preset,
    /// SceneConfig JSON; replaces --preset
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Windows per sample history
    #[arg(long, default_value_t = 3)]
    pub history: usize,
    /// Log-intensity step per event
    #[arg(long, default_value_t = 0.2)]
    pub contrast_threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(1);
    }
    let resolved = commands::resolved_config(&cli, threads);
    eprintln!("{resolved}");
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
