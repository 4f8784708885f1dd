use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use evego::dataset::{self, CloudInput, SceneConfig, Split};
use evego::dvs::{load_frame_dir, simulate_events, DvsConfig};
use evego::events::{load_events, partition_windows, save_events, window_history, EventWindow, NegativeEncoding, WindowConfig};
use evego::head::{save_checkpoint, train_toy, AdamConfig, HeadConfig, HeadModel};
use evego::losses::HandLossWeights;
use evego::mano::{
    forward, load_rig, project_mask, read_obj, synthetic, write_obj, CameraIntrinsics, HandOutput, HandPair, HandRig,
    HandSide, ManoParams,
};
use evego::metrics::{evaluate_dataset, write_pck_csv, EvalConfig, EvalSample, PckGrid};
use evego::repr::{build_cloud, build_lnes, save_lnes_pgm};
use evego::segmask::{filter_cloud, load_mask, predict_mask_density, save_mask, DensityParams};
use evego::{Error, Result};
use serde_json::{json, Value};

use crate::{BuiltinRig, Cli, Command, InputKind, Preset, RigArgs, WindowArgs};

/// The parsed command line with every default filled in, as one JSON line.
pub fn resolved_config(cli: &Cli, threads: usize) -> String {
    let mut v = serde_json::to_value(cli).unwrap_or(Value::Null);
    v["threads"] = json!(threads);
    if let Command::Project(p) = &cli.command {
        v["command"]["project"]["focal"] = json!(p.focal.unwrap_or(0.87 * p.width as f64));
    }
    if let Command::TrainToy(_) = &cli.command {
        let d = AdamConfig::default();
        v["adam"] = json!({"beta1": d.beta1, "beta2": d.beta2, "eps": d.eps});
        v["loss_weights"] = serde_json::to_value(HandLossWeights::default()).unwrap_or(Value::Null);
        v["head"] = serde_json::to_value(HeadConfig { seed: cli.seed, ..HeadConfig::default() }).unwrap_or(Value::Null);
    }
    json!({ "resolved_config": v }).to_string()
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => {
            let frames = load_frame_dir(&a.frames)?;
            let cfg = DvsConfig {
                contrast_threshold: a.contrast_threshold,
                log_eps: a.log_eps,
                seed: cli.seed,
            };
            let stream = simulate_events(&frames, &cfg)?;
            save_events(&a.out, &stream, NegativeEncoding::MinusOne)?;
            eprintln!("{} events", stream.len());
        }
        Command::Lnes(a) => {
            let (stream_geometry, windows) = windows(&a.window)?;
            fs::create_dir_all(&a.out_dir)?;
            for (k, frame) in build_lnes(&windows, stream_geometry).iter().enumerate() {
                save_lnes_pgm(frame, a.out_dir.join(format!("lnes_{k:04}.pgm")))?;
            }
        }
        Command::Cloud(a) => {
            let (g, windows) = windows(&a.window)?;
            let hist = history(&windows, &a.window)?;
            let all = EventWindow::concat(&hist).expect("history is non-empty");
            build_cloud(&all, g, a.budget, cli.seed).save(&a.out)?;
        }
        Command::Mask(a) => {
            let (g, windows) = windows(&a.window)?;
            let hist = history(&windows, &a.window)?;
            let params = DensityParams {
                blur_radius: a.blur_radius,
                density_threshold: a.density_threshold,
                min_component_area: a.min_area,
                max_components: a.max_components,
            };
            let mask = predict_mask_density(&build_lnes(&hist, g), &params)?;
            save_mask(&mask, &a.out)?;
        }
        Command::Filter(a) => {
            let (g, windows) = windows(&a.window)?;
            let hist = history(&windows, &a.window)?;
            let mask = load_mask(&a.mask, g, hist.last().map_or(0, |w| w.end_t))?;
            let cloud = filter_cloud(&hist, &mask, g, a.budget, cli.seed)?;
            eprintln!("{} of {} events kept", cloud.validity(), hist.iter().map(|w| w.len()).sum::<usize>());
            cloud.save(&a.out)?;
        }
        Command::Forward(a) => {
            let params: ManoParams = read_json(&a.params)?;
            let rigs = rigs(&a.rig)?;
            let rig = rigs.get(params.side).ok_or(Error::SideMismatch)?;
            let out = forward(rig, &params)?;
            write_obj(BufWriter::new(fs::File::create(&a.obj)?), &out.vertices, rig.faces())?;
            write_json(&a.joints, &json!({ "joints": out.joints, "wrist": out.wrist }))?;
        }
        Command::Project(a) => {
            let mesh = read_obj(BufReader::new(fs::File::open(&a.mesh)?))?;
            let g = evego::events::SensorGeometry::new(a.width, a.height)?;
            let mut cam = CameraIntrinsics::for_geometry(g);
            if let Some(f) = a.focal {
                cam.fx = f;
                cam.fy = f;
            }
            let out = HandOutput {
                joints: Vec::new(),
                vertices: mesh.vertices,
                wrist: [0.0; 3],
            };
            save_mask(&project_mask(&out, &mesh.faces, &cam, g), &a.out)?;
        }
        Command::TrainToy(a) => {
            let manifest = dataset::load_manifest(&a.manifest)?;
            let rigs = standard_rigs();
            let input = match a.input {
                InputKind::All => CloudInput::All,
                InputKind::Masked => CloudInput::Masked,
            };
            let data = dataset::training_samples(&manifest, None, &rigs, input, a.budget, cli.seed)?;
            let mut model = HeadModel::new(HeadConfig {
                seed: cli.seed,
                ..HeadConfig::default()
            })?;
            let adam = AdamConfig {
                lr: a.lr,
                ..AdamConfig::default()
            };
            let log = train_toy(&mut model, &data, &rigs, &HandLossWeights::default(), adam, a.epochs)?;
            log.write_csv(BufWriter::new(fs::File::create(&a.log)?))?;
            if let (Some(first), Some(last)) = (log.epochs.first(), log.epochs.last()) {
                eprintln!("total loss {} -> {}", first.loss.total, last.loss.total);
            }
            if let Some(p) = &a.checkpoint {
                save_checkpoint(&model, p)?;
            }
        }
        Command::Evaluate(a) => {
            let rigs = rigs(&a.rig)?;
            let pred = eval_samples(&read_json::<Vec<HandPair<ManoParams>>>(&a.pred)?, &rigs)?;
            let gt = eval_samples(&read_json::<Vec<HandPair<ManoParams>>>(&a.gt)?, &rigs)?;
            let cfg = EvalConfig {
                grid: PckGrid {
                    max_mm: a.pck_max_mm,
                    step_mm: a.pck_step_mm,
                },
            };
            let report = evaluate_dataset(&pred, &gt, &cfg)?;
            write_json(&a.report, &serde_json::to_value(&report)?)?;
            let mut csv = BufWriter::new(fs::File::create(&a.pck)?);
            write_pck_csv(&mut csv, &report.curve)?;
            csv.flush()?;
        }
        Command::GenScene(a) => {
            let cfg = match &a.config {
                Some(p) => read_json(p)?,
                None => match a.preset {
                    Preset::Egocentric => SceneConfig::egocentric(cli.seed),
                    Preset::MovingHand => SceneConfig::moving_hand_static_background(cli.seed),
                    Preset::MovingBackground => SceneConfig::static_hand_moving_background(cli.seed),
                    Preset::Static => SceneConfig::static_scene(cli.seed),
                    Preset::TwoHands => SceneConfig::two_hands(cli.seed),
                },
            };
            let scene = dataset::generate_synthetic_scene(&cfg, &standard_rigs())?;
            let dvs = DvsConfig {
                contrast_threshold: a.contrast_threshold,
                ..DvsConfig::default()
            };
            let written = dataset::write_scene(&a.out, &cfg.name, &scene, &dvs, a.history, Split::Train)?;
            write_json(&a.out.join("scene.json"), &serde_json::to_value(&cfg)?)?;
            eprintln!("{} events, {} samples", written.stream.len(), written.manifest.records.len());
        }
    }
    Ok(())
}

fn windows(a: &WindowArgs) -> Result<(evego::events::SensorGeometry, Vec<EventWindow>)> {
    let stream = load_events(&a.events)?;
    let cfg = WindowConfig::new(a.window_us, a.history)?;
    let windows = partition_windows(&stream, &cfg);
    if windows.is_empty() {
        return Err(Error::Config("the event file holds no events".into()));
    }
    Ok((stream.geometry(), windows))
}

fn history(windows: &[EventWindow], a: &WindowArgs) -> Result<Vec<EventWindow>> {
    let index = a.index.unwrap_or(windows.len() - 1);
    window_history(windows, index, a.history)
}

fn standard_rigs() -> HandPair<HandRig> {
    HandPair::both(synthetic::standard_rig(HandSide::Left), synthetic::standard_rig(HandSide::Right))
}

/// Builtin rigs for both sides, with an HRIG file replacing its own side.
fn rigs(a: &RigArgs) -> Result<HandPair<HandRig>> {
    let build = match a.builtin_rig {
        BuiltinRig::Standard => synthetic::standard_rig,
        BuiltinRig::Mini => synthetic::mini_rig,
    };
    let mut pair = HandPair::both(build(HandSide::Left), build(HandSide::Right));
    if let Some(p) = &a.rig {
        let rig = load_rig(p)?;
        match rig.side() {
            HandSide::Left => pair.left = Some(rig),
            HandSide::Right => pair.right = Some(rig),
        }
    }
    Ok(pair)
}

fn eval_samples(params: &[HandPair<ManoParams>], rigs: &HandPair<HandRig>) -> Result<Vec<EvalSample>> {
    params
        .iter()
        .map(|pair| {
            let pose = |p: &Option<ManoParams>| -> Result<Option<HandOutput>> {
                p.as_ref()
                    .map(|p| forward(rigs.get(p.side).ok_or(Error::SideMismatch)?, p))
                    .transpose()
            };
            Ok(EvalSample {
                hands: HandPair::new(pose(&pair.left)?, pose(&pair.right)?),
                mask: None,
            })
        })
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = fs::File::open(path)?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
