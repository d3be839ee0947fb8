use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdguard::api::{self, ApiState};
use sdguard::capacity::{capacity_estimate, CapacityInputs};
use sdguard::feed::{read_tracks_jsonl, FeedStatus};
use sdguard::{AppConfig, Pipeline, PipelineError, Result};
use sdguard_core::geo_auto::{fit_camera_params, AutoCalibrationDoc, CameraParams, FitConfig};
use sdguard_core::ingest::{read_detection_csv, IngestConfig};
use sdguard_core::mot::{evaluate_mot, read_mot_csv};
use sdguard_core::synth::{generate_scene, NoiseSpec, People, RandomPeople, SceneSpec};
use sdguard_core::FrameGeometry;
use tracing::{error, info, warn};

#[derive(Parser)]
#[command(name = "sdguard", version, about = "Social-distancing analytics on person detections")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every feed in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit camera height, FOV and tilt from a detection file.
    CalibrateAuto {
        #[arg(long)]
        detections: PathBuf,
        /// Frame size, e.g. 1920x1080.
        #[arg(long)]
        geometry: FrameGeometry,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 25.0)]
        fps: f64,
        /// Personal-space radius written into the document, meters.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// CLEAR-MOT metrics of a hypothesis against ground truth.
    EvaluateMot {
        /// Ground truth in MOT CSV format.
        #[arg(long)]
        gt: PathBuf,
        /// Hypothesis as MOT CSV or a tracks.jsonl written by `run`.
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
    /// Number of feeds an edge device supports.
    Capacity {
        /// Frames per second one algorithm instance processes.
        #[arg(long)]
        aip: f64,
        #[arg(long)]
        cores: u32,
        /// GPU memory, GB.
        #[arg(long)]
        gpu: u32,
        /// Frames per second per feed.
        #[arg(long)]
        sef: f64,
    },
    /// Generate a synthetic scene with known ground truth.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        people: usize,
        /// Duration, seconds.
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        /// Camera height (m), vertical FOV (rad), tilt (rad).
        #[arg(long, value_delimiter = ',', num_args = 3, default_value = "3.0,0.9,0.5")]
        camera: Vec<f64>,
        #[arg(long, default_value = "1920x1080")]
        geometry: FrameGeometry,
        #[arg(long, default_value_t = 25.0)]
        fps: f64,
        /// Box-edge jitter std, pixels.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Per-person detection drop probability.
        #[arg(long, default_value_t = 0.0)]
        drop: f64,
        #[arg(long)]
        out_detections: PathBuf,
        #[arg(long)]
        out_gt: Option<PathBuf>,
        #[arg(long)]
        out_violations: Option<PathBuf>,
    },
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| PipelineError::io(path, e))?))
}

fn run(config: &Path) -> Result<bool> {
    let cfg = AppConfig::load(config)?;
    let pipeline = Pipeline::new(&cfg);
    let summaries = match &cfg.api {
        None => pipeline.run(),
        Some(api_cfg) => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| PipelineError::io("tokio runtime", e))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&api_cfg.bind)
                    .await
                    .map_err(|e| PipelineError::io(&api_cfg.bind, e))?;
                info!("API listening on {}", api_cfg.bind);
                let server = tokio::spawn(api::serve(listener, ApiState::new(pipeline.handles())));
                let workers = pipeline.spawn();
                tokio::task::spawn_blocking(move || workers.into_iter().for_each(|w| drop(w.join())))
                    .await
                    .ok();
                info!("all feeds finished; API still serving, press Ctrl-C to exit");
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    r = server => if let Ok(Err(e)) = r { error!("API server stopped: {e}") },
                }
                Ok::<_, PipelineError>(pipeline.handles().values().map(|h| h.summary()).collect::<Vec<_>>())
            })?
        }
    };
    let mut ok = true;
    for s in &summaries {
        if let FeedStatus::Faulted { reason } = &s.status {
            ok = false;
            error!("feed {} faulted: {reason}", s.id);
        } else {
            info!("feed {}: {} frames, {} dropped", s.id, s.frames, s.dropped_frames);
        }
    }
    Ok(ok)
}

fn calibrate_auto(detections: &Path, geometry: FrameGeometry, out: Option<&Path>, fps: f64, radius: f64) -> Result<()> {
    let ingest = IngestConfig {
        fps,
        ..IngestConfig::default()
    };
    let frames = read_detection_csv(open(detections)?, geometry, &ingest, 0)?;
    let samples: Vec<_> = frames
        .iter()
        .flat_map(|f| f.detections.iter().map(|d| (d.bbox, geometry)))
        .collect();
    let (cam, diag) = fit_camera_params(&samples, &FitConfig::default())?;
    for w in &diag.warnings {
        warn!("{w}");
    }
    let doc = AutoCalibrationDoc::new(&cam, radius, geometry, Some(&diag));
    let mut text = serde_json::to_string_pretty(&sdguard_core::calibration::CalibrationDoc::Auto(doc))
        .expect("documents serialize");
    text.push('\n');
    match out {
        Some(p) => write_file(p, &text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| PipelineError::io("stdout", e)),
    }
}

fn evaluate(gt: &Path, hyp: &Path, iou: f64) -> Result<()> {
    let gt = read_mot_csv(open(gt)?, true)?;
    let is_jsonl = hyp.extension().is_some_and(|e| e == "jsonl" || e == "json");
    let hyp = if is_jsonl {
        read_tracks_jsonl(open(hyp)?)?
    } else {
        read_mot_csv(open(hyp)?, false)?
    };
    let m = evaluate_mot(&gt, &hyp, iou)?;
    println!("{}", serde_json::to_string_pretty(&m).expect("metrics serialize"));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synth(
    seed: u64,
    people: usize,
    duration: f64,
    camera: &[f64],
    geometry: FrameGeometry,
    fps: f64,
    noise: f64,
    drop: f64,
    out_detections: &Path,
    out_gt: Option<&Path>,
    out_violations: Option<&Path>,
) -> Result<()> {
    let cam = CameraParams::new(camera[0], camera[1], camera[2])?;
    let mut spec = SceneSpec::new(
        cam,
        geometry,
        fps,
        duration,
        People::Random(RandomPeople {
            count: people,
            ..RandomPeople::default()
        }),
    );
    spec.seed = seed;
    spec.noise = NoiseSpec {
        jitter_px: noise,
        drop_prob: drop,
    };
    let scene = generate_scene(&spec)?;
    write_file(out_detections, &scene.detections_csv())?;
    if let Some(p) = out_gt {
        write_file(p, &scene.ground_truth_csv())?;
    }
    if let Some(p) = out_violations {
        write_file(p, &scene.violations_csv())?;
    }
    info!("{} frames written", scene.frames.len());
    Ok(())
}

fn dispatch(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Run { config } => return run(&config),
        Cmd::CalibrateAuto {
            detections,
            geometry,
            out,
            fps,
            radius,
        } => calibrate_auto(&detections, geometry, out.as_deref(), fps, radius)?,
        Cmd::EvaluateMot { gt, hyp, iou } => evaluate(&gt, &hyp, iou)?,
        Cmd::Capacity { aip, cores, gpu, sef } => {
            let n = capacity_estimate(&CapacityInputs {
                aip,
                cpu_cores: cores,
                gpu_memory_gb: gpu,
                sef,
            })?;
            println!("{n}");
        }
        Cmd::Synth {
            seed,
            people,
            duration,
            camera,
            geometry,
            fps,
            noise,
            drop,
            out_detections,
            out_gt,
            out_violations,
        } => synth(
            seed,
            people,
            duration,
            &camera,
            geometry,
            fps,
            noise,
            drop,
            &out_detections,
            out_gt.as_deref(),
            out_violations.as_deref(),
        )?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
