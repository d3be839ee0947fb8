#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sdguard::config::{FeedConfig, Source};
use sdguard::feed::{read_tracks_jsonl, MetricsRecord};
use sdguard::overlay::OverlayRecord;
use sdguard::{AppConfig, Pipeline};
use sdguard_core::calibration::CalibrationDoc;
use sdguard_core::geo_auto::{AutoCalibrationDoc, CameraParams, GroundPoint};
use sdguard_core::mot::IdentifiedFrames;
use sdguard_core::synth::{generate_scene, NoiseSpec, People, Scene, SceneSpec, SyntheticPerson};
use sdguard_core::FrameGeometry;

pub const HD: FrameGeometry = FrameGeometry {
    width: 1920,
    height: 1080,
};

pub fn camera() -> CameraParams {
    CameraParams::new(3.0, 0.9, 0.5).unwrap()
}

pub fn scene(people: People, fps: f64, duration_s: f64, noise: NoiseSpec, seed: u64) -> Scene {
    let mut spec = SceneSpec::new(camera(), HD, fps, duration_s, people);
    spec.noise = noise;
    spec.seed = seed;
    generate_scene(&spec).unwrap()
}

/// Five people in separate lateral lanes walking toward or away from the camera.
pub fn lanes() -> People {
    People::Explicit(
        (0..5)
            .map(|i| {
                let lateral = -4.0 + 2.0 * i as f64;
                let (d0, d1) = if i % 2 == 0 { (8.0, 14.0) } else { (14.0, 8.0) };
                SyntheticPerson::new(
                    i,
                    1.70,
                    vec![(0.0, GroundPoint::new(lateral, d0)), (20.0, GroundPoint::new(lateral, d1))],
                )
                .unwrap()
            })
            .collect(),
    )
}

pub fn write_auto_calibration(dir: &Path, cam: &CameraParams) -> PathBuf {
    let doc = CalibrationDoc::Auto(AutoCalibrationDoc::new(cam, 1.0, HD, None));
    let path = dir.join("calibration.json");
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    path
}

/// A file-sourced feed over `scene`, calibrated with the true camera.
pub fn feed_for(dir: &Path, id: &str, scene: &Scene, fps: f64) -> FeedConfig {
    let det = dir.join(format!("{id}.csv"));
    std::fs::write(&det, scene.detections_csv()).unwrap();
    FeedConfig {
        id: id.into(),
        source: Source::File(det),
        fps,
        geometry: HD,
        calibration: Some(write_auto_calibration(dir, &camera())),
        mode: None,
        still_frame: None,
        alerts: None,
        alert_hook: None,
    }
}

pub fn run(dir: &Path, feeds: Vec<FeedConfig>) -> Vec<sdguard::feed::FeedSummary> {
    let mut cfg = AppConfig::new(feeds);
    cfg.output_dir = dir.join("out");
    cfg.validate().unwrap();
    Pipeline::new(&cfg).run()
}

pub fn out_file(dir: &Path, feed: &str, name: &str) -> PathBuf {
    dir.join("out").join(feed).join(name)
}

pub fn metrics(dir: &Path, feed: &str) -> Vec<MetricsRecord> {
    std::fs::read_to_string(out_file(dir, feed, "metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn overlays(dir: &Path, feed: &str) -> Vec<OverlayRecord> {
    std::fs::read_to_string(out_file(dir, feed, "overlay.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn tracks(dir: &Path, feed: &str) -> IdentifiedFrames {
    let f = std::fs::File::open(out_file(dir, feed, "tracks.jsonl")).unwrap();
    read_tracks_jsonl(std::io::BufReader::new(f)).unwrap()
}

pub fn ground_truth(scene: &Scene) -> IdentifiedFrames {
    scene
        .truth
        .iter()
        .enumerate()
        .map(|(f, boxes)| (f as u64, boxes.iter().map(|t| (t.id, t.bbox)).collect()))
        .collect()
}

pub fn same_box(a: &sdguard_core::BoundingBox, b: &sdguard_core::BoundingBox) -> bool {
    (a.x_min - b.x_min).abs() < 1e-6
        && (a.y_min - b.y_min).abs() < 1e-6
        && (a.x_max - b.x_max).abs() < 1e-6
        && (a.y_max - b.y_max).abs() < 1e-6
}

/// Maps pipeline track ids to synthetic person ids by box position.
pub fn track_to_person(scene: &Scene, overlays: &[OverlayRecord]) -> std::collections::BTreeMap<u64, u64> {
    let mut map = std::collections::BTreeMap::new();
    for o in overlays {
        let frame = o.frame as usize;
        for p in &o.people {
            if let Some(k) = scene.frames[frame].detections.iter().position(|d| same_box(&d.bbox, &p.bbox)) {
                map.insert(p.id, scene.detection_ids[frame][k]);
            }
        }
    }
    map
}
