//! Synthetic scenes with known ground truth.
//!
//! People walk piecewise-linear ground trajectories; [`forward_project`]
//! renders each one into the bounding box that the projected-height model
//! in [`crate::geo_auto`] maps back to the same ground point and height.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_auto::{self, CameraParams, GroundPoint};
use crate::ingest::{format_detection_record, BoundingBox, Detection, FrameDetections, FrameGeometry};

pub const DEFAULT_WIDTH_FRACTION: f64 = 0.4;
pub const HEIGHT_RANGE_M: (f64, f64) = (1.4, 2.1);

/// Renders a person of `height_m` standing at `g` into a bounding box.
///
/// The box top is found by bisection on the height model, so the result
/// inverts [`geo_auto::estimated_height`] and [`geo_auto::ground_position`]
/// to rounding error.
pub fn forward_project(
    g: GroundPoint,
    height_m: f64,
    cam: &CameraParams,
    geom: FrameGeometry,
    width_fraction: f64,
) -> Result<BoundingBox> {
    if !(g.depth > 0.0) {
        return Err(Error::NotVisible(format!("depth {} is not in front of the camera", g.depth)));
    }
    let below_feet = cam.height_m.atan2(g.depth);
    let feet_angle = cam.tilt_rad - below_feet;
    let y_max = cam.angle_row(feet_angle, geom);
    if y_max > geom.h() {
        return Err(Error::NotVisible(format!("feet below the frame (row {y_max:.1})")));
    }
    if y_max <= 0.0 {
        return Err(Error::NotVisible(format!("feet above the frame (row {y_max:.1})")));
    }
    let slant = cam.height_m.hypot(g.depth);
    let half_fov_tan = (cam.fov_rad / 2.0).tan();
    let x_offset = (g.lateral / slant) * geom.h() / (2.0 * half_fov_tan * feet_angle.cos());
    let x_center = (geom.w() + x_offset) / 2.0;

    let measure = |y_min: f64| {
        let probe = BoundingBox::new(x_center - 1.0, y_min, x_center + 1.0, y_max);
        geo_auto::estimated_height(&probe, cam, geom)
    };
    // Top row where the head ray meets the horizon; heights diverge there.
    let horizon_row = cam.angle_row(cam.tilt_rad, geom);
    let mut lo = horizon_row.max(0.0);
    let mut hi = y_max;
    match measure(lo) {
        Ok(f) if f < height_m => {
            return Err(Error::NotVisible("head above the frame".into()));
        }
        _ => {}
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match measure(mid) {
            Ok(f) if f < height_m => hi = mid,
            _ => lo = mid,
        }
    }
    // Pick whichever bracket end reproduces the height more closely.
    let err = |y: f64| measure(y).map(|f| (f - height_m).abs()).unwrap_or(f64::INFINITY);
    let y_min = if err(lo) <= err(hi) { lo } else { hi };

    let width = width_fraction * (y_max - y_min);
    let b = BoundingBox::new(x_center - width / 2.0, y_min, x_center + width / 2.0, y_max);
    if b.x_min < 0.0 || b.x_max > geom.w() {
        return Err(Error::NotVisible("person outside the frame horizontally".into()));
    }
    Ok(b)
}

/// A walking person. Positions between waypoints are interpolated linearly;
/// outside `[start, end]` the person is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPerson {
    pub id: u64,
    pub height_m: f64,
    /// `(time_s, position)`, strictly increasing in time.
    pub waypoints: Vec<(f64, GroundPoint)>,
}

impl SyntheticPerson {
    pub fn new(id: u64, height_m: f64, waypoints: Vec<(f64, GroundPoint)>) -> Result<Self> {
        if !(HEIGHT_RANGE_M.0..=HEIGHT_RANGE_M.1).contains(&height_m) {
            return Err(Error::config(format!(
                "person {id}: height {height_m} outside {:?}",
                HEIGHT_RANGE_M
            )));
        }
        if waypoints.is_empty() {
            return Err(Error::config(format!("person {id}: no waypoints")));
        }
        if waypoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::config(format!("person {id}: waypoint times must increase")));
        }
        if waypoints.iter().any(|(_, p)| !(p.depth > 0.0)) {
            return Err(Error::config(format!("person {id}: depth must stay positive")));
        }
        Ok(Self {
            id,
            height_m,
            waypoints,
        })
    }

    /// A person standing still for the whole interval.
    pub fn stationary(id: u64, height_m: f64, at: GroundPoint, start: f64, end: f64) -> Result<Self> {
        if end > start {
            Self::new(id, height_m, vec![(start, at), (end, at)])
        } else {
            Self::new(id, height_m, vec![(start, at)])
        }
    }

    pub fn presence(&self) -> (f64, f64) {
        (self.waypoints[0].0, self.waypoints[self.waypoints.len() - 1].0)
    }

    pub fn position(&self, t: f64) -> Option<GroundPoint> {
        let (start, end) = self.presence();
        if t < start || t > end {
            return None;
        }
        if self.waypoints.len() == 1 {
            return Some(self.waypoints[0].1);
        }
        let k = self
            .waypoints
            .windows(2)
            .position(|w| t <= w[1].0)
            .unwrap_or(self.waypoints.len() - 2);
        let (t0, a) = self.waypoints[k];
        let (t1, b) = self.waypoints[k + 1];
        let s = (t - t0) / (t1 - t0);
        Some(GroundPoint::new(
            a.lateral + s * (b.lateral - a.lateral),
            a.depth + s * (b.depth - a.depth),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomPeople {
    pub count: usize,
    /// Walking speed range, m/s.
    pub speed_range: (f64, f64),
    /// Ground region people wander in: lateral half-width and depth range.
    pub lateral_half_width_m: f64,
    pub depth_range_m: (f64, f64),
    /// Mean and std of heights; samples are truncated to [1.5, 1.9] m.
    pub height_mean_m: f64,
    pub height_std_m: f64,
}

impl Default for RandomPeople {
    fn default() -> Self {
        Self {
            count: 10,
            speed_range: (0.5, 1.5),
            lateral_half_width_m: 4.0,
            depth_range_m: (5.0, 15.0),
            height_mean_m: 1.70,
            height_std_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum People {
    Explicit(Vec<SyntheticPerson>),
    Random(RandomPeople),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Std of Gaussian jitter added to each box edge, pixels.
    pub jitter_px: f64,
    /// Probability that a visible person is missing from a frame.
    pub drop_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub camera: CameraParams,
    pub geometry: FrameGeometry,
    pub fps: f64,
    pub duration_s: f64,
    pub people: People,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub radius_m: f64,
    pub width_fraction: f64,
}

impl SceneSpec {
    pub fn new(camera: CameraParams, geometry: FrameGeometry, fps: f64, duration_s: f64, people: People) -> Self {
        Self {
            camera,
            geometry,
            fps,
            duration_s,
            people,
            noise: NoiseSpec::default(),
            seed: 0,
            radius_m: 1.0,
            width_fraction: DEFAULT_WIDTH_FRACTION,
        }
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration_s * self.fps).round() as u64
    }

    fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) {
            return Err(Error::config("fps must be positive"));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::config("duration must be positive"));
        }
        if !(0.0..=1.0).contains(&self.noise.drop_prob) {
            return Err(Error::config("drop probability must lie in [0, 1]"));
        }
        if !(self.noise.jitter_px >= 0.0) {
            return Err(Error::config("jitter must be non-negative"));
        }
        if !(self.width_fraction > 0.0) {
            return Err(Error::config("width fraction must be positive"));
        }
        if let People::Random(r) = &self.people {
            if !(r.speed_range.0 > 0.0 && r.speed_range.1 >= r.speed_range.0) {
                return Err(Error::config("speed range must be positive and ordered"));
            }
            if !(r.depth_range_m.0 > 0.0 && r.depth_range_m.1 > r.depth_range_m.0) {
                return Err(Error::config("depth range must be positive and ordered"));
            }
        }
        Ok(())
    }
}

/// A ground-truth box of one person in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthBox {
    pub id: u64,
    pub bbox: BoundingBox,
    pub ground: GroundPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// What a detector would report, with noise and drops applied.
    pub frames: Vec<FrameDetections>,
    /// True identity of each detection in `frames`, index-aligned.
    pub detection_ids: Vec<Vec<u64>>,
    /// Every visible person in every frame, noiseless.
    pub truth: Vec<Vec<TruthBox>>,
    /// `(frame_index, id_a, id_b)`, `id_a < id_b`: true ground distance
    /// below twice the radius.
    pub violations: Vec<(u64, u64, u64)>,
    pub people: Vec<SyntheticPerson>,
}

fn random_people(r: &RandomPeople, duration: f64, rng: &mut ChaCha8Rng) -> Vec<SyntheticPerson> {
    let height_dist = Normal::new(r.height_mean_m, r.height_std_m.max(0.0)).expect("finite std");
    let point = |rng: &mut ChaCha8Rng| {
        GroundPoint::new(
            rng.random_range(-r.lateral_half_width_m..=r.lateral_half_width_m),
            rng.random_range(r.depth_range_m.0..=r.depth_range_m.1),
        )
    };
    (0..r.count)
        .map(|i| {
            let height = if r.height_std_m > 0.0 {
                loop {
                    let h: f64 = height_dist.sample(rng);
                    if (1.5..=1.9).contains(&h) {
                        break h;
                    }
                }
            } else {
                r.height_mean_m
            };
            let mut t = 0.0;
            let mut at = point(rng);
            let mut waypoints = vec![(t, at)];
            while t < duration {
                let next = point(rng);
                let speed = rng.random_range(r.speed_range.0..=r.speed_range.1);
                let dt = (at.distance(&next) / speed).max(1e-3);
                t += dt;
                at = next;
                waypoints.push((t, at));
            }
            SyntheticPerson {
                id: i as u64 + 1,
                height_m: height,
                waypoints,
            }
        })
        .collect()
}

/// Generates detections, identities and the violation schedule for a scene.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let people = match &spec.people {
        People::Explicit(p) => {
            let ids: BTreeSet<u64> = p.iter().map(|p| p.id).collect();
            if ids.len() != p.len() {
                return Err(Error::config("person ids must be unique"));
            }
            p.clone()
        }
        People::Random(r) => random_people(r, spec.duration_s, &mut rng),
    };
    let jitter = Normal::new(0.0, spec.noise.jitter_px).expect("finite jitter");

    let n_frames = spec.frame_count();
    let mut frames = Vec::with_capacity(n_frames as usize);
    let mut detection_ids = Vec::with_capacity(n_frames as usize);
    let mut truth = Vec::with_capacity(n_frames as usize);
    let mut violations = Vec::new();
    let limit = 2.0 * spec.radius_m;

    for frame in 0..n_frames {
        let t = frame as f64 / spec.fps;
        let visible: Vec<TruthBox> = people
            .iter()
            .filter_map(|p| {
                let g = p.position(t)?;
                let bbox = forward_project(g, p.height_m, &spec.camera, spec.geometry, spec.width_fraction).ok()?;
                Some(TruthBox { id: p.id, bbox, ground: g })
            })
            .collect();

        for (i, a) in visible.iter().enumerate() {
            for b in &visible[i + 1..] {
                if a.ground.distance(&b.ground) < limit {
                    violations.push((frame, a.id.min(b.id), a.id.max(b.id)));
                }
            }
        }

        let mut dets = Vec::with_capacity(visible.len());
        let mut ids = Vec::with_capacity(visible.len());
        for tb in &visible {
            // Draw both variates unconditionally so that the stream of random
            // numbers does not depend on the noise settings.
            let dropped = rng.random::<f64>() < spec.noise.drop_prob;
            let offsets: [f64; 4] = std::array::from_fn(|_| jitter.sample(&mut rng));
            if dropped {
                continue;
            }
            let mut b = tb.bbox;
            if spec.noise.jitter_px > 0.0 {
                b = BoundingBox::new(
                    b.x_min + offsets[0],
                    b.y_min + offsets[1],
                    b.x_max + offsets[2],
                    b.y_max + offsets[3],
                )
                .clamp_to(spec.geometry);
                if !b.is_valid() {
                    continue;
                }
            }
            dets.push(Detection::new(b, 1.0));
            ids.push(tb.id);
        }
        frames.push(FrameDetections::new(frame, t, dets));
        detection_ids.push(ids);
        truth.push(visible);
    }
    violations.sort_unstable();

    Ok(Scene {
        frames,
        detection_ids,
        truth,
        violations,
        people,
    })
}

impl Scene {
    /// Detections in MOT-challenge CSV.
    pub fn detections_csv(&self) -> String {
        let mut out = String::new();
        for fd in &self.frames {
            for d in &fd.detections {
                out.push_str(&format_detection_record(fd.frame_index, d));
                out.push('\n');
            }
        }
        out
    }

    /// Ground truth in MOT-challenge gt CSV: `frame,id,left,top,width,height,1,1,1`.
    pub fn ground_truth_csv(&self) -> String {
        let mut out = String::new();
        for (frame, boxes) in self.truth.iter().enumerate() {
            for tb in boxes {
                let b = tb.bbox;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},1,1,1",
                    frame + 1,
                    tb.id,
                    b.x_min,
                    b.y_min,
                    b.width(),
                    b.height()
                );
            }
        }
        out
    }

    /// Violation schedule: `frame,id_a,id_b`, frames 1-based like the other files.
    pub fn violations_csv(&self) -> String {
        let mut out = String::new();
        for (frame, a, b) in &self.violations {
            let _ = writeln!(out, "{},{},{}", frame + 1, a, b);
        }
        out
    }

    /// All sample boxes with their frame geometry, for calibration.
    pub fn calibration_samples(&self, geom: FrameGeometry) -> Vec<(BoundingBox, FrameGeometry)> {
        self.frames
            .iter()
            .flat_map(|f| f.detections.iter().map(move |d| (d.bbox, geom)))
            .collect()
    }
}
