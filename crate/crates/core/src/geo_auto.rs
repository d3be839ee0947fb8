//! Automated calibration through the projected-height camera model.
//!
//! A camera is described by its height above the ground, vertical field of
//! view and downward tilt. Image rows map linearly to ray angles: a row `y`
//! sees the ray `(0.5 - y / H) * fov` above the optical axis, so the ray
//! leaves the camera `tilt - angle` below the horizontal. The projected
//! height of a box is
//!
//! ```text
//! F = 2 * sqrt(1 + (4 * (x_min + x_max - W) / (2H) * cos(p) * tan(fov/2))^2)
//!       * height / sin(tilt - p) * cos(p) * tan(fov/2) * (y_max - y_min) / H
//! ```
//!
//! with `p` the head-ray angle. The squared factor is taken over the whole
//! bracketed product ([`HEIGHT_MODEL_GROUPING`]), making it the secant of
//! the lateral viewing angle. Ground positions and proximity ellipses come
//! from the same ray model evaluated at the feet.

use serde::{Deserialize, Serialize};

use crate::calibration::{ViolationPairs, DISTANCE_GUARD_M};
use crate::error::{Error, Result};
use crate::ingest::{BoundingBox, FrameGeometry, Point};
use crate::optim::{self, SimplexOptions};

/// Grouping of the squared lateral factor, recorded in fit diagnostics.
pub const HEIGHT_MODEL_GROUPING: &str = "full-product";

/// Rays within this many radians of the horizon are rejected.
pub const HORIZON_EPS: f64 = 1e-6;

/// Deployment bands for a well-placed camera.
pub const IDEAL_HEIGHT_M: (f64, f64) = (2.5, 5.0);
pub const IDEAL_TILT_DEG: (f64, f64) = (5.0, 45.0);
pub const IDEAL_DISTANCE_M: (f64, f64) = (10.0, 30.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    /// Height of the camera above the ground plane, meters.
    pub height_m: f64,
    /// Vertical field of view, radians.
    pub fov_rad: f64,
    /// Downward tilt from the horizontal, radians.
    pub tilt_rad: f64,
}

impl CameraParams {
    pub fn new(height_m: f64, fov_rad: f64, tilt_rad: f64) -> Result<Self> {
        if !(height_m > 0.0 && height_m.is_finite()) {
            return Err(Error::config(format!("camera height must be positive, got {height_m}")));
        }
        if !(fov_rad > 0.0 && fov_rad < std::f64::consts::PI) {
            return Err(Error::config(format!("field of view must lie in (0, pi), got {fov_rad}")));
        }
        if !(tilt_rad > 0.0 && tilt_rad < std::f64::consts::FRAC_PI_2) {
            return Err(Error::config(format!("tilt must lie in (0, pi/2), got {tilt_rad}")));
        }
        Ok(Self {
            height_m,
            fov_rad,
            tilt_rad,
        })
    }

    /// Focal length in pixels implied by the vertical field of view.
    pub fn focal_px(&self, geom: FrameGeometry) -> f64 {
        (geom.h() / 2.0) / (self.fov_rad / 2.0).tan()
    }

    /// Angle of image row `y` above the optical axis.
    pub fn row_angle(&self, y: f64, geom: FrameGeometry) -> f64 {
        (0.5 - y / geom.h()) * self.fov_rad
    }

    /// Inverse of [`CameraParams::row_angle`].
    pub fn angle_row(&self, angle: f64, geom: FrameGeometry) -> f64 {
        geom.h() * (0.5 - angle / self.fov_rad)
    }
}

/// Ground coordinates relative to the camera foot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPoint {
    pub lateral: f64,
    pub depth: f64,
}

impl GroundPoint {
    pub const fn new(lateral: f64, depth: f64) -> Self {
        Self { lateral, depth }
    }

    pub fn distance(&self, other: &GroundPoint) -> f64 {
        (self.lateral - other.lateral).hypot(self.depth - other.depth)
    }
}

/// Image of a ground circle around a person's feet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityEllipse {
    pub center: Point,
    /// Horizontal semi-axis, pixels.
    pub semi_major: f64,
    /// Vertical semi-axis, pixels.
    pub semi_minor: f64,
    pub radius_m: f64,
}

/// Lateral tangent factor shared by the height and ground models.
fn lateral_tan(x_sum: f64, angle: f64, cam: &CameraParams, geom: FrameGeometry) -> f64 {
    2.0 * ((x_sum - geom.w()) / geom.h()) * (cam.fov_rad / 2.0).tan() * angle.cos()
}

/// Projected real-world height of the person in `b`, meters.
pub fn estimated_height(b: &BoundingBox, cam: &CameraParams, geom: FrameGeometry) -> Result<f64> {
    let p = cam.row_angle(b.y_min, geom);
    let below = cam.tilt_rad - p;
    let s = below.sin();
    if s <= HORIZON_EPS {
        return Err(Error::AboveHorizon { angle_rad: below });
    }
    let half_fov_tan = (cam.fov_rad / 2.0).tan();
    let lateral = lateral_tan(b.x_min + b.x_max, p, cam, geom);
    Ok(2.0
        * (1.0 + lateral * lateral).sqrt()
        * (cam.height_m / s)
        * p.cos()
        * half_fov_tan
        * (b.height() / geom.h()))
}

/// Feet ray quantities: angle below horizontal, slant range, row angle.
struct FeetRay {
    below: f64,
    slant: f64,
    angle: f64,
}

fn feet_ray(b: &BoundingBox, cam: &CameraParams, geom: FrameGeometry) -> Result<FeetRay> {
    let angle = cam.row_angle(b.y_max, geom);
    let below = cam.tilt_rad - angle;
    if below <= HORIZON_EPS {
        return Err(Error::AboveHorizon { angle_rad: below });
    }
    if below >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::NotVisible(
            "feet ray points behind the camera foot".into(),
        ));
    }
    Ok(FeetRay {
        below,
        slant: cam.height_m / below.sin(),
        angle,
    })
}

/// Ground position of the feet of the person in `b`.
pub fn ground_position(b: &BoundingBox, cam: &CameraParams, geom: FrameGeometry) -> Result<GroundPoint> {
    let ray = feet_ray(b, cam, geom)?;
    let depth = cam.height_m / ray.below.tan();
    let lateral = ray.slant * lateral_tan(b.x_min + b.x_max, ray.angle, cam, geom);
    Ok(GroundPoint { lateral, depth })
}

pub fn proximity_ellipse(
    b: &BoundingBox,
    cam: &CameraParams,
    geom: FrameGeometry,
    radius_m: f64,
) -> Result<ProximityEllipse> {
    let ray = feet_ray(b, cam, geom)?;
    let semi_major = radius_m * cam.focal_px(geom) / ray.slant;
    Ok(ProximityEllipse {
        center: b.feet(),
        semi_major,
        semi_minor: semi_major * ray.below.sin(),
        radius_m,
    })
}

/// Batch form of [`proximity_ellipse`]; element `i` equals the single call.
pub fn proximity_ellipses(
    boxes: &[BoundingBox],
    cam: &CameraParams,
    geom: FrameGeometry,
    radius_m: f64,
) -> Vec<Result<ProximityEllipse>> {
    let focal = cam.focal_px(geom);
    boxes
        .iter()
        .map(|b| {
            let ray = feet_ray(b, cam, geom)?;
            let semi_major = radius_m * focal / ray.slant;
            Ok(ProximityEllipse {
                center: b.feet(),
                semi_major,
                semi_minor: semi_major * ray.below.sin(),
                radius_m,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AutoViolations {
    pub pairs: ViolationPairs,
    pub ground: Vec<Option<GroundPoint>>,
    pub ellipses: Vec<Option<ProximityEllipse>>,
}

/// Pairs whose ground circles of `radius_m` overlap (centers closer than
/// twice the radius). Under the ground-plane model this is the same as the
/// image ellipses overlapping.
pub fn auto_violations(
    boxes: &[BoundingBox],
    cam: &CameraParams,
    geom: FrameGeometry,
    radius_m: f64,
) -> AutoViolations {
    let mut excluded = Vec::new();
    let ground: Vec<Option<GroundPoint>> = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let g = ground_position(b, cam, geom).ok();
            if g.is_none() {
                excluded.push(i);
            }
            g
        })
        .collect();
    let ellipses = proximity_ellipses(boxes, cam, geom, radius_m)
        .into_iter()
        .map(Result::ok)
        .collect();
    let limit = 2.0 * radius_m - DISTANCE_GUARD_M;
    let mut pairs = Vec::new();
    for i in 0..ground.len() {
        let Some(a) = ground[i] else { continue };
        for (j, b) in ground.iter().enumerate().skip(i + 1) {
            if let Some(b) = b {
                if a.distance(b) < limit {
                    pairs.push((i, j));
                }
            }
        }
    }
    AutoViolations {
        pairs: ViolationPairs { pairs, excluded },
        ground,
        ellipses,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub height_m: (f64, f64),
    pub fov_rad: (f64, f64),
    pub tilt_rad: (f64, f64),
}

impl Default for ParamBounds {
    /// Ideal height and tilt bands widened by half their width, split
    /// evenly; the field of view is searched over 30..90 degrees.
    fn default() -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            let pad = (hi - lo) * 0.25;
            (lo - pad, hi + pad)
        };
        let (t_lo, t_hi) = widen(IDEAL_TILT_DEG);
        Self {
            height_m: widen(IDEAL_HEIGHT_M),
            fov_rad: (30f64.to_radians(), 90f64.to_radians()),
            tilt_rad: (t_lo.max(1.0).to_radians(), t_hi.to_radians()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub nominal_height_m: f64,
    pub min_samples: usize,
    /// Required spread of box tops, as a fraction of the frame height.
    pub min_top_spread: f64,
    /// Samples closer than this to the camera are dropped after a first fit.
    pub min_depth_m: f64,
    pub low_confidence_std_m: f64,
    pub max_evals: usize,
    pub tolerance: f64,
    pub bounds: ParamBounds,
    /// Search start; the centre of the ideal bands by default.
    pub start: CameraParams,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            nominal_height_m: 1.70,
            min_samples: 200,
            min_top_spread: 0.15,
            min_depth_m: 2.0,
            low_confidence_std_m: 0.25,
            max_evals: 2000,
            tolerance: 1e-4,
            bounds: ParamBounds::default(),
            start: CameraParams {
                height_m: 3.75,
                fov_rad: 60f64.to_radians(),
                tilt_rad: 25f64.to_radians(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub loss: f64,
    pub samples: usize,
    pub excluded_near: usize,
    pub height_std_m: f64,
    pub mean_depth_m: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub at_bound: bool,
    pub low_confidence: bool,
    pub grouping: String,
    pub warnings: Vec<String>,
}

/// Squared deviation from the nominal height; a sample the camera would
/// see above the horizon costs as much as a 10x height error.
fn height_loss(samples: &[(BoundingBox, FrameGeometry)], cam: &CameraParams, nominal: f64) -> f64 {
    let penalty = (10.0 * nominal).powi(2);
    let total: f64 = samples
        .iter()
        .map(|(b, g)| match estimated_height(b, cam, *g) {
            Ok(f) => (f - nominal).powi(2),
            Err(_) => penalty,
        })
        .sum();
    total / samples.len() as f64
}

fn run_simplex(
    samples: &[(BoundingBox, FrameGeometry)],
    start: CameraParams,
    cfg: &FitConfig,
) -> optim::SimplexResult {
    let b = &cfg.bounds;
    let opts = SimplexOptions {
        lower: vec![b.height_m.0, b.fov_rad.0, b.tilt_rad.0],
        upper: vec![b.height_m.1, b.fov_rad.1, b.tilt_rad.1],
        initial_step: 0.1,
        tolerance: cfg.tolerance,
        max_evals: cfg.max_evals,
    };
    let objective = |x: &[f64]| {
        let cam = CameraParams {
            height_m: x[0],
            fov_rad: x[1],
            tilt_rad: x[2],
        };
        height_loss(samples, &cam, cfg.nominal_height_m)
    };
    optim::minimize(
        objective,
        &[start.height_m, start.fov_rad, start.tilt_rad],
        &opts,
    )
}

fn from_vec(x: &[f64]) -> CameraParams {
    CameraParams {
        height_m: x[0],
        fov_rad: x[1],
        tilt_rad: x[2],
    }
}

/// Fits camera parameters so that every sample box measures the nominal
/// person height.
pub fn fit_camera_params(
    samples: &[(BoundingBox, FrameGeometry)],
    cfg: &FitConfig,
) -> Result<(CameraParams, FitDiagnostics)> {
    if samples.len() < cfg.min_samples {
        return Err(Error::NotEnoughData(format!(
            "{} samples available, {} required",
            samples.len(),
            cfg.min_samples
        )));
    }
    let (lo, hi) = samples
        .iter()
        .map(|(b, g)| b.y_min / g.h())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
    if hi - lo < cfg.min_top_spread {
        return Err(Error::NotEnoughData(format!(
            "box tops span {:.1}% of the frame height, {:.1}% required for depth diversity",
            (hi - lo) * 100.0,
            cfg.min_top_spread * 100.0
        )));
    }

    let mut used: Vec<(BoundingBox, FrameGeometry)> = samples.to_vec();
    let mut result = run_simplex(&used, cfg.start, cfg);
    let mut evaluations = result.evals;
    // Restart from the optimum until the simplex stops finding improvements.
    for _ in 0..3 {
        let again = run_simplex(&used, from_vec(&result.x), cfg);
        evaluations += again.evals;
        let improved = again.value < result.value * (1.0 - 1e-9);
        if again.value <= result.value {
            result = again;
        }
        if !improved {
            break;
        }
    }

    let near = |cam: &CameraParams, (b, g): &(BoundingBox, FrameGeometry)| {
        ground_position(b, cam, *g)
            .map(|p| p.depth < cfg.min_depth_m)
            .unwrap_or(false)
    };
    let cam = from_vec(&result.x);
    let before = used.len();
    used.retain(|s| !near(&cam, s));
    let excluded_near = before - used.len();
    if excluded_near > 0 {
        if used.len() < cfg.min_samples {
            return Err(Error::NotEnoughData(format!(
                "{} samples remain after dropping {excluded_near} near-camera boxes, {} required",
                used.len(),
                cfg.min_samples
            )));
        }
        let refit = run_simplex(&used, cam, cfg);
        evaluations += refit.evals;
        result = refit;
    }

    let cam = CameraParams::new(result.x[0], result.x[1], result.x[2])?;
    let heights: Vec<f64> = used
        .iter()
        .filter_map(|(b, g)| estimated_height(b, &cam, *g).ok())
        .collect();
    let mean_h = heights.iter().sum::<f64>() / heights.len().max(1) as f64;
    let height_std_m = (heights.iter().map(|h| (h - mean_h).powi(2)).sum::<f64>()
        / heights.len().max(1) as f64)
        .sqrt();
    let depths: Vec<f64> = used
        .iter()
        .filter_map(|(b, g)| ground_position(b, &cam, *g).ok().map(|p| p.depth))
        .collect();
    let mean_depth_m = depths.iter().sum::<f64>() / depths.len().max(1) as f64;

    let at_bound = result.at_bound.iter().any(|&b| b);
    let low_confidence = height_std_m > cfg.low_confidence_std_m;
    let mut warnings: Vec<String> = Vec::new();
    if at_bound {
        warnings.push("optimizer stopped on a parameter bound".into());
    }
    if low_confidence {
        warnings.push(format!(
            "low confidence: residual height std {height_std_m:.3} m exceeds {:.2} m",
            cfg.low_confidence_std_m
        ));
    }
    warnings.extend(
        validate_camera_setting(&cam, mean_depth_m)
            .iter()
            .map(ToString::to_string),
    );

    Ok((
        cam,
        FitDiagnostics {
            loss: result.value,
            samples: used.len(),
            excluded_near,
            height_std_m,
            mean_depth_m,
            evaluations,
            converged: result.converged,
            at_bound,
            low_confidence,
            grouping: HEIGHT_MODEL_GROUPING.into(),
            warnings,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SettingWarning {
    Height { meters: f64 },
    Tilt { degrees: f64 },
    Distance { meters: f64 },
}

impl std::fmt::Display for SettingWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SettingWarning::Height { meters } => write!(
                f,
                "camera height {meters:.2} m outside the ideal {}-{} m band",
                IDEAL_HEIGHT_M.0, IDEAL_HEIGHT_M.1
            ),
            SettingWarning::Tilt { degrees } => write!(
                f,
                "camera tilt {degrees:.1} deg outside the ideal {}-{} deg band",
                IDEAL_TILT_DEG.0, IDEAL_TILT_DEG.1
            ),
            SettingWarning::Distance { meters } => write!(
                f,
                "mean camera-person distance {meters:.1} m outside the ideal {}-{} m band",
                IDEAL_DISTANCE_M.0, IDEAL_DISTANCE_M.1
            ),
        }
    }
}

fn outside((lo, hi): (f64, f64), v: f64) -> bool {
    v < lo || v > hi
}

/// One warning per deployment band the setting falls outside of.
pub fn validate_camera_setting(cam: &CameraParams, mean_depth_m: f64) -> Vec<SettingWarning> {
    let mut out = Vec::new();
    if outside(IDEAL_HEIGHT_M, cam.height_m) {
        out.push(SettingWarning::Height {
            meters: cam.height_m,
        });
    }
    let tilt_deg = cam.tilt_rad.to_degrees();
    if outside(IDEAL_TILT_DEG, tilt_deg) {
        out.push(SettingWarning::Tilt { degrees: tilt_deg });
    }
    if outside(IDEAL_DISTANCE_M, mean_depth_m) {
        out.push(SettingWarning::Distance {
            meters: mean_depth_m,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DocDiagnostics {
    pub loss: f64,
    pub samples: usize,
    pub height_std_m: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn default_radius() -> f64 {
    1.0
}

/// Auto calibration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoCalibrationDoc {
    pub x0_m: f64,
    pub x1_rad: f64,
    pub x2_rad: f64,
    #[serde(default = "default_radius")]
    pub radius_m: f64,
    pub frame: FrameGeometry,
    #[serde(default)]
    pub diagnostics: DocDiagnostics,
}

impl AutoCalibrationDoc {
    pub fn new(cam: &CameraParams, radius_m: f64, frame: FrameGeometry, diag: Option<&FitDiagnostics>) -> Self {
        Self {
            x0_m: cam.height_m,
            x1_rad: cam.fov_rad,
            x2_rad: cam.tilt_rad,
            radius_m,
            frame,
            diagnostics: diag
                .map(|d| DocDiagnostics {
                    loss: d.loss,
                    samples: d.samples,
                    height_std_m: d.height_std_m,
                    warnings: d.warnings.clone(),
                })
                .unwrap_or_default(),
        }
    }
}
