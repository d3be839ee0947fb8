//! Calibration documents and the per-frame violation test dispatched on the
//! calibration mode.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geo_auto::{self, AutoCalibrationDoc, CameraParams, ProximityEllipse};
use crate::geo_tool::{self, GroundQuad, Homography, HomographyCalibration, TargetRect, ToolCalibrationDoc};
use crate::ingest::{BoundingBox, FrameGeometry};

/// Margin subtracted from the violation distance so that a separation of
/// exactly the limit stays compliant despite rounding in the recovered
/// ground positions.
pub const DISTANCE_GUARD_M: f64 = 1e-9;

/// Index pairs `(i, j)`, `i < j`, found in violation, plus the indices that
/// could not be placed on the ground this frame.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ViolationPairs {
    pub pairs: Vec<(usize, usize)>,
    pub excluded: Vec<usize>,
}

impl ViolationPairs {
    /// Indices taking part in at least one pair.
    pub fn violators(&self) -> BTreeSet<usize> {
        self.pairs.iter().flat_map(|&(a, b)| [a, b]).collect()
    }
}

/// Result of the violation test for one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameViolations {
    pub pairs: ViolationPairs,
    /// Per-person proximity ellipse; only produced in auto mode.
    pub ellipses: Vec<Option<ProximityEllipse>>,
}

/// Either calibration mode, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub enum Calibration {
    Tool(HomographyCalibration),
    Auto {
        params: CameraParams,
        geometry: FrameGeometry,
        radius_m: f64,
    },
}

impl Calibration {
    pub fn mode(&self) -> &'static str {
        match self {
            Calibration::Tool(_) => "tool",
            Calibration::Auto { .. } => "auto",
        }
    }

    pub fn violations(&self, boxes: &[BoundingBox]) -> FrameViolations {
        match self {
            Calibration::Tool(cal) => {
                let feet: Vec<_> = boxes.iter().map(BoundingBox::feet).collect();
                FrameViolations {
                    pairs: geo_tool::birdseye_violations(cal, &feet),
                    ellipses: Vec::new(),
                }
            }
            Calibration::Auto {
                params,
                geometry,
                radius_m,
            } => {
                let v = geo_auto::auto_violations(boxes, params, *geometry, *radius_m);
                FrameViolations {
                    pairs: v.pairs,
                    ellipses: v.ellipses,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum CalibrationDoc {
    Tool(ToolCalibrationDoc),
    Auto(AutoCalibrationDoc),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: &str, message: impl ToString) -> Self {
        Self {
            field: field.to_string(),
            message: message.to_string(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Corner agreement required between a document's matrix and its quad/rect.
pub const DOC_MATRIX_TOLERANCE_PX: f64 = 1.0;

impl CalibrationDoc {
    pub fn mode(&self) -> &'static str {
        match self {
            CalibrationDoc::Tool(_) => "tool",
            CalibrationDoc::Auto(_) => "auto",
        }
    }

    pub fn frame(&self) -> FrameGeometry {
        match self {
            CalibrationDoc::Tool(d) => d.frame,
            CalibrationDoc::Auto(d) => d.frame,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, Vec<FieldError>> {
        serde_json::from_str(text).map_err(|e| vec![FieldError::new("document", e)])
    }

    /// Checks every field and builds the runtime calibration.
    pub fn validate(&self) -> Result<Calibration, Vec<FieldError>> {
        let mut errors = Vec::new();
        if self.frame().width == 0 || self.frame().height == 0 {
            errors.push(FieldError::new("frame", "width and height must be positive"));
        }
        match self {
            CalibrationDoc::Tool(doc) => {
                let quad = GroundQuad::new(doc.quad)
                    .map_err(|e| errors.push(FieldError::new("quad", e)))
                    .ok();
                let rect = TargetRect::from_corners(&doc.rect)
                    .map_err(|e| errors.push(FieldError::new("rect", e)))
                    .ok();
                let matrix = Homography::from_rows(doc.matrix)
                    .map_err(|e| errors.push(FieldError::new("matrix", e)))
                    .ok();
                if let (Some(quad), Some(rect), Some(m)) = (quad, rect, matrix) {
                    match geo_tool::compute_homography(&quad, &rect) {
                        Err(e) => errors.push(FieldError::new("quad", e)),
                        Ok(_) => {
                            let worst = quad
                                .corners()
                                .iter()
                                .zip(rect.corners())
                                .map(|(q, r)| match m.warp(*q) {
                                    Ok(w) => w.distance(&r),
                                    Err(_) => f64::INFINITY,
                                })
                                .fold(0.0, f64::max);
                            if !(worst <= DOC_MATRIX_TOLERANCE_PX) {
                                errors.push(FieldError::new(
                                    "matrix",
                                    format!("does not map quad onto rect (worst corner off by {worst:.3} px)"),
                                ));
                            }
                        }
                    }
                }
                if !(doc.scale_px_per_m > 0.0 && doc.scale_px_per_m.is_finite()) {
                    errors.push(FieldError::new("scale_px_per_m", "must be positive"));
                }
                if !(doc.threshold_m > 0.0 && doc.threshold_m.is_finite()) {
                    errors.push(FieldError::new("threshold_m", "must be positive"));
                }
                if !errors.is_empty() {
                    return Err(errors);
                }
                let m = matrix.expect("validated above");
                HomographyCalibration::new(m, doc.scale_px_per_m, doc.threshold_m)
                    .map(Calibration::Tool)
                    .map_err(|e| vec![FieldError::new("document", e)])
            }
            CalibrationDoc::Auto(doc) => {
                let params = CameraParams::new(doc.x0_m, doc.x1_rad, doc.x2_rad);
                if !(doc.x0_m > 0.0) {
                    errors.push(FieldError::new("x0_m", "camera height must be positive"));
                }
                if !(doc.x1_rad > 0.0 && doc.x1_rad < std::f64::consts::PI) {
                    errors.push(FieldError::new("x1_rad", "field of view must lie in (0, pi)"));
                }
                if !(doc.x2_rad > 0.0 && doc.x2_rad < std::f64::consts::FRAC_PI_2) {
                    errors.push(FieldError::new("x2_rad", "tilt must lie in (0, pi/2)"));
                }
                if !(doc.radius_m > 0.0 && doc.radius_m.is_finite()) {
                    errors.push(FieldError::new("radius_m", "must be positive"));
                }
                if !errors.is_empty() {
                    return Err(errors);
                }
                let params = params.map_err(|e| vec![FieldError::new("document", e)])?;
                Ok(Calibration::Auto {
                    params,
                    geometry: doc.frame,
                    radius_m: doc.radius_m,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo_tool::ReferenceSegment;
    use crate::ingest::Point;

    fn tool_doc() -> ToolCalibrationDoc {
        let quad = GroundQuad::new([
            Point::new(800.0, 500.0),
            Point::new(1100.0, 500.0),
            Point::new(1400.0, 900.0),
            Point::new(500.0, 900.0),
        ])
        .unwrap();
        let rect = TargetRect::new(0.0, 0.0, 400.0, 800.0).unwrap();
        let refs =
            [ReferenceSegment::new(Point::new(800.0, 500.0), Point::new(1100.0, 500.0), 4.0).unwrap()];
        let geom = FrameGeometry::new(1920, 1080).unwrap();
        ToolCalibrationDoc::build(&quad, &rect, &refs, 2.0, geom).unwrap().0
    }

    #[test]
    fn tool_document_round_trips_and_validates() {
        let doc = CalibrationDoc::Tool(tool_doc());
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.contains(r#""mode":"tool""#));
        assert!(text.contains(r#""frame":{"w":1920,"h":1080}"#));
        let back = CalibrationDoc::from_json(&text).unwrap();
        assert_eq!(back, doc);
        let cal = back.validate().unwrap();
        assert_eq!(cal.mode(), "tool");
    }

    #[test]
    fn collinear_quad_reports_field() {
        let mut d = tool_doc();
        d.quad[1] = Point::new(950.0, 700.0);
        d.quad[0] = Point::new(800.0, 500.0);
        d.quad[2] = Point::new(1100.0, 900.0);
        let errs = CalibrationDoc::Tool(d).validate().unwrap_err();
        assert_eq!(errs[0].field, "quad");
        assert!(errs[0].message.contains("collinear"), "{}", errs[0].message);
    }

    #[test]
    fn mismatched_matrix_rejected() {
        let mut d = tool_doc();
        d.matrix = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let errs = CalibrationDoc::Tool(d).validate().unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "matrix");
    }

    #[test]
    fn auto_document_field_errors() {
        let text = r#"{"mode":"auto","x0_m":-1.0,"x1_rad":0.9,"x2_rad":2.0,"radius_m":1.0,
            "frame":{"w":1920,"h":1080},
            "diagnostics":{"loss":0.0,"samples":0,"height_std_m":0.0,"warnings":[]}}"#;
        let errs = CalibrationDoc::from_json(text).unwrap().validate().unwrap_err();
        let fields: Vec<_> = errs.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["x0_m", "x2_rad"]);
    }
}
