//! Tool-based calibration: an inverse-perspective homography from an
//! operator-picked ground quadrilateral, a metric scale from reference
//! segments, and distance tests in the resulting bird's-eye view.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::calibration::{ViolationPairs, DISTANCE_GUARD_M};
use crate::error::{Error, Result};
use crate::ingest::{FrameGeometry, Point};

/// `(M p)_w` below this magnitude is treated as the line at infinity.
pub const HORIZON_EPS: f64 = 1e-12;

/// Relative spread between reference scales that triggers a warning.
pub const REFERENCE_DISAGREEMENT: f64 = 0.15;

/// Ground-plane quadrilateral in the perspective image, wound
/// top-left, top-right, bottom-right, bottom-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundQuad([Point; 4]);

impl GroundQuad {
    pub fn new(corners: [Point; 4]) -> Result<Self> {
        check_general_position(&corners, "p")?;
        let mut sign = 0.0;
        for i in 0..4 {
            let a = corners[i];
            let b = corners[(i + 1) % 4];
            let c = corners[(i + 2) % 4];
            let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return Err(Error::Singular(format!(
                    "quadrilateral is not convex at p{}",
                    (i + 1) % 4
                )));
            }
        }
        Ok(Self(corners))
    }

    pub fn corners(&self) -> &[Point; 4] {
        &self.0
    }
}

/// Axis-aligned target rectangle in bird's-eye pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl TargetRect {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::config(format!(
                "target rectangle must have positive size, got {width}x{height}"
            )));
        }
        Ok(Self {
            x,
            y,
            width,
            height,
        })
    }

    /// Sized by the mean of the quad's opposite edge lengths (the median of two).
    pub fn from_quad(quad: &GroundQuad) -> Result<Self> {
        let [p0, p1, p2, p3] = *quad.corners();
        let w = (p0.distance(&p1) + p3.distance(&p2)) / 2.0;
        let h = (p0.distance(&p3) + p1.distance(&p2)) / 2.0;
        Self::new(0.0, 0.0, w, h)
    }

    /// Corners in the same winding as [`GroundQuad`].
    pub fn corners(&self) -> [Point; 4] {
        let (x0, y0) = (self.x, self.y);
        let (x1, y1) = (self.x + self.width, self.y + self.height);
        [
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ]
    }

    pub fn from_corners(corners: &[Point; 4]) -> Result<Self> {
        let r = Self::new(
            corners[0].x,
            corners[0].y,
            corners[2].x - corners[0].x,
            corners[2].y - corners[0].y,
        )?;
        let expected = r.corners();
        let aligned = expected
            .iter()
            .zip(corners)
            .all(|(a, b)| a.distance(b) <= 1e-9 * (1.0 + r.width + r.height));
        if !aligned {
            return Err(Error::config(
                "rect corners must form an axis-aligned rectangle wound TL, TR, BR, BL",
            ));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSegment {
    pub a: Point,
    pub b: Point,
    pub real_length_m: f64,
}

impl ReferenceSegment {
    pub fn new(a: Point, b: Point, real_length_m: f64) -> Result<Self> {
        if a == b {
            return Err(Error::config("reference segment endpoints coincide"));
        }
        if !(real_length_m > 0.0) {
            return Err(Error::config(format!(
                "reference length must be positive, got {real_length_m}"
            )));
        }
        Ok(Self {
            a,
            b,
            real_length_m,
        })
    }
}

/// Projective map from the perspective image to the bird's-eye plane,
/// normalized so that `m[(2, 2)] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        let m = Matrix3::from_fn(|r, c| rows[r][c]);
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::config("homography has non-finite entries"));
        }
        if m.determinant().abs() < 1e-15 {
            return Err(Error::Singular("homography determinant is zero".into()));
        }
        Ok(Self(m))
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Result<Self> {
        self.0
            .try_inverse()
            .map(Self)
            .ok_or_else(|| Error::Singular("homography is not invertible".into()))
    }

    pub fn warp(&self, p: Point) -> Result<Point> {
        warp_point(self, p)
    }
}

fn collinear(a: Point, b: Point, c: Point) -> bool {
    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let scale = a.distance(&b).max(a.distance(&c)).max(b.distance(&c));
    cross.abs() <= 1e-12 * scale * scale
}

fn check_general_position(pts: &[Point; 4], label: &str) -> Result<()> {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    for [i, j, k] in TRIPLES {
        if collinear(pts[i], pts[j], pts[k]) {
            return Err(Error::Singular(format!(
                "points {label}{i}, {label}{j}, {label}{k} are collinear"
            )));
        }
    }
    Ok(())
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn conditioning(pts: &[Point; 4]) -> Matrix3<f64> {
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mean = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / 4.0;
    let s = std::f64::consts::SQRT_2 / mean;
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn apply(m: &Matrix3<f64>, p: Point) -> Point {
    let v = m * Vector3::new(p.x, p.y, 1.0);
    Point::new(v.x / v.z, v.y / v.z)
}

type DltSystem = (SMatrix<f64, 8, 8>, SVector<f64, 8>);

fn dlt_system(src: &[Point; 4], dst: &[Point; 4]) -> DltSystem {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    (a, b)
}

fn solve_dlt(src: &[Point; 4], dst: &[Point; 4]) -> Option<Matrix3<f64>> {
    let (a, b) = dlt_system(src, dst);
    let lu = a.lu();
    let mut h = lu.solve(&b)?;
    // One round of iterative refinement recovers the last few bits.
    let residual = b - a * h;
    if let Some(dh) = lu.solve(&residual) {
        h += dh;
    }
    Some(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0))
}

/// Solves the 8-unknown direct linear system for the homography carrying
/// `src[i]` onto `dst[i]`.
pub fn homography_from_correspondences(src: &[Point; 4], dst: &[Point; 4]) -> Result<Homography> {
    check_general_position(src, "p")?;
    check_general_position(dst, "q")?;
    let ts = conditioning(src);
    let td = conditioning(dst);
    let src_n = src.map(|p| apply(&ts, p));
    let dst_n = dst.map(|p| apply(&td, p));
    let hn = solve_dlt(&src_n, &dst_n)
        .ok_or_else(|| Error::Singular("correspondence system has no unique solution".into()))?;
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| Error::Singular("degenerate target points".into()))?;
    let m = td_inv * hn * ts;
    if m[(2, 2)].abs() < 1e-14 {
        return Err(Error::Singular(
            "homography cannot be normalized (origin maps to infinity)".into(),
        ));
    }
    let mut m = m / m[(2, 2)];

    // Refine directly in pixel space so the defining corners are hit exactly.
    if let Some(refined) = solve_dlt_refine(src, dst, &m) {
        m = refined;
    }
    Ok(Homography(m))
}

fn solve_dlt_refine(src: &[Point; 4], dst: &[Point; 4], m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let (a, b) = dlt_system(src, dst);
    let h = SVector::<f64, 8>::from_column_slice(&[
        m[(0, 0)],
        m[(0, 1)],
        m[(0, 2)],
        m[(1, 0)],
        m[(1, 1)],
        m[(1, 2)],
        m[(2, 0)],
        m[(2, 1)],
    ]);
    let residual = b - a * h;
    let dh = a.lu().solve(&residual)?;
    let h = h + dh;
    let refined = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let err = |mm: &Matrix3<f64>| {
        src.iter()
            .zip(dst)
            .map(|(s, d)| apply(mm, *s).distance(d))
            .fold(0.0, f64::max)
    };
    (err(&refined) <= err(m)).then_some(refined)
}

/// Homography taking the quad corners onto the rectangle corners.
pub fn compute_homography(quad: &GroundQuad, target: &TargetRect) -> Result<Homography> {
    homography_from_correspondences(quad.corners(), &target.corners())
}

pub fn warp_point(m: &Homography, p: Point) -> Result<Point> {
    let v = m.0 * Vector3::new(p.x, p.y, 1.0);
    if v.z.abs() <= HORIZON_EPS {
        return Err(Error::Horizon { x: p.x, y: p.y });
    }
    Ok(Point::new(v.x / v.z, v.y / v.z))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleEstimate {
    pub px_per_m: f64,
    pub per_reference: Vec<f64>,
    /// Set when references disagree by more than 15% of their mean.
    pub disagreement_warning: bool,
}

/// Bird's-eye pixels per meter, averaged over the references.
pub fn scale_from_references(m: &Homography, refs: &[ReferenceSegment]) -> Result<ScaleEstimate> {
    if refs.is_empty() {
        return Err(Error::config("at least one reference segment is required"));
    }
    let per_reference = refs
        .iter()
        .map(|r| {
            let a = warp_point(m, r.a)?;
            let b = warp_point(m, r.b)?;
            Ok(a.distance(&b) / r.real_length_m)
        })
        .collect::<Result<Vec<f64>>>()?;
    let px_per_m = per_reference.iter().sum::<f64>() / per_reference.len() as f64;
    if !(px_per_m > 0.0) {
        return Err(Error::config("reference segments collapse to zero length"));
    }
    let lo = per_reference.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = per_reference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ScaleEstimate {
        px_per_m,
        disagreement_warning: (hi - lo) / px_per_m > REFERENCE_DISAGREEMENT,
        per_reference,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomographyCalibration {
    pub matrix: Homography,
    pub scale_px_per_m: f64,
    pub threshold_m: f64,
}

impl HomographyCalibration {
    pub fn new(matrix: Homography, scale_px_per_m: f64, threshold_m: f64) -> Result<Self> {
        if !(scale_px_per_m > 0.0) {
            return Err(Error::config("scale must be positive"));
        }
        if !(threshold_m > 0.0) {
            return Err(Error::config("threshold must be positive"));
        }
        Ok(Self {
            matrix,
            scale_px_per_m,
            threshold_m,
        })
    }

    /// Ground distance in meters between two image points.
    pub fn distance_m(&self, a: Point, b: Point) -> Result<f64> {
        let wa = warp_point(&self.matrix, a)?;
        let wb = warp_point(&self.matrix, b)?;
        Ok(wa.distance(&wb) / self.scale_px_per_m)
    }
}

/// Pairs of feet points closer than the threshold in the bird's-eye view.
pub fn birdseye_violations(cal: &HomographyCalibration, feet: &[Point]) -> ViolationPairs {
    let mut excluded = Vec::new();
    let warped: Vec<Option<Point>> = feet
        .iter()
        .enumerate()
        .map(|(i, p)| match warp_point(&cal.matrix, *p) {
            Ok(w) => Some(w),
            Err(_) => {
                excluded.push(i);
                None
            }
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..warped.len() {
        let Some(a) = warped[i] else { continue };
        for (j, b) in warped.iter().enumerate().skip(i + 1) {
            let Some(b) = b else { continue };
            if a.distance(b) / cal.scale_px_per_m < cal.threshold_m - DISTANCE_GUARD_M {
                pairs.push((i, j));
            }
        }
    }
    ViolationPairs { pairs, excluded }
}

fn default_threshold_m() -> f64 {
    2.0
}

/// Tool calibration document shared with the calibration UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCalibrationDoc {
    pub quad: [Point; 4],
    pub rect: [Point; 4],
    pub matrix: [[f64; 3]; 3],
    pub scale_px_per_m: f64,
    #[serde(default = "default_threshold_m")]
    pub threshold_m: f64,
    pub frame: FrameGeometry,
}

impl ToolCalibrationDoc {
    /// Builds a complete document from operator input.
    pub fn build(
        quad: &GroundQuad,
        rect: &TargetRect,
        refs: &[ReferenceSegment],
        threshold_m: f64,
        frame: FrameGeometry,
    ) -> Result<(Self, ScaleEstimate)> {
        let m = compute_homography(quad, rect)?;
        let scale = scale_from_references(&m, refs)?;
        Ok((
            Self {
                quad: *quad.corners(),
                rect: rect.corners(),
                matrix: m.rows(),
                scale_px_per_m: scale.px_per_m,
                threshold_m,
                frame,
            },
            scale,
        ))
    }
}
