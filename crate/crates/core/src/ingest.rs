//! Detection ingestion: the canonical data model and the two interchange
//! formats (MOT-challenge detection CSV and per-frame JSON lines).

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGeometry {
    #[serde(rename = "w")]
    pub width: u32,
    #[serde(rename = "h")]
    pub height: u32,
}

impl FrameGeometry {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config(format!(
                "frame geometry must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn w(&self) -> f64 {
        f64::from(self.width)
    }

    pub fn h(&self) -> f64 {
        f64::from(self.height)
    }
}

impl std::str::FromStr for FrameGeometry {
    type Err = Error;

    /// Parses `WxH`, e.g. `1920x1080`.
    fn from_str(s: &str) -> Result<Self> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::config(format!("geometry must look like WxH, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::config(format!("bad geometry component {v:?}")))
        };
        FrameGeometry::new(parse(w)?, parse(h)?)
    }
}

/// A 2-D point, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned box in image coordinates (origin top-left, y down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from(v: [f64; 4]) -> Self {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BoundingBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Builds a box from MOT-style `left, top, width, height`.
    pub fn from_ltwh(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self::new(left, top, left + width, top + height)
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self::new(
            cx - width / 2.0,
            cy - height / 2.0,
            cx + width / 2.0,
            cy + height / 2.0,
        )
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Midpoint of the bottom edge, taken as the person's ground contact.
    pub fn feet(&self) -> Point {
        Point::new((self.x_min + self.x_max) / 2.0, self.y_max)
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn clamp_to(&self, geom: FrameGeometry) -> BoundingBox {
        let (w, h) = (geom.w(), geom.h());
        BoundingBox::new(
            self.x_min.clamp(0.0, w),
            self.y_min.clamp(0.0, h),
            self.x_max.clamp(0.0, w),
            self.y_max.clamp(0.0, h),
        )
    }

    pub fn within(&self, geom: FrameGeometry) -> bool {
        self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= geom.w()
            && self.y_max <= geom.h()
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, confidence: f64) -> Self {
        Self { bbox, confidence }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame_index: u64,
    pub timestamp: f64,
    pub detections: Vec<Detection>,
}

impl FrameDetections {
    pub fn new(frame_index: u64, timestamp: f64, detections: Vec<Detection>) -> Self {
        Self {
            frame_index,
            timestamp,
            detections,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Time base for sources without timestamps.
    pub fps: f64,
    /// Detections scoring below this are dropped on read.
    pub min_confidence: f64,
    pub min_area_px2: f64,
    /// Allowed height/width band, inclusive.
    pub aspect_band: (f64, f64),
    pub strict: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            fps: 25.0,
            min_confidence: 0.3,
            min_area_px2: 4.0,
            aspect_band: (1.0, 6.0),
            strict: false,
        }
    }
}

fn normalize_confidence(conf: f64) -> f64 {
    // -1 is the MOT convention for "no score".
    if conf == -1.0 {
        1.0
    } else {
        conf.clamp(0.0, 1.0)
    }
}

fn parse_field(fields: &[&str], idx: usize, name: &str) -> std::result::Result<f64, String> {
    let raw = fields[idx].trim();
    let v: f64 = raw
        .parse()
        .map_err(|_| format!("field {name} is not numeric: {raw:?}"))?;
    if !v.is_finite() {
        return Err(format!("field {name} is not finite: {raw:?}"));
    }
    Ok(v)
}

/// Parses one MOT-challenge detection line:
/// `frame, id, bb_left, bb_top, bb_width, bb_height, conf[, ...]`.
///
/// `frame` is 1-based in the file and returned 0-based. The box is clamped
/// to the frame. Errors carry line 0; file readers substitute the real line.
pub fn parse_detection_record(line: &str, geometry: FrameGeometry) -> Result<(u64, Detection)> {
    let parse_err = |message: String| Error::Parse { line: 0, message };
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if fields.len() < 7 {
        return Err(parse_err(format!(
            "expected at least 7 comma-separated fields, found {}",
            fields.len()
        )));
    }
    let frame = parse_field(&fields, 0, "frame").map_err(parse_err)?;
    let left = parse_field(&fields, 2, "bb_left").map_err(parse_err)?;
    let top = parse_field(&fields, 3, "bb_top").map_err(parse_err)?;
    let width = parse_field(&fields, 4, "bb_width").map_err(parse_err)?;
    let height = parse_field(&fields, 5, "bb_height").map_err(parse_err)?;
    let conf = parse_field(&fields, 6, "conf").map_err(parse_err)?;

    if frame < 1.0 || frame.fract() != 0.0 {
        return Err(parse_err(format!(
            "frame must be a positive integer, got {frame}"
        )));
    }
    if width <= 0.0 || height <= 0.0 {
        return Err(Error::RejectedRecord(format!(
            "non-positive box size {width}x{height}"
        )));
    }
    let bbox = BoundingBox::from_ltwh(left, top, width, height).clamp_to(geometry);
    if !bbox.is_valid() {
        return Err(Error::RejectedRecord(format!(
            "box ({left}, {top}, {width}, {height}) lies outside the {}x{} frame",
            geometry.width, geometry.height
        )));
    }
    Ok((
        frame as u64 - 1,
        Detection::new(bbox, normalize_confidence(conf)),
    ))
}

/// Inverse of [`parse_detection_record`].
pub fn format_detection_record(frame_index: u64, det: &Detection) -> String {
    let b = &det.bbox;
    format!(
        "{},-1,{},{},{},{},{},-1,-1,-1",
        frame_index + 1,
        b.x_min,
        b.y_min,
        b.width(),
        b.height(),
        det.confidence
    )
}

/// Drops implausible detections. Area and aspect filters only apply in
/// strict mode.
pub fn validate_frame(
    fd: &FrameDetections,
    geometry: FrameGeometry,
    cfg: &IngestConfig,
) -> FrameDetections {
    let detections = fd
        .detections
        .iter()
        .filter(|d| {
            if !cfg.strict {
                return true;
            }
            let b = d.bbox.clamp_to(geometry);
            if b.area() < cfg.min_area_px2 {
                return false;
            }
            let aspect = b.height() / b.width();
            aspect >= cfg.aspect_band.0 && aspect <= cfg.aspect_band.1
        })
        .copied()
        .collect();
    FrameDetections {
        frame_index: fd.frame_index,
        timestamp: fd.timestamp,
        detections,
    }
}

/// Reads a whole detection CSV into frames.
///
/// Frames are dense from 0 through the last frame seen (or `min_frames - 1`)
/// so that frames without detections still advance trackers and clocks.
/// Timestamps are `frame_index / fps`.
pub fn read_detection_csv<R: BufRead>(
    reader: R,
    geometry: FrameGeometry,
    cfg: &IngestConfig,
    min_frames: u64,
) -> Result<Vec<FrameDetections>> {
    if !(cfg.fps > 0.0) {
        return Err(Error::config("fps must be positive"));
    }
    let mut by_frame: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (frame, det) = match parse_detection_record(trimmed, geometry) {
            Ok(v) => v,
            Err(Error::Parse { message, .. }) => {
                return Err(Error::Parse {
                    line: lineno,
                    message,
                })
            }
            Err(Error::RejectedRecord(msg)) => {
                return Err(Error::RejectedRecord(format!("line {lineno}: {msg}")))
            }
            Err(e) => return Err(e),
        };
        if det.confidence < cfg.min_confidence {
            continue;
        }
        by_frame.entry(frame).or_default().push(det);
    }
    let last = by_frame
        .keys()
        .next_back()
        .map(|&f| f + 1)
        .unwrap_or(0)
        .max(min_frames);
    Ok((0..last)
        .map(|idx| {
            let fd = FrameDetections::new(
                idx,
                idx as f64 / cfg.fps,
                by_frame.remove(&idx).unwrap_or_default(),
            );
            validate_frame(&fd, geometry, cfg)
        })
        .collect())
}

/// One live-mode frame: `{"frame": int, "ts": float, "boxes": [[x_min, y_min, x_max, y_max, conf], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveFrame {
    pub frame: u64,
    #[serde(default)]
    pub ts: Option<f64>,
    #[serde(default)]
    pub boxes: Vec<[f64; 5]>,
}

/// Parses live JSON lines, enforcing stream ordering.
#[derive(Debug, Clone)]
pub struct LiveFrameParser {
    geometry: FrameGeometry,
    cfg: IngestConfig,
    last: Option<(u64, f64)>,
    line: usize,
}

impl LiveFrameParser {
    pub fn new(geometry: FrameGeometry, cfg: IngestConfig) -> Self {
        Self {
            geometry,
            cfg,
            last: None,
            line: 0,
        }
    }

    /// Returns `Ok(None)` for blank lines.
    pub fn parse_line(&mut self, line: &str) -> Result<Option<FrameDetections>> {
        self.line += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            return Ok(None);
        }
        let live: LiveFrame = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: self.line,
            message: e.to_string(),
        })?;
        let ts = live.ts.unwrap_or(live.frame as f64 / self.cfg.fps);
        if !(ts >= 0.0) || !ts.is_finite() {
            return Err(Error::Parse {
                line: self.line,
                message: format!("timestamp must be non-negative, got {ts}"),
            });
        }
        if let Some((prev_frame, prev_ts)) = self.last {
            if live.frame <= prev_frame {
                return Err(Error::Sequencing {
                    previous: prev_frame,
                    got: live.frame,
                });
            }
            if ts < prev_ts {
                return Err(Error::Parse {
                    line: self.line,
                    message: format!("timestamp {ts} decreases (previous {prev_ts})"),
                });
            }
        }
        self.last = Some((live.frame, ts));

        let mut detections = Vec::with_capacity(live.boxes.len());
        for [x0, y0, x1, y1, conf] in live.boxes {
            let bbox = BoundingBox::new(x0, y0, x1, y1).clamp_to(self.geometry);
            let confidence = normalize_confidence(conf);
            if !bbox.is_valid() || confidence < self.cfg.min_confidence {
                continue;
            }
            detections.push(Detection::new(bbox, confidence));
        }
        let fd = FrameDetections::new(live.frame, ts, detections);
        Ok(Some(validate_frame(&fd, self.geometry, &self.cfg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HD: FrameGeometry = FrameGeometry {
        width: 1920,
        height: 1080,
    };

    #[test]
    fn parses_scored_record() {
        let (frame, det) =
            parse_detection_record("1,-1,100,200,50,150,0.9,-1,-1,-1", HD).unwrap();
        assert_eq!(frame, 0);
        assert_eq!(det.bbox, BoundingBox::new(100.0, 200.0, 150.0, 350.0));
        assert_eq!(det.confidence, 0.9);
    }

    #[test]
    fn unscored_confidence_maps_to_one() {
        let (frame, det) = parse_detection_record("5,-1,0,0,10,10,-1", HD).unwrap();
        assert_eq!(frame, 4);
        assert_eq!(det.bbox, BoundingBox::new(0.0, 0.0, 10.0, 10.0));
        assert_eq!(det.confidence, 1.0);
    }

    #[test]
    fn clamps_to_frame() {
        let (frame, det) = parse_detection_record("3,-1,1900,1000,100,200,0.5", HD).unwrap();
        assert_eq!(frame, 2);
        assert_eq!(det.bbox, BoundingBox::new(1900.0, 1000.0, 1920.0, 1080.0));
        assert_eq!(det.confidence, 0.5);
    }

    #[test]
    fn rejects_malformed_records() {
        assert!(matches!(
            parse_detection_record("1,-1,100,200,50", HD),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_detection_record("1,-1,abc,200,50,150,0.9", HD),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_detection_record("0,-1,1,2,3,4,0.9", HD),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_detection_record("1,-1,100,200,0,150,0.9", HD),
            Err(Error::RejectedRecord(_))
        ));
        assert!(matches!(
            parse_detection_record("1,-1,100,200,50,-3,0.9", HD),
            Err(Error::RejectedRecord(_))
        ));
    }

    #[test]
    fn csv_reader_reports_line_numbers() {
        let text = "1,-1,100,200,50,150,0.9\n2,-1,x,200,50,150,0.9\n";
        let err = read_detection_csv(text.as_bytes(), HD, &IngestConfig::default(), 0).unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 2,
                message: "field bb_left is not numeric: \"x\"".into()
            }
        );
    }

    #[test]
    fn csv_reader_fills_gaps_and_applies_floor() {
        let text = "1,-1,100,200,50,150,0.9\r\n4,-1,100,200,50,150,0.2\r\n4,-1,300,200,50,150,0.8\r\n";
        let cfg = IngestConfig {
            fps: 10.0,
            ..Default::default()
        };
        let frames = read_detection_csv(text.as_bytes(), HD, &cfg, 0).unwrap();
        assert_eq!(frames.len(), 4);
        assert_eq!(frames[1].detections.len(), 0);
        assert_eq!(frames[3].detections.len(), 1);
        assert!((frames[3].timestamp - 0.3).abs() < 1e-12);
    }

    #[test]
    fn validate_empty_frame_is_identity() {
        let fd = FrameDetections::new(3, 0.12, vec![]);
        let strict = IngestConfig {
            strict: true,
            ..Default::default()
        };
        assert_eq!(validate_frame(&fd, HD, &strict), fd);
    }

    #[test]
    fn validate_area_and_aspect() {
        let tiny = FrameDetections::new(
            0,
            0.0,
            vec![Detection::new(BoundingBox::new(0.0, 0.0, 1.0, 1.0), 0.9)],
        );
        let lax = IngestConfig::default();
        let strict = IngestConfig {
            strict: true,
            ..Default::default()
        };
        assert_eq!(validate_frame(&tiny, HD, &lax).detections.len(), 1);
        assert_eq!(validate_frame(&tiny, HD, &strict).detections.len(), 0);

        let wide = FrameDetections::new(
            0,
            0.0,
            vec![Detection::new(BoundingBox::new(0.0, 0.0, 100.0, 50.0), 0.9)],
        );
        assert_eq!(validate_frame(&wide, HD, &strict).detections.len(), 0);
    }

    #[test]
    fn live_parser_orders_frames() {
        let mut p = LiveFrameParser::new(HD, IngestConfig::default());
        let fd = p
            .parse_line(r#"{"frame": 0, "ts": 0.0, "boxes": [[10,10,30,60,0.9],[0,0,5,5,0.1]]}"#)
            .unwrap()
            .unwrap();
        assert_eq!(fd.detections.len(), 1);
        let fd = p.parse_line(r#"{"frame": 2, "boxes": []}"#).unwrap().unwrap();
        assert!((fd.timestamp - 0.08).abs() < 1e-12);
        assert!(p.parse_line("").unwrap().is_none());
        assert_eq!(
            p.parse_line(r#"{"frame": 2, "ts": 1.0, "boxes": []}"#),
            Err(Error::Sequencing {
                previous: 2,
                got: 2
            })
        );
    }

    #[test]
    fn geometry_from_str() {
        assert_eq!("1920x1080".parse::<FrameGeometry>().unwrap(), HD);
        assert!("0x10".parse::<FrameGeometry>().is_err());
        assert!("1920".parse::<FrameGeometry>().is_err());
    }
}
