//! Per-frame overlay records for display clients.

use std::collections::BTreeSet;

use sdguard_core::calibration::FrameViolations;
use sdguard_core::geo_auto::ProximityEllipse;
use sdguard_core::tracker::TrackOutput;
use sdguard_core::BoundingBox;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseOverlay {
    pub center: [f64; 2],
    pub semi_major: f64,
    pub semi_minor: f64,
}

impl From<&ProximityEllipse> for EllipseOverlay {
    fn from(e: &ProximityEllipse) -> Self {
        Self {
            center: [e.center.x, e.center.y],
            semi_major: e.semi_major,
            semi_minor: e.semi_minor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonOverlay {
    pub id: u64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub color: Color,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ellipse: Option<EllipseOverlay>,
    /// Head region to blur, `[x_min, y_min, x_max, y_max]`.
    pub blur: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRecord {
    pub feed: String,
    pub frame: u64,
    pub ts: f64,
    pub people: Vec<PersonOverlay>,
    /// Violating id pairs, smaller id first.
    pub violations: Vec<[u64; 2]>,
}

pub fn blur_region(b: &BoundingBox, fraction: f64) -> BoundingBox {
    BoundingBox::new(b.x_min, b.y_min, b.x_max, b.y_min + fraction * b.height())
}

impl OverlayRecord {
    /// Builds the record for one frame. `v` is indexed like `tracks`.
    pub fn build(
        feed: &str,
        frame: u64,
        ts: f64,
        tracks: &[TrackOutput],
        v: &FrameViolations,
        blur_fraction: f64,
    ) -> Self {
        let red = v.pairs.violators();
        let mut violations: Vec<[u64; 2]> = v
            .pairs
            .pairs
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (tracks[i].id, tracks[j].id);
                [a.min(b), a.max(b)]
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        violations.sort_unstable();
        let people = tracks
            .iter()
            .enumerate()
            .map(|(i, t)| PersonOverlay {
                id: t.id,
                bbox: t.bbox,
                color: if red.contains(&i) { Color::Red } else { Color::Green },
                ellipse: v.ellipses.get(i).and_then(Option::as_ref).map(EllipseOverlay::from),
                blur: blur_region(&t.bbox, blur_fraction),
            })
            .collect();
        Self {
            feed: feed.to_string(),
            frame,
            ts,
            people,
            violations,
        }
    }

    pub fn violation_pairs(&self) -> Vec<(u64, u64)> {
        self.violations.iter().map(|p| (p[0], p[1])).collect()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.people.iter().map(|p| p.id).collect()
    }
}
