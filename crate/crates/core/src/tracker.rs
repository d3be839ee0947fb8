//! Online tracking-by-detection: a constant-velocity Kalman filter per
//! track and greedy IOU association between predicted tracks and new
//! detections.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BoundingBox, FrameDetections};

type State = SVector<f64, 6>;
type Cov = SMatrix<f64, 6, 6>;
type Meas = SVector<f64, 4>;

/// Intersection over union; 0 for disjoint or empty boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub iou_min: f64,
    /// Frames a track may go unmatched before it is dropped.
    pub max_staleness: u32,
    pub min_hits: u32,
    /// Acceleration noise on the centre, px^2/frame^2; size drift uses the same scale.
    pub process_noise: f64,
    /// Measurement noise on box centre and size, px^2.
    pub measurement_noise: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            iou_min: 0.3,
            max_staleness: 12,
            min_hits: 3,
            process_noise: 1.0,
            measurement_noise: 10.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_min > 0.0 && self.iou_min < 1.0) {
            return Err(Error::config(format!("iou_min must lie in (0, 1), got {}", self.iou_min)));
        }
        if self.min_hits < 1 {
            return Err(Error::config("min_hits must be at least 1"));
        }
        if !(self.process_noise >= 0.0 && self.measurement_noise > 0.0) {
            return Err(Error::config("noise scales must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    /// `(cx, cy, w, h, vcx, vcy)`.
    pub mean: State,
    pub covariance: Cov,
    pub hits: u32,
    pub staleness: u32,
    pub status: TrackStatus,
    /// Detection matched in the most recent frame, if any.
    pub last_detection: Option<(BoundingBox, f64)>,
}

impl Track {
    /// Box reconstructed from the filter state.
    pub fn state_box(&self) -> BoundingBox {
        let m = &self.mean;
        BoundingBox::from_center(m[0], m[1], m[2].max(1e-6), m[3].max(1e-6))
    }
}

/// A track reported for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub id: u64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub conf: f64,
}

/// Kalman model matrices, fixed per configuration.
#[derive(Debug, Clone)]
struct Model {
    transition: Cov,
    process: Cov,
    observation: SMatrix<f64, 4, 6>,
    measurement: SMatrix<f64, 4, 4>,
    initial_velocity_var: f64,
}

impl Model {
    fn new(cfg: &TrackerConfig) -> Self {
        let mut transition = Cov::identity();
        transition[(0, 4)] = 1.0;
        transition[(1, 5)] = 1.0;

        // White-acceleration model on the centre, random walk on the size.
        let q = cfg.process_noise;
        let mut process = Cov::zeros();
        for (p, v) in [(0, 4), (1, 5)] {
            process[(p, p)] = q / 4.0;
            process[(p, v)] = q / 2.0;
            process[(v, p)] = q / 2.0;
            process[(v, v)] = q;
        }
        process[(2, 2)] = q;
        process[(3, 3)] = q;

        let mut observation = SMatrix::<f64, 4, 6>::zeros();
        for i in 0..4 {
            observation[(i, i)] = 1.0;
        }
        Self {
            transition,
            process,
            observation,
            measurement: SMatrix::<f64, 4, 4>::identity() * cfg.measurement_noise,
            initial_velocity_var: 100.0,
        }
    }

    fn init(&self, b: &BoundingBox) -> (State, Cov) {
        let c = b.center();
        let mean = State::from_column_slice(&[c.x, c.y, b.width(), b.height(), 0.0, 0.0]);
        let r = self.measurement[(0, 0)];
        let cov = Cov::from_diagonal(&State::from_column_slice(&[
            r,
            r,
            r,
            r,
            self.initial_velocity_var,
            self.initial_velocity_var,
        ]));
        (mean, cov)
    }

    fn predict(&self, mean: &mut State, cov: &mut Cov) {
        *mean = self.transition * *mean;
        *cov = self.transition * *cov * self.transition.transpose() + self.process;
        *cov = (*cov + cov.transpose()) * 0.5;
    }

    fn update(&self, mean: &mut State, cov: &mut Cov, b: &BoundingBox) {
        let c = b.center();
        let z = Meas::from_column_slice(&[c.x, c.y, b.width(), b.height()]);
        let h = &self.observation;
        let s = h * *cov * h.transpose() + self.measurement;
        let Some(s_inv) = s.try_inverse() else {
            return;
        };
        let gain = *cov * h.transpose() * s_inv;
        *mean += gain * (z - h * *mean);
        // Joseph form keeps the covariance symmetric positive semi-definite.
        let i_kh = Cov::identity() - gain * h;
        *cov = i_kh * *cov * i_kh.transpose() + gain * self.measurement * gain.transpose();
        *cov = (*cov + cov.transpose()) * 0.5;
    }
}

/// One tracker per feed.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    model: Model,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
    frames_seen: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            model: Model::new(&cfg),
            cfg,
            tracks: Vec::new(),
            next_id: 0,
            last_frame: None,
            frames_seen: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live (tentative or confirmed) tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Advances one frame and returns the confirmed tracks matched in it.
    ///
    /// During the first `min_hits` frames of the stream every matched track
    /// is reported, so that people present from the start are not delayed.
    pub fn step(&mut self, frame: &FrameDetections) -> Result<Vec<TrackOutput>> {
        let steps = match self.last_frame {
            Some(prev) if frame.frame_index <= prev => {
                return Err(Error::Sequencing {
                    previous: prev,
                    got: frame.frame_index,
                })
            }
            Some(prev) => frame.frame_index - prev,
            None => 1,
        };
        self.last_frame = Some(frame.frame_index);
        self.frames_seen += 1;

        // (1) predict
        for t in &mut self.tracks {
            for _ in 0..steps {
                self.model.predict(&mut t.mean, &mut t.covariance);
            }
            t.last_detection = None;
        }

        // (2) greedy association in descending IOU
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in self.tracks.iter().enumerate() {
            let predicted = t.state_box();
            for (di, d) in frame.detections.iter().enumerate() {
                let score = iou(&predicted, &d.bbox);
                if score >= self.cfg.iou_min {
                    candidates.push((score, ti, di));
                }
            }
        }
        // Ties resolve by track then detection index for determinism.
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_used = vec![false; self.tracks.len()];
        let mut det_used = vec![false; frame.detections.len()];
        for (_, ti, di) in candidates {
            if track_used[ti] || det_used[di] {
                continue;
            }
            track_used[ti] = true;
            det_used[di] = true;
            // (3) update matched tracks
            let d = &frame.detections[di];
            let t = &mut self.tracks[ti];
            self.model.update(&mut t.mean, &mut t.covariance, &d.bbox);
            t.hits += 1;
            t.staleness = 0;
            t.last_detection = Some((d.bbox, d.confidence));
            if t.status == TrackStatus::Tentative && t.hits >= self.cfg.min_hits {
                t.status = TrackStatus::Confirmed;
            }
        }

        // (5) age unmatched tracks
        for (t, used) in self.tracks.iter_mut().zip(&track_used) {
            if !used {
                t.staleness = t.staleness.saturating_add(steps.min(u32::MAX as u64) as u32);
                if t.staleness > self.cfg.max_staleness {
                    t.status = TrackStatus::Dead;
                }
            }
        }
        self.tracks.retain(|t| t.status != TrackStatus::Dead);

        // (4) spawn tentative tracks
        for (d, used) in frame.detections.iter().zip(&det_used) {
            if *used {
                continue;
            }
            let (mean, covariance) = self.model.init(&d.bbox);
            let mut status = TrackStatus::Tentative;
            if self.cfg.min_hits <= 1 {
                status = TrackStatus::Confirmed;
            }
            self.tracks.push(Track {
                id: self.next_id,
                mean,
                covariance,
                hits: 1,
                staleness: 0,
                status,
                last_detection: Some((d.bbox, d.confidence)),
            });
            self.next_id += 1;
        }

        let warmup = self.frames_seen <= u64::from(self.cfg.min_hits);
        let mut out: Vec<TrackOutput> = self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed || warmup)
            .filter_map(|t| {
                t.last_detection.map(|(bbox, conf)| TrackOutput {
                    id: t.id,
                    bbox,
                    conf,
                })
            })
            .collect();
        out.sort_by_key(|o| o.id);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Detection;

    fn frame(idx: u64, boxes: &[BoundingBox]) -> FrameDetections {
        FrameDetections::new(
            idx,
            idx as f64 / 25.0,
            boxes.iter().map(|b| Detection::new(*b, 0.9)).collect(),
        )
    }

    #[test]
    fn iou_examples() {
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BoundingBox::new(20.0, 20.0, 30.0, 30.0)), 0.0);
        let v = iou(&BoundingBox::new(0.0, 0.0, 2.0, 2.0), &BoundingBox::new(1.0, 1.0, 3.0, 3.0));
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_match_keeps_id() {
        let b = BoundingBox::new(100.0, 100.0, 140.0, 200.0);
        let mut tr = Tracker::new(TrackerConfig::default()).unwrap();
        let mut ids = Vec::new();
        for i in 0..10 {
            let out = tr.step(&frame(i, &[b])).unwrap();
            assert_eq!(out.len(), 1);
            ids.push(out[0].id);
        }
        assert!(ids.iter().all(|&id| id == ids[0]));
        assert_eq!(tr.tracks()[0].staleness, 0);
    }

    #[test]
    fn stale_track_dies_and_id_is_not_reused() {
        let cfg = TrackerConfig::default();
        let b = BoundingBox::new(100.0, 100.0, 140.0, 200.0);
        let mut tr = Tracker::new(cfg.clone()).unwrap();
        let mut idx = 0;
        let mut first = 0;
        for _ in 0..5 {
            first = tr.step(&frame(idx, &[b])).unwrap()[0].id;
            idx += 1;
        }
        for _ in 0..=cfg.max_staleness {
            assert!(tr.step(&frame(idx, &[])).unwrap().is_empty());
            idx += 1;
        }
        assert!(tr.tracks().is_empty());
        tr.step(&frame(idx, &[b])).unwrap();
        let new_id = tr.tracks()[0].id;
        assert_ne!(new_id, first);
    }

    #[test]
    fn out_of_order_frames_rejected() {
        let mut tr = Tracker::new(TrackerConfig::default()).unwrap();
        tr.step(&frame(5, &[])).unwrap();
        assert_eq!(
            tr.step(&frame(5, &[])),
            Err(Error::Sequencing {
                previous: 5,
                got: 5
            })
        );
    }

    #[test]
    fn tentative_tracks_hidden_after_warmup() {
        let mut tr = Tracker::new(TrackerConfig::default()).unwrap();
        for i in 0..5 {
            tr.step(&frame(i, &[])).unwrap();
        }
        let b = BoundingBox::new(10.0, 10.0, 50.0, 110.0);
        assert!(tr.step(&frame(5, &[b])).unwrap().is_empty());
        assert!(tr.step(&frame(6, &[b])).unwrap().is_empty());
        assert_eq!(tr.step(&frame(7, &[b])).unwrap().len(), 1);
    }

    #[test]
    fn zero_velocity_prediction_is_fixpoint() {
        let model = Model::new(&TrackerConfig::default());
        let b = BoundingBox::new(10.0, 20.0, 50.0, 120.0);
        let (mut mean, mut cov) = model.init(&b);
        model.predict(&mut mean, &mut cov);
        let t = Track {
            id: 0,
            mean,
            covariance: cov,
            hits: 1,
            staleness: 0,
            status: TrackStatus::Tentative,
            last_detection: None,
        };
        let p = t.state_box();
        assert!((p.x_min - b.x_min).abs() < 1e-12 && (p.y_max - b.y_max).abs() < 1e-12);
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let mut tr = Tracker::new(TrackerConfig::default()).unwrap();
        for i in 0..50u64 {
            let x = 100.0 + 3.0 * i as f64 + if i % 2 == 0 { 1.5 } else { -1.5 };
            let det = if i % 7 == 3 { vec![] } else { vec![BoundingBox::new(x, 50.0, x + 40.0, 150.0)] };
            tr.step(&frame(i, &det)).unwrap();
        }
        for t in tr.tracks() {
            let c = &t.covariance;
            assert!((c - c.transpose()).abs().max() < 1e-9);
            let eig = c.symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e >= -1e-9), "{eig:?}");
        }
    }
}
