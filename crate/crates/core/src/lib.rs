//! Detector-agnostic social-distancing analytics.
//!
//! Detections enter through [`ingest`], are linked over time by [`tracker`],
//! projected to the ground by either a homography ([`geo_tool`]) or a fitted
//! projected-height camera model ([`geo_auto`]), and the resulting proximity
//! pairs are turned into windowed risk metrics by [`compliance`]. [`synth`]
//! generates scenes with known ground truth for all of the above.

pub mod calibration;
pub mod compliance;
pub mod error;
pub mod geo_auto;
pub mod geo_tool;
pub mod ingest;
pub mod mot;
pub mod optim;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use ingest::{BoundingBox, Detection, FrameDetections, FrameGeometry};
