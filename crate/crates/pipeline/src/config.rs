//! Application configuration, read from TOML or JSON.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use sdguard_core::compliance::{AlertConfig, ComplianceConfig};
use sdguard_core::ingest::IngestConfig;
use sdguard_core::tracker::TrackerConfig;
use sdguard_core::FrameGeometry;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{PipelineError, Result};

/// Where a feed's detections come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// MOT-format detection CSV, processed as fast as the pipeline allows.
    File(PathBuf),
    /// JSON lines on standard input.
    Stdin,
    /// JSON lines from the first client connecting to this TCP address.
    Tcp(String),
}

impl Source {
    pub fn is_live(&self) -> bool {
        !matches!(self, Source::File(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    Tool,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedConfig {
    pub id: String,
    pub source: Source,
    pub fps: f64,
    #[serde(deserialize_with = "geometry")]
    pub geometry: FrameGeometry,
    /// Calibration document; without one the feed runs uncalibrated until a
    /// document is posted to the API.
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    /// Expected mode of the calibration document, checked on load.
    #[serde(default)]
    pub mode: Option<CalibrationMode>,
    /// Still image served to the calibration UI.
    #[serde(default)]
    pub still_frame: Option<PathBuf>,
    /// Overrides the global alert thresholds.
    #[serde(default)]
    pub alerts: Option<AlertConfig>,
    /// Overrides the global alert hook.
    #[serde(default)]
    pub alert_hook: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiConfig {
    pub bind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppConfig {
    pub feeds: Vec<FeedConfig>,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub compliance: ComplianceConfig,
    #[serde(default)]
    pub alerts: AlertConfig,
    /// Command run once per alert; see [`crate::feed`] for its environment.
    #[serde(default)]
    pub alert_hook: Option<Vec<String>>,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub api: Option<ApiConfig>,
    /// Capacity of each inter-stage queue, in frames.
    #[serde(default = "default_queue_capacity")]
    pub queue_capacity: usize,
    /// Fraction of each box, from the top, flagged for blurring.
    #[serde(default = "default_blur_fraction")]
    pub blur_fraction: f64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_queue_capacity() -> usize {
    64
}

fn default_blur_fraction() -> f64 {
    0.2
}

/// Accepts either `"WxH"` or `{"w": .., "h": ..}`.
fn geometry<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<FrameGeometry, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Text(String),
        Object(FrameGeometry),
    }
    match Repr::deserialize(d)? {
        Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        Repr::Object(g) => FrameGeometry::new(g.width, g.height).map_err(serde::de::Error::custom),
    }
}

impl AppConfig {
    /// A configuration with default settings for `feeds`.
    pub fn new(feeds: Vec<FeedConfig>) -> Self {
        Self {
            feeds,
            tracker: TrackerConfig::default(),
            compliance: ComplianceConfig::default(),
            alerts: AlertConfig::default(),
            alert_hook: None,
            ingest: IngestConfig::default(),
            output_dir: default_output_dir(),
            api: None,
            queue_capacity: default_queue_capacity(),
            blur_fraction: default_blur_fraction(),
        }
    }

    /// Parses `text` as JSON when `json` is set, TOML otherwise.
    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let cfg: AppConfig = if json {
            serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = Self::parse(&text, json)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for feed in &mut self.feeds {
            if let Source::File(p) = &mut feed.source {
                fix(p);
            }
            if let Some(p) = &mut feed.calibration {
                fix(p);
            }
            if let Some(p) = &mut feed.still_frame {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(PipelineError::Config(m));
        if self.feeds.is_empty() {
            return err("at least one feed is required".into());
        }
        let mut ids = BTreeSet::new();
        for f in &self.feeds {
            if f.id.is_empty() || !f.id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return err(format!("feed id {:?} must be non-empty and use [A-Za-z0-9._-]", f.id));
            }
            if !ids.insert(&f.id) {
                return err(format!("duplicate feed id {:?}", f.id));
            }
            if !(f.fps > 0.0 && f.fps.is_finite()) {
                return err(format!("feed {}: fps must be positive", f.id));
            }
            if f.alert_hook.as_ref().is_some_and(Vec::is_empty) {
                return err(format!("feed {}: alert_hook must name a command", f.id));
            }
        }
        self.tracker.validate()?;
        let c = &self.compliance;
        if !(c.window_span_s > 0.0 && c.high_risk_threshold_s >= 0.0 && c.horizon_s > 0.0) {
            return err("compliance spans and thresholds must be positive".into());
        }
        if self.queue_capacity == 0 {
            return err("queue_capacity must be at least 1".into());
        }
        if !(self.blur_fraction > 0.0 && self.blur_fraction <= 1.0) {
            return err("blur_fraction must lie in (0, 1]".into());
        }
        if self.alert_hook.as_ref().is_some_and(Vec::is_empty) {
            return err("alert_hook must name a command".into());
        }
        Ok(())
    }
}
