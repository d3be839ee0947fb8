//! Per-feed workers.
//!
//! Each feed runs three stages on their own threads, joined by bounded
//! queues: a source reading detections, the analysis stage (tracking,
//! violation test, compliance windows, alerts) and a writer appending
//! JSON lines to `<output_dir>/<feed>/{tracks,overlay,metrics}.jsonl`.
//!
//! File sources block when the analysis queue is full. Live sources never
//! block: the oldest queued frame is discarded and counted instead.
//!
//! The alert hook runs once per alert event with `SDGUARD_FEED`,
//! `SDGUARD_METRIC`, `SDGUARD_VALUE`, `SDGUARD_THRESHOLD`,
//! `SDGUARD_WINDOW_START` and `SDGUARD_WINDOW_END` in its environment.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, PoisonError, RwLock};
use std::thread;

use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};
use sdguard_core::calibration::{Calibration, CalibrationDoc, FieldError, FrameViolations};
use sdguard_core::compliance::{
    rolling_metrics, AlertConfig, AlertEvent, AlertMonitor, ComplianceConfig, ComplianceWindow, Metric,
    RollingMetrics, WindowSummary,
};
use sdguard_core::ingest::{read_detection_csv, IngestConfig, LiveFrameParser};
use sdguard_core::mot::IdentifiedFrames;
use sdguard_core::tracker::{TrackOutput, Tracker, TrackerConfig};
use sdguard_core::FrameDetections;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;
use tracing::{info, warn};

use crate::config::{AppConfig, FeedConfig, Source};
use crate::error::{PipelineError, Result};
use crate::overlay::OverlayRecord;

/// History kept for API queries: one day of windows.
const HISTORY_SPAN_S: f64 = 86_400.0;
const OVERLAY_SUBSCRIBER_BUFFER: usize = 256;

fn read<T>(l: &RwLock<T>) -> std::sync::RwLockReadGuard<'_, T> {
    l.read().unwrap_or_else(PoisonError::into_inner)
}

fn write<T>(l: &RwLock<T>) -> std::sync::RwLockWriteGuard<'_, T> {
    l.write().unwrap_or_else(PoisonError::into_inner)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum FeedStatus {
    Starting,
    Running,
    Finished,
    Faulted { reason: String },
}

/// A validated calibration together with the document it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveCalibration {
    pub doc: CalibrationDoc,
    pub calibration: Calibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedSummary {
    pub id: String,
    pub status: FeedStatus,
    pub mode: Option<String>,
    pub frames: u64,
    pub dropped_frames: u64,
    pub windows: usize,
    pub still_frame: bool,
}

/// State of one feed shared between its worker and the API.
#[derive(Debug)]
pub struct FeedHandle {
    pub config: FeedConfig,
    status: RwLock<FeedStatus>,
    calibration: RwLock<Option<Arc<ActiveCalibration>>>,
    history: RwLock<Vec<WindowSummary>>,
    overlay_tx: broadcast::Sender<Arc<str>>,
    frames: AtomicU64,
    dropped: AtomicU64,
}

impl FeedHandle {
    pub fn new(config: FeedConfig) -> Arc<Self> {
        let (overlay_tx, _) = broadcast::channel(OVERLAY_SUBSCRIBER_BUFFER);
        Arc::new(Self {
            config,
            status: RwLock::new(FeedStatus::Starting),
            calibration: RwLock::new(None),
            history: RwLock::new(Vec::new()),
            overlay_tx,
            frames: AtomicU64::new(0),
            dropped: AtomicU64::new(0),
        })
    }

    pub fn id(&self) -> &str {
        &self.config.id
    }

    pub fn status(&self) -> FeedStatus {
        read(&self.status).clone()
    }

    fn set_status(&self, s: FeedStatus) {
        *write(&self.status) = s;
    }

    pub fn calibration(&self) -> Option<Arc<ActiveCalibration>> {
        read(&self.calibration).clone()
    }

    /// Validates `doc` against this feed and makes it current from the next
    /// frame on.
    pub fn set_calibration(&self, doc: CalibrationDoc) -> std::result::Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        if doc.frame() != self.config.geometry {
            let g = self.config.geometry;
            errors.push(FieldError {
                field: "frame".into(),
                message: format!("document frame does not match the feed's {}x{}", g.width, g.height),
            });
        }
        if let Some(mode) = self.config.mode {
            let expected = serde_json::to_value(mode).ok();
            if expected.as_ref().and_then(|v| v.as_str()) != Some(doc.mode()) {
                errors.push(FieldError {
                    field: "mode".into(),
                    message: format!("feed expects {} calibration, got {}", expected.unwrap_or_default(), doc.mode()),
                });
            }
        }
        match doc.validate() {
            Ok(calibration) if errors.is_empty() => {
                *write(&self.calibration) = Some(Arc::new(ActiveCalibration { doc, calibration }));
                Ok(())
            }
            Ok(_) => Err(errors),
            Err(more) => {
                errors.extend(more);
                Err(errors)
            }
        }
    }

    pub fn rolling(&self, horizon_s: f64) -> RollingMetrics {
        rolling_metrics(&read(&self.history), horizon_s)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<str>> {
        self.overlay_tx.subscribe()
    }

    pub fn summary(&self) -> FeedSummary {
        FeedSummary {
            id: self.config.id.clone(),
            status: self.status(),
            mode: self.calibration().map(|c| c.doc.mode().to_string()),
            frames: self.frames.load(Ordering::Relaxed),
            dropped_frames: self.dropped.load(Ordering::Relaxed),
            windows: read(&self.history).len(),
            still_frame: self.config.still_frame.is_some(),
        }
    }
}

/// One JSON-lines record per closed window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub feed: String,
    pub window_start_ts: f64,
    pub span_s: f64,
    pub distinct_people: usize,
    pub violation_pairs: usize,
    pub high_risk_pairs: usize,
    pub violators: usize,
    pub ratio: f64,
    pub clusters: Vec<usize>,
    pub alerts: Vec<AlertRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub metric: Metric,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracksRecord {
    pub frame: u64,
    pub ts: f64,
    pub tracks: Vec<TrackOutput>,
}

/// Reads a `tracks.jsonl` file back into identified boxes per frame.
pub fn read_tracks_jsonl<R: BufRead>(reader: R) -> Result<IdentifiedFrames> {
    let mut out = IdentifiedFrames::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io("tracks", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: TracksRecord = serde_json::from_str(&line).map_err(|e| {
            PipelineError::Core(sdguard_core::Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })?;
        out.insert(r.frame, r.tracks.into_iter().map(|t| (t.id, t.bbox)).collect());
    }
    Ok(out)
}

/// Settings shared by all feeds, with per-feed overrides applied.
#[derive(Debug, Clone)]
pub struct FeedSettings {
    pub tracker: TrackerConfig,
    pub compliance: ComplianceConfig,
    pub alerts: AlertConfig,
    pub alert_hook: Option<Vec<String>>,
    pub ingest: IngestConfig,
    pub output_dir: PathBuf,
    pub queue_capacity: usize,
    pub blur_fraction: f64,
}

impl FeedSettings {
    pub fn for_feed(app: &AppConfig, feed: &FeedConfig) -> Self {
        Self {
            tracker: app.tracker.clone(),
            compliance: app.compliance.clone(),
            alerts: feed.alerts.clone().unwrap_or_else(|| app.alerts.clone()),
            alert_hook: feed.alert_hook.clone().or_else(|| app.alert_hook.clone()),
            ingest: IngestConfig {
                fps: feed.fps,
                ..app.ingest.clone()
            },
            output_dir: app.output_dir.join(&feed.id),
            queue_capacity: app.queue_capacity,
            blur_fraction: app.blur_fraction,
        }
    }
}

enum Line {
    Tracks(String),
    Overlay(String),
    Metrics(String),
}

fn to_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("records serialize");
    s.push('\n');
    s
}

/// Runs a feed to completion, recording the outcome in its status.
pub fn run_feed(handle: &Arc<FeedHandle>, settings: &FeedSettings) -> Result<()> {
    let result = run_feed_inner(handle, settings);
    match &result {
        Ok(()) => handle.set_status(FeedStatus::Finished),
        Err(e) => {
            warn!(feed = handle.id(), "feed faulted: {e}");
            handle.set_status(FeedStatus::Faulted { reason: e.to_string() });
        }
    }
    result
}

fn load_calibration(handle: &FeedHandle) -> Result<()> {
    let Some(path) = &handle.config.calibration else {
        warn!(feed = handle.id(), "no calibration configured; violations are not evaluated until one is posted");
        return Ok(());
    };
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let doc = CalibrationDoc::from_json(&text).map_err(PipelineError::Calibration)?;
    handle.set_calibration(doc).map_err(PipelineError::Calibration)
}

fn run_feed_inner(handle: &Arc<FeedHandle>, settings: &FeedSettings) -> Result<()> {
    load_calibration(handle)?;
    let tracker = Tracker::new(settings.tracker.clone())?;
    // File sources are parsed up front so a bad file faults the feed before
    // any output is written.
    let preloaded = match &handle.config.source {
        Source::File(path) => {
            let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
            Some(read_detection_csv(BufReader::new(file), handle.config.geometry, &settings.ingest, 0)?)
        }
        _ => None,
    };
    std::fs::create_dir_all(&settings.output_dir).map_err(|e| PipelineError::io(&settings.output_dir, e))?;
    let open = |name: &str| -> Result<BufWriter<File>> {
        let p = settings.output_dir.join(name);
        Ok(BufWriter::new(File::create(&p).map_err(|e| PipelineError::io(&p, e))?))
    };
    let mut writers = [open("tracks.jsonl")?, open("overlay.jsonl")?, open("metrics.jsonl")?];

    handle.set_status(FeedStatus::Running);
    info!(feed = handle.id(), "feed started");

    let (frame_tx, frame_rx) = bounded::<FrameDetections>(settings.queue_capacity);
    let (line_tx, line_rx) = bounded::<Line>(settings.queue_capacity);

    let source = {
        let handle = Arc::clone(handle);
        let ingest = settings.ingest.clone();
        let drop_rx = frame_rx.clone();
        thread::Builder::new()
            .name(format!("{}-source", handle.id()))
            .spawn(move || read_source(&handle, preloaded, &ingest, frame_tx, drop_rx))
            .map_err(|e| PipelineError::Config(format!("cannot spawn source thread: {e}")))?
    };
    let writer = thread::Builder::new()
        .name(format!("{}-writer", handle.id()))
        .spawn(move || -> std::io::Result<()> {
            for line in line_rx {
                let (w, s) = match line {
                    Line::Tracks(s) => (&mut writers[0], s),
                    Line::Overlay(s) => (&mut writers[1], s),
                    Line::Metrics(s) => (&mut writers[2], s),
                };
                w.write_all(s.as_bytes())?;
            }
            writers.iter_mut().try_for_each(Write::flush)
        })
        .map_err(|e| PipelineError::Config(format!("cannot spawn writer thread: {e}")))?;

    let mut analysis = Analysis::new(handle, settings, tracker, line_tx);
    let analysed = frame_rx.iter().try_for_each(|f| analysis.frame(&f)).and_then(|()| analysis.finish());
    drop(frame_rx);
    drop(analysis);

    let written = writer
        .join()
        .map_err(|_| PipelineError::Config("writer thread panicked".into()))?
        .map_err(|e| PipelineError::io(&settings.output_dir, e));
    analysed?;
    written?;
    // Live sources may still be blocked on their input; only file sources
    // are guaranteed to have finished once the queue closed.
    if !handle.config.source.is_live() || source.is_finished() {
        source
            .join()
            .map_err(|_| PipelineError::Config("source thread panicked".into()))??;
    }
    info!(feed = handle.id(), "feed finished");
    Ok(())
}

fn read_source(
    handle: &FeedHandle,
    preloaded: Option<Vec<FrameDetections>>,
    ingest: &IngestConfig,
    tx: Sender<FrameDetections>,
    drop_rx: Receiver<FrameDetections>,
) -> Result<()> {
    match &handle.config.source {
        Source::File(_) => {
            let frames = preloaded.unwrap_or_default();
            drop(drop_rx);
            for f in frames {
                if tx.send(f).is_err() {
                    break;
                }
            }
            Ok(())
        }
        Source::Stdin => {
            let stdin = std::io::stdin();
            read_live(handle, stdin.lock(), ingest, &tx, &drop_rx)
        }
        Source::Tcp(addr) => {
            let listener = TcpListener::bind(addr).map_err(|e| PipelineError::io(addr, e))?;
            info!(feed = handle.id(), "waiting for a live client on {addr}");
            let (stream, peer) = listener.accept().map_err(|e| PipelineError::io(addr, e))?;
            info!(feed = handle.id(), "live client {peer} connected");
            read_live(handle, BufReader::new(stream), ingest, &tx, &drop_rx)
        }
    }
}

fn read_live<R: BufRead>(
    handle: &FeedHandle,
    reader: R,
    ingest: &IngestConfig,
    tx: &Sender<FrameDetections>,
    drop_rx: &Receiver<FrameDetections>,
) -> Result<()> {
    let mut parser = LiveFrameParser::new(handle.config.geometry, ingest.clone());
    for line in reader.lines() {
        let line = line.map_err(|e| PipelineError::io("live input", e))?;
        let frame = match parser.parse_line(&line) {
            Ok(Some(f)) => f,
            Ok(None) => continue,
            Err(e) => {
                warn!(feed = handle.id(), "skipping live record: {e}");
                continue;
            }
        };
        let mut pending = frame;
        loop {
            match tx.try_send(pending) {
                Ok(()) => break,
                Err(TrySendError::Full(f)) => {
                    if drop_rx.try_recv().is_ok() {
                        handle.dropped.fetch_add(1, Ordering::Relaxed);
                    }
                    pending = f;
                }
                Err(TrySendError::Disconnected(_)) => return Ok(()),
            }
        }
    }
    Ok(())
}

/// The analysis stage of one feed.
struct Analysis<'a> {
    handle: &'a FeedHandle,
    settings: &'a FeedSettings,
    tracker: Tracker,
    window: Option<ComplianceWindow>,
    monitor: AlertMonitor,
    hooks: Vec<Child>,
    out: Sender<Line>,
    dt: f64,
    max_history: usize,
}

impl<'a> Analysis<'a> {
    fn new(handle: &'a FeedHandle, settings: &'a FeedSettings, tracker: Tracker, out: Sender<Line>) -> Self {
        if settings.alerts.thresholds.is_empty() {
            warn!(feed = handle.id(), "no alert thresholds configured; alerts are disabled");
        }
        let span = settings.compliance.window_span_s;
        Self {
            handle,
            settings,
            tracker,
            window: None,
            monitor: AlertMonitor::new(settings.alerts.clone()),
            hooks: Vec::new(),
            out,
            dt: 1.0 / handle.config.fps,
            max_history: (HISTORY_SPAN_S.max(settings.compliance.horizon_s) / span).ceil() as usize,
        }
    }

    fn emit(&self, line: Line) -> Result<()> {
        self.out
            .send(line)
            .map_err(|_| PipelineError::Config("output writer stopped".into()))
    }

    fn frame(&mut self, f: &FrameDetections) -> Result<()> {
        let tracks = self.tracker.step(f)?;
        let boxes: Vec<_> = tracks.iter().map(|t| t.bbox).collect();
        let violations = match self.handle.calibration() {
            Some(active) => active.calibration.violations(&boxes),
            None => FrameViolations::default(),
        };
        let overlay = OverlayRecord::build(
            self.handle.id(),
            f.frame_index,
            f.timestamp,
            &tracks,
            &violations,
            self.settings.blur_fraction,
        );

        let span = self.settings.compliance.window_span_s;
        let start = (f.timestamp / span).floor() * span;
        if self.window.as_ref().is_some_and(|w| f.timestamp >= w.end_ts()) {
            let mut w = self.window.take().expect("window present");
            // Consecutive windows, including empty ones across input gaps.
            while w.start_ts < start {
                let next = w.end_ts();
                self.close(&w)?;
                w = ComplianceWindow::new(next, &self.settings.compliance);
            }
            self.window = Some(w);
        }
        let window = self
            .window
            .get_or_insert_with(|| ComplianceWindow::new(start, &self.settings.compliance));
        window.accumulate(&overlay.ids(), &overlay.violation_pairs(), self.dt);

        self.emit(Line::Tracks(to_line(&TracksRecord {
            frame: f.frame_index,
            ts: f.timestamp,
            tracks,
        })))?;
        let line = to_line(&overlay);
        let _ = self.handle.overlay_tx.send(Arc::from(line.trim_end()));
        self.emit(Line::Overlay(line))?;
        self.handle.frames.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn close(&mut self, w: &ComplianceWindow) -> Result<()> {
        let summary = w.summary();
        let rolling = {
            let mut history = write(&self.handle.history);
            history.push(summary.clone());
            let excess = history.len().saturating_sub(self.max_history);
            history.drain(..excess);
            rolling_metrics(&history, self.settings.compliance.horizon_s)
        };
        let check = self.monitor.check(&rolling);
        for e in &check.events {
            warn!(
                feed = self.handle.id(),
                "alert: {} = {} exceeds {}",
                e.metric.name(),
                e.value,
                e.threshold
            );
            self.run_hook(e);
        }
        let m = &summary.metrics;
        self.emit(Line::Metrics(to_line(&MetricsRecord {
            feed: self.handle.id().to_string(),
            window_start_ts: summary.start_ts,
            span_s: summary.span_s,
            distinct_people: m.distinct_people,
            violation_pairs: m.violation_pairs,
            high_risk_pairs: m.high_risk_pairs,
            violators: m.violators,
            ratio: m.violations_to_violators,
            clusters: m.cluster_sizes.clone(),
            alerts: check
                .events
                .iter()
                .map(|e| AlertRecord {
                    metric: e.metric,
                    value: e.value,
                    threshold: e.threshold,
                })
                .collect(),
        })))
    }

    fn run_hook(&mut self, e: &AlertEvent) {
        let Some(cmd) = &self.settings.alert_hook else { return };
        let spawned = Command::new(&cmd[0])
            .args(&cmd[1..])
            .env("SDGUARD_FEED", self.handle.id())
            .env("SDGUARD_METRIC", e.metric.name())
            .env("SDGUARD_VALUE", e.value.to_string())
            .env("SDGUARD_THRESHOLD", e.threshold.to_string())
            .env("SDGUARD_WINDOW_START", e.window_start_ts.to_string())
            .env("SDGUARD_WINDOW_END", e.window_end_ts.to_string())
            .stdin(Stdio::null())
            .spawn();
        match spawned {
            Ok(child) => self.hooks.push(child),
            Err(err) => warn!(feed = self.handle.id(), "alert hook {:?} failed to start: {err}", cmd[0]),
        }
    }

    fn finish(&mut self) -> Result<()> {
        let w = self
            .window
            .take()
            .unwrap_or_else(|| ComplianceWindow::new(0.0, &self.settings.compliance));
        self.close(&w)?;
        for mut child in self.hooks.drain(..) {
            if let Err(e) = child.wait() {
                warn!(feed = self.handle.id(), "alert hook did not complete: {e}");
            }
        }
        Ok(())
    }
}
