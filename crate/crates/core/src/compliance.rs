//! Windowed compliance metrics.
//!
//! Per-frame violation pairs accumulate into per-pair durations over a
//! window. Pairs whose duration exceeds the high-risk threshold become edges
//! of an undirected graph over track ids; its connected components are the
//! violation clusters. Closed windows roll up into horizon metrics that drive
//! edge-triggered alerts.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

pub type PersonId = u64;
pub type PairKey = (PersonId, PersonId);

fn key(a: PersonId, b: PersonId) -> PairKey {
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationSemantics {
    /// Total violation time within the window.
    #[default]
    Total,
    /// Longest uninterrupted run of violating frames.
    LongestRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComplianceConfig {
    pub window_span_s: f64,
    pub high_risk_threshold_s: f64,
    pub horizon_s: f64,
    pub semantics: DurationSemantics,
}

impl Default for ComplianceConfig {
    fn default() -> Self {
        Self {
            window_span_s: 30.0,
            high_risk_threshold_s: 5.0,
            horizon_s: 300.0,
            semantics: DurationSemantics::Total,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceWindow {
    pub start_ts: f64,
    pub span_s: f64,
    pub high_risk_threshold_s: f64,
    pub semantics: DurationSemantics,
    pub person_ids: BTreeSet<PersonId>,
    /// `t_ij` per unordered pair, seconds.
    pub durations: BTreeMap<PairKey, f64>,
    runs: BTreeMap<PairKey, f64>,
}

impl ComplianceWindow {
    pub fn new(start_ts: f64, cfg: &ComplianceConfig) -> Self {
        Self {
            start_ts,
            span_s: cfg.window_span_s,
            high_risk_threshold_s: cfg.high_risk_threshold_s,
            semantics: cfg.semantics,
            person_ids: BTreeSet::new(),
            durations: BTreeMap::new(),
            runs: BTreeMap::new(),
        }
    }

    pub fn end_ts(&self) -> f64 {
        self.start_ts + self.span_s
    }

    pub fn duration(&self, a: PersonId, b: PersonId) -> f64 {
        self.durations.get(&key(a, b)).copied().unwrap_or(0.0)
    }

    /// Adds one frame: every id seen in it, and the pairs in violation for
    /// `dt` seconds.
    pub fn accumulate(&mut self, ids: &[PersonId], pairs: &[PairKey], dt: f64) {
        self.person_ids.extend(ids.iter().copied());
        let frame_pairs: BTreeSet<PairKey> = pairs
            .iter()
            .filter(|(a, b)| a != b)
            .map(|&(a, b)| key(a, b))
            .collect();
        for &(a, b) in &frame_pairs {
            self.person_ids.insert(a);
            self.person_ids.insert(b);
        }
        match self.semantics {
            DurationSemantics::Total => {
                for p in frame_pairs {
                    let t = self.durations.entry(p).or_insert(0.0);
                    *t = (*t + dt).min(self.span_s);
                }
            }
            DurationSemantics::LongestRun => {
                self.runs.retain(|p, _| frame_pairs.contains(p));
                for p in frame_pairs {
                    let run = self.runs.entry(p).or_insert(0.0);
                    *run = (*run + dt).min(self.span_s);
                    let t = self.durations.entry(p).or_insert(0.0);
                    *t = t.max(*run);
                }
            }
        }
    }

    pub fn high_risk_graph(&self) -> ViolationGraph {
        ViolationGraph::from_edges(
            self.durations
                .iter()
                .filter(|(_, &t)| t > self.high_risk_threshold_s)
                .map(|(&p, _)| p),
        )
    }

    pub fn metrics(&self) -> ComplianceMetrics {
        let graph = self.high_risk_graph();
        ComplianceMetrics::from_parts(
            self.person_ids.len(),
            self.durations.values().filter(|&&t| t > 0.0).count(),
            &graph,
        )
    }

    /// Freezes the window for rolling aggregation.
    pub fn summary(&self) -> WindowSummary {
        WindowSummary {
            start_ts: self.start_ts,
            span_s: self.span_s,
            person_ids: self.person_ids.clone(),
            violating_pairs: self
                .durations
                .iter()
                .filter(|(_, &t)| t > 0.0)
                .map(|(&p, _)| p)
                .collect(),
            high_risk_edges: self.high_risk_graph().edges,
            metrics: self.metrics(),
        }
    }
}

/// Simple undirected graph over track ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ViolationGraph {
    pub nodes: BTreeSet<PersonId>,
    pub edges: BTreeSet<PairKey>,
}

impl ViolationGraph {
    pub fn from_edges(edges: impl IntoIterator<Item = PairKey>) -> Self {
        let edges: BTreeSet<PairKey> = edges
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| key(a, b))
            .collect();
        let nodes = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
        Self { nodes, edges }
    }

    pub fn degree(&self, id: PersonId) -> usize {
        self.edges.iter().filter(|(a, b)| *a == id || *b == id).count()
    }

    fn adjacency(&self) -> BTreeMap<PersonId, Vec<PersonId>> {
        let mut adj: BTreeMap<PersonId, Vec<PersonId>> = BTreeMap::new();
        for &(a, b) in &self.edges {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        adj
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: BTreeSet<PersonId>,
    /// Number of high-risk contacts of each member.
    pub degrees: BTreeMap<PersonId, usize>,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Connected components, largest first (ties by smallest member id).
pub fn clusters(g: &ViolationGraph) -> Vec<Cluster> {
    let adj = g.adjacency();
    let mut seen: BTreeSet<PersonId> = BTreeSet::new();
    let mut out = Vec::new();
    for &start in adj.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut members = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for &m in &adj[&n] {
                if seen.insert(m) {
                    members.insert(m);
                    queue.push_back(m);
                }
            }
        }
        let degrees = members.iter().map(|&m| (m, adj[&m].len())).collect();
        out.push(Cluster { members, degrees });
    }
    out.sort_by(|a, b| b.size().cmp(&a.size()).then(a.members.first().cmp(&b.members.first())));
    out
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplianceMetrics {
    pub distinct_people: usize,
    pub violation_pairs: usize,
    pub high_risk_pairs: usize,
    pub violators: usize,
    pub violations_to_violators: f64,
    /// Component sizes (all >= 2), largest first.
    pub cluster_sizes: Vec<usize>,
    pub max_cluster: usize,
}

impl ComplianceMetrics {
    fn from_parts(distinct_people: usize, violation_pairs: usize, graph: &ViolationGraph) -> Self {
        let cluster_sizes: Vec<usize> = clusters(graph).iter().map(Cluster::size).collect();
        let violators = graph.nodes.len();
        let high_risk_pairs = graph.edges.len();
        Self {
            distinct_people,
            violation_pairs,
            high_risk_pairs,
            violators,
            violations_to_violators: if violators == 0 {
                0.0
            } else {
                high_risk_pairs as f64 / violators as f64
            },
            max_cluster: cluster_sizes.first().copied().unwrap_or(0),
            cluster_sizes,
        }
    }

    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::DistinctPeople => self.distinct_people as f64,
            Metric::ViolationPairs => self.violation_pairs as f64,
            Metric::HighRiskPairs => self.high_risk_pairs as f64,
            Metric::Violators => self.violators as f64,
            Metric::Ratio => self.violations_to_violators,
            Metric::MaxCluster => self.max_cluster as f64,
        }
    }
}

/// Immutable snapshot of a closed window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub start_ts: f64,
    pub span_s: f64,
    pub person_ids: BTreeSet<PersonId>,
    pub violating_pairs: BTreeSet<PairKey>,
    pub high_risk_edges: BTreeSet<PairKey>,
    pub metrics: ComplianceMetrics,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RollingMetrics {
    #[serde(flatten)]
    pub metrics: ComplianceMetrics,
    pub window_count: usize,
    pub start_ts: f64,
    pub end_ts: f64,
}

/// Aggregates the most recent `ceil(horizon / span)` windows. Pair counts are
/// summed across windows; people, violators, ratio and clusters come from the
/// union of the windows' id sets and high-risk graphs.
pub fn rolling_metrics(history: &[WindowSummary], horizon_s: f64) -> RollingMetrics {
    let Some(last) = history.last() else {
        return RollingMetrics::default();
    };
    let count = ((horizon_s / last.span_s) - 1e-9).ceil().max(1.0) as usize;
    let recent = &history[history.len().saturating_sub(count)..];

    let people: BTreeSet<PersonId> = recent.iter().flat_map(|w| w.person_ids.iter().copied()).collect();
    let graph = ViolationGraph::from_edges(recent.iter().flat_map(|w| w.high_risk_edges.iter().copied()));
    let mut metrics = ComplianceMetrics::from_parts(people.len(), 0, &graph);
    metrics.violation_pairs = recent.iter().map(|w| w.metrics.violation_pairs).sum();
    metrics.high_risk_pairs = recent.iter().map(|w| w.metrics.high_risk_pairs).sum();
    RollingMetrics {
        metrics,
        window_count: recent.len(),
        start_ts: recent[0].start_ts,
        end_ts: last.start_ts + last.span_s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    DistinctPeople,
    ViolationPairs,
    HighRiskPairs,
    Violators,
    Ratio,
    MaxCluster,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::DistinctPeople => "distinct_people",
            Metric::ViolationPairs => "violation_pairs",
            Metric::HighRiskPairs => "high_risk_pairs",
            Metric::Violators => "violators",
            Metric::Ratio => "ratio",
            Metric::MaxCluster => "max_cluster",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AlertConfig {
    /// Alert when the metric rises above the threshold.
    pub thresholds: BTreeMap<Metric, f64>,
    /// The alert re-arms once the metric is at or below `threshold - rearm_margin`.
    pub rearm_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub metric: Metric,
    pub value: f64,
    pub threshold: f64,
    pub window_start_ts: f64,
    pub window_end_ts: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlertCheck {
    pub events: Vec<AlertEvent>,
    /// Set when no thresholds are configured.
    pub warning: Option<String>,
}

/// Edge-triggered threshold alerts, one monitor per feed.
#[derive(Debug, Clone)]
pub struct AlertMonitor {
    cfg: AlertConfig,
    breached: BTreeSet<Metric>,
}

impl AlertMonitor {
    pub fn new(cfg: AlertConfig) -> Self {
        Self {
            cfg,
            breached: BTreeSet::new(),
        }
    }

    pub fn check(&mut self, m: &RollingMetrics) -> AlertCheck {
        if self.cfg.thresholds.is_empty() {
            return AlertCheck {
                events: Vec::new(),
                warning: Some("no alert thresholds configured".into()),
            };
        }
        let mut events = Vec::new();
        for (&metric, &threshold) in &self.cfg.thresholds {
            let value = m.metrics.value(metric);
            if value > threshold {
                if self.breached.insert(metric) {
                    events.push(AlertEvent {
                        metric,
                        value,
                        threshold,
                        window_start_ts: m.start_ts,
                        window_end_ts: m.end_ts,
                    });
                }
            } else if value <= threshold - self.cfg.rearm_margin {
                self.breached.remove(&metric);
            }
        }
        AlertCheck { events, warning: None }
    }
}
