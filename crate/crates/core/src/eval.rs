//! Map comparison, sampling curves and behavior statistics.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{consolidate, AggregationParams, PoICluster};
use crate::engine::{Action, ActionKind, ActionLogEntry, Detection, SessionId, SessionState, TabooConfig, WorkerId};
use crate::geo::{haversine_distance, GeoPoint};
use crate::rng::{derive_seed, stream_rng, STREAM_SAMPLING};
use crate::world::{coverage, Coverage, ExplorableGraph, VisitCounter, WorldError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("malformed log for session {session}: {reason}")]
    MalformedLog { session: SessionId, reason: &'static str },
    #[error("duplicate point id {0:?} in map")]
    DuplicateId(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub id: String,
    pub position: GeoPoint,
}

/// A named set of PoI positions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoIMap {
    pub name: String,
    pub points: Vec<MapPoint>,
    #[serde(default)]
    pub provenance: String,
}

impl PoIMap {
    pub fn new(name: impl Into<String>, points: Vec<MapPoint>) -> Result<Self, EvalError> {
        let mut seen = alloc::collections::BTreeSet::new();
        for p in &points {
            if !seen.insert(p.id.as_str()) {
                return Err(EvalError::DuplicateId(p.id.clone()));
            }
        }
        Ok(Self { name: name.into(), points, provenance: String::new() })
    }

    /// Builds a map with ids `"0"`, `"1"`, ...
    pub fn from_positions(name: impl Into<String>, positions: impl IntoIterator<Item = GeoPoint>) -> Self {
        Self {
            name: name.into(),
            points: positions
                .into_iter()
                .enumerate()
                .map(|(i, position)| MapPoint { id: i.to_string(), position })
                .collect(),
            provenance: String::new(),
        }
    }

    /// The confirmed map of an aggregation run, ids from cluster ids.
    pub fn from_clusters(name: impl Into<String>, clusters: &[PoICluster]) -> Self {
        Self {
            name: name.into(),
            points: clusters.iter().map(|c| MapPoint { id: c.id.to_string(), position: c.centroid }).collect(),
            provenance: String::from("dbscan"),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub a: usize,
    pub b: usize,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapComparison {
    pub threshold_m: f64,
    pub pairs: Vec<MatchedPair>,
    pub size_a: usize,
    pub size_b: usize,
    pub intersect: usize,
    pub a_minus_b: usize,
    pub b_minus_a: usize,
    pub union: usize,
    pub jaccard: f64,
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    #[serde(rename = "mapA")]
    pub map_a: String,
    #[serde(rename = "mapB")]
    pub map_b: String,
    #[serde(rename = "|A|")]
    pub size_a: usize,
    #[serde(rename = "|B|")]
    pub size_b: usize,
    pub union: usize,
    pub intersect: usize,
    #[serde(rename = "AminusB")]
    pub a_minus_b: usize,
    #[serde(rename = "BminusA")]
    pub b_minus_a: usize,
    pub jaccard: f64,
}

impl MapComparison {
    pub fn row(&self, a: &PoIMap, b: &PoIMap) -> ComparisonRow {
        ComparisonRow {
            map_a: a.name.clone(),
            map_b: b.name.clone(),
            size_a: self.size_a,
            size_b: self.size_b,
            union: self.union,
            intersect: self.intersect,
            a_minus_b: self.a_minus_b,
            b_minus_a: self.b_minus_a,
            jaccard: self.jaccard,
        }
    }
}

/// One-to-one matching: repeatedly pairs the globally closest unmatched
/// cross-map pair while it is within `threshold_m`.
///
/// Two empty maps are identical, so their Jaccard index is 1.
pub fn match_maps(a: &PoIMap, b: &PoIMap, threshold_m: f64) -> MapComparison {
    let mut candidates: Vec<MatchedPair> = Vec::new();
    for (i, pa) in a.points.iter().enumerate() {
        for (j, pb) in b.points.iter().enumerate() {
            let d = haversine_distance(pa.position, pb.position);
            if d <= threshold_m {
                candidates.push(MatchedPair { a: i, b: j, distance_m: d });
            }
        }
    }
    candidates.sort_by(|x, y| x.distance_m.total_cmp(&y.distance_m).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)));
    let mut used_a = alloc::vec![false; a.len()];
    let mut used_b = alloc::vec![false; b.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !used_a[c.a] && !used_b[c.b] {
            used_a[c.a] = true;
            used_b[c.b] = true;
            pairs.push(c);
        }
    }
    let intersect = pairs.len();
    let union = a.len() + b.len() - intersect;
    MapComparison {
        threshold_m,
        pairs,
        size_a: a.len(),
        size_b: b.len(),
        intersect,
        a_minus_b: a.len() - intersect,
        b_minus_a: b.len() - intersect,
        union,
        jaccard: if union == 0 { 1.0 } else { intersect as f64 / union as f64 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub mean_confirmed: f64,
}

/// Mean confirmed count over `n_samples` random subsets of `n` executions,
/// for every `n` from 0 to the number of executions.
///
/// Each `n` draws from its own seeded stream. Subset detections are
/// clustered in the executions' original order.
pub fn sampling_curve(
    executions: &[Vec<Detection>],
    params: &AggregationParams,
    n_samples: usize,
    seed: u64,
) -> Vec<CurvePoint> {
    let total = executions.len();
    (0..=total)
        .map(|n| {
            let mut rng = stream_rng(derive_seed(seed, STREAM_SAMPLING, n as u64), STREAM_SAMPLING);
            let draws = if n == 0 || n == total { 1 } else { n_samples.max(1) };
            let sum: usize = (0..draws)
                .map(|_| {
                    let mut picked = index::sample(&mut rng, total, n).into_vec();
                    picked.sort_unstable();
                    let dets: Vec<Detection> = picked.iter().flat_map(|&i| executions[i].iter().cloned()).collect();
                    consolidate(&dets, params).len()
                })
                .sum();
            CurvePoint { n, mean_confirmed: sum as f64 / draws as f64 }
        })
        .collect()
}

/// Member count of each confirmed PoI, largest first.
pub fn detections_per_confirmed(map: &[PoICluster]) -> Vec<usize> {
    let mut sizes: Vec<usize> = map.iter().map(PoICluster::n_detections).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// How many confirmed PoIs have each cluster size.
pub fn cluster_size_histogram(map: &[PoICluster]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for c in map {
        *hist.entry(c.n_detections()).or_insert(0) += 1;
    }
    hist
}

/// Short name for the interface-error kinds.
pub fn error_key(kind: ActionKind) -> Option<&'static str> {
    match kind {
        ActionKind::BoundaryRevert => Some("boundary"),
        ActionKind::SubmitFailTriangulation => Some("triangulation"),
        ActionKind::SubmitFailDuplicate => Some("duplicate"),
        ActionKind::SubmitFailTaboo => Some("taboo"),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub session_id: SessionId,
    pub worker_id: WorkerId,
    /// Last minus first timestamp.
    pub time_s: f64,
    /// Recomputed from the positions on move entries.
    pub distance_m: f64,
    pub moves: usize,
    pub n_detections: usize,
    /// Moves before the first detection.
    pub steps_to_first: usize,
    /// Entry `k` counts moves between detection `k` and the next one, or
    /// the end of the session.
    pub steps_after_detection: Vec<usize>,
    pub errors: BTreeMap<String, usize>,
    pub outcome: SessionState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeRow {
    pub session_id: SessionId,
    pub distance_walked_m: f64,
    pub since_last_detection_s: f64,
    pub n_detections: usize,
}

/// The escape thresholds, drawn as reference lines on the scatter plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeReference {
    pub distance_m: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorStats {
    pub sessions: Vec<SessionStats>,
    pub errors: BTreeMap<String, usize>,
    pub escapes: Vec<EscapeRow>,
    pub reference: Option<EscapeReference>,
}

/// Per-session behavior from finished sessions' log lines.
pub fn behavior_stats(entries: &[ActionLogEntry], taboo: Option<&TabooConfig>) -> Result<BehaviorStats, EvalError> {
    let mut order: Vec<SessionId> = Vec::new();
    let mut by_session: BTreeMap<SessionId, Vec<&ActionLogEntry>> = BTreeMap::new();
    for e in entries {
        by_session
            .entry(e.session_id)
            .or_insert_with(|| {
                order.push(e.session_id);
                Vec::new()
            })
            .push(e);
    }

    let mut sessions = Vec::new();
    let mut errors: BTreeMap<String, usize> = BTreeMap::new();
    let mut escapes = Vec::new();
    for id in order {
        let log = &by_session[&id];
        let malformed = |reason| EvalError::MalformedLog { session: id, reason };
        let worker_id = match &log[0].action {
            Action::Move { from: None, start: Some(start), .. } => start.worker_id.clone(),
            _ => return Err(malformed("first entry is not a session start")),
        };
        let mut stats = SessionStats {
            session_id: id,
            worker_id,
            time_s: log[log.len() - 1].t - log[0].t,
            distance_m: 0.0,
            moves: 0,
            n_detections: 0,
            steps_to_first: 0,
            steps_after_detection: Vec::new(),
            errors: BTreeMap::new(),
            outcome: SessionState::Active,
        };
        let mut last_t = log[0].t;
        for e in &log[1..] {
            if e.t < last_t {
                return Err(malformed("timestamps go backwards"));
            }
            last_t = e.t;
            if stats.outcome != SessionState::Active {
                return Err(malformed("entries after the session ended"));
            }
            match &e.action {
                Action::Move { from_position: Some(a), to_position, start: None, .. } => {
                    stats.distance_m += haversine_distance(*a, *to_position);
                    stats.moves += 1;
                    match stats.steps_after_detection.last_mut() {
                        Some(k) => *k += 1,
                        None => stats.steps_to_first += 1,
                    }
                }
                Action::Move { .. } => return Err(malformed("second session start")),
                Action::SubmitOk { .. } => {
                    stats.n_detections += 1;
                    stats.steps_after_detection.push(0);
                }
                Action::Escape { distance_walked_m, since_last_detection_s, n_detections, .. } => {
                    stats.outcome = SessionState::Escaped;
                    escapes.push(EscapeRow {
                        session_id: id,
                        distance_walked_m: *distance_walked_m,
                        since_last_detection_s: *since_last_detection_s,
                        n_detections: *n_detections,
                    });
                }
                Action::Complete { .. } => stats.outcome = SessionState::Completed,
                Action::Abandon { .. } => return Err(malformed("abandoned sessions must be purged")),
                other => {
                    if let Some(key) = error_key(other.kind()) {
                        *stats.errors.entry(key.to_string()).or_insert(0) += 1;
                        *errors.entry(key.to_string()).or_insert(0) += 1;
                    }
                }
            }
        }
        sessions.push(stats);
    }
    Ok(BehaviorStats {
        sessions,
        errors,
        escapes,
        reference: taboo.map(|c| EscapeReference { distance_m: c.escape_distance_m, time_s: c.escape_time_s }),
    })
}

/// Visit counts from log lines: every session's start node and every node
/// it moved to.
pub fn visits_from_log(entries: &[ActionLogEntry]) -> VisitCounter {
    let mut visits = VisitCounter::new();
    for e in entries {
        if let Action::Move { to, .. } = &e.action {
            visits.record(e.session_id, *to);
        }
    }
    visits
}

pub fn coverage_from_log(graph: &ExplorableGraph, entries: &[ActionLogEntry]) -> Result<Coverage, EvalError> {
    Ok(coverage(graph, &visits_from_log(entries))?)
}
