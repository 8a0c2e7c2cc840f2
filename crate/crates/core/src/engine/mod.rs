//! Exploration sessions.
//!
//! An [`Experiment`] owns the task configuration, every session of the task,
//! their action logs and the taboo registry. Each operation takes the caller's
//! notion of "now" in seconds so that simulated and live sessions share one
//! implementation.
//!
//! Session lifecycle:
//!
//! ```text
//! Active --(num_instances accepted)--> Completed
//! Active --(escape rule, taboo only)--> Escaped
//! Active --(abandon)-----------------> Abandoned   (log and detections purged)
//! ```

mod config;
mod log;
mod taboo;
mod validate;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{EscapeMode, StartPointPolicy, Strategy, TabooConfig, TaskConfig};
pub use log::{Action, ActionKind, ActionLogEntry, SessionStart, OUTSIDE_BOUNDARY};
pub use taboo::{CandidateCluster, TabooRegistry};
pub use validate::{triangulate, Rejection, Triangulation, TriangulationFailure};

use crate::geo::{bearing, haversine_distance, GeoPoint, Heading};
use crate::world::{random_start_point, NodeId, PoiId, VisitCounter, World, WorldError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub u64);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkerId(pub String);

impl From<&str> for WorkerId {
    fn from(value: &str) -> Self {
        WorkerId(value.to_string())
    }
}

impl From<String> for WorkerId {
    fn from(value: String) -> Self {
        WorkerId(value)
    }
}

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The `ordinal`-th accepted detection of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DetectionId {
    pub session: SessionId,
    pub ordinal: u32,
}

impl fmt::Display for DetectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-d{}", self.session, self.ordinal)
    }
}

/// A snapshot taken from a panorama node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub position: GeoPoint,
    pub heading: Heading,
    pub node: NodeId,
    pub t: f64,
}

/// A validated three-shot submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: DetectionId,
    pub worker_id: WorkerId,
    pub session_id: SessionId,
    pub shots: [Shot; 3],
    pub centroid: GeoPoint,
    pub dmax_m: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionState {
    Active,
    Completed,
    Escaped,
    Abandoned,
}

impl SessionState {
    /// Completed or escaped: the worker earned the reward.
    pub fn is_finished(self) -> bool {
        matches!(self, SessionState::Completed | SessionState::Escaped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: SessionId,
    pub worker_id: WorkerId,
    pub state: SessionState,
    pub current_node: NodeId,
    pub last_in_area_node: NodeId,
    pub pending_shots: Vec<Shot>,
    pub detections: Vec<Detection>,
    pub distance_walked_m: f64,
    pub started_at: f64,
    pub last_detection_at: Option<f64>,
    pub last_action_at: f64,
    pub taboo_snapshot: Vec<GeoPoint>,
    /// Start node followed by every node arrived at.
    pub path: Vec<NodeId>,
    pub reward: f64,
}

impl Session {
    /// Seconds since the last accepted detection, or since the start.
    pub fn since_last_detection(&self, now: f64) -> f64 {
        now - self.last_detection_at.unwrap_or(self.started_at)
    }

    pub fn moves(&self) -> usize {
        self.path.len().saturating_sub(1)
    }
}

/// Whether a session meets the escape rule at `now`.
pub fn check_escape(session: &Session, config: &TabooConfig, now: f64) -> bool {
    if session.state != SessionState::Active {
        return false;
    }
    let walked = session.distance_walked_m >= config.escape_distance_m;
    let waited = session.since_last_detection(now) >= config.escape_time_s;
    match config.escape_mode {
        EscapeMode::And => walked && waited,
        EscapeMode::Or => walked || waited,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome")]
pub enum MoveOutcome {
    Moved { node: NodeId, distance_m: f64 },
    Reverted { to: NodeId, code: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome")]
pub enum SubmitOutcome {
    Accepted { detection: Detection },
    RejectedTriangulation { reason: TriangulationFailure, dmax_m: Option<f64> },
    RejectedDuplicate { conflicting: GeoPoint },
    RejectedTaboo { taboo_position: GeoPoint },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("experiment is closed to new sessions")]
    ExperimentClosed,
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {0} is {1:?}, not active")]
    SessionNotActive(SessionId, SessionState),
    #[error("node {to} is neither adjacent to nor visible from {from}")]
    IllegalTarget { from: NodeId, to: NodeId },
    #[error("already holding three shots")]
    TooManyShots,
    #[error("no pending shot at index {0}")]
    NoSuchShot(usize),
    #[error("submission needs exactly 3 shots, have {0}")]
    WrongShotCount(usize),
    #[error("worker {0} already took part in this task")]
    WorkerAlreadyParticipated(WorkerId),
    #[error("session id {0} is already in use")]
    DuplicateSession(SessionId),
    #[error("time went backwards: {now} < {last}")]
    ClockWentBackwards { now: f64, last: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("replayed log diverged at entry {index} of {session}")]
    ReplayDiverged { session: SessionId, index: usize },
    #[error("malformed transcript: {0}")]
    MalformedTranscript(&'static str),
    #[error(transparent)]
    World(#[from] WorldError),
}

impl EngineError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::ExperimentClosed => "ExperimentClosed",
            EngineError::UnknownSession(_) => "UnknownSession",
            EngineError::SessionNotActive(..) => "SessionNotActive",
            EngineError::IllegalTarget { .. } => "IllegalTarget",
            EngineError::TooManyShots => "TooManyShots",
            EngineError::NoSuchShot(_) => "NoSuchShot",
            EngineError::WrongShotCount(_) => "WrongShotCount",
            EngineError::WorkerAlreadyParticipated(_) => "WorkerAlreadyParticipated",
            EngineError::DuplicateSession(_) => "DuplicateSession",
            EngineError::ClockWentBackwards { .. } => "ClockWentBackwards",
            EngineError::InvalidConfig(_) => "InvalidConfig",
            EngineError::ReplayDiverged { .. } => "ReplayDiverged",
            EngineError::MalformedTranscript(_) => "MalformedTranscript",
            EngineError::World(WorldError::UnknownNode(_)) => "UnknownNode",
            EngineError::World(WorldError::EmptyGraph) => "EmptyGraph",
            EngineError::World(_) => "InvalidWorld",
        }
    }
}

/// A node as seen from the current position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRef {
    pub id: NodeId,
    pub position: GeoPoint,
    pub bearing: Heading,
    pub distance_m: f64,
    pub in_area: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisiblePoi {
    pub id: PoiId,
    pub position: GeoPoint,
    pub bearing: Heading,
    pub distance_m: f64,
    /// Within the taboo radius of a position in the session's snapshot.
    pub taboo: bool,
}

/// What a worker sees from the current node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: SessionId,
    pub state: SessionState,
    pub node: NodeId,
    pub position: GeoPoint,
    pub neighbors: Vec<NodeRef>,
    pub visible_nodes: Vec<NodeRef>,
    pub pois: Vec<VisiblePoi>,
    pub pending_shots: usize,
    pub detections: usize,
    pub distance_walked_m: f64,
}

/// One exploration task and all of its sessions.
#[derive(Debug, Clone)]
pub struct Experiment {
    world: Arc<World>,
    task: TaskConfig,
    taboo: Option<TabooConfig>,
    registry: TabooRegistry,
    sessions: BTreeMap<SessionId, Session>,
    logs: BTreeMap<SessionId, Vec<ActionLogEntry>>,
    commit_order: Vec<SessionId>,
    visits: VisitCounter,
    next_session: u64,
    finished: u32,
    closed: bool,
}

impl Experiment {
    pub fn new(world: Arc<World>, task: TaskConfig, taboo: Option<TabooConfig>) -> Result<Self, EngineError> {
        task.validate()?;
        match (task.strategy, &taboo) {
            (Strategy::Taboo, Some(cfg)) => cfg.validate()?,
            (Strategy::Taboo, None) => {
                return Err(EngineError::InvalidConfig("taboo strategy needs a taboo configuration"))
            }
            (Strategy::Basic, Some(_)) => {
                return Err(EngineError::InvalidConfig("basic strategy takes no taboo configuration"))
            }
            (Strategy::Basic, None) => {}
        }
        Ok(Self {
            world,
            task,
            taboo,
            registry: TabooRegistry::new(),
            sessions: BTreeMap::new(),
            logs: BTreeMap::new(),
            commit_order: Vec::new(),
            visits: VisitCounter::new(),
            next_session: 1,
            finished: 0,
            closed: false,
        })
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn task(&self) -> &TaskConfig {
        &self.task
    }

    pub fn taboo_config(&self) -> Option<&TabooConfig> {
        self.taboo.as_ref()
    }

    pub fn registry(&self) -> &TabooRegistry {
        &self.registry
    }

    pub fn visits(&self) -> &VisitCounter {
        &self.visits
    }

    pub fn finished_count(&self) -> u32 {
        self.finished
    }

    pub fn active_count(&self) -> u32 {
        self.sessions.values().filter(|s| s.state == SessionState::Active).count() as u32
    }

    /// Open while unreserved execution slots remain. Active sessions hold a
    /// slot; abandoning releases it.
    pub fn is_open(&self) -> bool {
        !self.closed && self.finished + self.active_count() < self.task.num_executions
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.closed || self.finished >= self.task.num_executions
    }

    pub fn next_session_id(&self) -> SessionId {
        SessionId(self.next_session)
    }

    /// Never hand out ids below `next`, e.g. after a restart.
    pub fn reserve_session_ids(&mut self, next: SessionId) {
        self.next_session = self.next_session.max(next.0);
    }

    pub fn session(&self, id: SessionId) -> Option<&Session> {
        self.sessions.get(&id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn session_log(&self, id: SessionId) -> Option<&[ActionLogEntry]> {
        self.logs.get(&id).map(Vec::as_slice)
    }

    /// Finished sessions in the order they finished.
    pub fn committed_sessions(&self) -> impl Iterator<Item = &Session> {
        self.commit_order.iter().filter_map(|id| self.sessions.get(id))
    }

    pub fn committed_log(&self) -> impl Iterator<Item = &ActionLogEntry> {
        self.commit_order.iter().flat_map(|id| self.logs.get(id).into_iter().flatten())
    }

    pub fn committed_detections(&self) -> impl Iterator<Item = &Detection> {
        self.committed_sessions().flat_map(|s| s.detections.iter())
    }

    /// Starts a session at a random in-area node drawn with `seed`.
    pub fn start_session(&mut self, worker_id: WorkerId, seed: u64, now: f64) -> Result<SessionId, EngineError> {
        self.check_can_start(&worker_id)?;
        let node = random_start_point(&self.world, seed)?;
        self.open_session(None, worker_id, node, None, now)
    }

    /// Starts a session at a chosen node.
    pub fn start_session_at(&mut self, worker_id: WorkerId, node: NodeId, now: f64) -> Result<SessionId, EngineError> {
        self.check_can_start(&worker_id)?;
        self.world.node(node)?;
        self.open_session(None, worker_id, node, None, now)
    }

    fn check_can_start(&self, worker_id: &WorkerId) -> Result<(), EngineError> {
        if !self.is_open() {
            return Err(EngineError::ExperimentClosed);
        }
        if !self.task.allow_repeat
            && self.sessions.values().any(|s| &s.worker_id == worker_id && s.state != SessionState::Abandoned)
        {
            return Err(EngineError::WorkerAlreadyParticipated(worker_id.clone()));
        }
        Ok(())
    }

    fn open_session(
        &mut self,
        id: Option<SessionId>,
        worker_id: WorkerId,
        node: NodeId,
        snapshot: Option<Vec<GeoPoint>>,
        now: f64,
    ) -> Result<SessionId, EngineError> {
        let id = id.unwrap_or(SessionId(self.next_session));
        if self.sessions.contains_key(&id) {
            return Err(EngineError::DuplicateSession(id));
        }
        self.next_session = self.next_session.max(id.0 + 1);
        let taboo_snapshot = snapshot.unwrap_or_else(|| match self.task.strategy {
            Strategy::Taboo => self.registry.taboo_positions(),
            Strategy::Basic => Vec::new(),
        });
        let position = self.world.node(node)?.position;
        self.sessions.insert(
            id,
            Session {
                id,
                worker_id: worker_id.clone(),
                state: SessionState::Active,
                current_node: node,
                last_in_area_node: node,
                pending_shots: Vec::new(),
                detections: Vec::new(),
                distance_walked_m: 0.0,
                started_at: now,
                last_detection_at: None,
                last_action_at: now,
                taboo_snapshot: taboo_snapshot.clone(),
                path: alloc::vec![node],
                reward: 0.0,
            },
        );
        self.logs.insert(
            id,
            alloc::vec![ActionLogEntry {
                session_id: id,
                t: now,
                action: Action::Move {
                    from: None,
                    to: node,
                    from_position: None,
                    to_position: position,
                    distance_m: 0.0,
                    fast_forward: false,
                    start: Some(SessionStart { worker_id, taboo_snapshot }),
                },
            }],
        );
        Ok(id)
    }

    fn active_mut(&mut self, id: SessionId, now: f64) -> Result<&mut Session, EngineError> {
        let session = self.sessions.get_mut(&id).ok_or(EngineError::UnknownSession(id))?;
        if session.state != SessionState::Active {
            return Err(EngineError::SessionNotActive(id, session.state));
        }
        if now < session.last_action_at {
            return Err(EngineError::ClockWentBackwards { now, last: session.last_action_at });
        }
        Ok(session)
    }

    fn push_log(&mut self, id: SessionId, t: f64, action: Action) {
        self.logs.entry(id).or_default().push(ActionLogEntry { session_id: id, t, action });
    }

    /// Moves to a neighbor, or fast-forwards to a node visible down the
    /// street. Targets outside the area bounce back with an explanation.
    pub fn move_to(&mut self, id: SessionId, target: NodeId, now: f64) -> Result<MoveOutcome, EngineError> {
        let world = Arc::clone(&self.world);
        let session = self.active_mut(id, now)?;
        let from = session.current_node;
        let here = world.node(from)?;
        let adjacent = here.neighbors.contains(&target);
        if !adjacent && !here.visible_nodes.contains(&target) {
            return Err(EngineError::IllegalTarget { from, to: target });
        }
        let there = world.node(target)?;
        session.last_action_at = now;

        let outcome = if world.is_in_area(target) {
            let distance_m = haversine_distance(here.position, there.position);
            session.current_node = target;
            session.last_in_area_node = target;
            session.distance_walked_m += distance_m;
            session.path.push(target);
            self.push_log(
                id,
                now,
                Action::Move {
                    from: Some(from),
                    to: target,
                    from_position: Some(here.position),
                    to_position: there.position,
                    distance_m,
                    fast_forward: !adjacent,
                    start: None,
                },
            );
            MoveOutcome::Moved { node: target, distance_m }
        } else {
            let to = session.last_in_area_node;
            session.current_node = to;
            self.push_log(
                id,
                now,
                Action::BoundaryRevert { attempted: target, reverted_to: to, code: OUTSIDE_BOUNDARY.to_string() },
            );
            MoveOutcome::Reverted { to, code: OUTSIDE_BOUNDARY.to_string() }
        };
        self.after_action(id, now);
        Ok(outcome)
    }

    /// Returns the number of pending shots after taking this one.
    pub fn take_shot(&mut self, id: SessionId, heading: Heading, now: f64) -> Result<usize, EngineError> {
        let world = Arc::clone(&self.world);
        let session = self.active_mut(id, now)?;
        if session.pending_shots.len() >= 3 {
            return Err(EngineError::TooManyShots);
        }
        let node = session.current_node;
        let position = world.node(node)?.position;
        session.pending_shots.push(Shot { position, heading, node, t: now });
        session.last_action_at = now;
        let index = session.pending_shots.len() - 1;
        self.push_log(id, now, Action::ShotTaken { index, node, position, heading });
        self.after_action(id, now);
        Ok(index + 1)
    }

    pub fn discard_shot(&mut self, id: SessionId, index: usize, now: f64) -> Result<(), EngineError> {
        let session = self.active_mut(id, now)?;
        if index >= session.pending_shots.len() {
            return Err(EngineError::NoSuchShot(index));
        }
        let shot = session.pending_shots.remove(index);
        session.last_action_at = now;
        self.push_log(id, now, Action::ShotDiscarded { index, node: shot.node, heading: shot.heading });
        self.after_action(id, now);
        Ok(())
    }

    /// Validates the three pending shots.
    ///
    /// Checks run in order: triangulation, the worker's own earlier
    /// detections in this session, then (taboo strategy) the session's taboo
    /// snapshot. Rejected shots stay pending for the worker to fix.
    pub fn submit(&mut self, id: SessionId, now: f64) -> Result<SubmitOutcome, EngineError> {
        let delta_m = self.task.delta_m;
        let duplicate_radius_m = self.task.duplicate_radius_m;
        let num_instances = self.task.num_instances as usize;
        let taboo_radius_m = self.taboo.as_ref().map(|c| c.taboo_radius_m);
        let reward = self.task.reward;

        let session = self.active_mut(id, now)?;
        let shots: [Shot; 3] = session
            .pending_shots
            .as_slice()
            .try_into()
            .map_err(|_| EngineError::WrongShotCount(session.pending_shots.len()))?;
        session.last_action_at = now;

        let (outcome, action) = match triangulate(&shots, delta_m) {
            Err(rejection) => (
                SubmitOutcome::RejectedTriangulation { reason: rejection.reason, dmax_m: rejection.dmax_m },
                Action::SubmitFailTriangulation { reason: rejection.reason, dmax_m: rejection.dmax_m },
            ),
            Ok(tri) => {
                let duplicate = session
                    .detections
                    .iter()
                    .map(|d| d.centroid)
                    .find(|c| haversine_distance(*c, tri.centroid) <= duplicate_radius_m);
                let taboo_hit = taboo_radius_m.and_then(|r| {
                    session.taboo_snapshot.iter().copied().find(|p| haversine_distance(*p, tri.centroid) <= r)
                });
                if let Some(conflicting) = duplicate {
                    (
                        SubmitOutcome::RejectedDuplicate { conflicting },
                        Action::SubmitFailDuplicate { centroid: tri.centroid, conflicting },
                    )
                } else if let Some(taboo_position) = taboo_hit {
                    (
                        SubmitOutcome::RejectedTaboo { taboo_position },
                        Action::SubmitFailTaboo { centroid: tri.centroid, taboo_position },
                    )
                } else {
                    let detection = Detection {
                        id: DetectionId { session: id, ordinal: session.detections.len() as u32 },
                        worker_id: session.worker_id.clone(),
                        session_id: id,
                        shots,
                        centroid: tri.centroid,
                        dmax_m: tri.dmax_m,
                        t: now,
                    };
                    session.detections.push(detection.clone());
                    session.pending_shots.clear();
                    session.last_detection_at = Some(now);
                    let action = Action::SubmitOk {
                        detection: detection.id,
                        centroid: detection.centroid,
                        dmax_m: detection.dmax_m,
                    };
                    (SubmitOutcome::Accepted { detection }, action)
                }
            }
        };
        let completed = session.detections.len() >= num_instances;
        let n_detections = session.detections.len();
        if completed {
            session.state = SessionState::Completed;
            session.reward = reward;
        }
        self.push_log(id, now, action);
        if completed {
            self.push_log(id, now, Action::Complete { n_detections, reward });
            self.commit(id);
        } else {
            self.after_action(id, now);
        }
        Ok(outcome)
    }

    /// Ends a session without reward and purges everything it produced.
    pub fn abandon(&mut self, id: SessionId, now: f64) -> Result<(), EngineError> {
        let session = self.active_mut(id, now)?;
        session.state = SessionState::Abandoned;
        session.last_action_at = now;
        session.detections.clear();
        session.pending_shots.clear();
        session.path.clear();
        self.logs.remove(&id);
        Ok(())
    }

    fn after_action(&mut self, id: SessionId, now: f64) {
        let Some(config) = self.taboo.as_ref() else { return };
        let reward = self.task.reward;
        let Some(session) = self.sessions.get_mut(&id) else { return };
        if !check_escape(session, config, now) {
            return;
        }
        session.state = SessionState::Escaped;
        session.reward = reward;
        let action = Action::Escape {
            distance_walked_m: session.distance_walked_m,
            since_last_detection_s: session.since_last_detection(now),
            n_detections: session.detections.len(),
            reward,
        };
        self.push_log(id, now, action);
        self.commit(id);
    }

    fn commit(&mut self, id: SessionId) {
        let Some(session) = self.sessions.get(&id) else { return };
        self.finished += 1;
        self.commit_order.push(id);
        for node in &session.path {
            self.visits.record(id, *node);
        }
        if let Some(config) = &self.taboo {
            self.registry.update(&session.detections, config);
        }
    }

    /// What the worker of session `id` currently sees.
    pub fn view(&self, id: SessionId) -> Result<SessionView, EngineError> {
        let session = self.sessions.get(&id).ok_or(EngineError::UnknownSession(id))?;
        let here = self.world.node(session.current_node)?;
        let node_ref = |n: &NodeId| -> Result<NodeRef, EngineError> {
            let node = self.world.node(*n)?;
            Ok(NodeRef {
                id: *n,
                position: node.position,
                bearing: bearing(here.position, node.position),
                distance_m: haversine_distance(here.position, node.position),
                in_area: self.world.is_in_area(*n),
            })
        };
        let taboo_radius = self.taboo.as_ref().map_or(0.0, |c| c.taboo_radius_m);
        let pois = self
            .world
            .pois_visible_from(here.id)
            .iter()
            .filter_map(|pid| self.world.poi(*pid))
            .map(|poi| VisiblePoi {
                id: poi.id,
                position: poi.position,
                bearing: bearing(here.position, poi.position),
                distance_m: haversine_distance(here.position, poi.position),
                taboo: session.taboo_snapshot.iter().any(|t| haversine_distance(*t, poi.position) <= taboo_radius),
            })
            .collect();
        Ok(SessionView {
            session_id: id,
            state: session.state,
            node: here.id,
            position: here.position,
            neighbors: here.neighbors.iter().map(node_ref).collect::<Result<_, _>>()?,
            visible_nodes: here.visible_nodes.iter().map(node_ref).collect::<Result<_, _>>()?,
            pois,
            pending_shots: session.pending_shots.len(),
            detections: session.detections.len(),
            distance_walked_m: session.distance_walked_m,
        })
    }

    /// Re-executes one session's recorded log against this experiment and
    /// checks that it regenerates the same entries.
    ///
    /// The start entry supplies the session id, worker and taboo snapshot,
    /// so sessions can be replayed in any order.
    pub fn replay_session(&mut self, entries: &[ActionLogEntry]) -> Result<SessionId, EngineError> {
        let first = entries.first().ok_or(EngineError::MalformedTranscript("empty session log"))?;
        let id = first.session_id;
        let (node, start) = match &first.action {
            Action::Move { from: None, to, start: Some(start), .. } => (*to, start.clone()),
            _ => return Err(EngineError::MalformedTranscript("session log must open with a start entry")),
        };
        if entries.iter().any(|e| e.session_id != id) {
            return Err(EngineError::MalformedTranscript("entries from several sessions"));
        }
        self.world.node(node)?;
        self.open_session(Some(id), start.worker_id, node, Some(start.taboo_snapshot), first.t)?;
        for entry in &entries[1..] {
            let t = entry.t;
            match &entry.action {
                Action::Move { to, .. } => {
                    self.move_to(id, *to, t)?;
                }
                Action::BoundaryRevert { attempted, .. } => {
                    self.move_to(id, *attempted, t)?;
                }
                Action::ShotTaken { heading, .. } => {
                    self.take_shot(id, *heading, t)?;
                }
                Action::ShotDiscarded { index, .. } => self.discard_shot(id, *index, t)?,
                Action::SubmitOk { .. }
                | Action::SubmitFailTriangulation { .. }
                | Action::SubmitFailDuplicate { .. }
                | Action::SubmitFailTaboo { .. } => {
                    self.submit(id, t)?;
                }
                Action::Abandon { .. } => {
                    self.abandon(id, t)?;
                    return Ok(id);
                }
                Action::Escape { .. } | Action::Complete { .. } => {}
            }
        }
        let regenerated = self.logs.get(&id).map(Vec::as_slice).unwrap_or(&[]);
        if let Some(index) = regenerated
            .iter()
            .zip(entries)
            .position(|(a, b)| a != b)
            .or((regenerated.len() != entries.len()).then(|| regenerated.len().min(entries.len())))
        {
            return Err(EngineError::ReplayDiverged { session: id, index });
        }
        Ok(id)
    }
}
