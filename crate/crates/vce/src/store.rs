//! Live task store with file persistence.
//!
//! ```text
//! <root>/meta.json                      next task and session counters
//! <root>/tasks/<id>/task.json           task spec and manual close flag
//! <root>/tasks/<id>/world.geojson
//! <root>/tasks/<id>/actions.jsonl       finished sessions, commit order
//! <root>/tasks/<id>/journal/<sid>.jsonl one per active session
//! <root>/tasks/<id>/registry.json       taboo registry snapshot
//! ```
//!
//! Every accepted action is appended to its session's journal before the
//! call returns. Restoring replays finished sessions in commit order, then
//! the journals.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vce_core::engine::SessionView;
use vce_core::rng::{derive_seed, STREAM_START_POINT};
use vce_core::{
    AggregationParams, EngineError, Experiment, GeoPoint, NodeId, Session, SessionId, SessionState, TabooConfig,
    TaskConfig, WorkerId, World,
};

use crate::error::VceError;
use crate::{geojson, logio};

/// Sessions idle for longer are abandoned.
pub const IDLE_TIMEOUT_S: f64 = 30.0 * 60.0;

pub trait Clock: Send + Sync {
    /// Seconds on an arbitrary but fixed epoch.
    fn now(&self) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<Mutex<f64>>);

impl ManualClock {
    pub fn new(t: f64) -> Self {
        Self(Arc::new(Mutex::new(t)))
    }

    pub fn set(&self, t: f64) {
        *self.0.lock().unwrap() = t;
    }

    pub fn advance(&self, dt: f64) {
        *self.0.lock().unwrap() += dt;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        *self.0.lock().unwrap()
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Persist(#[from] VceError),
}

pub type StoreResult<T> = Result<T, StoreError>;

/// What a task is created from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSpec {
    pub task: TaskConfig,
    /// Defaults are used when the strategy is taboo and this is absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taboo: Option<TabooConfig>,
    pub aggregation: AggregationParams,
    /// HTML shown to workers.
    pub instructions: String,
    /// Seeds random start points.
    pub seed: u64,
}

impl TaskSpec {
    fn normalized(mut self) -> Self {
        match self.task.strategy {
            vce_core::Strategy::Taboo => {
                self.taboo.get_or_insert_with(TabooConfig::default);
            }
            vce_core::Strategy::Basic => self.taboo = None,
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub id: String,
    #[serde(flatten)]
    pub spec: TaskSpec,
    pub status: TaskStatus,
    pub completed_executions: u32,
    pub active_sessions: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStarted {
    pub session_id: SessionId,
    pub task_id: String,
    pub worker_id: WorkerId,
    pub start_node: NodeId,
    pub position: GeoPoint,
    pub instructions: String,
    /// Taboo positions frozen for this session.
    pub taboo_markers: Vec<GeoPoint>,
    pub view: SessionView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub task_id: String,
    #[serde(flatten)]
    pub session: Session,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RootMeta {
    next_task: u64,
    next_session: u64,
}

impl Default for RootMeta {
    fn default() -> Self {
        Self { next_task: 0, next_session: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaskFile {
    id: String,
    spec: TaskSpec,
    closed: bool,
}

struct TaskEntry {
    spec: TaskSpec,
    exp: Experiment,
    closed: bool,
    /// Log entries of each active session already on disk.
    journaled: BTreeMap<SessionId, usize>,
}

pub struct Store {
    root: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    last_now: f64,
    idle_timeout_s: f64,
    tasks: BTreeMap<String, TaskEntry>,
    session_task: BTreeMap<SessionId, String>,
    meta: RootMeta,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), VceError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(VceError::io(&tmp))?;
    f.write_all(bytes).map_err(VceError::io(&tmp))?;
    f.sync_all().map_err(VceError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(VceError::io(path))
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), VceError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, VceError> {
    let text = fs::read_to_string(path).map_err(VceError::io(path))?;
    serde_json::from_str(&text).map_err(|e| VceError::parse(path, e))
}

/// Log lines split into per-session runs, in order of first appearance.
fn group_sessions(log: Vec<vce_core::ActionLogEntry>) -> Vec<Vec<vce_core::ActionLogEntry>> {
    let mut order: Vec<SessionId> = Vec::new();
    let mut by: BTreeMap<SessionId, Vec<vce_core::ActionLogEntry>> = BTreeMap::new();
    for e in log {
        by.entry(e.session_id)
            .or_insert_with(|| {
                order.push(e.session_id);
                Vec::new()
            })
            .push(e);
    }
    order.into_iter().filter_map(|s| by.remove(&s)).collect()
}

impl Store {
    /// A store that keeps nothing on disk.
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self {
            root: None,
            clock,
            last_now: f64::NEG_INFINITY,
            idle_timeout_s: IDLE_TIMEOUT_S,
            tasks: BTreeMap::new(),
            session_task: BTreeMap::new(),
            meta: RootMeta::default(),
        }
    }

    /// Opens `root`, creating it if needed and restoring any saved tasks.
    pub fn open(root: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> StoreResult<Self> {
        let root = root.into();
        let tasks_dir = root.join("tasks");
        fs::create_dir_all(&tasks_dir).map_err(VceError::io(&tasks_dir))?;
        let mut store = Self::in_memory(clock);
        let meta_path = root.join("meta.json");
        if meta_path.exists() {
            store.meta = read_json(&meta_path)?;
        }
        store.root = Some(root);
        let mut dirs: Vec<PathBuf> = fs::read_dir(&tasks_dir)
            .map_err(VceError::io(&tasks_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("task.json").exists())
            .collect();
        dirs.sort();
        for dir in dirs {
            store.restore_task(&dir)?;
        }
        store.save_meta()?;
        Ok(store)
    }

    pub fn set_idle_timeout(&mut self, seconds: f64) {
        self.idle_timeout_s = seconds;
    }

    fn task_dir(&self, id: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join("tasks").join(id))
    }

    fn save_meta(&self) -> Result<(), VceError> {
        match &self.root {
            Some(root) => write_json_atomic(&root.join("meta.json"), &self.meta),
            None => Ok(()),
        }
    }

    fn save_task_file(&self, id: &str) -> Result<(), VceError> {
        let (Some(dir), Some(entry)) = (self.task_dir(id), self.tasks.get(id)) else {
            return Ok(());
        };
        let file = TaskFile { id: id.to_string(), spec: entry.spec.clone(), closed: entry.closed };
        write_json_atomic(&dir.join("task.json"), &file)
    }

    fn restore_task(&mut self, dir: &Path) -> StoreResult<()> {
        let file: TaskFile = read_json(&dir.join("task.json"))?;
        let world = geojson::read_world(&dir.join("world.geojson"))?;
        let mut exp = Experiment::new(Arc::new(world), file.spec.task.clone(), file.spec.taboo.clone())?;

        let actions = dir.join("actions.jsonl");
        for run in group_sessions(logio::read_log_if_exists(&actions)?) {
            exp.replay_session(&run)?;
        }
        let journal_dir = dir.join("journal");
        let mut journals: Vec<(u64, PathBuf)> = fs::read_dir(&journal_dir)
            .into_iter()
            .flatten()
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| {
                let sid = p.file_stem()?.to_str()?.parse().ok()?;
                Some((sid, p))
            })
            .collect();
        journals.sort();
        for (sid, path) in &journals {
            if exp.session(SessionId(*sid)).is_some() {
                continue;
            }
            let entries = logio::read_log(path)?;
            if entries.is_empty() {
                continue;
            }
            if let Err(e) = exp.replay_session(&entries) {
                eprintln!("dropping journal {}: {e}", path.display());
            }
        }
        if file.closed {
            exp.close();
        }

        let mut journaled = BTreeMap::new();
        for s in exp.sessions() {
            self.meta.next_session = self.meta.next_session.max(s.id.0 + 1);
            self.session_task.insert(s.id, file.id.clone());
            if s.state == SessionState::Active {
                journaled.insert(s.id, exp.session_log(s.id).map_or(0, <[_]>::len));
            }
        }
        if let Some(n) = file.id.strip_prefix('t').and_then(|n| n.parse::<u64>().ok()) {
            self.meta.next_task = self.meta.next_task.max(n + 1);
        }

        let committed: Vec<_> = exp.committed_log().cloned().collect();
        let mut buf = Vec::new();
        logio::write_entries(&mut buf, &committed)?;
        write_atomic(&actions, &buf)?;
        for (sid, path) in journals {
            if !journaled.contains_key(&SessionId(sid)) {
                let _ = fs::remove_file(path);
            }
        }
        write_json_atomic(&dir.join("registry.json"), exp.registry())?;

        self.tasks.insert(file.id, TaskEntry { spec: file.spec, exp, closed: file.closed, journaled });
        Ok(())
    }

    /// Clock reading that never runs backwards.
    pub fn now(&mut self) -> f64 {
        self.last_now = self.last_now.max(self.clock.now());
        self.last_now
    }

    pub fn create_task(&mut self, spec: TaskSpec, world: World) -> StoreResult<TaskDescriptor> {
        let spec = spec.normalized();
        let exp = Experiment::new(Arc::new(world), spec.task.clone(), spec.taboo.clone())?;
        self.meta.next_task += 1;
        let id = format!("t{}", self.meta.next_task);
        if let Some(dir) = self.task_dir(&id) {
            let journal = dir.join("journal");
            fs::create_dir_all(&journal).map_err(VceError::io(&journal))?;
            geojson::write_json(&dir.join("world.geojson"), &geojson::world_to_geojson(exp.world()))?;
            write_json_atomic(&dir.join("registry.json"), exp.registry())?;
        }
        self.tasks.insert(id.clone(), TaskEntry { spec, exp, closed: false, journaled: BTreeMap::new() });
        self.save_task_file(&id)?;
        self.save_meta()?;
        self.task(&id)
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.tasks.keys().map(String::as_str)
    }

    pub fn experiment(&self, task_id: &str) -> StoreResult<&Experiment> {
        self.tasks.get(task_id).map(|t| &t.exp).ok_or_else(|| StoreError::UnknownTask(task_id.to_string()))
    }

    pub fn task(&self, id: &str) -> StoreResult<TaskDescriptor> {
        let entry = self.tasks.get(id).ok_or_else(|| StoreError::UnknownTask(id.to_string()))?;
        Ok(TaskDescriptor {
            id: id.to_string(),
            spec: entry.spec.clone(),
            status: if entry.exp.is_closed() { TaskStatus::Closed } else { TaskStatus::Open },
            completed_executions: entry.exp.finished_count(),
            active_sessions: entry.exp.active_count(),
        })
    }

    pub fn close_task(&mut self, id: &str) -> StoreResult<TaskDescriptor> {
        let entry = self.tasks.get_mut(id).ok_or_else(|| StoreError::UnknownTask(id.to_string()))?;
        entry.exp.close();
        entry.closed = true;
        self.save_task_file(id)?;
        self.task(id)
    }

    pub fn start_session(
        &mut self,
        task_id: &str,
        worker_id: WorkerId,
        seed: Option<u64>,
        start_node: Option<NodeId>,
    ) -> StoreResult<SessionStarted> {
        self.expire_idle()?;
        let now = self.now();
        let next = SessionId(self.meta.next_session);
        let entry = self.tasks.get_mut(task_id).ok_or_else(|| StoreError::UnknownTask(task_id.to_string()))?;
        entry.exp.reserve_session_ids(next);
        let id = match start_node {
            Some(node) => entry.exp.start_session_at(worker_id.clone(), node, now)?,
            None => {
                let seed = seed.unwrap_or_else(|| derive_seed(entry.spec.seed, STREAM_START_POINT, next.0));
                entry.exp.start_session(worker_id.clone(), seed, now)?
            }
        };
        self.meta.next_session = id.0 + 1;
        self.session_task.insert(id, task_id.to_string());
        self.sync(task_id, id)?;
        self.save_meta()?;
        let entry = &self.tasks[task_id];
        let session = entry.exp.session(id).expect("just started");
        Ok(SessionStarted {
            session_id: id,
            task_id: task_id.to_string(),
            worker_id,
            start_node: session.current_node,
            position: entry.exp.world().node(session.current_node).map_err(EngineError::from)?.position,
            instructions: entry.spec.instructions.clone(),
            taboo_markers: session.taboo_snapshot.clone(),
            view: entry.exp.view(id)?,
        })
    }

    fn task_of(&self, id: SessionId) -> StoreResult<String> {
        self.session_task.get(&id).cloned().ok_or(StoreError::Engine(EngineError::UnknownSession(id)))
    }

    pub fn session(&mut self, id: SessionId) -> StoreResult<SessionInfo> {
        self.expire_idle()?;
        let task_id = self.task_of(id)?;
        let session = self.tasks[&task_id].exp.session(id).cloned().ok_or(EngineError::UnknownSession(id))?;
        Ok(SessionInfo { task_id, session })
    }

    pub fn view(&mut self, id: SessionId) -> StoreResult<SessionView> {
        self.expire_idle()?;
        let task_id = self.task_of(id)?;
        Ok(self.tasks[&task_id].exp.view(id)?)
    }

    /// Runs one engine call on session `id` at the current time and
    /// persists its effects.
    pub fn act<T>(
        &mut self,
        id: SessionId,
        op: impl FnOnce(&mut Experiment, SessionId, f64) -> Result<T, EngineError>,
    ) -> StoreResult<T> {
        self.expire_idle()?;
        let task_id = self.task_of(id)?;
        let now = self.now();
        let out = op(&mut self.tasks.get_mut(&task_id).expect("indexed task").exp, id, now)?;
        self.sync(&task_id, id)?;
        Ok(out)
    }

    /// Abandons every active session idle for longer than the timeout.
    pub fn expire_idle(&mut self) -> StoreResult<Vec<SessionId>> {
        let now = self.now();
        let limit = self.idle_timeout_s;
        let stale: Vec<(String, SessionId)> = self
            .tasks
            .iter()
            .flat_map(|(tid, t)| {
                t.exp
                    .sessions()
                    .filter(move |s| s.state == SessionState::Active && now - s.last_action_at > limit)
                    .map(move |s| (tid.clone(), s.id))
            })
            .collect();
        for (tid, sid) in &stale {
            self.tasks.get_mut(tid).expect("indexed task").exp.abandon(*sid, now)?;
            self.sync(tid, *sid)?;
        }
        Ok(stale.into_iter().map(|(_, s)| s).collect())
    }

    fn sync(&mut self, task_id: &str, id: SessionId) -> StoreResult<()> {
        let dir = self.task_dir(task_id);
        let entry = self.tasks.get_mut(task_id).expect("indexed task");
        let state = entry.exp.session(id).map(|s| s.state);
        let log = entry.exp.session_log(id).unwrap_or(&[]);
        let written = entry.journaled.get(&id).copied().unwrap_or(0);
        let Some(dir) = dir else {
            match state {
                Some(SessionState::Active) => {
                    entry.journaled.insert(id, log.len());
                }
                _ => {
                    entry.journaled.remove(&id);
                }
            }
            return Ok(());
        };
        let journal = dir.join("journal").join(format!("{}.jsonl", id.0));
        match state {
            Some(SessionState::Active) => {
                logio::append_log(&journal, &log[written.min(log.len())..])?;
                entry.journaled.insert(id, log.len());
            }
            Some(SessionState::Completed | SessionState::Escaped) => {
                logio::append_log(&journal, &log[written.min(log.len())..])?;
                logio::append_log(&dir.join("actions.jsonl"), log)?;
                write_json_atomic(&dir.join("registry.json"), entry.exp.registry())?;
                entry.journaled.remove(&id);
                let _ = fs::remove_file(&journal);
            }
            Some(SessionState::Abandoned) | None => {
                entry.journaled.remove(&id);
                let _ = fs::remove_file(&journal);
            }
        }
        Ok(())
    }
}
