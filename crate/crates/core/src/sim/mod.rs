//! Simulated experiments: synthetic workers driven through the engine on a
//! virtual clock.

mod policy;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use policy::{
    best_vantage_triple, line_separation, reachable_vantages, PolicyAction, PolicyKind, WorkerPolicy, WorkerState,
};

use crate::aggregate::{consolidate, AggregationParams, PoICluster};
use crate::engine::{
    ActionLogEntry, Detection, EngineError, Experiment, Session, SessionId, SessionState, Strategy, TabooConfig,
    TabooRegistry, TaskConfig, WorkerId,
};
use crate::rng::{derive_seed, stream_rng, STREAM_POLICY, STREAM_SCHEDULE, STREAM_START_POINT};
use crate::world::World;

/// Virtual seconds charged per action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClockCosts {
    pub move_s: f64,
    pub shot_s: f64,
    pub submit_s: f64,
    pub discard_s: f64,
}

impl Default for ClockCosts {
    fn default() -> Self {
        Self { move_s: 4.0, shot_s: 3.0, submit_s: 2.0, discard_s: 1.0 }
    }
}

/// How sessions overlap in virtual time.
///
/// `Interleaved { k }` keeps `k` sessions open at once and lets each take
/// one action per round, in an order shuffled by the schedule stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Schedule {
    #[default]
    Sequential,
    Interleaved {
        k: u32,
    },
}

impl Schedule {
    pub fn width(self) -> usize {
        match self {
            Schedule::Sequential => 1,
            Schedule::Interleaved { k } => k.max(1) as usize,
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Sequential => f.write_str("seq"),
            Schedule::Interleaved { k } => write!(f, "interleaved:{k}"),
        }
    }
}

impl FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seq" | "sequential" => Ok(Schedule::Sequential),
            _ => {
                let k = s
                    .strip_prefix("interleaved:")
                    .and_then(|k| k.parse::<u32>().ok())
                    .filter(|k| *k >= 1)
                    .ok_or_else(|| format!("bad schedule {s:?}, expected seq or interleaved:K"))?;
                Ok(Schedule::Interleaved { k })
            }
        }
    }
}

impl TryFrom<String> for Schedule {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Schedule> for String {
    fn from(value: Schedule) -> Self {
        value.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub task: TaskConfig,
    /// Required with the taboo strategy, ignored otherwise.
    pub taboo: TabooConfig,
    pub aggregation: AggregationParams,
    pub schedule: Schedule,
    pub policy: WorkerPolicy,
    pub costs: ClockCosts,
    /// Actions after which a session is abandoned.
    pub step_cap: u32,
    /// Sessions started before giving up; 0 means ten per execution.
    pub max_sessions: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            task: TaskConfig::default(),
            taboo: TabooConfig::default(),
            aggregation: AggregationParams::default(),
            schedule: Schedule::Sequential,
            policy: WorkerPolicy::default(),
            costs: ClockCosts::default(),
            step_cap: 5000,
            max_sessions: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.task.validate()?;
        if self.task.strategy == Strategy::Taboo {
            self.taboo.validate()?;
        }
        self.aggregation.validate()?;
        self.policy.validate()?;
        if self.step_cap == 0 {
            return Err(EngineError::InvalidConfig("step_cap must be positive"));
        }
        let costs = [self.costs.move_s, self.costs.shot_s, self.costs.submit_s, self.costs.discard_s];
        if costs.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(EngineError::InvalidConfig("action costs must be non-negative"));
        }
        Ok(())
    }

    pub fn taboo_config(&self) -> Option<TabooConfig> {
        (self.task.strategy == Strategy::Taboo).then(|| self.taboo.clone())
    }

    pub fn session_budget(&self) -> u32 {
        if self.max_sessions == 0 {
            self.task.num_executions.saturating_mul(10)
        } else {
            self.max_sessions
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub sessions_started: u32,
    pub finished: u32,
    pub abandoned: u32,
    /// The session budget ran out before enough sessions finished.
    pub exhausted: bool,
    /// Latest virtual clock reading across lanes, seconds.
    pub end_time: f64,
}

/// Everything a simulated experiment produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Every session by id; abandoned ones are empty.
    pub sessions: Vec<Session>,
    /// Finished sessions in commit order.
    pub commit_order: Vec<SessionId>,
    /// Log lines of finished sessions in commit order.
    pub log: Vec<ActionLogEntry>,
    pub registry: TabooRegistry,
    pub map: Vec<PoICluster>,
    pub meta: RunMeta,
}

impl ExperimentResult {
    pub fn session(&self, id: SessionId) -> Option<&Session> {
        self.sessions.iter().find(|s| s.id == id)
    }

    pub fn finished_sessions(&self) -> impl Iterator<Item = &Session> {
        self.commit_order.iter().filter_map(|id| self.session(*id))
    }

    /// Detections of finished sessions in commit order.
    pub fn detections(&self) -> Vec<Detection> {
        self.finished_sessions().flat_map(|s| s.detections.iter().cloned()).collect()
    }

    /// Detections grouped per finished session, in commit order.
    pub fn executions(&self) -> Vec<Vec<Detection>> {
        self.finished_sessions().map(|s| s.detections.clone()).collect()
    }

    /// Confirmed PoIs using only the first `n` finished sessions.
    pub fn confirmed_after(&self, n: usize) -> usize {
        let dets: Vec<Detection> =
            self.finished_sessions().take(n).flat_map(|s| s.detections.iter().cloned()).collect();
        consolidate(&dets, &self.config.aggregation).len()
    }

    pub fn count_state(&self, state: SessionState) -> usize {
        self.sessions.iter().filter(|s| s.state == state).count()
    }
}

struct Lane {
    session: SessionId,
    worker: WorkerState,
    steps: u32,
}

/// Runs a whole experiment. The result is a pure function of `world` and
/// `config`.
pub fn run_experiment(world: Arc<World>, config: &ExperimentConfig) -> Result<ExperimentResult, EngineError> {
    config.validate()?;
    let mut exp = Experiment::new(Arc::clone(&world), config.task.clone(), config.taboo_config())?;
    let width = config.schedule.width();
    let mut lanes: Vec<Option<Lane>> = (0..width).map(|_| None).collect();
    let mut clocks = alloc::vec![0.0f64; width];
    let mut order: Vec<usize> = (0..width).collect();
    let mut schedule_rng = stream_rng(config.seed, STREAM_SCHEDULE);
    let budget = config.session_budget();
    let mut started = 0u32;
    let mut abandoned = 0u32;

    loop {
        for (i, lane) in lanes.iter_mut().enumerate() {
            if lane.is_some() || !exp.is_open() || started >= budget {
                continue;
            }
            let index = u64::from(started);
            started += 1;
            let worker = WorkerId::from(format!("w{started:04}"));
            let start_seed = derive_seed(config.seed, STREAM_START_POINT, index);
            let session = exp.start_session(worker, start_seed, clocks[i])?;
            let rng = stream_rng(derive_seed(config.seed, STREAM_POLICY, index), STREAM_POLICY);
            *lane = Some(Lane { session, worker: WorkerState::new(config.policy.clone(), rng), steps: 0 });
        }
        if lanes.iter().all(Option::is_none) {
            break;
        }
        if width > 1 {
            order.shuffle(&mut schedule_rng);
        }
        for &i in &order {
            let Some(lane) = lanes[i].as_mut() else { continue };
            let view = exp.view(lane.session)?;
            let action =
                if lane.steps >= config.step_cap { PolicyAction::Abandon } else { lane.worker.step(&world, &view) };
            lane.steps += 1;
            let costs = &config.costs;
            let id = lane.session;
            match action {
                PolicyAction::Move(to) => {
                    clocks[i] += costs.move_s;
                    exp.move_to(id, to, clocks[i])?;
                }
                PolicyAction::Shoot(heading) => {
                    clocks[i] += costs.shot_s;
                    exp.take_shot(id, heading, clocks[i])?;
                }
                PolicyAction::Discard(index) => {
                    clocks[i] += costs.discard_s;
                    exp.discard_shot(id, index, clocks[i])?;
                }
                PolicyAction::Submit => {
                    clocks[i] += costs.submit_s;
                    let outcome = exp.submit(id, clocks[i])?;
                    lane.worker.on_submit(&outcome);
                }
                PolicyAction::Abandon => {
                    exp.abandon(id, clocks[i])?;
                    abandoned += 1;
                }
            }
            if exp.session(id).map(|s| s.state) != Some(SessionState::Active) {
                lanes[i] = None;
            }
        }
    }

    let commit_order: Vec<SessionId> = exp.committed_sessions().map(|s| s.id).collect();
    let log: Vec<ActionLogEntry> = exp.committed_log().cloned().collect();
    let detections: Vec<Detection> = exp.committed_detections().cloned().collect();
    let map = consolidate(&detections, &config.aggregation);
    Ok(ExperimentResult {
        config: config.clone(),
        sessions: exp.sessions().cloned().collect(),
        commit_order,
        log,
        registry: exp.registry().clone(),
        map,
        meta: RunMeta {
            seed: config.seed,
            sessions_started: started,
            finished: exp.finished_count(),
            abandoned,
            exhausted: exp.finished_count() < config.task.num_executions,
            end_time: clocks.iter().copied().fold(0.0, f64::max),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{triangulate, Shot};
    use crate::fixtures::scripted_world;
    use crate::geo::{GeoPoint, Heading, LocalFrame, LocalPoint};
    use crate::world::{generate_synthetic_world, NodeId, WorldParams};

    fn fixture_config(strategy: Strategy, executions: u32) -> ExperimentConfig {
        ExperimentConfig {
            seed: 3,
            task: TaskConfig { strategy, num_executions: executions, num_instances: 5, ..TaskConfig::default() },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn schedule_round_trips_through_text() {
        assert_eq!("seq".parse::<Schedule>(), Ok(Schedule::Sequential));
        assert_eq!("interleaved:3".parse::<Schedule>(), Ok(Schedule::Interleaved { k: 3 }));
        assert!("interleaved:0".parse::<Schedule>().is_err());
        assert!("parallel".parse::<Schedule>().is_err());
        assert_eq!(Schedule::Interleaved { k: 4 }.to_string(), "interleaved:4");
    }

    #[test]
    fn perfect_worker_completes_a_session() {
        let world = Arc::new(scripted_world());
        let result = run_experiment(world, &fixture_config(Strategy::Basic, 1)).unwrap();
        assert_eq!(result.meta.finished, 1);
        let s = result.finished_sessions().next().unwrap();
        assert_eq!(s.state, SessionState::Completed);
        assert_eq!(s.detections.len(), 5);
        for d in &s.detections {
            assert!(d.dmax_m < 1e-3);
        }
    }

    #[test]
    fn blind_basic_workers_hit_the_step_cap() {
        let world = Arc::new(scripted_world());
        let mut config = fixture_config(Strategy::Basic, 1);
        config.policy.detection_prob = 0.0;
        config.step_cap = 300;
        config.max_sessions = 2;
        let result = run_experiment(world, &config).unwrap();
        assert_eq!(result.meta.sessions_started, 2);
        assert_eq!(result.meta.abandoned, 2);
        assert!(result.meta.exhausted);
        assert!(result.log.is_empty());
        assert_eq!(result.count_state(SessionState::Abandoned), 2);
    }

    #[test]
    fn blind_taboo_workers_escape() {
        let world = Arc::new(scripted_world());
        let mut config = fixture_config(Strategy::Taboo, 2);
        config.policy.detection_prob = 0.0;
        let result = run_experiment(world, &config).unwrap();
        assert_eq!(result.count_state(SessionState::Escaped), 2);
        for s in result.finished_sessions() {
            assert!(s.distance_walked_m >= 1800.0);
            assert_eq!(s.reward, config.task.reward);
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let world = Arc::new(generate_synthetic_world(&WorldParams::default()).unwrap());
        let mut config = fixture_config(Strategy::Taboo, 12);
        config.policy.heading_noise_deg = 2.0;
        config.policy.detection_prob = 0.7;
        config.schedule = Schedule::Interleaved { k: 3 };
        let a = run_experiment(Arc::clone(&world), &config).unwrap();
        let b = run_experiment(world, &config).unwrap();
        assert_eq!(a, b);
        config.seed += 1;
        let c = run_experiment(Arc::new(scripted_world()), &config).unwrap();
        assert_ne!(a.log, c.log);
    }

    #[test]
    fn basic_totals_are_exact() {
        let world = Arc::new(generate_synthetic_world(&WorldParams::default()).unwrap());
        let config = fixture_config(Strategy::Basic, 10);
        let result = run_experiment(world, &config).unwrap();
        assert_eq!(result.meta.finished, 10);
        assert_eq!(result.detections().len(), 50);
        assert_eq!(result.confirmed_after(0), 0);
        assert_eq!(result.confirmed_after(10), result.map.len());
    }

    #[test]
    fn sequential_taboo_caps_distinct_workers() {
        let world = Arc::new(generate_synthetic_world(&WorldParams::default()).unwrap());
        let config = fixture_config(Strategy::Taboo, 30);
        let result = run_experiment(world, &config).unwrap();
        assert!(result.detections().len() <= 150);
        for c in &result.map {
            assert!(c.distinct_workers <= 3, "{c:?}");
        }
    }

    #[test]
    fn greedy_explorer_also_completes() {
        let world = Arc::new(scripted_world());
        let mut config = fixture_config(Strategy::Basic, 2);
        config.policy.kind = PolicyKind::GreedyExplorer;
        config.task.allow_repeat = false;
        let result = run_experiment(world, &config).unwrap();
        assert_eq!(result.meta.finished, 2);
    }

    /// Closed-form ray intersection written independently of the geo module:
    /// solve `o1 + t d1 = o2 + s d2` by Cramer's rule.
    fn oracle_meet(o1: (f64, f64), h1: f64, o2: (f64, f64), h2: f64) -> Option<(f64, f64)> {
        let (d1, d2) = ((h1.to_radians().sin(), h1.to_radians().cos()), (h2.to_radians().sin(), h2.to_radians().cos()));
        let det = -d1.0 * d2.1 + d1.1 * d2.0;
        if det.abs() < 1e-9 {
            return None;
        }
        let (bx, by) = (o2.0 - o1.0, o2.1 - o1.1);
        let t = (-bx * d2.1 + by * d2.0) / det;
        let s = (d1.0 * by - d1.1 * bx) / det;
        (t > 1e-9 && s > 1e-9).then_some((o1.0 + t * d1.0, o1.1 + t * d1.1))
    }

    fn oracle_seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
        let (vx, vy) = (b.0 - a.0, b.1 - a.1);
        let len2 = vx * vx + vy * vy;
        let u = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0) };
        let (qx, qy) = (a.0 + u * vx - p.0, a.1 + u * vy - p.1);
        (qx * qx + qy * qy).sqrt()
    }

    /// Oracle verdict for three noisy rays aimed at the origin.
    fn oracle_rejects(origins: &[(f64, f64); 3], headings: &[f64; 3], delta: f64) -> bool {
        let mut corners = Vec::new();
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            match oracle_meet(origins[i], headings[i], origins[j], headings[j]) {
                Some(p) => corners.push(p),
                None => return true,
            }
        }
        let c =
            ((corners[0].0 + corners[1].0 + corners[2].0) / 3.0, (corners[0].1 + corners[1].1 + corners[2].1) / 3.0);
        let dmax = (0..3).map(|k| oracle_seg_dist(c, corners[k], corners[(k + 1) % 3])).fold(0.0, f64::max);
        dmax >= delta
    }

    #[test]
    fn noisy_rejection_rate_matches_geometry() {
        // a PoI 5 m off a street, shot from three street nodes
        let origins = [(-10.0, -5.0), (0.0, -5.0), (10.0, -5.0)];
        let exact: [f64; 3] = origins.map(|(x, y)| libm::atan2(-x, -y).to_degrees());
        let noise = rand_distr::Normal::new(0.0, 15.0).unwrap();

        let mut oracle_rng = stream_rng(77, 1);
        let n_oracle = 20_000;
        let oracle_rate = (0..n_oracle)
            .filter(|_| {
                let h = exact.map(|e| e + rand_distr::Distribution::sample(&noise, &mut oracle_rng));
                oracle_rejects(&origins, &h, 10.0)
            })
            .count() as f64
            / n_oracle as f64;

        let frame = LocalFrame::new(GeoPoint::new(46.07, 11.12).unwrap());
        let mut worker =
            WorkerState::new(WorkerPolicy { heading_noise_deg: 15.0, ..WorkerPolicy::default() }, stream_rng(5, 2));
        let trials = 500;
        let mut rejected = 0;
        for _ in 0..trials {
            let shots: [Shot; 3] = core::array::from_fn(|k| Shot {
                position: frame.unproject(LocalPoint::new(origins[k].0, origins[k].1)),
                heading: Heading::new(exact[k] + worker.aim_error()),
                node: NodeId(0),
                t: 0.0,
            });
            if triangulate(&shots, 10.0).is_err() {
                rejected += 1;
            }
        }
        let measured = rejected as f64 / trials as f64;
        assert!(oracle_rate > 0.05 && oracle_rate < 0.95, "{oracle_rate}");
        assert!((measured - oracle_rate).abs() <= 0.05, "measured {measured} vs oracle {oracle_rate}");
    }
}
