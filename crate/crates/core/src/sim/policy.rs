//! Synthetic worker behavior.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::{EngineError, SessionView, SubmitOutcome};
use crate::geo::{bearing, Heading};
use crate::rng::SimRng;
use crate::world::{NodeId, PoiId, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    RandomExplorer,
    GreedyExplorer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkerPolicy {
    pub kind: PolicyKind,
    /// Chance of noticing a PoI the first time it comes into view.
    pub detection_prob: f64,
    /// Standard deviation of the aiming error, degrees.
    pub heading_noise_deg: f64,
    /// Chance of refusing to walk straight back where it came from.
    pub backtrack_avoidance: f64,
    /// Smallest angle between two shot lines a worker will accept.
    pub min_separation_deg: f64,
    /// Fresh attempts after a failed triangulation before giving up on a PoI.
    pub max_retries: u32,
}

impl Default for WorkerPolicy {
    fn default() -> Self {
        Self {
            kind: PolicyKind::RandomExplorer,
            detection_prob: 1.0,
            heading_noise_deg: 0.0,
            backtrack_avoidance: 0.8,
            min_separation_deg: 15.0,
            max_retries: 2,
        }
    }
}

impl WorkerPolicy {
    pub fn validate(&self) -> Result<(), EngineError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.detection_prob) || !prob(self.backtrack_avoidance) {
            return Err(EngineError::InvalidConfig("probabilities must lie in [0, 1]"));
        }
        if !(self.heading_noise_deg >= 0.0 && self.heading_noise_deg.is_finite()) {
            return Err(EngineError::InvalidConfig("heading_noise_deg must be non-negative"));
        }
        if !(0.0..90.0).contains(&self.min_separation_deg) {
            return Err(EngineError::InvalidConfig("min_separation_deg must lie in [0, 90)"));
        }
        Ok(())
    }
}

/// What a simulated worker does next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolicyAction {
    Move(NodeId),
    Shoot(Heading),
    Discard(usize),
    Submit,
    Abandon,
}

/// Angle between the lines through two headings, in `[0, 90]`.
pub fn line_separation(a: Heading, b: Heading) -> f64 {
    let s = a.separation(b);
    s.min(180.0 - s)
}

/// Three nodes of `candidates` whose sight lines to `poi` are spread as far
/// apart as possible, or `None` when the best spread is below `min_sep_deg`.
/// Ties keep the lexicographically first triple.
pub fn best_vantage_triple(world: &World, poi: PoiId, candidates: &[NodeId], min_sep_deg: f64) -> Option<[NodeId; 3]> {
    let target = world.poi(poi)?.position;
    let headings: Vec<Heading> = candidates
        .iter()
        .map(|n| world.node(*n).map(|node| bearing(node.position, target)))
        .collect::<Result<_, _>>()
        .ok()?;
    let mut best: Option<([NodeId; 3], f64)> = None;
    let n = candidates.len();
    for i in 0..n {
        for j in i + 1..n {
            let sij = line_separation(headings[i], headings[j]);
            for k in j + 1..n {
                let score =
                    sij.min(line_separation(headings[i], headings[k])).min(line_separation(headings[j], headings[k]));
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some(([candidates[i], candidates[j], candidates[k]], score));
                }
            }
        }
    }
    best.filter(|(_, s)| *s >= min_sep_deg).map(|(t, _)| t)
}

/// Vantage nodes of `poi` a worker standing at `from` can walk to.
pub fn reachable_vantages(world: &World, poi: PoiId, from: NodeId) -> Vec<NodeId> {
    let Some(p) = world.poi(poi) else { return Vec::new() };
    let component = world.component_of(from);
    p.visible_from.iter().copied().filter(|n| component.contains(n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlanStep {
    Goto(NodeId),
    Aim(PoiId),
    Submit,
}

/// Per-session state of one simulated worker.
#[derive(Debug, Clone)]
pub struct WorkerState {
    policy: WorkerPolicy,
    rng: SimRng,
    noise: Option<Normal<f64>>,
    previous: Option<NodeId>,
    visited: BTreeSet<NodeId>,
    /// PoIs the worker has finished with, found or not.
    handled: BTreeSet<PoiId>,
    plan: VecDeque<PlanStep>,
    target: Option<(PoiId, [NodeId; 3])>,
    retries: u32,
    discards: usize,
}

impl WorkerState {
    pub fn new(policy: WorkerPolicy, rng: SimRng) -> Self {
        let noise = (policy.heading_noise_deg > 0.0).then(|| Normal::new(0.0, policy.heading_noise_deg).ok()).flatten();
        Self {
            policy,
            rng,
            noise,
            previous: None,
            visited: BTreeSet::new(),
            handled: BTreeSet::new(),
            plan: VecDeque::new(),
            target: None,
            retries: 0,
            discards: 0,
        }
    }

    pub fn policy(&self) -> &WorkerPolicy {
        &self.policy
    }

    /// Heading from `node` to `poi` with aiming noise.
    pub fn aim(&mut self, world: &World, node: NodeId, poi: PoiId) -> Heading {
        let from = world.node(node).map(|n| n.position);
        let to = world.poi(poi).map(|p| p.position);
        let exact = match (from, to) {
            (Ok(a), Some(b)) => bearing(a, b).degrees(),
            _ => 0.0,
        };
        Heading::new(exact + self.aim_error())
    }

    /// One draw of the aiming error, degrees.
    pub fn aim_error(&mut self) -> f64 {
        self.noise.map_or(0.0, |n| n.sample(&mut self.rng))
    }

    pub fn step(&mut self, world: &World, view: &SessionView) -> PolicyAction {
        self.visited.insert(view.node);
        if self.discards > 0 {
            self.discards -= 1;
            return PolicyAction::Discard(0);
        }
        if self.plan.is_empty() && view.pending_shots == 0 {
            self.notice(world, view);
        }
        while let Some(step) = self.plan.front().copied() {
            match step {
                PlanStep::Goto(n) if n == view.node => {
                    self.plan.pop_front();
                }
                PlanStep::Goto(n) => match world.shortest_path(view.node, n) {
                    Some(path) if path.len() >= 2 => return self.walk(view.node, path[1]),
                    _ => {
                        self.give_up();
                        break;
                    }
                },
                PlanStep::Aim(poi) => {
                    self.plan.pop_front();
                    return PolicyAction::Shoot(self.aim(world, view.node, poi));
                }
                PlanStep::Submit => {
                    self.plan.pop_front();
                    return PolicyAction::Submit;
                }
            }
        }
        if view.pending_shots > 0 {
            return PolicyAction::Discard(0);
        }
        self.explore(world, view)
    }

    /// Reacts to the engine's verdict on a submission.
    pub fn on_submit(&mut self, outcome: &SubmitOutcome) {
        let Some((poi, nodes)) = self.target else { return };
        match outcome {
            SubmitOutcome::Accepted { .. } => {
                self.handled.insert(poi);
                self.target = None;
                self.retries = 0;
            }
            SubmitOutcome::RejectedTriangulation { .. } if self.retries < self.policy.max_retries => {
                self.retries += 1;
                self.discards = 3;
                self.plan_capture(poi, nodes);
            }
            _ => {
                self.discards = 3;
                self.give_up();
            }
        }
    }

    fn give_up(&mut self) {
        if let Some((poi, _)) = self.target.take() {
            self.handled.insert(poi);
        }
        self.plan.clear();
        self.retries = 0;
    }

    /// Looks around for a new PoI to capture.
    fn notice(&mut self, world: &World, view: &SessionView) {
        for poi in &view.pois {
            if self.handled.contains(&poi.id) {
                continue;
            }
            self.handled.insert(poi.id);
            if poi.taboo || !self.rng.random_bool(self.policy.detection_prob) {
                continue;
            }
            let candidates = reachable_vantages(world, poi.id, view.node);
            let Some(mut nodes) = best_vantage_triple(world, poi.id, &candidates, self.policy.min_separation_deg)
            else {
                continue;
            };
            order_by_proximity(world, view.node, &mut nodes);
            self.target = Some((poi.id, nodes));
            self.retries = 0;
            self.plan_capture(poi.id, nodes);
            return;
        }
    }

    fn plan_capture(&mut self, poi: PoiId, nodes: [NodeId; 3]) {
        self.plan.clear();
        for n in nodes {
            self.plan.push_back(PlanStep::Goto(n));
            self.plan.push_back(PlanStep::Aim(poi));
        }
        self.plan.push_back(PlanStep::Submit);
    }

    fn walk(&mut self, from: NodeId, to: NodeId) -> PolicyAction {
        self.previous = Some(from);
        PolicyAction::Move(to)
    }

    fn explore(&mut self, world: &World, view: &SessionView) -> PolicyAction {
        match self.policy.kind {
            PolicyKind::RandomExplorer => self.random_step(view),
            PolicyKind::GreedyExplorer => match nearest_unvisited(world, view.node, &self.visited) {
                Some(next) => self.walk(view.node, next),
                None => self.random_step(view),
            },
        }
    }

    fn random_step(&mut self, view: &SessionView) -> PolicyAction {
        let all: Vec<NodeId> = view.neighbors.iter().map(|n| n.id).collect();
        if all.is_empty() {
            return PolicyAction::Abandon;
        }
        let forward: Vec<NodeId> = all.iter().copied().filter(|n| Some(*n) != self.previous).collect();
        let pool = if !forward.is_empty()
            && forward.len() < all.len()
            && self.rng.random_bool(self.policy.backtrack_avoidance)
        {
            forward
        } else {
            all
        };
        let next = pool[self.rng.random_range(0..pool.len())];
        self.walk(view.node, next)
    }
}

/// Visits the nearest vantage node first, then the nearest of the rest.
fn order_by_proximity(world: &World, from: NodeId, nodes: &mut [NodeId; 3]) {
    let hops = |a: NodeId, b: NodeId| world.shortest_path(a, b).map_or(usize::MAX, |p| p.len());
    let mut at = from;
    for i in 0..3 {
        let best = (i..3).min_by_key(|&j| (hops(at, nodes[j]), nodes[j])).unwrap_or(i);
        nodes.swap(i, best);
        at = nodes[i];
    }
}

/// First step towards the closest in-area node the worker has not visited.
fn nearest_unvisited(world: &World, from: NodeId, visited: &BTreeSet<NodeId>) -> Option<NodeId> {
    let mut first_step: alloc::collections::BTreeMap<NodeId, NodeId> = alloc::collections::BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(n) = queue.pop_front() {
        if !visited.contains(&n) {
            return first_step.get(&n).copied();
        }
        for &m in &world.node(n).ok()?.neighbors {
            if world.is_in_area(m) && seen.insert(m) {
                first_step.insert(m, if n == from { m } else { first_step[&n] });
                queue.push_back(m);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{scripted_world, side_street_node};
    use crate::world::NodeId;

    #[test]
    fn line_separation_folds_opposite_headings() {
        assert_eq!(line_separation(Heading::new(90.0), Heading::new(270.0)), 0.0);
        assert_eq!(line_separation(Heading::new(10.0), Heading::new(100.0)), 90.0);
        assert!((line_separation(Heading::new(350.0), Heading::new(20.0)) - 30.0).abs() < 1e-9);
    }

    #[test]
    fn best_triple_maximizes_the_narrowest_angle() {
        let w = scripted_world();
        let candidates = reachable_vantages(&w, PoiId(0), NodeId(2));
        assert!(candidates.contains(&side_street_node(0)));
        // the side street shares node 2's sight line, so it only ties
        let triple = best_vantage_triple(&w, PoiId(0), &candidates, 15.0).unwrap();
        assert_eq!(triple, [NodeId(1), NodeId(2), NodeId(3)]);
        let h = |n: NodeId| bearing(w.node(n).unwrap().position, w.poi(PoiId(0)).unwrap().position);
        let narrowest = line_separation(h(NodeId(1)), h(NodeId(3)));
        let expected = 180.0 - 2.0 * libm::atan2(10.0, 4.0).to_degrees();
        assert!((narrowest - expected).abs() < 1e-3, "{narrowest} {expected}");
    }

    #[test]
    fn collinear_vantages_are_refused() {
        let w = scripted_world();
        // main-street nodes only: the nodes straddling the PoI at 20 m give the widest spread
        let candidates = [NodeId(1), NodeId(2), NodeId(3)];
        assert!(best_vantage_triple(&w, PoiId(0), &candidates, 15.0).is_some());
        let far = [NodeId(0), NodeId(4)];
        assert!(best_vantage_triple(&w, PoiId(0), &far, 0.0).is_none());
    }

    #[test]
    fn nearest_unvisited_steps_towards_new_ground() {
        let w = scripted_world();
        let visited = BTreeSet::from([NodeId(0), NodeId(1), NodeId(2)]);
        assert_eq!(nearest_unvisited(&w, NodeId(0), &visited), Some(NodeId(1)));
    }
}
