//! The explorable world: panorama graph, area of interest and ground truth.

mod synth;

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SessionId;
use crate::geo::{haversine_distance, GeoError, GeoPoint, PlanarRing};
use crate::rng::{stream_rng, STREAM_START_POINT};

pub use synth::{generate_synthetic_world, WorldParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("graph has no eligible start node")]
    EmptyGraph,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("edge {0}-{0} would be a self-loop")]
    SelfLoop(NodeId),
    #[error("node ids must equal their index (found {found} at {index})")]
    NonContiguousIds { index: usize, found: NodeId },
    #[error("invalid world parameters: {0}")]
    InvalidParams(&'static str),
    #[error("area of interest has zero area")]
    EmptyArea,
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl core::fmt::Display for NodeId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoiId(pub u32);

/// Closed boundary the workers are confined to.
#[derive(Debug, Clone)]
pub struct AreaOfInterest {
    name: String,
    boundary: Vec<GeoPoint>,
    planar: PlanarRing,
}

impl AreaOfInterest {
    pub fn new(name: impl Into<String>, boundary: Vec<GeoPoint>) -> Result<Self, WorldError> {
        let planar = PlanarRing::new(&boundary)?;
        if planar.area_m2() <= 0.0 {
            return Err(WorldError::EmptyArea);
        }
        Ok(Self { name: name.into(), boundary, planar })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn boundary(&self) -> &[GeoPoint] {
        &self.boundary
    }

    pub fn area_m2(&self) -> f64 {
        self.planar.area_m2()
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        self.planar.contains(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoNode {
    pub id: NodeId,
    pub position: GeoPoint,
    pub neighbors: BTreeSet<NodeId>,
    /// Nodes reachable with a single fast-forward jump.
    pub visible_nodes: BTreeSet<NodeId>,
    /// Panoramas taken inside buildings are never used as start points.
    #[serde(default)]
    pub indoor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub length_m: f64,
}

/// Panorama nodes and the street segments between them.
///
/// Node ids are dense: node `NodeId(i)` lives at index `i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExplorableGraph {
    nodes: Vec<PanoNode>,
    edges: Vec<Edge>,
}

impl ExplorableGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, position: GeoPoint) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(PanoNode {
            id,
            position,
            neighbors: BTreeSet::new(),
            visible_nodes: BTreeSet::new(),
            indoor: false,
        });
        id
    }

    /// Connects two nodes; adding an existing edge again is a no-op.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) -> Result<(), WorldError> {
        if a == b {
            return Err(WorldError::SelfLoop(a));
        }
        let pa = self.node(a)?.position;
        let pb = self.node(b)?.position;
        if self.nodes[a.index()].neighbors.insert(b) {
            self.nodes[b.index()].neighbors.insert(a);
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            self.edges.push(Edge { a, b, length_m: haversine_distance(pa, pb) });
        }
        Ok(())
    }

    pub fn set_visible_nodes(&mut self, id: NodeId, visible: BTreeSet<NodeId>) -> Result<(), WorldError> {
        if let Some(bad) = visible.iter().find(|v| v.index() >= self.nodes.len()) {
            return Err(WorldError::UnknownNode(*bad));
        }
        self.node_mut(id)?.visible_nodes = visible;
        Ok(())
    }

    pub fn set_indoor(&mut self, id: NodeId, indoor: bool) -> Result<(), WorldError> {
        self.node_mut(id)?.indoor = indoor;
        Ok(())
    }

    /// Rebuilds a graph from stored nodes and edge pairs, recomputing edge
    /// lengths and the neighbor relation from the edges.
    pub fn from_parts(
        nodes: Vec<PanoNode>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, WorldError> {
        let mut graph = ExplorableGraph::new();
        for (index, node) in nodes.iter().enumerate() {
            if node.id.index() != index {
                return Err(WorldError::NonContiguousIds { index, found: node.id });
            }
            graph.add_node(node.position);
        }
        for (a, b) in edges {
            graph.add_edge(a, b)?;
        }
        for node in nodes {
            graph.set_visible_nodes(node.id, node.visible_nodes)?;
            graph.set_indoor(node.id, node.indoor)?;
        }
        Ok(graph)
    }

    pub fn node(&self, id: NodeId) -> Result<&PanoNode, WorldError> {
        self.nodes.get(id.index()).ok_or(WorldError::UnknownNode(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut PanoNode, WorldError> {
        self.nodes.get_mut(id.index()).ok_or(WorldError::UnknownNode(id))
    }

    pub fn nodes(&self) -> &[PanoNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.index() < self.nodes.len()
    }
}

/// Total street length of the graph, in meters.
pub fn explorable_distance(g: &ExplorableGraph) -> f64 {
    g.edges.iter().map(|e| e.length_m).sum()
}

/// A real-world item a worker may find.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPoI {
    pub id: PoiId,
    pub position: GeoPoint,
    pub visible_from: BTreeSet<NodeId>,
}

/// Every node within `sight_radius_m` of `position`.
pub fn nodes_within(g: &ExplorableGraph, position: GeoPoint, sight_radius_m: f64) -> BTreeSet<NodeId> {
    g.nodes.iter().filter(|n| haversine_distance(n.position, position) <= sight_radius_m).map(|n| n.id).collect()
}

/// Graph, boundary and ground truth together, with derived lookups.
#[derive(Debug, Clone)]
pub struct World {
    graph: ExplorableGraph,
    aoi: AreaOfInterest,
    pois: Vec<GroundTruthPoI>,
    in_area: Vec<bool>,
    pois_by_node: Vec<Vec<PoiId>>,
}

impl World {
    pub fn new(graph: ExplorableGraph, aoi: AreaOfInterest, pois: Vec<GroundTruthPoI>) -> Result<Self, WorldError> {
        let in_area = graph.nodes.iter().map(|n| aoi.contains(n.position)).collect();
        let mut pois_by_node = vec![Vec::new(); graph.len()];
        for poi in &pois {
            for node in &poi.visible_from {
                pois_by_node.get_mut(node.index()).ok_or(WorldError::UnknownNode(*node))?.push(poi.id);
            }
        }
        Ok(Self { graph, aoi, pois, in_area, pois_by_node })
    }

    pub fn graph(&self) -> &ExplorableGraph {
        &self.graph
    }

    pub fn aoi(&self) -> &AreaOfInterest {
        &self.aoi
    }

    pub fn pois(&self) -> &[GroundTruthPoI] {
        &self.pois
    }

    pub fn poi(&self, id: PoiId) -> Option<&GroundTruthPoI> {
        self.pois.iter().find(|p| p.id == id)
    }

    pub fn node(&self, id: NodeId) -> Result<&PanoNode, WorldError> {
        self.graph.node(id)
    }

    pub fn is_in_area(&self, id: NodeId) -> bool {
        self.in_area.get(id.index()).copied().unwrap_or(false)
    }

    pub fn pois_visible_from(&self, id: NodeId) -> &[PoiId] {
        self.pois_by_node.get(id.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nodes a session may start from: inside the boundary and outdoors.
    pub fn start_candidates(&self) -> Vec<NodeId> {
        self.graph.nodes.iter().filter(|n| self.is_in_area(n.id) && !n.indoor).map(|n| n.id).collect()
    }

    /// Fewest-hops path over in-area nodes using street moves only.
    /// Includes both endpoints.
    pub fn shortest_path(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        if !self.graph.contains(from) || !self.graph.contains(to) {
            return None;
        }
        let mut prev: Vec<Option<NodeId>> = vec![None; self.graph.len()];
        let mut seen = vec![false; self.graph.len()];
        let mut queue = VecDeque::from([from]);
        seen[from.index()] = true;
        while let Some(n) = queue.pop_front() {
            if n == to {
                let mut path = vec![to];
                let mut cur = to;
                while let Some(p) = prev[cur.index()] {
                    path.push(p);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for &m in &self.graph.nodes[n.index()].neighbors {
                if !seen[m.index()] && self.is_in_area(m) {
                    seen[m.index()] = true;
                    prev[m.index()] = Some(n);
                    queue.push_back(m);
                }
            }
        }
        None
    }

    /// In-area nodes reachable from `from` by street moves.
    pub fn component_of(&self, from: NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        if !self.is_in_area(from) {
            return out;
        }
        let mut queue = VecDeque::from([from]);
        out.insert(from);
        while let Some(n) = queue.pop_front() {
            for &m in &self.graph.nodes[n.index()].neighbors {
                if self.is_in_area(m) && out.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        out
    }
}

/// A uniformly drawn start node, deterministic in `seed`.
pub fn random_start_point(world: &World, seed: u64) -> Result<NodeId, WorldError> {
    random_start_point_with(world, &mut stream_rng(seed, STREAM_START_POINT))
}

pub fn random_start_point_with<R: Rng + ?Sized>(world: &World, rng: &mut R) -> Result<NodeId, WorldError> {
    let candidates = world.start_candidates();
    if candidates.is_empty() {
        return Err(WorldError::EmptyGraph);
    }
    Ok(candidates[rng.random_range(0..candidates.len())])
}

/// Visits per node.
///
/// `raw` counts every arrival. `per_session` counts each node at most once
/// per session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VisitCounter {
    raw: BTreeMap<NodeId, u64>,
    per_session: BTreeMap<NodeId, u64>,
    #[serde(skip)]
    seen: BTreeSet<(SessionId, NodeId)>,
}

impl VisitCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, session: SessionId, node: NodeId) {
        *self.raw.entry(node).or_default() += 1;
        if self.seen.insert((session, node)) {
            *self.per_session.entry(node).or_default() += 1;
        }
    }

    pub fn raw(&self, node: NodeId) -> u64 {
        self.raw.get(&node).copied().unwrap_or(0)
    }

    pub fn per_session(&self, node: NodeId) -> u64 {
        self.per_session.get(&node).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.raw.values().sum()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.raw.keys().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub node: NodeId,
    pub position: GeoPoint,
    pub visits: u64,
    pub session_visits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    /// Share of nodes visited at least once, in `[0, 100]`.
    pub percent: f64,
    /// One row per graph node, in id order.
    pub heatmap: Vec<HeatmapRow>,
}

pub fn coverage(g: &ExplorableGraph, visits: &VisitCounter) -> Result<Coverage, WorldError> {
    if let Some(bad) = visits.nodes().find(|n| !g.contains(*n)) {
        return Err(WorldError::UnknownNode(bad));
    }
    let heatmap: Vec<HeatmapRow> = g
        .nodes
        .iter()
        .map(|n| HeatmapRow {
            node: n.id,
            position: n.position,
            visits: visits.raw(n.id),
            session_visits: visits.per_session(n.id),
        })
        .collect();
    let visited = heatmap.iter().filter(|r| r.visits > 0).count();
    let percent = if heatmap.is_empty() { 0.0 } else { 100.0 * visited as f64 / heatmap.len() as f64 };
    Ok(Coverage { percent, heatmap })
}
