//! A small hand-built world used by examples and tests.
//!
//! ```text
//!  y=70                  26
//!                         |
//!  y=20                  21          22          23          24          25
//!                         |           |           |           |           |
//!  y=0   0 - 1 - 2 - 3 - 4 ... (every 10 m) ... 16 ... 18 - 19 - 20 ---- 27 (outside)
//!        x=0     x=20        x=60       x=100       x=140       x=180  x=200  x=250
//! ```
//!
//! Nodes 0..=20 run east along y = 0 every 10 m and can fast-forward to any
//! other node of that street. Side streets 21..=25 stand 20 m north of
//! x = 20, 60, 100, 140, 180. Node 26 is 50 m north of 21. Node 27 lies
//! beyond the eastern boundary.
//!
//! Each side-street column is a capture site: shots from `(x-20, 0)`,
//! `(x, 20)` and `(x+20, 0)` aimed at the PoI at `(x, -4)` meet there.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::engine::{EngineError, Experiment, SessionId};
use crate::geo::{GeoPoint, Heading, LocalFrame, LocalPoint};
use crate::world::{nodes_within, AreaOfInterest, ExplorableGraph, GroundTruthPoI, NodeId, PoiId, World};

pub const ORIGIN_LAT: f64 = 46.07;
pub const ORIGIN_LON: f64 = 11.12;

/// Side-street x coordinates, one capture site each.
pub const CAPTURE_SITES_X: [f64; 5] = [20.0, 60.0, 100.0, 140.0, 180.0];

pub const CAPTURE_POINT_Y: f64 = -4.0;

pub const OUTSIDE_NODE: NodeId = NodeId(27);
pub const FAR_NORTH_NODE: NodeId = NodeId(26);

pub fn frame() -> LocalFrame {
    LocalFrame::new(GeoPoint::new(ORIGIN_LAT, ORIGIN_LON).expect("valid origin"))
}

pub fn main_street_node(x: f64) -> NodeId {
    NodeId(libm::round(x / 10.0) as u32)
}

pub fn side_street_node(site: usize) -> NodeId {
    NodeId(21 + site as u32)
}

/// Build the fixture world; PoIs sit 4 m south of each main-street junction.
pub fn scripted_world() -> World {
    let frame = frame();
    let mut g = ExplorableGraph::new();
    let at = |x: f64, y: f64| frame.unproject(LocalPoint::new(x, y));
    for i in 0..=20 {
        g.add_node(at(i as f64 * 10.0, 0.0));
    }
    for x in CAPTURE_SITES_X {
        g.add_node(at(x, 20.0));
    }
    g.add_node(at(20.0, 70.0));
    g.add_node(at(250.0, 0.0));

    for i in 0..20 {
        g.add_edge(NodeId(i), NodeId(i + 1)).expect("valid edge");
    }
    for (site, x) in CAPTURE_SITES_X.iter().enumerate() {
        g.add_edge(main_street_node(*x), side_street_node(site)).expect("valid edge");
    }
    g.add_edge(side_street_node(0), FAR_NORTH_NODE).expect("valid edge");
    g.add_edge(NodeId(20), OUTSIDE_NODE).expect("valid edge");

    for i in 0..=20u32 {
        let visible: BTreeSet<NodeId> = (0..=20u32).filter(|&j| j != i).map(NodeId).collect();
        g.set_visible_nodes(NodeId(i), visible).expect("valid nodes");
    }
    g.set_visible_nodes(FAR_NORTH_NODE, BTreeSet::from([main_street_node(20.0)])).expect("valid nodes");

    let ring = [(-10.0, -10.0), (210.0, -10.0), (210.0, 80.0), (-10.0, 80.0), (-10.0, -10.0)]
        .iter()
        .map(|&(x, y)| at(x, y))
        .collect();
    let aoi = AreaOfInterest::new("scripted", ring).expect("valid area");

    let pois: Vec<GroundTruthPoI> = CAPTURE_SITES_X
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let position = at(*x, CAPTURE_POINT_Y);
            GroundTruthPoI { id: PoiId(k as u32), position, visible_from: nodes_within(&g, position, 25.0) }
        })
        .collect();
    World::new(g, aoi, pois).expect("valid world")
}

/// One step of a scripted session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Move(NodeId),
    Shoot(Heading),
    Submit,
}

/// Steps that walk from `(x-20, 0)` through the three shot positions of
/// capture site `site` and submit. The session must start at `(x-20, 0)`.
pub fn capture_steps(site: usize) -> Vec<Step> {
    let x = CAPTURE_SITES_X[site];
    let m = main_street_node;
    let oblique = libm::atan2(20.0, -4.0).to_degrees();
    alloc::vec![
        Step::Shoot(Heading::new(oblique)),
        Step::Move(m(x - 10.0)),
        Step::Move(m(x)),
        Step::Move(side_street_node(site)),
        Step::Shoot(Heading::new(180.0)),
        Step::Move(m(x)),
        Step::Move(m(x + 10.0)),
        Step::Move(m(x + 20.0)),
        Step::Shoot(Heading::new(360.0 - oblique)),
        Step::Submit,
    ]
}

/// Plays `steps` in session `id`, one second apart after `t`. Returns the
/// time of the last step.
pub fn run_steps(exp: &mut Experiment, id: SessionId, steps: &[Step], mut t: f64) -> Result<f64, EngineError> {
    for step in steps {
        t += 1.0;
        match *step {
            Step::Move(n) => {
                exp.move_to(id, n, t)?;
            }
            Step::Shoot(h) => {
                exp.take_shot(id, h, t)?;
            }
            Step::Submit => {
                exp.submit(id, t)?;
            }
        }
    }
    Ok(t)
}

/// Capture point of site `site`, which is also PoI `site`.
pub fn capture_point(site: usize) -> GeoPoint {
    frame().unproject(LocalPoint::new(CAPTURE_SITES_X[site], CAPTURE_POINT_Y))
}
