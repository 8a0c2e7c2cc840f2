//! Synthetic grid cities.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{nodes_within, AreaOfInterest, ExplorableGraph, GroundTruthPoI, NodeId, PoiId, World, WorldError};
use crate::geo::{point_segment_distance, GeoPoint, LocalFrame, LocalPoint};
use crate::rng::{stream_rng, STREAM_WORLD};

/// Parameters of a grid city.
///
/// `grid_rows` x `grid_cols` intersections are joined by straight streets
/// `spacing_m * segments_per_block` long, with a panorama node every
/// `spacing_m` along each street.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub spacing_m: f64,
    pub segments_per_block: usize,
    pub n_pois: usize,
    pub sight_radius_m: f64,
    pub poi_offset_min_m: f64,
    pub poi_offset_max_m: f64,
    /// Minimum distance between two generated PoIs.
    pub min_poi_separation_m: f64,
    /// Gap between the outermost streets and the boundary.
    pub margin_m: f64,
    /// Fast-forward range along a straight street.
    pub jump_range_m: f64,
    /// Adds one dead-end node beyond the boundary at the end of every
    /// east-west street, so walkers can try to leave the area.
    pub exit_spurs: bool,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            grid_rows: 6,
            grid_cols: 6,
            spacing_m: 10.0,
            segments_per_block: 8,
            n_pois: 40,
            sight_radius_m: 25.0,
            poi_offset_min_m: 2.0,
            poi_offset_max_m: 8.0,
            min_poi_separation_m: 25.0,
            margin_m: 10.0,
            jump_range_m: 100.0,
            exit_spurs: false,
            origin_lat: 46.0667,
            origin_lon: 11.1211,
            seed: 1,
        }
    }
}

impl WorldParams {
    fn validate(&self) -> Result<GeoPoint, WorldError> {
        if self.grid_rows < 2 || self.grid_cols < 2 {
            return Err(WorldError::InvalidParams("grid needs at least 2 rows and 2 columns"));
        }
        if !self.spacing_m.is_finite() || self.spacing_m <= 0.0 {
            return Err(WorldError::InvalidParams("spacing_m must be positive"));
        }
        if self.segments_per_block == 0 {
            return Err(WorldError::InvalidParams("segments_per_block must be at least 1"));
        }
        if self.sight_radius_m.is_nan() || self.sight_radius_m <= 0.0 {
            return Err(WorldError::InvalidParams("sight_radius_m must be positive"));
        }
        if !(self.poi_offset_min_m >= 0.0 && self.poi_offset_min_m <= self.poi_offset_max_m) {
            return Err(WorldError::InvalidParams("need 0 <= poi_offset_min_m <= poi_offset_max_m"));
        }
        let distances = [self.margin_m, self.jump_range_m, self.min_poi_separation_m];
        if distances.iter().any(|d| d.is_nan() || *d < 0.0) {
            return Err(WorldError::InvalidParams("distances must be non-negative"));
        }
        let extent = self.spacing_m * self.segments_per_block as f64 * (self.grid_rows.max(self.grid_cols) - 1) as f64;
        if extent + 2.0 * self.margin_m > 20_000.0 {
            return Err(WorldError::InvalidParams("grid larger than 20 km"));
        }
        Ok(GeoPoint::new(self.origin_lat, self.origin_lon)?)
    }
}

struct GridNode {
    local: LocalPoint,
    row_street: Option<i64>,
    col_street: Option<i64>,
}

/// Builds a grid world. The output is a pure function of `params`.
pub fn generate_synthetic_world(params: &WorldParams) -> Result<World, WorldError> {
    let origin = params.validate()?;
    let frame = LocalFrame::new(origin);
    let spb = params.segments_per_block;
    let s = params.spacing_m;
    let max_i = (params.grid_cols - 1) * spb;
    let max_j = (params.grid_rows - 1) * spb;
    let width = max_i as f64 * s;
    let height = max_j as f64 * s;

    let mut graph = ExplorableGraph::new();
    let mut grid: Vec<GridNode> = Vec::new();
    let mut index_of = alloc::vec![None; (max_i + 1) * (max_j + 1)];
    for j in 0..=max_j {
        for i in 0..=max_i {
            let on_row = j % spb == 0;
            let on_col = i % spb == 0;
            if !(on_row || on_col) {
                continue;
            }
            let local = LocalPoint::new(i as f64 * s, j as f64 * s);
            let id = graph.add_node(frame.unproject(local));
            index_of[j * (max_i + 1) + i] = Some(id);
            grid.push(GridNode {
                local,
                row_street: on_row.then_some(j as i64),
                col_street: on_col.then_some(i as i64),
            });
        }
    }
    let at = |i: usize, j: usize| index_of[j * (max_i + 1) + i];
    for j in 0..=max_j {
        for i in 0..=max_i {
            let Some(a) = at(i, j) else { continue };
            if j % spb == 0 && i < max_i {
                if let Some(b) = at(i + 1, j) {
                    graph.add_edge(a, b)?;
                }
            }
            if i % spb == 0 && j < max_j {
                if let Some(b) = at(i, j + 1) {
                    graph.add_edge(a, b)?;
                }
            }
        }
    }

    if params.exit_spurs {
        let reach = params.margin_m + s;
        for j in (0..=max_j).step_by(spb) {
            for (i, x) in [(0, -reach), (max_i, width + reach)] {
                let local = LocalPoint::new(x, j as f64 * s);
                let id = graph.add_node(frame.unproject(local));
                grid.push(GridNode { local, row_street: Some(j as i64), col_street: None });
                let end = at(i, j).expect("intersections always exist");
                graph.add_edge(end, id)?;
            }
        }
    }

    for (a, na) in grid.iter().enumerate() {
        let visible: BTreeSet<NodeId> = grid
            .iter()
            .enumerate()
            .filter(|&(b, nb)| {
                let same_street = (na.row_street.is_some() && na.row_street == nb.row_street)
                    || (na.col_street.is_some() && na.col_street == nb.col_street);
                b != a && same_street && na.local.distance(&nb.local) <= params.jump_range_m
            })
            .map(|(b, _)| NodeId(b as u32))
            .collect();
        graph.set_visible_nodes(NodeId(a as u32), visible)?;
    }

    let (lo_x, lo_y) = (-params.margin_m, -params.margin_m);
    let (hi_x, hi_y) = (width + params.margin_m, height + params.margin_m);
    let ring: Vec<GeoPoint> = [(lo_x, lo_y), (hi_x, lo_y), (hi_x, hi_y), (lo_x, hi_y), (lo_x, lo_y)]
        .iter()
        .map(|&(x, y)| frame.unproject(LocalPoint::new(x, y)))
        .collect();
    let aoi = AreaOfInterest::new("synthetic-grid", ring)?;

    // Street centerlines, used to keep PoIs off the roadway.
    let mut streets: Vec<(LocalPoint, LocalPoint)> = Vec::new();
    for j in (0..=max_j).step_by(spb) {
        let y = j as f64 * s;
        streets.push((LocalPoint::new(0.0, y), LocalPoint::new(width, y)));
    }
    for i in (0..=max_i).step_by(spb) {
        let x = i as f64 * s;
        streets.push((LocalPoint::new(x, 0.0), LocalPoint::new(x, height)));
    }

    let mut rng = stream_rng(params.seed, STREAM_WORLD);
    let street_nodes = grid.len() - if params.exit_spurs { 2 * params.grid_rows } else { 0 };
    let mut placed: Vec<LocalPoint> = Vec::with_capacity(params.n_pois);
    let mut attempts = 0usize;
    let max_attempts = 1000 * params.n_pois.max(1);
    while placed.len() < params.n_pois {
        attempts += 1;
        if attempts > max_attempts {
            return Err(WorldError::InvalidParams("could not place all PoIs; lower n_pois or min_poi_separation_m"));
        }
        let anchor = grid[rng.random_range(0..street_nodes)].local;
        let angle = rng.random_range(0.0..core::f64::consts::TAU);
        let offset = if params.poi_offset_max_m > params.poi_offset_min_m {
            rng.random_range(params.poi_offset_min_m..params.poi_offset_max_m)
        } else {
            params.poi_offset_min_m
        };
        let p = LocalPoint::new(anchor.x + offset * libm::cos(angle), anchor.y + offset * libm::sin(angle));
        let in_bounds = p.x >= lo_x && p.x <= hi_x && p.y >= lo_y && p.y <= hi_y;
        let off_road = streets.iter().all(|&(a, b)| point_segment_distance(p, a, b) >= params.poi_offset_min_m);
        let separated = placed.iter().all(|q| q.distance(&p) >= params.min_poi_separation_m);
        if in_bounds && off_road && separated {
            placed.push(p);
        }
    }

    let pois = placed
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let position = frame.unproject(*p);
            GroundTruthPoI {
                id: PoiId(k as u32),
                position,
                visible_from: nodes_within(&graph, position, params.sight_radius_m),
            }
        })
        .collect();

    World::new(graph, aoi, pois)
}
