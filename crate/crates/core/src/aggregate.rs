//! DBSCAN consolidation of detections into confirmed PoIs.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::{Detection, DetectionId, EngineError};
use crate::geo::{haversine_distance, GeoPoint, LocalFrame, LocalPoint, EARTH_RADIUS_M};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationParams {
    pub eps_m: f64,
    /// Neighborhood size for a core point, the point itself included.
    pub min_pts: usize,
}

impl Default for AggregationParams {
    fn default() -> Self {
        Self { eps_m: 10.0, min_pts: 3 }
    }
}

impl AggregationParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.eps_m > 0.0 && self.eps_m.is_finite()) {
            return Err(EngineError::InvalidConfig("eps_m must be positive"));
        }
        if self.min_pts == 0 {
            return Err(EngineError::InvalidConfig("min_pts must be at least 1"));
        }
        Ok(())
    }
}

/// Clusters as ascending index lists, in order of discovery.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

impl Clustering {
    /// Cluster label per point, `None` for noise.
    pub fn labels(&self, n: usize) -> Vec<Option<usize>> {
        let mut labels = vec![None; n];
        for (c, members) in self.clusters.iter().enumerate() {
            for &i in members {
                labels[i] = Some(c);
            }
        }
        labels
    }
}

/// Latitude-sorted index for eps-neighborhood queries.
///
/// Two points `eps` apart differ by at most `eps / R` radians of latitude,
/// so the band search never misses a neighbor.
struct LatIndex<'a> {
    points: &'a [GeoPoint],
    order: Vec<usize>,
    lats: Vec<f64>,
    band_deg: f64,
}

impl<'a> LatIndex<'a> {
    fn new(points: &'a [GeoPoint], eps_m: f64) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].lat().total_cmp(&points[b].lat()).then(a.cmp(&b)));
        let lats = order.iter().map(|&i| points[i].lat()).collect();
        Self { points, order, lats, band_deg: (eps_m / EARTH_RADIUS_M).to_degrees() * (1.0 + 1e-9) + 1e-12 }
    }

    /// Indices within `eps_m` of point `i` (itself included), ascending.
    fn neighbors(&self, i: usize, eps_m: f64) -> Vec<usize> {
        let p = self.points[i];
        let lo = self.lats.partition_point(|&l| l < p.lat() - self.band_deg);
        let hi = self.lats.partition_point(|&l| l <= p.lat() + self.band_deg);
        let mut out: Vec<usize> =
            self.order[lo..hi].iter().copied().filter(|&j| haversine_distance(p, self.points[j]) <= eps_m).collect();
        out.sort_unstable();
        out
    }
}

/// Classic DBSCAN with the haversine metric. Points are scanned in input
/// order; a border point belongs to the first cluster that reaches it.
pub fn dbscan(points: &[GeoPoint], params: &AggregationParams) -> Clustering {
    const UNSEEN: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;

    let index = LatIndex::new(points, params.eps_m);
    let mut label = vec![UNSEEN; points.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();

    for i in 0..points.len() {
        if label[i] != UNSEEN {
            continue;
        }
        let seeds = index.neighbors(i, params.eps_m);
        if seeds.len() < params.min_pts {
            label[i] = NOISE;
            continue;
        }
        let c = clusters.len();
        let mut members = vec![i];
        label[i] = c;
        let mut queue: VecDeque<usize> = seeds.into_iter().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            if label[j] == NOISE {
                label[j] = c;
                members.push(j);
                continue;
            }
            if label[j] != UNSEEN {
                continue;
            }
            label[j] = c;
            members.push(j);
            let reach = index.neighbors(j, params.eps_m);
            if reach.len() >= params.min_pts {
                queue.extend(reach.into_iter().filter(|&k| label[k] == UNSEEN || label[k] == NOISE));
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }

    let noise = (0..points.len()).filter(|&i| label[i] == NOISE).collect();
    Clustering { clusters, noise }
}

/// A confirmed PoI: one DBSCAN cluster of detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoICluster {
    pub id: u32,
    pub centroid: GeoPoint,
    pub members: Vec<DetectionId>,
    pub distinct_workers: usize,
}

impl PoICluster {
    pub fn n_detections(&self) -> usize {
        self.members.len()
    }
}

/// Mean of `points` in a frame centered on the first one.
pub fn local_mean(points: &[GeoPoint]) -> Option<GeoPoint> {
    let first = *points.first()?;
    let frame = LocalFrame::new(first);
    let local: Result<Vec<LocalPoint>, _> = points.iter().map(|p| frame.project(*p)).collect();
    match local {
        Ok(local) => LocalPoint::mean(&local).map(|m| frame.unproject(m)),
        Err(_) => {
            let n = points.len() as f64;
            let lat = points.iter().map(|p| p.lat()).sum::<f64>() / n;
            let lon = points.iter().map(|p| p.lon()).sum::<f64>() / n;
            GeoPoint::new(lat, lon).ok()
        }
    }
}

/// Clusters detection centroids; noise detections do not reach the map.
pub fn consolidate(detections: &[Detection], params: &AggregationParams) -> Vec<PoICluster> {
    let points: Vec<GeoPoint> = detections.iter().map(|d| d.centroid).collect();
    let clustering = dbscan(&points, params);
    clustering
        .clusters
        .iter()
        .enumerate()
        .filter_map(|(id, members)| {
            let centroid = local_mean(&members.iter().map(|&i| points[i]).collect::<Vec<_>>())?;
            let workers: BTreeSet<_> = members.iter().map(|&i| &detections[i].worker_id).collect();
            Some(PoICluster {
                id: id as u32,
                centroid,
                members: members.iter().map(|&i| detections[i].id).collect(),
                distinct_workers: workers.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{SessionId, Shot, WorkerId};
    use crate::geo::Heading;
    use crate::rng::stream_rng;
    use crate::world::NodeId;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn frame() -> LocalFrame {
        LocalFrame::new(GeoPoint::new(46.07, 11.12).unwrap())
    }

    fn pts(frame: &LocalFrame, xy: &[(f64, f64)]) -> Vec<GeoPoint> {
        xy.iter().map(|&(x, y)| frame.unproject(LocalPoint::new(x, y))).collect()
    }

    /// Textbook O(n²) DBSCAN: core points, connected components of core
    /// points by BFS, then border points to the lowest-index-discovered cluster.
    fn oracle(points: &[GeoPoint], eps: f64, min_pts: usize) -> (Vec<BTreeSet<usize>>, BTreeSet<usize>, Vec<bool>) {
        let n = points.len();
        let nb: Vec<Vec<usize>> =
            (0..n).map(|i| (0..n).filter(|&j| haversine_distance(points[i], points[j]) <= eps).collect()).collect();
        let core: Vec<bool> = nb.iter().map(|v| v.len() >= min_pts).collect();
        let mut comp = vec![usize::MAX; n];
        let mut cores: Vec<BTreeSet<usize>> = Vec::new();
        for i in 0..n {
            if !core[i] || comp[i] != usize::MAX {
                continue;
            }
            let c = cores.len();
            let mut set = BTreeSet::new();
            let mut stack = vec![i];
            comp[i] = c;
            while let Some(j) = stack.pop() {
                set.insert(j);
                for &k in &nb[j] {
                    if core[k] && comp[k] == usize::MAX {
                        comp[k] = c;
                        stack.push(k);
                    }
                }
            }
            cores.push(set);
        }
        let noise = (0..n).filter(|&i| !core[i] && !nb[i].iter().any(|&j| core[j])).collect();
        (cores, noise, core)
    }

    fn random_patch(seed: u64, n: usize) -> Vec<GeoPoint> {
        let mut rng = stream_rng(seed, 99);
        let f = frame();
        (0..n)
            .map(|_| f.unproject(LocalPoint::new(rng.random_range(0.0..300.0), rng.random_range(0.0..300.0))))
            .collect()
    }

    /// Checks `got` against the oracle: identical core components and noise,
    /// and every border point adjacent to a core point of its cluster.
    fn assert_matches_oracle(points: &[GeoPoint], params: &AggregationParams, got: &Clustering) {
        let (cores, noise, is_core) = oracle(points, params.eps_m, params.min_pts);
        assert_eq!(got.noise.iter().copied().collect::<BTreeSet<_>>(), noise);
        let got_cores: BTreeSet<BTreeSet<usize>> =
            got.clusters.iter().map(|c| c.iter().copied().filter(|&i| is_core[i]).collect()).collect();
        assert_eq!(got_cores, cores.into_iter().collect());
        for c in &got.clusters {
            for &i in c.iter().filter(|&&i| !is_core[i]) {
                assert!(c.iter().any(|&j| is_core[j] && haversine_distance(points[i], points[j]) <= params.eps_m));
            }
        }
    }

    #[test]
    fn three_close_points_form_one_cluster() {
        let p = pts(&frame(), &[(0.0, 0.0), (2.0, 1.0), (1.0, 2.5)]);
        let c = dbscan(&p, &AggregationParams::default());
        assert_eq!(c.clusters, vec![vec![0, 1, 2]]);
        assert!(c.noise.is_empty());
    }

    #[test]
    fn isolated_points_are_noise() {
        let p = pts(&frame(), &[(0.0, 0.0), (50.0, 0.0)]);
        let c = dbscan(&p, &AggregationParams::default());
        assert!(c.clusters.is_empty());
        assert_eq!(c.noise, vec![0, 1]);
    }

    #[test]
    fn border_point_goes_to_first_cluster() {
        // two dense groups, a border point 8 m from the edge of each
        let p = pts(
            &frame(),
            &[
                (0.0, 0.0),
                (-3.0, 0.0),
                (-3.0, 3.0),
                (-3.0, -3.0),
                (8.0, 0.0),
                (16.0, 0.0),
                (19.0, 0.0),
                (19.0, 3.0),
                (19.0, -3.0),
            ],
        );
        let params = AggregationParams { eps_m: 10.0, min_pts: 4 };
        let c = dbscan(&p, &params);
        assert_eq!(c.clusters, vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8]]);
        let mut reversed = p.clone();
        reversed.reverse();
        let c = dbscan(&reversed, &params);
        assert_eq!(c.clusters, vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8]]);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let params = AggregationParams::default();
        for seed in 0..30 {
            let p = random_patch(seed, 150);
            assert_matches_oracle(&p, &params, &dbscan(&p, &params));
        }
    }

    #[test]
    fn min_pts_one_has_no_noise() {
        let p = random_patch(3, 60);
        let c = dbscan(&p, &AggregationParams { eps_m: 10.0, min_pts: 1 });
        assert!(c.noise.is_empty());
        assert_eq!(c.clusters.iter().map(Vec::len).sum::<usize>(), 60);
    }

    #[test]
    fn spreading_points_beyond_eps_leaves_only_noise() {
        let grid: Vec<(f64, f64)> =
            (0..5).flat_map(|i| (0..5).map(move |j| (i as f64 * 6.0, j as f64 * 6.0))).collect();
        let p = pts(&frame(), &grid);
        assert_eq!(dbscan(&p, &AggregationParams::default()).clusters.len(), 1);
        let spread: Vec<(f64, f64)> = grid.iter().map(|&(x, y)| (x * 2.0, y * 2.0)).collect();
        let c = dbscan(&pts(&frame(), &spread), &AggregationParams::default());
        assert!(c.clusters.is_empty());
        assert_eq!(c.noise.len(), 25);
    }

    #[test]
    fn shuffles_preserve_the_partition() {
        let params = AggregationParams::default();
        let p = random_patch(11, 150);
        let base = dbscan(&p, &params);
        let (_, _, is_core) = oracle(&p, params.eps_m, params.min_pts);
        let mut rng = stream_rng(5, 0);
        for _ in 0..10 {
            let mut perm: Vec<usize> = (0..p.len()).collect();
            perm.shuffle(&mut rng);
            let shuffled: Vec<GeoPoint> = perm.iter().map(|&i| p[i]).collect();
            let got = dbscan(&shuffled, &params);
            let mapped = Clustering {
                clusters: got.clusters.iter().map(|c| c.iter().map(|&i| perm[i]).collect()).collect(),
                noise: got.noise.iter().map(|&i| perm[i]).collect(),
            };
            assert_matches_oracle(&p, &params, &mapped);
            let (a, b) = (base.labels(p.len()), mapped.labels(p.len()));
            // any disagreement is a border point within eps of two clusters
            for i in (0..p.len()).filter(|&i| !is_core[i]) {
                let claimants: BTreeSet<usize> = (0..p.len())
                    .filter(|&j| is_core[j] && haversine_distance(p[i], p[j]) <= params.eps_m)
                    .filter_map(|j| a[j])
                    .collect();
                if claimants.len() < 2 {
                    assert_eq!(a[i].is_some(), b[i].is_some());
                }
            }
        }
    }

    fn detection(worker: &str, session: u64, ordinal: u32, p: GeoPoint) -> Detection {
        let shot = Shot { position: p, heading: Heading::new(0.0), node: NodeId(0), t: 0.0 };
        Detection {
            id: DetectionId { session: SessionId(session), ordinal },
            worker_id: WorkerId::from(worker),
            session_id: SessionId(session),
            shots: [shot; 3],
            centroid: p,
            dmax_m: 0.0,
            t: 0.0,
        }
    }

    #[test]
    fn consolidate_empty() {
        assert!(consolidate(&[], &AggregationParams::default()).is_empty());
    }

    #[test]
    fn five_workers_one_poi() {
        let f = frame();
        let offsets = [(0.0, 0.0), (3.0, 0.0), (0.0, 3.0), (-3.0, 1.0), (1.0, -2.0)];
        let dets: Vec<Detection> = offsets
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| detection(&alloc::format!("w{k}"), k as u64, 0, f.unproject(LocalPoint::new(x, y))))
            .collect();
        let map = consolidate(&dets, &AggregationParams::default());
        assert_eq!(map.len(), 1);
        assert_eq!(map[0].distinct_workers, 5);
        assert_eq!(map[0].n_detections(), 5);
        let c = f.project(map[0].centroid).unwrap();
        assert!((c.x - 0.2).abs() < 1e-6 && (c.y - 0.4).abs() < 1e-6, "{c:?}");
    }

    #[test]
    fn noise_detections_are_dropped() {
        let f = frame();
        let dets = vec![
            detection("a", 1, 0, f.unproject(LocalPoint::new(0.0, 0.0))),
            detection("b", 2, 0, f.unproject(LocalPoint::new(1.0, 0.0))),
            detection("a", 1, 1, f.unproject(LocalPoint::new(100.0, 0.0))),
        ];
        assert!(consolidate(&dets, &AggregationParams::default()).is_empty());
        let map = consolidate(&dets, &AggregationParams { eps_m: 10.0, min_pts: 2 });
        assert_eq!(map.len(), 1);
        assert_eq!(map[0].distinct_workers, 2);
    }

    proptest! {
        #[test]
        fn agrees_with_oracle_on_small_instances(
            xy in proptest::collection::vec((0.0f64..60.0, 0.0f64..60.0), 0..40),
            min_pts in 1usize..5,
        ) {
            let p = pts(&frame(), &xy);
            let params = AggregationParams { eps_m: 10.0, min_pts };
            assert_matches_oracle(&p, &params, &dbscan(&p, &params));
        }
    }
}
