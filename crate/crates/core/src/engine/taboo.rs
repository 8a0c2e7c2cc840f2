//! Registry of PoIs that enough workers have already found.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Detection, DetectionId, TabooConfig, WorkerId};
use crate::geo::{haversine_distance, GeoPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateCluster {
    pub id: u32,
    /// Running mean of member centroids.
    pub centroid: GeoPoint,
    pub members: Vec<DetectionId>,
    pub workers: BTreeSet<WorkerId>,
    pub taboo: bool,
    sum_lat: f64,
    sum_lon: f64,
}

impl CandidateCluster {
    pub fn distinct_workers(&self) -> usize {
        self.workers.len()
    }
}

/// Candidate clusters of finished sessions' detections.
///
/// Written only when a session finishes and read only when one starts, so a
/// running session never sees updates made after it began.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TabooRegistry {
    clusters: Vec<CandidateCluster>,
}

impl TabooRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clusters(&self) -> &[CandidateCluster] {
        &self.clusters
    }

    pub fn taboo_positions(&self) -> Vec<GeoPoint> {
        self.clusters.iter().filter(|c| c.taboo).map(|c| c.centroid).collect()
    }

    /// Folds one finished session's detections into the registry.
    pub fn update(&mut self, detections: &[Detection], config: &TabooConfig) {
        for det in detections {
            let nearest = self
                .clusters
                .iter()
                .enumerate()
                .map(|(i, c)| (i, haversine_distance(c.centroid, det.centroid)))
                .filter(|&(_, d)| d <= config.taboo_radius_m)
                // the earlier (lower id) cluster wins ties
                .fold(None::<(usize, f64)>, |best, cur| match best {
                    Some(b) if b.1 <= cur.1 => Some(b),
                    _ => Some(cur),
                });
            let idx = match nearest {
                Some((i, _)) => i,
                None => {
                    self.clusters.push(CandidateCluster {
                        id: self.clusters.len() as u32,
                        centroid: det.centroid,
                        members: Vec::new(),
                        workers: BTreeSet::new(),
                        taboo: false,
                        sum_lat: 0.0,
                        sum_lon: 0.0,
                    });
                    self.clusters.len() - 1
                }
            };
            let cluster = &mut self.clusters[idx];
            cluster.members.push(det.id);
            cluster.workers.insert(det.worker_id.clone());
            cluster.sum_lat += det.centroid.lat();
            cluster.sum_lon += det.centroid.lon();
            let n = cluster.members.len() as f64;
            if let Ok(c) = GeoPoint::new(cluster.sum_lat / n, cluster.sum_lon / n) {
                cluster.centroid = c;
            }
            if cluster.workers.len() >= config.taboo_threshold as usize {
                cluster.taboo = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{SessionId, Shot};
    use crate::geo::{Heading, LocalFrame, LocalPoint};
    use crate::world::NodeId;

    fn det(worker: &str, session: u64, frame: &LocalFrame, x: f64, y: f64) -> Detection {
        let p = frame.unproject(LocalPoint::new(x, y));
        let shot = Shot { position: p, heading: Heading::new(0.0), node: NodeId(0), t: 0.0 };
        Detection {
            id: DetectionId { session: SessionId(session), ordinal: 0 },
            worker_id: WorkerId::from(worker),
            session_id: SessionId(session),
            shots: [shot; 3],
            centroid: p,
            dmax_m: 0.0,
            t: 0.0,
        }
    }

    fn frame() -> LocalFrame {
        LocalFrame::new(GeoPoint::new(46.07, 11.12).unwrap())
    }

    #[test]
    fn becomes_taboo_at_threshold() {
        let f = frame();
        let cfg = TabooConfig::default();
        let mut reg = TabooRegistry::new();
        reg.update(&[det("a", 1, &f, 0.0, 0.0)], &cfg);
        reg.update(&[det("b", 2, &f, 3.0, 1.0)], &cfg);
        assert!(reg.taboo_positions().is_empty());
        reg.update(&[det("c", 3, &f, -1.0, 3.5)], &cfg);
        assert_eq!(reg.clusters().len(), 1);
        assert_eq!(reg.taboo_positions().len(), 1);
        let c = f.project(reg.clusters()[0].centroid).unwrap();
        assert!((c.x - 2.0 / 3.0).abs() < 1e-6 && (c.y - 1.5).abs() < 1e-6);
    }

    #[test]
    fn same_worker_does_not_count_twice() {
        let f = frame();
        let cfg = TabooConfig::default();
        let mut reg = TabooRegistry::new();
        reg.update(&[det("a", 1, &f, 0.0, 0.0)], &cfg);
        reg.update(&[det("a", 2, &f, 1.0, 0.0)], &cfg);
        reg.update(&[det("b", 3, &f, 0.0, 1.0)], &cfg);
        assert_eq!(reg.clusters()[0].members.len(), 3);
        assert_eq!(reg.clusters()[0].distinct_workers(), 2);
        assert!(!reg.clusters()[0].taboo);
    }

    #[test]
    fn far_detections_found_separate_clusters() {
        let f = frame();
        let cfg = TabooConfig::default();
        let mut reg = TabooRegistry::new();
        reg.update(&[det("a", 1, &f, 0.0, 0.0), det("a", 1, &f, 25.0, 0.0)], &cfg);
        assert_eq!(reg.clusters().len(), 2);
    }

    #[test]
    fn ties_go_to_the_lowest_cluster_id() {
        // on the prime meridian the two candidates are exactly equidistant
        let f = LocalFrame::new(GeoPoint::new(46.07, 0.0).unwrap());
        let cfg = TabooConfig::default();
        let mut reg = TabooRegistry::new();
        reg.update(&[det("a", 1, &f, -6.0, 0.0), det("a", 1, &f, 6.0, 0.0)], &cfg);
        assert_eq!(reg.clusters().len(), 2);
        reg.update(&[det("b", 2, &f, 0.0, 0.0)], &cfg);
        assert_eq!(reg.clusters()[0].members.len(), 2);
        assert_eq!(reg.clusters()[1].members.len(), 1);
    }
}
