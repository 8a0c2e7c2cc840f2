//! Plot-ready CSV tables, one per chart.

use std::collections::BTreeMap;
use std::path::Path;

use vce_core::aggregate::local_mean;
use vce_core::engine::Action;
use vce_core::eval::{behavior_stats, coverage_from_log, detections_per_confirmed, sampling_curve, BehaviorStats};
use vce_core::geo::haversine_distance;
use vce_core::{consolidate, ActionLogEntry, Detection, GeoPoint, SessionId, World};

use crate::bundle::{Bundle, MATCH_THRESHOLD_M};
use crate::error::{Result, VceError};
use crate::export::{self, write_table};

/// Progress fractions at which distances from the area center are sampled.
pub const PROGRESS_STAGES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

pub fn area_center(world: &World) -> GeoPoint {
    local_mean(world.aoi().boundary()).expect("boundary has vertices")
}

/// One stretch of a session between two detections.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub session_id: SessionId,
    /// 1-based detection index ending the stretch, `None` for the tail.
    pub k: Option<usize>,
    pub steps: usize,
    pub distance_m: f64,
    pub time_s: f64,
}

pub fn segments(log: &[ActionLogEntry]) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < log.len() {
        let id = log[i].session_id;
        let end = log[i..].iter().position(|e| e.session_id != id).map_or(log.len(), |p| i + p);
        let mut seg = Segment { session_id: id, k: None, steps: 0, distance_m: 0.0, time_s: 0.0 };
        let mut since = log[i].t;
        let mut k = 0;
        for e in &log[i..end] {
            match &e.action {
                Action::Move { from: Some(_), distance_m, .. } => {
                    seg.steps += 1;
                    seg.distance_m += distance_m;
                }
                Action::SubmitOk { .. } => {
                    k += 1;
                    seg.k = Some(k);
                    seg.time_s = e.t - since;
                    since = e.t;
                    out.push(seg.clone());
                    seg.k = None;
                    seg.steps = 0;
                    seg.distance_m = 0.0;
                }
                _ => {}
            }
        }
        seg.time_s = log[end - 1].t - since;
        out.push(seg);
        i = end;
    }
    out
}

/// Distance from `center` at each progress stage, by move count.
pub fn centroid_distances(log: &[ActionLogEntry], center: GeoPoint) -> Vec<(SessionId, f64, f64)> {
    let mut paths: Vec<(SessionId, Vec<GeoPoint>)> = Vec::new();
    for e in log {
        if let Action::Move { to_position, .. } = &e.action {
            match paths.last_mut() {
                Some((id, path)) if *id == e.session_id => path.push(*to_position),
                _ => paths.push((e.session_id, vec![*to_position])),
            }
        }
    }
    paths
        .into_iter()
        .flat_map(|(id, path)| {
            PROGRESS_STAGES.iter().map(move |&stage| {
                let idx = (stage * (path.len() - 1) as f64).round() as usize;
                (id, stage, haversine_distance(path[idx], center))
            })
        })
        .collect()
}

/// Per ground-truth PoI: detections whose nearest PoI it is, within the
/// match threshold.
pub fn detections_per_poi(world: &World, detections: &[Detection]) -> Vec<(u32, usize, usize)> {
    let mut counts: BTreeMap<u32, (usize, std::collections::BTreeSet<&str>)> = BTreeMap::new();
    for d in detections {
        let nearest = world
            .pois()
            .iter()
            .map(|p| (haversine_distance(p.position, d.centroid), p.id.0))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((dist, id)) = nearest {
            if dist <= MATCH_THRESHOLD_M {
                let entry = counts.entry(id).or_default();
                entry.0 += 1;
                entry.1.insert(d.worker_id.0.as_str());
            }
        }
    }
    world
        .pois()
        .iter()
        .map(|p| {
            let (n, workers) = counts.get(&p.id.0).cloned().unwrap_or_default();
            (p.id.0, n, workers.len())
        })
        .collect()
}

fn error_buckets(stats: &BehaviorStats) -> Vec<(String, usize)> {
    let mut buckets = vec![0usize; 7];
    for s in &stats.sessions {
        let n: usize = s.errors.values().sum();
        buckets[n.min(6)] += 1;
    }
    buckets.into_iter().enumerate().map(|(i, c)| (if i == 6 { ">5".to_string() } else { i.to_string() }, c)).collect()
}

/// Writes every chart table for a bundle into `dir`.
pub fn write_plot_data(bundle: &Bundle, dir: &Path, samples: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(VceError::io(dir))?;
    let file = |name: &str| export::create(&dir.join(name));
    let world = &bundle.world;
    let log = &bundle.log;
    let params = &bundle.config.experiment.aggregation;
    let center = area_center(world);

    let coverage = coverage_from_log(world.graph(), log)?;
    export::heatmap(file("coverage_heatmap.csv")?, &coverage)?;

    write_table(
        file("centroid_distance.csv")?,
        &["session_id", "progress", "distance_m"],
        centroid_distances(log, center)
            .into_iter()
            .map(|(id, stage, d)| vec![id.0.to_string(), stage.to_string(), d.to_string()]),
    )?;

    write_table(
        file("poi_distance_detections.csv")?,
        &["poi_id", "distance_from_center_m", "detections", "distinct_workers"],
        detections_per_poi(world, &bundle.detections).into_iter().map(|(id, n, w)| {
            let pos = world.poi(vce_core::PoiId(id)).map(|p| p.position).unwrap_or(center);
            vec![id.to_string(), haversine_distance(pos, center).to_string(), n.to_string(), w.to_string()]
        }),
    )?;

    let executions = bundle.executions();
    export::curve(file("sampling_curve.csv")?, &sampling_curve(&executions, params, samples, seed))?;

    let order = bundle.session_order();
    let mut cumulative: Vec<Detection> = Vec::new();
    let mut rows = Vec::new();
    for (i, (id, dets)) in order.iter().zip(&executions).enumerate() {
        cumulative.extend(dets.iter().cloned());
        rows.push(vec![
            (i + 1).to_string(),
            id.0.to_string(),
            cumulative.len().to_string(),
            consolidate(&cumulative, params).len().to_string(),
        ]);
    }
    write_table(
        file("detections_over_workers.csv")?,
        &["worker", "session_id", "total_detections", "confirmed"],
        rows,
    )?;

    export::detections_per_confirmed(file("detections_per_confirmed.csv")?, &detections_per_confirmed(&bundle.map()))?;

    let stats = behavior_stats(log, bundle.config.experiment.taboo_config().as_ref())?;
    let outcomes: BTreeMap<SessionId, String> =
        stats.sessions.iter().map(|s| (s.session_id, format!("{:?}", s.outcome))).collect();
    write_table(
        file("steps_before_detection.csv")?,
        &["session_id", "outcome", "detection", "steps", "distance_m", "time_s"],
        segments(log).into_iter().map(|s| {
            vec![
                s.session_id.0.to_string(),
                outcomes.get(&s.session_id).cloned().unwrap_or_default(),
                s.k.map_or_else(|| "end".to_string(), |k| k.to_string()),
                s.steps.to_string(),
                s.distance_m.to_string(),
                s.time_s.to_string(),
            ]
        }),
    )?;

    export::escapes(file("escape_scatter.csv")?, &stats)?;
    export::escape_reference(file("escape_reference.csv")?, stats.reference)?;

    write_table(
        file("interface_errors.csv")?,
        &["errors", "workers"],
        error_buckets(&stats).into_iter().map(|(b, c)| vec![b, c.to_string()]),
    )?;

    export::sessions(file("time_distance.csv")?, &stats)
}
