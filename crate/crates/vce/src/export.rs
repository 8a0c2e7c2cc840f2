//! CSV exports.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use vce_core::eval::{BehaviorStats, ComparisonRow, CurvePoint, EscapeReference};
use vce_core::world::Coverage;
use vce_core::PoICluster;

use crate::error::{Result, VceError};

pub fn write_rows<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a header-only file when `rows` is empty.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(VceError::io(path))
}

pub fn comparison<W: Write>(w: W, rows: &[ComparisonRow]) -> Result<()> {
    write_table(
        w,
        &["mapA", "mapB", "|A|", "|B|", "union", "intersect", "AminusB", "BminusA", "jaccard"],
        rows.iter().map(|r| {
            vec![
                r.map_a.clone(),
                r.map_b.clone(),
                r.size_a.to_string(),
                r.size_b.to_string(),
                r.union.to_string(),
                r.intersect.to_string(),
                r.a_minus_b.to_string(),
                r.b_minus_a.to_string(),
                r.jaccard.to_string(),
            ]
        }),
    )
}

pub fn curve<W: Write>(w: W, points: &[CurvePoint]) -> Result<()> {
    write_table(w, &["n", "mean_confirmed"], points.iter().map(|p| vec![p.n.to_string(), p.mean_confirmed.to_string()]))
}

pub fn heatmap<W: Write>(w: W, coverage: &Coverage) -> Result<()> {
    write_table(
        w,
        &["node_id", "lat", "lon", "visits", "session_visits"],
        coverage.heatmap.iter().map(|r| {
            vec![
                r.node.0.to_string(),
                r.position.lat().to_string(),
                r.position.lon().to_string(),
                r.visits.to_string(),
                r.session_visits.to_string(),
            ]
        }),
    )
}

pub fn map<W: Write>(w: W, map: &[PoICluster]) -> Result<()> {
    write_table(
        w,
        &["cluster_id", "lat", "lon", "n_detections", "distinct_workers"],
        map.iter().map(|c| {
            vec![
                c.id.to_string(),
                c.centroid.lat().to_string(),
                c.centroid.lon().to_string(),
                c.n_detections().to_string(),
                c.distinct_workers.to_string(),
            ]
        }),
    )
}

/// Cluster sizes, largest first, one row per confirmed PoI.
pub fn detections_per_confirmed<W: Write>(w: W, sizes: &[usize]) -> Result<()> {
    write_table(
        w,
        &["rank", "n_detections"],
        sizes.iter().enumerate().map(|(i, s)| vec![(i + 1).to_string(), s.to_string()]),
    )
}

pub fn cluster_sizes<W: Write>(w: W, hist: &std::collections::BTreeMap<usize, usize>) -> Result<()> {
    write_table(w, &["cluster_size", "count"], hist.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]))
}

pub fn sessions<W: Write>(w: W, stats: &BehaviorStats) -> Result<()> {
    write_table(
        w,
        &[
            "session_id",
            "worker_id",
            "outcome",
            "time_s",
            "distance_m",
            "moves",
            "n_detections",
            "steps_to_first",
            "steps_after_detection",
            "errors",
        ],
        stats.sessions.iter().map(|s| {
            vec![
                s.session_id.0.to_string(),
                s.worker_id.0.clone(),
                format!("{:?}", s.outcome),
                s.time_s.to_string(),
                s.distance_m.to_string(),
                s.moves.to_string(),
                s.n_detections.to_string(),
                s.steps_to_first.to_string(),
                s.steps_after_detection.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(";"),
                s.errors.values().sum::<usize>().to_string(),
            ]
        }),
    )
}

pub fn errors<W: Write>(w: W, stats: &BehaviorStats) -> Result<()> {
    write_table(
        w,
        &["kind", "count"],
        ["boundary", "triangulation", "duplicate", "taboo"]
            .iter()
            .map(|k| vec![k.to_string(), stats.errors.get(*k).copied().unwrap_or(0).to_string()]),
    )
}

pub fn escapes<W: Write>(w: W, stats: &BehaviorStats) -> Result<()> {
    write_table(
        w,
        &["session_id", "distance_walked_m", "since_last_detection_s", "n_detections"],
        stats.escapes.iter().map(|e| {
            vec![
                e.session_id.0.to_string(),
                e.distance_walked_m.to_string(),
                e.since_last_detection_s.to_string(),
                e.n_detections.to_string(),
            ]
        }),
    )
}

/// The two dotted threshold lines of the escape scatter.
pub fn escape_reference<W: Write>(w: W, reference: Option<EscapeReference>) -> Result<()> {
    write_table(
        w,
        &["line", "value"],
        reference.into_iter().flat_map(|r| {
            [
                vec!["escape_distance_m".to_string(), r.distance_m.to_string()],
                vec!["escape_time_s".to_string(), r.time_s.to_string()],
            ]
        }),
    )
}
