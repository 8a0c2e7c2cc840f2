//! Result bundle directories written by `run-sim`.
//!
//! | file | content |
//! |---|---|
//! | `config.toml` | the effective run configuration |
//! | `world.geojson`, `truth.geojson` | world and ground-truth PoIs |
//! | `actions.jsonl` | log lines of finished sessions, in commit order |
//! | `detections.geojson` | accepted detections with their shots |
//! | `map.geojson`, `map.csv` | confirmed PoIs |
//! | `comparison.csv` | confirmed map against ground truth |
//! | `heatmap.csv` | visits per node |
//! | `sessions.csv`, `errors.csv`, `escapes.csv`, `escape_reference.csv` | behavior |
//! | `detections_per_confirmed.csv`, `cluster_sizes.csv` | cluster sizes |
//! | `summary.json` | run metadata and headline numbers |
//!
//! Every file is a pure function of the configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use vce_core::eval::{
    behavior_stats, cluster_size_histogram, coverage_from_log, detections_per_confirmed, match_maps, BehaviorStats,
    ComparisonRow, PoIMap,
};
use vce_core::sim::{ExperimentResult, RunMeta};
use vce_core::world::Coverage;
use vce_core::{consolidate, ActionLogEntry, Detection, PoICluster, SessionId, SessionState, Strategy, World};

use crate::config::RunConfig;
use crate::error::{Result, VceError};
use crate::{export, geojson, logio};

pub const MATCH_THRESHOLD_M: f64 = 10.0;

#[derive(Debug, Serialize)]
struct Summary<'a> {
    strategy: Strategy,
    schedule: String,
    meta: &'a RunMeta,
    executions: usize,
    completed: usize,
    escaped: usize,
    detections: usize,
    confirmed: usize,
    coverage_percent: f64,
    errors: &'a BTreeMap<String, usize>,
    comparison: &'a ComparisonRow,
}

fn out(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn write_bundle(dir: &Path, config: &RunConfig, world: &World, result: &ExperimentResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(VceError::io(dir))?;
    let mut stored = config.clone();
    stored.world_file = None;
    let cfg_path = out(dir, "config.toml");
    fs::write(&cfg_path, stored.to_toml()?).map_err(VceError::io(&cfg_path))?;
    geojson::write_json(&out(dir, "world.geojson"), &geojson::world_to_geojson(world))?;
    geojson::write_json(&out(dir, "truth.geojson"), &geojson::truth_to_geojson(world))?;
    logio::write_log(&out(dir, "actions.jsonl"), &result.log)?;
    let detections = result.detections();
    geojson::write_json(&out(dir, "detections.geojson"), &geojson::detections_to_geojson(&detections))?;
    let Derived { row, stats, coverage } = write_derived(dir, config, world, &result.log, &result.map)?;
    let summary = Summary {
        strategy: config.experiment.task.strategy,
        schedule: config.experiment.schedule.to_string(),
        meta: &result.meta,
        executions: result.commit_order.len(),
        completed: result.count_state(SessionState::Completed),
        escaped: result.count_state(SessionState::Escaped),
        detections: detections.len(),
        confirmed: result.map.len(),
        coverage_percent: coverage.percent,
        errors: &stats.errors,
        comparison: &row,
    };
    geojson::write_json(&out(dir, "summary.json"), &json!(summary))
}

struct Derived {
    row: ComparisonRow,
    stats: BehaviorStats,
    coverage: Coverage,
}

/// Files computed from the log and map alone.
fn write_derived(
    dir: &Path,
    config: &RunConfig,
    world: &World,
    log: &[ActionLogEntry],
    map: &[PoICluster],
) -> Result<Derived> {
    geojson::write_json(&out(dir, "map.geojson"), &geojson::clusters_to_geojson(map))?;
    export::map(export::create(&out(dir, "map.csv"))?, map)?;

    let crowd = PoIMap::from_clusters("crowd", map);
    let truth = geojson::truth_map(world, "truth");
    let row = match_maps(&crowd, &truth, MATCH_THRESHOLD_M).row(&crowd, &truth);
    export::comparison(export::create(&out(dir, "comparison.csv"))?, std::slice::from_ref(&row))?;

    let coverage = coverage_from_log(world.graph(), log)?;
    export::heatmap(export::create(&out(dir, "heatmap.csv"))?, &coverage)?;

    let stats = behavior_stats(log, config.experiment.taboo_config().as_ref())?;
    write_behavior(dir, &stats)?;

    export::detections_per_confirmed(
        export::create(&out(dir, "detections_per_confirmed.csv"))?,
        &detections_per_confirmed(map),
    )?;
    export::cluster_sizes(export::create(&out(dir, "cluster_sizes.csv"))?, &cluster_size_histogram(map))?;
    Ok(Derived { row, stats, coverage })
}

pub fn write_behavior(dir: &Path, stats: &BehaviorStats) -> Result<()> {
    fs::create_dir_all(dir).map_err(VceError::io(dir))?;
    export::sessions(export::create(&out(dir, "sessions.csv"))?, stats)?;
    export::errors(export::create(&out(dir, "errors.csv"))?, stats)?;
    export::escapes(export::create(&out(dir, "escapes.csv"))?, stats)?;
    export::escape_reference(export::create(&out(dir, "escape_reference.csv"))?, stats.reference)
}

/// A bundle read back from disk.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub config: RunConfig,
    pub world: World,
    pub log: Vec<ActionLogEntry>,
    pub detections: Vec<Detection>,
}

impl Bundle {
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(VceError::Invalid(format!("{} is not a result bundle directory", dir.display())));
        }
        Ok(Self {
            config: RunConfig::load(&out(dir, "config.toml"))?,
            world: geojson::read_world(&out(dir, "world.geojson"))?,
            log: logio::read_log(&out(dir, "actions.jsonl"))?,
            detections: geojson::detections_from_geojson(&geojson::read_json(&out(dir, "detections.geojson"))?)?,
        })
    }

    /// Finished sessions in commit order.
    pub fn session_order(&self) -> Vec<SessionId> {
        let mut seen = std::collections::BTreeSet::new();
        self.log.iter().map(|e| e.session_id).filter(|s| seen.insert(*s)).collect()
    }

    /// Detections grouped per finished session, sessions without any
    /// included.
    pub fn executions(&self) -> Vec<Vec<Detection>> {
        let mut by_session: BTreeMap<SessionId, Vec<Detection>> = BTreeMap::new();
        for d in &self.detections {
            by_session.entry(d.session_id).or_default().push(d.clone());
        }
        self.session_order().into_iter().map(|s| by_session.remove(&s).unwrap_or_default()).collect()
    }

    pub fn map(&self) -> Vec<PoICluster> {
        consolidate(&self.detections, &self.config.experiment.aggregation)
    }
}
