//! Experiment configuration files.
//!
//! One experiment per TOML file. Top-level keys are `seed`, `schedule`,
//! `step_cap`, `max_sessions`, `world_file` and `instructions`; the tables
//! `[task]`, `[taboo]`, `[aggregation]`, `[policy]`, `[costs]` and `[world]`
//! hold the rest. Every key is optional.
//!
//! ```toml
//! seed = 7
//! schedule = "interleaved:3"
//!
//! [task]
//! strategy = "taboo"
//! num_executions = 60
//!
//! [policy]
//! detection_prob = 0.7
//! heading_noise_deg = 1.0
//!
//! [world]
//! n_pois = 40
//! seed = 8
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use vce_core::sim::ExperimentConfig;
use vce_core::world::generate_synthetic_world;
use vce_core::{World, WorldParams};

use crate::error::{Result, VceError};
use crate::geojson;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    /// Read the world from this GeoJSON file instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub world_file: Option<PathBuf>,
    /// HTML shown to workers.
    pub instructions: String,
    pub world: WorldParams,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(VceError::io(path))?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| VceError::parse(path, e))?;
        if let Some(file) = &config.world_file {
            if file.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                config.world_file = Some(base.join(file));
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| VceError::Invalid(e.to_string()))
    }

    pub fn build_world(&self) -> Result<Arc<World>> {
        let world = match &self.world_file {
            Some(path) => geojson::read_world(path)?,
            None => generate_synthetic_world(&self.world)?,
        };
        Ok(Arc::new(world))
    }
}

/// World parameters from either a full run config (its `[world]` table) or
/// a bare parameter file.
pub fn load_world_params(path: &Path) -> Result<WorldParams> {
    let text = fs::read_to_string(path).map_err(VceError::io(path))?;
    let value: toml::Table = toml::from_str(&text).map_err(|e| VceError::parse(path, e))?;
    let table = match value.get("world") {
        Some(toml::Value::Table(t)) => t.clone(),
        Some(_) => return Err(VceError::parse(path, "`world` must be a table")),
        None => value,
    };
    toml::Value::Table(table).try_into().map_err(|e| VceError::parse(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vce_core::sim::Schedule;
    use vce_core::Strategy;

    #[test]
    fn documented_example_parses() {
        let text = r#"
seed = 7
schedule = "interleaved:3"

[task]
strategy = "taboo"
num_executions = 60

[policy]
detection_prob = 0.7
heading_noise_deg = 1.0

[world]
n_pois = 40
seed = 8
"#;
        let c: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(c.experiment.seed, 7);
        assert_eq!(c.experiment.schedule, Schedule::Interleaved { k: 3 });
        assert_eq!(c.experiment.task.strategy, Strategy::Taboo);
        assert_eq!(c.experiment.task.num_instances, 5);
        assert_eq!(c.experiment.policy.detection_prob, 0.7);
        assert_eq!(c.world.seed, 8);
        assert_eq!(c.experiment.step_cap, 5000);
    }

    #[test]
    fn empty_file_is_default() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn roundtrip() {
        let mut c = RunConfig::default();
        c.experiment.schedule = Schedule::Interleaved { k: 2 };
        c.instructions = "<p>find bike racks</p>".into();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_schedule_rejected() {
        assert!(toml::from_str::<RunConfig>("schedule = \"parallel\"").is_err());
    }
}
