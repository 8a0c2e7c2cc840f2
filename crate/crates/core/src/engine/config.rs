use serde::{Deserialize, Serialize};

use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Basic,
    Taboo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartPointPolicy {
    #[default]
    Random,
}

/// Parameters of one exploration task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub strategy: Strategy,
    /// Sessions that must finish (complete or escape) before the task closes.
    pub num_executions: u32,
    /// Detections each worker is asked for.
    pub num_instances: u32,
    /// Recorded with finished sessions, never paid out here.
    pub reward: f64,
    /// Maximum centroid-to-side distance of a valid triangulation.
    pub delta_m: f64,
    pub start_point_policy: StartPointPolicy,
    /// A submission this close to one of the worker's own detections is a
    /// duplicate.
    pub duplicate_radius_m: f64,
    /// Lets the same worker id run more than one session.
    pub allow_repeat: bool,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Basic,
            num_executions: 60,
            num_instances: 5,
            reward: 0.20,
            delta_m: 10.0,
            start_point_policy: StartPointPolicy::Random,
            duplicate_radius_m: 10.0,
            allow_repeat: false,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.num_instances < 1 {
            return Err(EngineError::InvalidConfig("num_instances must be at least 1"));
        }
        if self.num_executions < 1 {
            return Err(EngineError::InvalidConfig("num_executions must be at least 1"));
        }
        if self.delta_m.is_nan() || self.delta_m <= 0.0 {
            return Err(EngineError::InvalidConfig("delta_m must be positive"));
        }
        if self.duplicate_radius_m.is_nan() || self.duplicate_radius_m < 0.0 {
            return Err(EngineError::InvalidConfig("duplicate_radius_m must be non-negative"));
        }
        if self.reward.is_nan() || self.reward < 0.0 {
            return Err(EngineError::InvalidConfig("reward must be non-negative"));
        }
        Ok(())
    }
}

/// How the distance and time sub-conditions of the escape rule combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EscapeMode {
    #[default]
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabooConfig {
    /// Distinct workers that must detect a PoI before it becomes taboo.
    pub taboo_threshold: u32,
    /// Total distance walked in the session.
    pub escape_distance_m: f64,
    /// Time since the last accepted detection, or since the session start.
    pub escape_time_s: f64,
    pub taboo_radius_m: f64,
    pub escape_mode: EscapeMode,
}

impl Default for TabooConfig {
    fn default() -> Self {
        Self {
            taboo_threshold: 3,
            escape_distance_m: 1800.0,
            escape_time_s: 180.0,
            taboo_radius_m: 10.0,
            escape_mode: EscapeMode::And,
        }
    }
}

impl TabooConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.taboo_threshold < 1 {
            return Err(EngineError::InvalidConfig("taboo_threshold must be at least 1"));
        }
        if !(self.escape_distance_m > 0.0 && self.escape_time_s > 0.0 && self.taboo_radius_m > 0.0) {
            return Err(EngineError::InvalidConfig("taboo distances and times must be positive"));
        }
        Ok(())
    }
}
