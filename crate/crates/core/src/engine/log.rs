//! Append-only action log entries.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{DetectionId, SessionId, TriangulationFailure, WorkerId};
use crate::geo::{GeoPoint, Heading};
use crate::world::NodeId;

/// Explanation code attached to boundary reverts.
pub const OUTSIDE_BOUNDARY: &str = "OUTSIDE_BOUNDARY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Move,
    BoundaryRevert,
    ShotTaken,
    ShotDiscarded,
    SubmitOk,
    SubmitFailTriangulation,
    SubmitFailDuplicate,
    SubmitFailTaboo,
    Escape,
    Complete,
    Abandon,
}

impl ActionKind {
    pub fn is_interface_error(self) -> bool {
        matches!(
            self,
            ActionKind::BoundaryRevert
                | ActionKind::SubmitFailTriangulation
                | ActionKind::SubmitFailDuplicate
                | ActionKind::SubmitFailTaboo
        )
    }
}

/// Present on the placement entry that opens every session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStart {
    pub worker_id: WorkerId,
    /// Taboo positions frozen for the whole session.
    pub taboo_snapshot: Vec<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Action {
    Move {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<NodeId>,
        to: NodeId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from_position: Option<GeoPoint>,
        to_position: GeoPoint,
        distance_m: f64,
        #[serde(default)]
        fast_forward: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<SessionStart>,
    },
    BoundaryRevert {
        attempted: NodeId,
        reverted_to: NodeId,
        code: String,
    },
    ShotTaken {
        index: usize,
        node: NodeId,
        position: GeoPoint,
        heading: Heading,
    },
    ShotDiscarded {
        index: usize,
        node: NodeId,
        heading: Heading,
    },
    SubmitOk {
        detection: DetectionId,
        centroid: GeoPoint,
        dmax_m: f64,
    },
    SubmitFailTriangulation {
        reason: TriangulationFailure,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dmax_m: Option<f64>,
    },
    SubmitFailDuplicate {
        centroid: GeoPoint,
        conflicting: GeoPoint,
    },
    SubmitFailTaboo {
        centroid: GeoPoint,
        taboo_position: GeoPoint,
    },
    Escape {
        distance_walked_m: f64,
        since_last_detection_s: f64,
        n_detections: usize,
        reward: f64,
    },
    Complete {
        n_detections: usize,
        reward: f64,
    },
    Abandon {
        reason: String,
    },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Move { .. } => ActionKind::Move,
            Action::BoundaryRevert { .. } => ActionKind::BoundaryRevert,
            Action::ShotTaken { .. } => ActionKind::ShotTaken,
            Action::ShotDiscarded { .. } => ActionKind::ShotDiscarded,
            Action::SubmitOk { .. } => ActionKind::SubmitOk,
            Action::SubmitFailTriangulation { .. } => ActionKind::SubmitFailTriangulation,
            Action::SubmitFailDuplicate { .. } => ActionKind::SubmitFailDuplicate,
            Action::SubmitFailTaboo { .. } => ActionKind::SubmitFailTaboo,
            Action::Escape { .. } => ActionKind::Escape,
            Action::Complete { .. } => ActionKind::Complete,
            Action::Abandon { .. } => ActionKind::Abandon,
        }
    }
}

/// One line of the action log: `{session_id, t, kind, payload}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLogEntry {
    pub session_id: SessionId,
    pub t: f64,
    #[serde(flatten)]
    pub action: Action,
}

impl ActionLogEntry {
    pub fn kind(&self) -> ActionKind {
        self.action.kind()
    }
}
