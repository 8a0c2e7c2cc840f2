//! Core engine for crowdsourced exploration of a street-view world.
//!
//! Workers walk a graph of panorama nodes inside an area of interest and
//! report points of interest by taking three shots from different angles.
//! Submissions are validated by triangulation, optionally filtered against a
//! taboo registry of already-confirmed points, and finally consolidated into a
//! map with DBSCAN.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. Timestamps
//! are supplied by the caller, so the same engine drives both simulated
//! sessions on a virtual clock and live sessions on a wall clock.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod aggregate;
pub mod engine;
pub mod eval;
pub mod fixtures;
pub mod geo;
pub mod rng;
pub mod sim;
pub mod world;

pub use aggregate::{consolidate, dbscan, AggregationParams, Clustering, PoICluster};
pub use engine::{
    ActionKind, ActionLogEntry, Detection, DetectionId, EngineError, EscapeMode, Experiment, MoveOutcome, Session,
    SessionId, SessionState, Shot, Strategy, SubmitOutcome, TabooConfig, TabooRegistry, TaskConfig,
    TriangulationFailure, WorkerId,
};
pub use geo::{GeoError, GeoPoint, Heading, LocalFrame, LocalPoint, Ray};
pub use world::{
    AreaOfInterest, ExplorableGraph, GroundTruthPoI, NodeId, PanoNode, PoiId, VisitCounter, World, WorldError,
    WorldParams,
};
