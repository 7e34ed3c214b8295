//! Sliding-window multi-object tracking on an ambiguity-clearness graph.
//!
//! Detections enter the graph frame by frame as *states*. A state either has
//! a settled (clear) association to one parent, or it keeps several candidate
//! (ambiguous) parents until the sliding window forces a decision through an
//! optimal assignment. Everything older than the window is frozen.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the command
//! line driver live in the `actrack` crate.
//!
//! Modules:
//! - [`graph`]: the association graph and its structural actions.
//! - [`affinity`]: appearance, motion and shape scoring.
//! - [`assignment`]: Hungarian solver and trailing-frame cost matrices.
//! - [`optimizer`]: the per-frame window loop, energy and track extraction.
//! - [`metrics`]: CLEAR-MOT evaluation and occlusion statistics.
//! - [`synth`]: deterministic synthetic scenes.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod affinity;
pub mod assignment;
pub mod graph;
pub mod metrics;
pub mod optimizer;
pub mod synth;
mod types;

pub use affinity::{AffinityConfig, AffinityScore, KalmanTrack};
pub use assignment::{hungarian, Assignment, CostMatrix};
pub use graph::{ACGraph, Clarity, GraphError, StateId, StateNode, Tracklet};
pub use metrics::EvalResult;
pub use optimizer::{run_sequence, RunOutput, Tracker, TrackerConfig};
pub use synth::{ScenarioSpec, SyntheticScene};
pub use types::{BBox, DetectionSet, Observation, ObservationError, Track, TrackEntry, TrackSet};
