//! Preprocessing toolkit for event-camera streams: density-adaptive
//! segmentation, multi-factor weighted graph construction, adaptive
//! variance-maximizing denoising, and an inverse-weight attention forward
//! pass, plus a seeded synthetic scene generator for evaluation.
//!
//! The stages are exposed individually (see [`mod@segment`], [`graph`],
//! [`denoise`], [`attention`]) and composed end to end by [`pipeline`].

pub mod attention;
pub mod denoise;
pub mod error;
pub mod events;
pub mod graph;
pub mod pipeline;
pub mod segment;
pub mod synth;

pub use error::{Error, Result};
pub use events::{compute_extents, parse_event_csv, write_event_csv, Event, EventStream, Extents};
pub use graph::{build_graph, EventGraph, WeightParams};
pub use segment::{segment, SegmentationConfig, Voxel, Window};
