//! Patient-monitoring analytics engine.
//!
//! Consumes per-second object detections (and, optionally, the raw frames
//! they came from) and turns them into smoothed logical room states, hourly
//! behaviour trends and evaluation reports against frame labels and
//! observation logs.
//!
//! The main pieces:
//!
//! - [`model`]: shared vocabulary (frames, boxes, roles, records, config).
//! - [`geometry`]: safety-zone polygons, pixel masks, boundary crossings.
//! - [`flow`]: dense two-frame optical flow and per-ROI motion.
//! - [`logic`]: role attribution, the smoothing window, logical states.
//! - [`trend`]: hourly aggregation, cohort averages, assisted trends.
//! - [`eval`]: detection metrics, logistic/manual trend accuracy.
//! - [`camera`]: bed placement statistics.
//! - [`sim`]: seeded synthetic sessions with known ground truth.
//! - [`io`]: preprocessing, detector port, store, ingestion, runtime.
//!
//! Data-parallel inner loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (default) and plain iterators otherwise.

pub mod camera;
pub mod error;
pub mod eval;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod logic;
pub mod model;
pub mod par;
pub mod sim;
pub mod trend;

pub use error::{Error, Result};
pub use model::{
    BoundingBox, ColorMode, DetectionRecord, Frame, LogicalState, MotionRecord, ObjectClass,
    PipelineConfig, Role, RoleDistribution, SessionId, Timestamp,
};
