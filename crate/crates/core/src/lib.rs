//! Simulation, exact stationary moments and method-of-moments estimation for
//! a particle system whose vertex states drive a dynamic random graph.
//!
//! Only the edge-count series is assumed observable. The estimator matches
//! its first two moments to recover the edge probabilities, then matches the
//! mean squared one-step increment to recover the vertex update rate.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod exact_moments;
pub mod experiments;
pub mod kv;
pub mod model;
pub mod numfmt;
pub mod optimize;
pub mod simulator;
pub mod stats;

pub use error::{Error, ParamViolation, Result};
pub use model::{Link, ModelParams, RawParams, SystemState, VertexState};
pub use simulator::{ObservationSeries, RandomSource};
