//! Evolving plastic recurrent networks that learn new binary cognitive
//! tasks within their lifetime.
//!
//! Three nested loops:
//!
//! * [`task::run_trial`] steps the network through one stimulus, stimulus,
//!   response, feedback trial and applies one reward-modulated plasticity
//!   update;
//! * [`lifetime::run_lifetime`] runs a block of trials on one task without
//!   resetting activations or plastic weights;
//! * [`es::run_evolution`] optimizes innate weights and plasticity gains with
//!   an antithetic evolution strategy and Adam.
//!
//! [`decode`] analyses recorded population activity, and [`harness`] wires the
//! pieces into the reproducible experiment modes exposed by the `plastinet`
//! binary.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod error;
pub mod es;
pub mod harness;
pub mod lifetime;
pub mod matrix;
pub mod net;
pub mod plot;
pub mod seed;
pub mod stats;
pub mod task;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use net::{Agent, ClampSpec, Genome, NetConfig, NeuralState, PlasticState};
pub use task::TaskId;
