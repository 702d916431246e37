//! Deterministic simulator and analysis toolkit for approximate consensus in
//! anonymous dynamic networks.
//!
//! Nodes have no identities; a receiver only knows the local port a message
//! arrived on. Each round a message adversary picks the directed edge set that
//! delivers, up to `f` nodes crash or behave arbitrarily, and the two
//! phase-based averaging algorithms ([`algo::DacState`] for crashes,
//! [`algo::DbacState`] for Byzantine faults) must still reach ε-agreement.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and
//! parallel sweeps live in the `anodyne` companion crate.
//!
//! - [`model`]: identifiers, wire messages, edge sets, configuration.
//! - [`schedule`]: dynamic schedules, the dynaDegree(T,D) checker and
//!   generator, adversary strategies.
//! - [`faults`]: crash plans and Byzantine behaviors.
//! - [`algo`]: the per-node state machines.
//! - [`engine`]: the synchronous round loop producing a [`engine::Trace`].
//! - [`analysis`]: phase tables and the correctness checks run over traces.
//! - [`sweep`]: seeded parameter sweeps.
//! - [`scenarios`]: executable impossibility demonstrations.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod algo;
pub mod analysis;
pub mod engine;
mod error;
pub mod faults;
pub mod model;
mod rng;
pub mod scenarios;
pub mod schedule;
pub mod sweep;

pub use error::CoreError;

/// Absolute tolerance for interval and inequality checks over simulated values.
pub const TOLERANCE: f64 = 1e-9;
