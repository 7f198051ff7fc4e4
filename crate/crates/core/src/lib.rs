//! Packet-level simulation of size-aware RED variants with a SACK/Reno TCP
//! source population, plus closed-form inter-drop laws and their oracles.
//!
//! Module map:
//! - [`simkernel`]: event queue, simulated clock, seeded random streams
//! - [`aqm`]: the five RED drop-decision state machines
//! - [`transport`]: bulk-transfer TCP sender and receiver
//! - [`netsim`]: dumbbell topology, bottleneck forwarding, run driver
//! - [`analysis`]: inter-drop pmfs, exhaustive/Monte-Carlo oracles, goodput model
//! - [`metrics`]: per-flow ledgers, per-group PLR/goodput, reports

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aqm;
pub mod analysis;
pub mod metrics;
pub mod netsim;
pub mod simkernel;
pub mod transport;

pub use aqm::{RedParams, RedState, RedVariant};
pub use netsim::{simulate, GroupSpec, RunResult, Scenario, Simulation};
