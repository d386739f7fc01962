//! Deterministic discrete-event simulation of a Morpheus deployment.
//!
//! [`run`] executes a [`ScenarioConfig`] under the partial-synchrony
//! delivery rule and returns a replayable [`Trace`].

pub mod adversary;
pub mod config;
pub mod engine;
pub mod trace;

pub use adversary::{Byzantine, Strategy};
pub use config::{Batching, ConfigInvalid, DelayPolicy, Fault, FaultSpec, PayloadSpec, ScenarioConfig};
pub use engine::{adversary_delay, committee, run, transaction, window};
pub use trace::{Detail, MsgId, Record, RecordKind, Trace, TraceError};
