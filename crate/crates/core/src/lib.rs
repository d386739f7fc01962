//! Core of the Morpheus consensus protocol.
//!
//! The crate is split along the protocol's natural seams:
//!
//! - [`crypto`]: a pluggable signature / threshold-signature / hashing provider,
//!   with a deterministic simulation-grade implementation.
//! - [`codec`]: the canonical byte encoding used for digests, sizes and traces.
//! - [`types`]: blocks, votes, quorum certificates, view-change messages and
//!   their validity predicates.
//! - [`ordering`]: the linearization of a block DAG and the log extraction
//!   function that maps any message set to a transaction sequence.
//! - [`replica`]: the deterministic per-process state machine.

pub mod codec;
pub mod crypto;
pub mod ordering;
pub mod replica;
pub mod types;

pub use crypto::{Digest, Keyring, ProcessId, Signature, SigningKey, ThresholdSignature};
pub use ordering::{extract, flatten, tau, tau_dagger, BlockStore, Log};
pub use replica::{BatchPolicy, Outbound, Recipients, Replica, ReplicaConfig, ReplicaEvent};
pub use types::{
    Block, BlockKind, BlockMeta, Committee, EndView, Message, Qc, Transaction, View, ViewCert, ViewMsg, Vote,
};
