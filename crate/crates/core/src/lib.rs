//! Speculative tool-call execution for LLM agents.
//!
//! Recurring tool-call patterns are mined from execution traces
//! ([`miner`]), matched against a live event window to predict upcoming
//! invocations with late-bound arguments ([`predictor`], [`mapping`]),
//! filtered by an operator policy ([`policy`]), and run on slack capacity
//! by a scheduler that never delays authoritative work ([`scheduler`]).
//! [`sim`] is a discrete-event testbed for the whole loop.

pub mod canonical;
pub mod event;
pub mod ingest;
pub mod mapping;
pub mod matching;
pub mod miner;

pub use canonical::{canonical_arg_hash, ArgHash};
pub use event::{signature_of, Event, EventKind, EventSignature, Millis, Session, Status};
pub use ingest::{ingest_trace, IngestConfig, IngestReport};
pub mod policy;
pub mod predictor;
pub mod scheduler;
pub mod sim;
