//! Knowledge-graph-augmented question answering at desk scale.
//!
//! The pipeline: ingest a domain triple graph ([`kg`]), learn TransE entity
//! and relation embeddings ([`transe`]), refine them with a degree-normalized
//! GCN ([`gcn`]), retrieve a query-focused subgraph as evidence
//! ([`retrieval`]), generate an answer through a pluggable backend
//! ([`generation`]), and score predictions against gold entity sets
//! ([`evaluation`]). [`pipeline`] wires the stages together.

pub mod error;
pub mod evaluation;
pub mod gcn;
pub mod generation;
pub mod kg;
pub mod pipeline;
pub mod retrieval;
pub mod transe;
pub mod vecfile;

pub use error::{Error, Result};
pub use kg::{EntityId, KgStore, RelationId, Triple};
pub use transe::{EmbeddingTable, Norm, TrainConfig};
