//! Trust relations and the trust graph.
//!
//! A [`TrustGraph`] is a directed multigraph whose edges are attested,
//! timestamped [`TrustRelation`]s. Parallel edges are allowed across distinct
//! contexts; edges sharing a [`RelationKey`] collapse to the newest one, and
//! superseded edges are archived rather than erased.

mod attest;
pub(crate) mod canon;
mod graph;
mod types;

pub use attest::{removal_payload, KeyRegistry, SigningKey, Verifier};
pub use graph::{TrustGraph, ASSERTION_THRESHOLD};
pub(crate) use types::parse_counter;
pub use types::{
    Attestation, Context, ContextClass, EntityId, Identity, LogicalTime, RelationKey, TrustRelation, TrustValue,
};

/// Malformed model values.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("entity id must be non-empty")]
    EmptyEntityId,
    #[error("validity context requires a non-empty subject identity")]
    EmptyValiditySubject,
    #[error("authenticator-trust context carries no subject identity")]
    UnexpectedSubject,
    #[error("trust value {0} outside [0, 1]")]
    ValueOutOfRange(f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("non-canonical encoding: {0:?}")]
    NonCanonical(String),
}

/// Failures of graph state transitions.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("stale write at {key:?}: existing time {existing:?} >= {attempted:?}")]
    StaleWrite { key: RelationKey, existing: LogicalTime, attempted: LogicalTime },
    #[error("bad attestation: {0}")]
    BadAttestation(String),
    #[error("no live relation at {0:?}")]
    NotFound(RelationKey),
    #[error("self-trust relation for {0}")]
    SelfRelation(EntityId),
}
