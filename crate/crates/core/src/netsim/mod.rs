//! Round-based simulation of trust dissemination under an adversary.
//!
//! Nodes either keep a local view filled from pushed relations and
//! on-demand queries (keyserver web of trust, hierarchical PKI), or a ledger
//! replica filled by transaction and block gossip. The adversary controls a
//! set of nodes and may drop, delay, withhold or equivocate on channels; it
//! never holds honest nodes' signing keys. All randomness derives from the
//! configured seed.

mod channel;
mod config;
mod sim;
mod trace;

pub use channel::{ChannelAction, ChannelDirective, ChannelPolicy, RelationFilter, RelationTemplate, Route};
pub use config::{
    AdversaryScript, DisseminationMode, InitialRelation, Injection, NodeSetup, Probe, Publication, PublicationBody,
    SimConfig, SimError, World,
};
pub use sim::{
    derive_seed, elect_proposer, election_stream, LocalStore, Node, NodeAssessment, Simulation, Unavailable,
    FETCH_DEPTH,
};
pub use trace::{Event, Trace, TraceRecord};
