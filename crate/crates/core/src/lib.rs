//! Trust-management networks for authentication, their encoding as an
//! append-only ledger of graph state transitions, and a deterministic
//! simulator for attacks against both dissemination styles.

#![allow(clippy::result_large_err)]

pub mod assessment;
pub mod attacks;
pub mod digest;
pub mod ledger;
pub mod netsim;
pub mod trust_graph;

pub use digest::{Digest, DIGEST_ALGORITHM};
