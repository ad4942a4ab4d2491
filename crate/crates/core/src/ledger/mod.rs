//! The trust graph as an append-only ledger.
//!
//! Blocks of [`TrustTransaction`]s form a tree rooted at an implicit genesis
//! block. Replaying the transactions along a root-to-block path from the empty
//! graph yields that block's graph snapshot. Nodes accept only the snapshot
//! at the block `k` positions below the tip of the canonical chain (the
//! [`StableView`]).

mod export;
mod synthetic;
mod tree;

use std::fmt;

use crate::trust_graph::canon::{escape, unescape};
use crate::trust_graph::{
    parse_counter, Attestation, Context, ContextClass, EntityId, GraphError, Identity, LogicalTime, ModelError,
    RelationKey, TrustGraph, TrustRelation, Verifier,
};
use crate::Digest;

pub use export::{export_blocks, import_blocks, replay_check, LedgerExport, ReplayFailure, ReplayVerdict};
pub use synthetic::synthetic_ledger;
pub use tree::{canonical_chain, stable_view, LedgerTree, StableView, DEFAULT_CONFIRMATION_DEPTH};

/// Parent id of height-1 blocks: the implicit genesis block, all zero bytes.
pub const GENESIS: Digest = Digest::from_bytes([0u8; 32]);

/// One state transition of the trust graph.
#[derive(Clone, PartialEq, Eq)]
pub enum TrustTransaction {
    Upsert(TrustRelation),
    Remove { key: RelationKey, attestation: Attestation, time: LogicalTime },
}

impl TrustTransaction {
    /// The entity whose key authorised the transaction.
    pub fn author(&self) -> &EntityId {
        match self {
            TrustTransaction::Upsert(rel) => &rel.trustor,
            TrustTransaction::Remove { key, .. } => &key.trustor,
        }
    }

    pub fn key(&self) -> RelationKey {
        match self {
            TrustTransaction::Upsert(rel) => rel.key(),
            TrustTransaction::Remove { key, .. } => key.clone(),
        }
    }

    pub fn time(&self) -> &LogicalTime {
        match self {
            TrustTransaction::Upsert(rel) => &rel.time,
            TrustTransaction::Remove { time, .. } => time,
        }
    }

    /// `upsert<TAB><relation line>` or
    /// `remove<TAB><key fields><TAB><counter><TAB><tiebreak><TAB><signer><TAB><nonce>`.
    pub fn canonical_line(&self) -> String {
        match self {
            TrustTransaction::Upsert(rel) => format!("upsert\t{}", rel.canonical_line()),
            TrustTransaction::Remove { key, attestation, time } => format!(
                "remove\t{}\t{}\t{}\t{}\t{}",
                key.canonical_fields(),
                time.counter,
                time.tiebreak.canonical(),
                attestation.signer.canonical(),
                escape(&attestation.nonce)
            ),
        }
    }

    pub fn parse_canonical_line(line: &str) -> Result<Self, ModelError> {
        let fields: Vec<&str> = line.split('\t').collect();
        let tx = match fields.first() {
            Some(&"upsert") => TrustTransaction::Upsert(TrustRelation::from_fields(&fields[1..])?),
            Some(&"remove") => {
                if fields.len() != 9 {
                    return Err(ModelError::Parse(format!("remove: expected 9 fields, found {}", fields.len())));
                }
                let bad = |what: &str| ModelError::Parse(format!("remove: bad {what}"));
                let trustor = EntityId::parse_canonical(fields[1]).ok_or_else(|| bad("trustor"))?;
                let trustee = EntityId::parse_canonical(fields[2]).ok_or_else(|| bad("trustee"))?;
                let class = ContextClass::parse_token(fields[3]).ok_or_else(|| bad("context class"))?;
                let subject = Identity::parse_canonical(fields[4]).ok_or_else(|| bad("subject"))?;
                let counter = parse_counter(fields[5]).ok_or_else(|| bad("time counter"))?;
                let tiebreak = EntityId::parse_canonical(fields[6]).ok_or_else(|| bad("time tiebreak"))?;
                let signer = EntityId::parse_canonical(fields[7]).ok_or_else(|| bad("signer"))?;
                let nonce = unescape(fields[8]).ok_or_else(|| bad("nonce"))?;
                TrustTransaction::Remove {
                    key: RelationKey::new(trustor, trustee, Context::new(class, subject)?),
                    attestation: Attestation { signer, nonce },
                    time: LogicalTime::new(counter, tiebreak),
                }
            }
            _ => return Err(ModelError::Parse("transaction must start with upsert or remove".into())),
        };
        if tx.canonical_line() != line {
            return Err(ModelError::NonCanonical(line.to_string()));
        }
        Ok(tx)
    }

    /// Digest naming what the transaction carries: the relation digest for
    /// upserts, the digest of the canonical line for removals.
    pub fn subject_digest(&self) -> Digest {
        match self {
            TrustTransaction::Upsert(rel) => rel.digest(),
            TrustTransaction::Remove { .. } => Digest::of(self.canonical_line().as_bytes()),
        }
    }
}

impl fmt::Debug for TrustTransaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrustTransaction::Upsert(rel) => write!(f, "Upsert({rel:?})"),
            TrustTransaction::Remove { key, time, .. } => write!(f, "Remove({key:?} @ {time:?})"),
        }
    }
}

/// Applies `tx` to `graph`. A failing transaction leaves the graph untouched.
pub fn apply_transaction(
    graph: &mut TrustGraph,
    tx: &TrustTransaction,
    verifier: &dyn Verifier,
) -> Result<(), GraphError> {
    match tx {
        TrustTransaction::Upsert(rel) => graph.upsert_relation(rel.clone(), verifier),
        TrustTransaction::Remove { key, attestation, time } => graph.remove_relation(key, attestation, time, verifier),
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Block {
    pub id: Digest,
    pub parent: Digest,
    pub height: u64,
    pub proposer: EntityId,
    pub txs: Vec<TrustTransaction>,
}

impl Block {
    /// Builds a block and computes its id.
    pub fn new(parent: Digest, height: u64, proposer: EntityId, txs: Vec<TrustTransaction>) -> Self {
        let id = Self::compute_id(&parent, height, &proposer, &txs);
        Block { id, parent, height, proposer, txs }
    }

    /// SHA-256 over the lines `block`, parent hex, height, proposer, then one
    /// canonical line per transaction.
    pub fn compute_id(parent: &Digest, height: u64, proposer: &EntityId, txs: &[TrustTransaction]) -> Digest {
        let head = ["block".to_string(), parent.to_hex(), height.to_string(), proposer.canonical()];
        Digest::of_lines(head.into_iter().chain(txs.iter().map(TrustTransaction::canonical_line)))
    }

    pub fn id_matches(&self) -> bool {
        Self::compute_id(&self.parent, self.height, &self.proposer, &self.txs) == self.id
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Block(h={} id={:?} parent={:?} by {} txs={})",
            self.height,
            self.id,
            self.parent,
            self.proposer,
            self.txs.len()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("transaction {index} invalid: {cause}")]
    InvalidTx { index: usize, cause: GraphError },
    #[error("bad linkage: {0}")]
    BadLinkage(String),
    #[error("duplicate block {0}")]
    DuplicateBlock(Digest),
    #[error("unknown parent {0}")]
    UnknownParent(Digest),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Checks linkage and applies every transaction in order on top of
/// `parent_graph`, returning the block's snapshot.
pub fn validate_block(
    parent_graph: &TrustGraph,
    parent_height: u64,
    block: &Block,
    verifier: &dyn Verifier,
) -> Result<TrustGraph, LedgerError> {
    if block.height != parent_height + 1 {
        return Err(LedgerError::BadLinkage(format!(
            "block {} has height {} on a parent of height {parent_height}",
            block.id, block.height
        )));
    }
    if !block.id_matches() {
        return Err(LedgerError::BadLinkage(format!("block id {} does not match its contents", block.id)));
    }
    let mut graph = parent_graph.clone();
    for (index, tx) in block.txs.iter().enumerate() {
        apply_transaction(&mut graph, tx, verifier).map_err(|cause| LedgerError::InvalidTx { index, cause })?;
    }
    Ok(graph)
}
