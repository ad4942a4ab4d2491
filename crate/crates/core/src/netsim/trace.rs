//! Run traces.
//!
//! One JSON object per line: `round`, `node` (`-` for run-wide events),
//! `kind`, `digest` (SHA-256 of the event's own JSON) and the kind-specific
//! fields. Delivery-level events are only recorded in verbose mode.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::trust_graph::{EntityId, Identity};
use crate::Digest;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Event {
    Header {
        spec: Digest,
        mode: String,
        seed: u64,
        nodes: usize,
        adversaries: Vec<EntityId>,
    },
    RoundStart,
    /// A relation or transaction signed and sent out by its author.
    Published {
        subject: Digest,
        line: String,
        recipients: Vec<EntityId>,
        scripted: bool,
    },
    Stored {
        subject: Digest,
    },
    StaleRejected {
        subject: Digest,
    },
    ForgeryRejected {
        subject: Digest,
        from: EntityId,
    },
    Query {
        server: EntityId,
        about: EntityId,
        ok: bool,
    },
    BlockProposed {
        block: Digest,
        height: u64,
        txs: Vec<Digest>,
        censored: usize,
    },
    BlockRejected {
        block: Digest,
        reason: String,
    },
    /// The node's canonical tip moved; `txs` newly entered its chain.
    Included {
        tip: Digest,
        height: u64,
        txs: Vec<Digest>,
    },
    /// Transactions that newly entered the node's stable prefix.
    StableAdvanced {
        head: Digest,
        height: u64,
        txs: Vec<Digest>,
    },
    Assessment {
        key: EntityId,
        identity: Identity,
        value: Option<f64>,
        accepted: bool,
        conflict_flagged: bool,
        evidence: Vec<Digest>,
        unavailable: bool,
    },
    ConflictDetected {
        identity: Identity,
        keys: BTreeSet<EntityId>,
    },
    Delivered {
        from: EntityId,
        payload: Digest,
    },
    Dropped {
        from: EntityId,
        payload: Digest,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: u64,
    pub node: String,
    pub digest: Digest,
    #[serde(flatten)]
    pub event: Event,
}

impl TraceRecord {
    pub fn new(round: u64, node: Option<&EntityId>, event: Event) -> Self {
        let digest = Digest::of(&serde_json::to_vec(&event).expect("events serialize"));
        TraceRecord { round, node: node.map_or_else(|| "-".to_string(), |n| n.as_str().to_string()), digest, event }
    }

    pub fn node_id(&self) -> Option<EntityId> {
        (self.node != "-").then(|| EntityId::new(self.node.clone()).expect("non-empty"))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, round: u64, node: Option<&EntityId>, event: Event) {
        self.records.push(TraceRecord::new(round, node, event));
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records =
            text.lines().filter(|l| !l.is_empty()).map(serde_json::from_str).collect::<Result<Vec<_>, _>>()?;
        Ok(Trace { records })
    }

    pub fn header(&self) -> Option<(&Digest, &str, u64)> {
        match self.records.first().map(|r| &r.event) {
            Some(Event::Header { spec, mode, seed, .. }) => Some((spec, mode.as_str(), *seed)),
            _ => None,
        }
    }

    pub fn digest(&self) -> Digest {
        Digest::of(self.to_jsonl().as_bytes())
    }
}
