use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::channel::ChannelDirective;
use crate::assessment::AssessmentProgram;
use crate::ledger::DEFAULT_CONFIRMATION_DEPTH;
use crate::trust_graph::{Context, EntityId, Identity, TrustRelation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisseminationMode {
    /// Relations pushed to designated keyservers that sync among themselves
    /// and answer queries.
    KeyserverWot,
    /// Chains fetched on demand from issuers.
    HierarchicalPki,
    /// Transactions and blocks gossiped to every peer; views are replayed
    /// stable prefixes.
    Ledger,
}

impl DisseminationMode {
    pub fn is_ledger(self) -> bool {
        self == DisseminationMode::Ledger
    }

    pub fn name(self) -> &'static str {
        match self {
            DisseminationMode::KeyserverWot => "keyserver-wot",
            DisseminationMode::HierarchicalPki => "hierarchical-pki",
            DisseminationMode::Ledger => "ledger",
        }
    }
}

fn default_k() -> usize {
    DEFAULT_CONFIRMATION_DEPTH
}

fn default_cap() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_nodes: usize,
    pub adversary_fraction: f64,
    pub rounds: u64,
    pub mode: DisseminationMode,
    #[serde(default = "default_k")]
    pub k: usize,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub txs_per_block: usize,
}

impl SimConfig {
    pub fn new(n_nodes: usize, adversary_fraction: f64, rounds: u64, mode: DisseminationMode, seed: u64) -> Self {
        SimConfig { n_nodes, adversary_fraction, rounds, mode, k: default_k(), seed, txs_per_block: default_cap() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_nodes == 0 {
            return Err(SimError::Config("n_nodes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.adversary_fraction) {
            return Err(SimError::Config("adversary_fraction must lie in [0, 1]".into()));
        }
        if self.rounds == 0 || self.k == 0 || self.txs_per_block == 0 {
            return Err(SimError::Config("rounds, k and txs_per_block must be positive".into()));
        }
        Ok(())
    }

    /// Whether the honest-majority assumption is broken.
    pub fn violates_honest_majority(&self) -> bool {
        self.adversary_fraction >= 0.5
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown node {0}")]
    UnknownNode(EntityId),
}

/// Per-node configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSetup {
    pub entity: EntityId,
    pub adversarial: bool,
    /// May be elected block proposer.
    pub eligible: bool,
    /// Local-view modes: default recipients of the node's own relations.
    pub publish_to: Vec<EntityId>,
    /// Local-view modes: where newly stored relations are relayed.
    pub forward_to: Vec<EntityId>,
    /// Local-view modes: servers queried when assessing.
    pub sources: Vec<EntityId>,
}

impl NodeSetup {
    pub fn new(entity: EntityId) -> Self {
        NodeSetup {
            entity,
            adversarial: false,
            eligible: true,
            publish_to: Vec::new(),
            forward_to: Vec::new(),
            sources: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PublicationBody {
    Upsert { trustee: EntityId, context: Context, value: f64 },
    Remove { trustee: EntityId, context: Context },
}

/// A relation the author signs and sends out at `round`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Publication {
    pub round: u64,
    pub author: EntityId,
    pub body: PublicationBody,
    /// Overrides the default recipients (publish_to in local-view modes,
    /// every peer in ledger mode).
    pub recipients: Option<Vec<EntityId>>,
}

impl Publication {
    pub fn upsert(round: u64, author: &EntityId, trustee: &EntityId, context: Context, value: f64) -> Self {
        Publication {
            round,
            author: author.clone(),
            body: PublicationBody::Upsert { trustee: trustee.clone(), context, value },
            recipients: None,
        }
    }

    pub fn to(mut self, recipients: Vec<EntityId>) -> Self {
        self.recipients = Some(recipients);
        self
    }
}

/// A standing assessment a node performs every round from `from_round` on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub node: EntityId,
    pub key: EntityId,
    pub identity: Identity,
    pub program: AssessmentProgram,
    pub from_round: u64,
}

/// A pre-built (possibly forged) relation the adversary pushes as is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub round: u64,
    pub from: EntityId,
    pub to: Vec<EntityId>,
    pub relation: TrustRelation,
}

/// Everything the adversary does. Inert unless the acting entities are
/// adversarial: channel directives need a non-empty adversary set, and
/// publications, injections and censorship need an adversarial actor.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdversaryScript {
    pub channels: Vec<ChannelDirective>,
    pub publications: Vec<Publication>,
    pub injections: Vec<Injection>,
    /// Authors whose transactions adversarial proposers leave out.
    pub censor: BTreeSet<EntityId>,
}

impl AdversaryScript {
    pub fn is_empty(&self) -> bool {
        self.channels.is_empty() && self.publications.is_empty() && self.injections.is_empty() && self.censor.is_empty()
    }
}

/// A relation every node knows before round 0, signed by its trustor at
/// `counter`. Local views start with it; in ledger mode it waits in every
/// mempool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialRelation {
    pub trustor: EntityId,
    pub trustee: EntityId,
    pub context: Context,
    pub value: f64,
    pub counter: u64,
}

/// Initial topology plus scheduled activity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub nodes: Vec<NodeSetup>,
    pub initial: Vec<InitialRelation>,
    pub publications: Vec<Publication>,
    pub probes: Vec<Probe>,
    pub script: AdversaryScript,
}

impl World {
    pub fn adversaries(&self) -> BTreeSet<EntityId> {
        self.nodes.iter().filter(|n| n.adversarial).map(|n| n.entity.clone()).collect()
    }

    pub fn node(&self, id: &EntityId) -> Option<&NodeSetup> {
        self.nodes.iter().find(|n| &n.entity == id)
    }

    pub fn node_mut(&mut self, id: &EntityId) -> Option<&mut NodeSetup> {
        self.nodes.iter_mut().find(|n| &n.entity == id)
    }
}
