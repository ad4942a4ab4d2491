use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::channel::{ChannelAction, ChannelPolicy, RelationFilter, Route};
use super::config::{
    InitialRelation, Injection, NodeSetup, Probe, Publication, PublicationBody, SimConfig, SimError, World,
};
use super::trace::{Event, Trace};
use crate::assessment::{assess, AssessmentProgram, AssessmentQuery, AssessmentResult};
use crate::ledger::{apply_transaction, stable_view, Block, LedgerError, LedgerTree, TrustTransaction};
use crate::trust_graph::{
    EntityId, GraphError, Identity, KeyRegistry, LogicalTime, RelationKey, TrustGraph, TrustRelation, TrustValue,
    Verifier, ASSERTION_THRESHOLD,
};
use crate::Digest;

/// Depth of on-demand chain fetches in local-view modes.
pub const FETCH_DEPTH: usize = 8;

/// Independent 64-bit seed for subsystem `label`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    Digest::of_lines(["tmsim/seed".to_string(), seed.to_string(), label.to_string()]).prefix_u64()
}

/// The proposer-election stream for a run seed.
pub fn election_stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, "election"))
}

/// Uniform draw over `nodes`.
pub fn elect_proposer<'a, R: Rng>(rng: &mut R, nodes: &'a [EntityId]) -> &'a EntityId {
    &nodes[rng.gen_range(0..nodes.len())]
}

/// What a node keeps.
#[derive(Clone, Debug)]
pub enum LocalStore {
    LocalView(TrustGraph),
    LedgerReplica(LedgerTree),
}

#[derive(Clone, Debug)]
pub struct Node {
    pub setup: NodeSetup,
    pub clock: u64,
    pub store: LocalStore,
    mempool: Vec<TrustTransaction>,
    seen_txs: BTreeSet<Digest>,
    orphans: Vec<Arc<Block>>,
    reported: BTreeSet<(Identity, BTreeSet<EntityId>)>,
    last_tip: Digest,
    canonical_txs: BTreeSet<Digest>,
    stable_head: Digest,
    stable_txs: BTreeSet<Digest>,
}

impl Node {
    fn new(setup: NodeSetup, ledger: bool) -> Self {
        let store = if ledger {
            LocalStore::LedgerReplica(LedgerTree::new())
        } else {
            LocalStore::LocalView(TrustGraph::new())
        };
        Node {
            setup,
            clock: 0,
            store,
            mempool: Vec::new(),
            seen_txs: BTreeSet::new(),
            orphans: Vec::new(),
            reported: BTreeSet::new(),
            last_tip: crate::ledger::GENESIS,
            canonical_txs: BTreeSet::new(),
            stable_head: crate::ledger::GENESIS,
            stable_txs: BTreeSet::new(),
        }
    }

    pub fn entity(&self) -> &EntityId {
        &self.setup.entity
    }

    pub fn is_adversarial(&self) -> bool {
        self.setup.adversarial
    }

    pub fn replica(&self) -> Option<&LedgerTree> {
        match &self.store {
            LocalStore::LedgerReplica(t) => Some(t),
            LocalStore::LocalView(_) => None,
        }
    }

    pub fn local_view(&self) -> Option<&TrustGraph> {
        match &self.store {
            LocalStore::LocalView(g) => Some(g),
            LocalStore::LedgerReplica(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
enum Payload {
    Tx(TrustTransaction),
    Block(Arc<Block>),
}

impl Payload {
    fn digest(&self) -> Digest {
        match self {
            Payload::Tx(tx) => tx.subject_digest(),
            Payload::Block(b) => b.id,
        }
    }

    fn withheld_by(&self, f: &RelationFilter) -> bool {
        match self {
            Payload::Tx(tx) => f.matches_tx(tx),
            Payload::Block(b) => b.txs.iter().any(|t| f.matches_tx(t)),
        }
    }

    fn time(&self) -> u64 {
        match self {
            Payload::Tx(tx) => tx.time().counter,
            Payload::Block(b) => b.txs.iter().map(|t| t.time().counter).max().unwrap_or(0),
        }
    }
}

#[derive(Clone, Debug)]
struct Message {
    from: EntityId,
    to: EntityId,
    at: u64,
    payload: Payload,
}

/// Result of a node's assessment.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeAssessment {
    pub result: AssessmentResult,
    /// The queried identity is bound to several keys in the assessed view.
    pub conflict_flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("required trust data unavailable")]
pub struct Unavailable;

fn verify_tx(tx: &TrustTransaction, verifier: &dyn Verifier) -> bool {
    match tx {
        TrustTransaction::Upsert(rel) => {
            rel.attestation.signer == rel.trustor
                && rel.trustor != rel.trustee
                && verifier.verify(rel.payload().as_bytes(), &rel.attestation)
        }
        TrustTransaction::Remove { key, attestation, time } => {
            attestation.signer == key.trustor
                && verifier.verify(crate::trust_graph::removal_payload(key, time).as_bytes(), attestation)
        }
    }
}

fn check_tx(graph: &TrustGraph, tx: &TrustTransaction, verifier: &dyn Verifier) -> Result<(), GraphError> {
    match tx {
        TrustTransaction::Upsert(rel) => graph.check_upsert(rel, verifier),
        TrustTransaction::Remove { key, attestation, time } => graph.check_remove(key, attestation, time, verifier),
    }
}

type StateCache = BTreeMap<Digest, Result<Arc<TrustGraph>, LedgerError>>;

fn accept_block(
    tree: &mut LedgerTree,
    block: Arc<Block>,
    registry: &KeyRegistry,
    cache: &mut StateCache,
) -> Result<(), LedgerError> {
    let id = block.id;
    match cache.get(&id) {
        Some(Ok(state)) => tree.append_validated(block, state.clone()),
        Some(Err(e)) => Err(e.clone()),
        None => {
            let r = tree.append_block(block, registry);
            match &r {
                Ok(()) => {
                    cache.insert(id, Ok(tree.state_of(&id).expect("just added").clone()));
                }
                Err(e @ (LedgerError::InvalidTx { .. } | LedgerError::BadLinkage(_))) => {
                    cache.insert(id, Err(e.clone()));
                }
                Err(_) => {}
            }
            r
        }
    }
}

fn chain_digests(tree: &LedgerTree, tip: &Digest) -> (Vec<Digest>, BTreeSet<Digest>) {
    let mut order = Vec::new();
    let mut lines = BTreeSet::new();
    for b in tree.path_to(tip) {
        for tx in &b.txs {
            order.push(tx.subject_digest());
            lines.insert(Digest::of(tx.canonical_line().as_bytes()));
        }
    }
    (order, lines)
}

/// A deterministic round-based run.
pub struct Simulation {
    config: SimConfig,
    registry: KeyRegistry,
    key_seed: u64,
    nodes: BTreeMap<EntityId, Node>,
    eligible: Vec<EntityId>,
    adversaries: BTreeSet<EntityId>,
    publications: BTreeMap<u64, Vec<(Publication, bool)>>,
    injections: Vec<Injection>,
    probes: Vec<Probe>,
    censor: BTreeSet<EntityId>,
    policy: ChannelPolicy,
    in_flight: VecDeque<Message>,
    round: u64,
    election: ChaCha8Rng,
    states: StateCache,
    conflicts: BTreeMap<Digest, Vec<(Identity, BTreeSet<EntityId>)>>,
    trace: Trace,
    verbose: bool,
}

impl Simulation {
    /// Sets up a run. `spec` names the scenario the run belongs to and is
    /// recorded in the trace header.
    pub fn new(config: SimConfig, world: World, spec: Digest, verbose: bool) -> Result<Self, SimError> {
        config.validate()?;
        let ledger = config.mode.is_ledger();
        let mut nodes = BTreeMap::new();
        for setup in &world.nodes {
            if nodes.insert(setup.entity.clone(), Node::new(setup.clone(), ledger)).is_some() {
                return Err(SimError::Config(format!("duplicate node {}", setup.entity)));
            }
        }
        let known =
            |id: &EntityId| if nodes.contains_key(id) { Ok(()) } else { Err(SimError::UnknownNode(id.clone())) };
        for setup in &world.nodes {
            for id in setup.publish_to.iter().chain(&setup.forward_to).chain(&setup.sources) {
                known(id)?;
            }
        }
        let all_pubs =
            world.publications.iter().map(|p| (p, false)).chain(world.script.publications.iter().map(|p| (p, true)));
        let mut publications: BTreeMap<u64, Vec<(Publication, bool)>> = BTreeMap::new();
        for (p, scripted) in all_pubs {
            known(&p.author)?;
            for r in p.recipients.iter().flatten() {
                known(r)?;
            }
            if let PublicationBody::Upsert { value, .. } = &p.body {
                TrustValue::new(*value).map_err(|e| SimError::Config(e.to_string()))?;
            }
            publications.entry(p.round).or_default().push((p.clone(), scripted));
        }
        for p in &world.probes {
            known(&p.node)?;
        }
        let adversaries = world.adversaries();
        let inert = adversaries.is_empty();
        let key_seed = derive_seed(config.seed, "keys");
        let mut sim = Simulation {
            registry: KeyRegistry::from_seed(key_seed),
            key_seed,
            eligible: world
                .nodes
                .iter()
                .filter(|n| n.eligible)
                .map(|n| n.entity.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            adversaries: adversaries.clone(),
            publications,
            injections: world.script.injections.clone(),
            probes: world.probes.clone(),
            censor: world.script.censor.clone(),
            policy: ChannelPolicy::new(if inert { Vec::new() } else { world.script.channels.clone() }),
            in_flight: VecDeque::new(),
            round: 0,
            election: election_stream(config.seed),
            states: BTreeMap::new(),
            conflicts: BTreeMap::new(),
            trace: Trace::default(),
            verbose,
            nodes,
            config,
        };
        sim.seed_initial(&world.initial)?;
        sim.trace.push(
            0,
            None,
            Event::Header {
                spec,
                mode: sim.config.mode.name().to_string(),
                seed: sim.config.seed,
                nodes: sim.nodes.len(),
                adversaries: adversaries.into_iter().collect(),
            },
        );
        Ok(sim)
    }

    fn seed_initial(&mut self, initial: &[InitialRelation]) -> Result<(), SimError> {
        for rel in initial {
            let value = TrustValue::new(rel.value).map_err(|e| SimError::Config(e.to_string()))?;
            let author = self.nodes.get_mut(&rel.trustor).ok_or_else(|| SimError::UnknownNode(rel.trustor.clone()))?;
            author.clock = author.clock.max(rel.counter);
            let signed = self.registry.signing_key(&rel.trustor).relation(
                rel.trustee.clone(),
                rel.context.clone(),
                value,
                LogicalTime::new(rel.counter, rel.trustor.clone()),
            );
            let tx = TrustTransaction::Upsert(signed);
            for node in self.nodes.values_mut() {
                match &mut node.store {
                    LocalStore::LocalView(g) => {
                        apply_transaction(g, &tx, &self.registry)
                            .map_err(|e| SimError::Config(format!("initial relation: {e}")))?;
                    }
                    LocalStore::LedgerReplica(_) => {
                        node.seen_txs.insert(Digest::of(tx.canonical_line().as_bytes()));
                        node.mempool.push(tx.clone());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Seed of the key registry attestations verify against.
    pub fn key_seed(&self) -> u64 {
        self.key_seed
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    pub fn adversaries(&self) -> &BTreeSet<EntityId> {
        &self.adversaries
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: &EntityId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn honest(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(|n| !n.is_adversarial())
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    /// The graph `id` currently works from: its store in local-view modes,
    /// its stable view in ledger mode.
    pub fn view_of(&self, id: &EntityId) -> Option<Arc<TrustGraph>> {
        let node = self.nodes.get(id)?;
        Some(match &node.store {
            LocalStore::LocalView(g) => Arc::new(g.clone()),
            LocalStore::LedgerReplica(t) => stable_view(t, self.config.k).graph,
        })
    }

    /// Runs every remaining round.
    pub fn run(&mut self) {
        while self.round < self.config.rounds {
            self.run_round();
        }
    }

    /// One synchronous round: scheduled sends, delivery through the channel
    /// policy, block proposal (ledger mode), then observation and probes.
    pub fn run_round(&mut self) {
        let r = self.round;
        self.trace.push(r, None, Event::RoundStart);
        self.publish_scheduled(r);
        self.inject(r);
        self.deliver_due(r);
        if self.config.mode.is_ledger() {
            self.propose(r);
        }
        self.observe(r);
        self.run_probes(r);
        self.round += 1;
    }

    fn send(&mut self, from: &EntityId, to: &EntityId, payload: Payload, earliest: u64) {
        if from == to {
            return;
        }
        match self.policy.route(from, to, self.round, |f| payload.withheld_by(f)) {
            Route::Drop => {
                if self.verbose {
                    self.trace.push(
                        self.round,
                        Some(to),
                        Event::Dropped { from: from.clone(), payload: payload.digest() },
                    );
                }
            }
            Route::Deliver { at } => {
                self.in_flight.push_back(Message { from: from.clone(), to: to.clone(), at: at.max(earliest), payload })
            }
        }
    }

    fn everyone_but(&self, who: &[&EntityId]) -> Vec<EntityId> {
        self.nodes.keys().filter(|k| !who.contains(k)).cloned().collect()
    }

    fn publish_scheduled(&mut self, r: u64) {
        let Some(batch) = self.publications.remove(&r) else { return };
        for (p, scripted) in batch {
            if scripted && !self.adversaries.contains(&p.author) {
                continue;
            }
            let everyone = self.everyone_but(&[&p.author]);
            let node = self.nodes.get_mut(&p.author).expect("validated");
            node.clock += 1;
            let time = LogicalTime::new(node.clock, p.author.clone());
            let key = self.registry.signing_key(&p.author);
            let tx = match p.body {
                PublicationBody::Upsert { trustee, context, value } => TrustTransaction::Upsert(key.relation(
                    trustee,
                    context,
                    TrustValue::new(value).expect("validated"),
                    time,
                )),
                PublicationBody::Remove { trustee, context } => {
                    let rk = RelationKey::new(p.author.clone(), trustee, context);
                    TrustTransaction::Remove { attestation: key.removal(&rk, &time), key: rk, time }
                }
            };
            let recipients = match (&p.recipients, &node.store) {
                (Some(list), _) => list.clone(),
                (None, LocalStore::LocalView(_)) => node.setup.publish_to.clone(),
                (None, LocalStore::LedgerReplica(_)) => everyone,
            };
            match &mut node.store {
                LocalStore::LocalView(g) => {
                    let _ = apply_transaction(g, &tx, &self.registry);
                }
                LocalStore::LedgerReplica(_) => {
                    node.seen_txs.insert(Digest::of(tx.canonical_line().as_bytes()));
                    node.mempool.push(tx.clone());
                }
            }
            self.trace.push(
                r,
                Some(&p.author),
                Event::Published {
                    subject: tx.subject_digest(),
                    line: tx.canonical_line(),
                    recipients: recipients.clone(),
                    scripted,
                },
            );
            for to in &recipients {
                self.send(&p.author, to, Payload::Tx(tx.clone()), r);
            }
        }
    }

    fn inject(&mut self, r: u64) {
        let due: Vec<Injection> =
            self.injections.iter().filter(|i| i.round == r && self.adversaries.contains(&i.from)).cloned().collect();
        for inj in due {
            for to in &inj.to {
                self.send(&inj.from, to, Payload::Tx(TrustTransaction::Upsert(inj.relation.clone())), r);
            }
        }
    }

    fn deliver_due(&mut self, r: u64) {
        loop {
            let mut due = Vec::new();
            let mut later = VecDeque::new();
            for m in self.in_flight.drain(..) {
                if m.at <= r {
                    due.push(m);
                } else {
                    later.push_back(m);
                }
            }
            self.in_flight = later;
            if due.is_empty() {
                break;
            }
            for m in due {
                self.deliver(m);
            }
        }
    }

    fn deliver(&mut self, m: Message) {
        let r = self.round;
        if !self.nodes.contains_key(&m.to) {
            return;
        }
        if self.verbose {
            self.trace.push(r, Some(&m.to), Event::Delivered { from: m.from.clone(), payload: m.payload.digest() });
        }
        let node = self.nodes.get_mut(&m.to).expect("checked");
        node.clock = node.clock.max(m.payload.time()) + 1;
        let mut relay: Vec<EntityId> = Vec::new();
        let mut accepted: Vec<Arc<Block>> = Vec::new();
        let mut events = Vec::new();
        match (&m.payload, &mut node.store) {
            (Payload::Tx(tx), LocalStore::LocalView(g)) => match check_tx(g, tx, &self.registry) {
                Ok(()) => {
                    apply_transaction(g, tx, &self.registry).expect("checked");
                    events.push(Event::Stored { subject: tx.subject_digest() });
                    relay = node.setup.forward_to.clone();
                }
                Err(GraphError::StaleWrite { existing, attempted, .. }) => {
                    if existing != attempted {
                        events.push(Event::StaleRejected { subject: tx.subject_digest() });
                    }
                }
                Err(GraphError::BadAttestation(_) | GraphError::SelfRelation(_)) => {
                    events.push(Event::ForgeryRejected { subject: tx.subject_digest(), from: m.from.clone() });
                }
                Err(GraphError::NotFound(_)) => {}
            },
            (Payload::Tx(tx), LocalStore::LedgerReplica(_)) => {
                let d = Digest::of(tx.canonical_line().as_bytes());
                if !node.seen_txs.contains(&d) {
                    if verify_tx(tx, &self.registry) {
                        node.seen_txs.insert(d);
                        node.mempool.push(tx.clone());
                        relay = self.nodes.keys().cloned().collect();
                    } else {
                        events.push(Event::ForgeryRejected { subject: tx.subject_digest(), from: m.from.clone() });
                    }
                }
            }
            (Payload::Block(b), LocalStore::LedgerReplica(tree)) => {
                if !tree.contains(&b.id) && !node.orphans.iter().any(|o| o.id == b.id) {
                    if !tree.contains(&b.parent) {
                        node.orphans.push(b.clone());
                    } else {
                        let mut pending = vec![b.clone()];
                        while let Some(blk) = pending.pop() {
                            match accept_block(tree, blk.clone(), &self.registry, &mut self.states) {
                                Ok(()) => {
                                    accepted.push(blk.clone());
                                    let (ready, rest): (Vec<_>, Vec<_>) =
                                        node.orphans.drain(..).partition(|o| o.parent == blk.id);
                                    node.orphans = rest;
                                    pending.extend(ready);
                                }
                                Err(e) => events.push(Event::BlockRejected { block: blk.id, reason: e.to_string() }),
                            }
                        }
                    }
                }
            }
            (Payload::Block(_), LocalStore::LocalView(_)) => {}
        }
        for ev in events {
            self.trace.push(r, Some(&m.to), ev);
        }
        match m.payload {
            Payload::Tx(tx) => {
                for to in relay {
                    if to != m.from && to != m.to {
                        self.send(&m.to, &to, Payload::Tx(tx.clone()), r);
                    }
                }
            }
            Payload::Block(_) => {
                let peers = self.everyone_but(&[&m.to, &m.from]);
                for b in accepted {
                    for to in &peers {
                        self.send(&m.to, to, Payload::Block(b.clone()), r);
                    }
                }
            }
        }
    }

    fn propose(&mut self, r: u64) {
        if self.eligible.is_empty() {
            return;
        }
        let proposer = elect_proposer(&mut self.election, &self.eligible).clone();
        let node = self.nodes.get_mut(&proposer).expect("eligible nodes exist");
        let censoring = node.setup.adversarial;
        let LocalStore::LedgerReplica(tree) = &mut node.store else { return };
        let tip = tree.canonical_tip();
        let height = tree.height_of(&tip).expect("tip") + 1;
        let (_, included) = chain_digests(tree, &tip);
        let mut state = (**tree.state_of(&tip).expect("tip")).clone();
        let mut txs = Vec::new();
        let mut censored = 0;
        for tx in &node.mempool {
            if txs.len() >= self.config.txs_per_block {
                break;
            }
            if included.contains(&Digest::of(tx.canonical_line().as_bytes())) {
                continue;
            }
            if censoring && self.censor.contains(tx.author()) {
                censored += 1;
                continue;
            }
            if apply_transaction(&mut state, tx, &self.registry).is_ok() {
                txs.push(tx.clone());
            }
        }
        let block = Arc::new(Block::new(tip, height, proposer.clone(), txs));
        accept_block(tree, block.clone(), &self.registry, &mut self.states).expect("proposer builds valid blocks");
        self.trace.push(
            r,
            Some(&proposer),
            Event::BlockProposed {
                block: block.id,
                height,
                txs: block.txs.iter().map(TrustTransaction::subject_digest).collect(),
                censored,
            },
        );
        for to in self.everyone_but(&[&proposer]) {
            self.send(&proposer, &to, Payload::Block(block.clone()), r + 1);
        }
    }

    fn observe(&mut self, r: u64) {
        let k = self.config.k;
        let ids: Vec<EntityId> = self.nodes.keys().cloned().collect();
        for id in ids {
            let node = self.nodes.get_mut(&id).expect("listed");
            if node.setup.adversarial {
                continue;
            }
            let mut events = Vec::new();
            let conflicts = match &node.store {
                LocalStore::LocalView(g) => g.find_conflicts(),
                LocalStore::LedgerReplica(tree) => {
                    let tip = tree.canonical_tip();
                    if tip != node.last_tip {
                        let (order, _) = chain_digests(tree, &tip);
                        let set: BTreeSet<Digest> = order.iter().copied().collect();
                        let new: Vec<Digest> = order.into_iter().filter(|d| !node.canonical_txs.contains(d)).collect();
                        events.push(Event::Included { tip, height: tree.height_of(&tip).expect("tip"), txs: new });
                        node.canonical_txs = set;
                        node.last_tip = tip;
                    }
                    let sv = stable_view(tree, k);
                    if sv.head != node.stable_head {
                        let (order, _) = chain_digests(tree, &sv.head);
                        let set: BTreeSet<Digest> = order.iter().copied().collect();
                        let new: Vec<Digest> = order.into_iter().filter(|d| !node.stable_txs.contains(d)).collect();
                        events.push(Event::StableAdvanced { head: sv.head, height: sv.height, txs: new });
                        node.stable_txs = set;
                        node.stable_head = sv.head;
                    }
                    self.conflicts.entry(sv.head).or_insert_with(|| sv.graph.find_conflicts()).clone()
                }
            };
            for c in conflicts {
                if node.reported.insert(c.clone()) {
                    events.push(Event::ConflictDetected { identity: c.0, keys: c.1 });
                }
            }
            for ev in events {
                self.trace.push(r, Some(&id), ev);
            }
        }
    }

    fn run_probes(&mut self, r: u64) {
        let probes: Vec<Probe> = self.probes.iter().filter(|p| p.from_round <= r).cloned().collect();
        for p in probes {
            let query = AssessmentQuery {
                source: p.node.clone(),
                binding: (p.key.clone(), p.identity.clone()),
                context: crate::trust_graph::Context::validity(p.identity.clone()).expect("probe identity"),
            };
            let event = match self.node_assess(&p.node, &query, &p.program) {
                Ok(a) => Event::Assessment {
                    key: p.key.clone(),
                    identity: p.identity.clone(),
                    value: Some(a.result.value.get()),
                    accepted: a.result.value.get() > ASSERTION_THRESHOLD,
                    conflict_flagged: a.conflict_flagged,
                    evidence: a.result.evidence_relations().iter().map(TrustRelation::digest).collect(),
                    unavailable: false,
                },
                Err(Unavailable) => Event::Assessment {
                    key: p.key.clone(),
                    identity: p.identity.clone(),
                    value: None,
                    accepted: false,
                    conflict_flagged: false,
                    evidence: Vec::new(),
                    unavailable: true,
                },
            };
            self.trace.push(r, Some(&p.node), event);
        }
    }

    fn has_honest_link(&self, id: &EntityId) -> bool {
        let mut peers = self.nodes.values().filter(|n| !n.is_adversarial() && n.entity() != id).peekable();
        peers.peek().is_none() || peers.any(|p| self.policy.linked(id, p.entity(), self.round))
    }

    /// Assessment by `id` over its current view. Local-view nodes with
    /// configured sources fetch the chain behind the queried key from each;
    /// they need at least one to answer. Ledger nodes use their stable view
    /// and only need one working link to an honest peer.
    pub fn node_assess(
        &mut self,
        id: &EntityId,
        query: &AssessmentQuery,
        program: &AssessmentProgram,
    ) -> Result<NodeAssessment, Unavailable> {
        let node = self.nodes.get(id).ok_or(Unavailable)?;
        let view: TrustGraph = match &node.store {
            LocalStore::LedgerReplica(tree) => {
                if !self.has_honest_link(id) {
                    return Err(Unavailable);
                }
                (*stable_view(tree, self.config.k).graph).clone()
            }
            LocalStore::LocalView(g) => {
                let mut view = g.clone();
                let sources = node.setup.sources.clone();
                let mut any = sources.is_empty();
                for s in sources {
                    if let Ok(rels) = self.fetch_chain(id, &s, &query.binding.0) {
                        any = true;
                        for rel in rels {
                            match view.check_upsert(&rel, &self.registry) {
                                Ok(()) => view.upsert_relation(rel, &self.registry).expect("checked"),
                                Err(GraphError::BadAttestation(_) | GraphError::SelfRelation(_)) => {
                                    self.trace.push(
                                        self.round,
                                        Some(id),
                                        Event::ForgeryRejected { subject: rel.digest(), from: s.clone() },
                                    );
                                }
                                Err(_) => {}
                            }
                        }
                    }
                }
                if !any {
                    return Err(Unavailable);
                }
                view
            }
        };
        let result = assess(program, query, &view).map_err(|_| Unavailable)?;
        let conflict_flagged = view.find_conflicts().iter().any(|(ident, _)| *ident == query.binding.1);
        Ok(NodeAssessment { result, conflict_flagged })
    }

    // Relations about `key`, then about their trustors, and so on.
    fn fetch_chain(
        &mut self,
        id: &EntityId,
        server: &EntityId,
        key: &EntityId,
    ) -> Result<Vec<TrustRelation>, Unavailable> {
        let mut out = Vec::new();
        let mut visited: BTreeSet<EntityId> = [key.clone()].into();
        let mut frontier = vec![key.clone()];
        for _ in 0..FETCH_DEPTH {
            let mut next = Vec::new();
            for subject in &frontier {
                for rel in self.query_keyserver(id, subject, server)? {
                    if visited.insert(rel.trustor.clone()) {
                        next.push(rel.trustor.clone());
                    }
                    out.push(rel);
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        Ok(out)
    }

    /// Relations `server` holds about `subject`, as `requester` receives
    /// them this round.
    pub fn query_keyserver(
        &mut self,
        requester: &EntityId,
        subject: &EntityId,
        server: &EntityId,
    ) -> Result<Vec<TrustRelation>, Unavailable> {
        let r = self.round;
        let reachable = requester == server || self.policy.reachable(requester, server, r);
        let store = match self.nodes.get(server).map(|n| &n.store) {
            Some(LocalStore::LocalView(g)) if reachable => g,
            _ => {
                self.trace.push(
                    r,
                    Some(requester),
                    Event::Query { server: server.clone(), about: subject.clone(), ok: false },
                );
                return Err(Unavailable);
            }
        };
        let mut rels: Vec<TrustRelation> = store.about(subject).cloned().collect();
        let history: Vec<TrustRelation> = store.history().to_vec();
        let actions: Vec<ChannelAction> =
            if requester == server { Vec::new() } else { self.policy.active(server, requester, r).cloned().collect() };
        for action in actions {
            match action {
                ChannelAction::Withhold { filter } => {
                    rels = rels
                        .into_iter()
                        .filter_map(|rel| {
                            if !filter.matches(&rel) {
                                return Some(rel);
                            }
                            let key = rel.key();
                            history
                                .iter()
                                .filter(|h| h.key() == key && !filter.matches(h))
                                .max_by(|a, b| a.time.cmp(&b.time))
                                .cloned()
                        })
                        .collect();
                }
                ChannelAction::EquivocateTo { target, substitutes } if &target == requester => {
                    for tpl in substitutes.iter().filter(|t| &t.trustee == subject) {
                        if !self.adversaries.contains(&tpl.trustor) {
                            continue;
                        }
                        let signer = self.nodes.get_mut(&tpl.trustor).map(|n| {
                            n.clock += 1;
                            n.clock
                        });
                        let counter = signer.unwrap_or(r + 1);
                        let Ok(value) = TrustValue::new(tpl.value) else { continue };
                        let forged = self.registry.signing_key(&tpl.trustor).relation(
                            tpl.trustee.clone(),
                            tpl.context.clone(),
                            value,
                            LogicalTime::new(counter, tpl.trustor.clone()),
                        );
                        let key = forged.key();
                        rels.retain(|x| x.key() != key);
                        rels.push(forged);
                    }
                }
                _ => {}
            }
        }
        self.trace.push(r, Some(requester), Event::Query { server: server.clone(), about: subject.clone(), ok: true });
        Ok(rels)
    }
}
