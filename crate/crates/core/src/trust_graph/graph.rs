use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::attest::{removal_payload, Verifier};
use super::types::{Attestation, EntityId, Identity, LogicalTime, RelationKey, TrustRelation};
use super::GraphError;
use crate::Digest;

/// A validity relation asserts its binding only when its value is strictly
/// above complete uncertainty.
pub const ASSERTION_THRESHOLD: f64 = 0.5;

/// The trust graph: live relations keyed by [`RelationKey`] plus an
/// append-only archive of superseded relations.
#[derive(Clone, Debug, Default)]
pub struct TrustGraph {
    live: BTreeMap<RelationKey, TrustRelation>,
    history: Vec<TrustRelation>,
    // newest time ever accepted per key, live or archived
    high_water: BTreeMap<RelationKey, LogicalTime>,
}

impl TrustGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn relations(&self) -> impl Iterator<Item = &TrustRelation> {
        self.live.values()
    }

    pub fn get(&self, key: &RelationKey) -> Option<&TrustRelation> {
        self.live.get(key)
    }

    pub fn history(&self) -> &[TrustRelation] {
        &self.history
    }

    /// Vertex set: exactly the entities appearing in live relations.
    pub fn vertices(&self) -> BTreeSet<EntityId> {
        self.live.keys().flat_map(|k| [k.trustor.clone(), k.trustee.clone()]).collect()
    }

    pub fn outgoing<'a>(&'a self, from: &'a EntityId) -> impl Iterator<Item = &'a TrustRelation> + 'a {
        self.live.values().filter(move |r| &r.trustor == from)
    }

    /// Live relations whose trustee is `subject`.
    pub fn about<'a>(&'a self, subject: &'a EntityId) -> impl Iterator<Item = &'a TrustRelation> + 'a {
        self.live.values().filter(move |r| &r.trustee == subject)
    }

    /// Newest time ever accepted at `key`, including archived versions.
    pub fn latest_time(&self, key: &RelationKey) -> Option<&LogicalTime> {
        self.high_water.get(key)
    }

    /// Adds or supersedes the relation at `rel.key()`.
    pub fn upsert_relation(&mut self, rel: TrustRelation, verifier: &dyn Verifier) -> Result<(), GraphError> {
        self.check_upsert(&rel, verifier)?;
        let key = rel.key();
        self.high_water.insert(key.clone(), rel.time.clone());
        if let Some(prev) = self.live.insert(key, rel) {
            self.history.push(prev);
        }
        Ok(())
    }

    /// Validation half of [`upsert_relation`](Self::upsert_relation).
    pub fn check_upsert(&self, rel: &TrustRelation, verifier: &dyn Verifier) -> Result<(), GraphError> {
        if rel.trustor == rel.trustee {
            return Err(GraphError::SelfRelation(rel.trustor.clone()));
        }
        if rel.attestation.signer != rel.trustor {
            return Err(GraphError::BadAttestation(format!(
                "signer {} is not trustor {}",
                rel.attestation.signer, rel.trustor
            )));
        }
        if !verifier.verify(rel.payload().as_bytes(), &rel.attestation) {
            return Err(GraphError::BadAttestation(format!("attestation by {} does not verify", rel.trustor)));
        }
        let key = rel.key();
        if let Some(existing) = self.high_water.get(&key) {
            if *existing >= rel.time {
                return Err(GraphError::StaleWrite { key, existing: existing.clone(), attempted: rel.time.clone() });
            }
        }
        Ok(())
    }

    /// Deletes the live relation at `key`, archiving it.
    pub fn remove_relation(
        &mut self,
        key: &RelationKey,
        attestation: &Attestation,
        time: &LogicalTime,
        verifier: &dyn Verifier,
    ) -> Result<(), GraphError> {
        self.check_remove(key, attestation, time, verifier)?;
        self.high_water.insert(key.clone(), time.clone());
        let prev = self.live.remove(key).expect("checked live");
        self.history.push(prev);
        Ok(())
    }

    pub fn check_remove(
        &self,
        key: &RelationKey,
        attestation: &Attestation,
        time: &LogicalTime,
        verifier: &dyn Verifier,
    ) -> Result<(), GraphError> {
        if attestation.signer != key.trustor {
            return Err(GraphError::BadAttestation(format!(
                "signer {} is not trustor {}",
                attestation.signer, key.trustor
            )));
        }
        let live = self.live.get(key).ok_or_else(|| GraphError::NotFound(key.clone()))?;
        let existing = self.high_water.get(key).unwrap_or(&live.time);
        if existing >= time {
            return Err(GraphError::StaleWrite {
                key: key.clone(),
                existing: existing.clone(),
                attempted: time.clone(),
            });
        }
        if !verifier.verify(removal_payload(key, time).as_bytes(), attestation) {
            return Err(GraphError::BadAttestation(format!("removal by {} does not verify", key.trustor)));
        }
        Ok(())
    }

    /// Identities bound by asserting validity relations to two or more
    /// distinct trustees, with those trustees.
    pub fn find_conflicts(&self) -> Vec<(Identity, BTreeSet<EntityId>)> {
        let mut bound: BTreeMap<&Identity, BTreeSet<EntityId>> = BTreeMap::new();
        for rel in self.live.values() {
            if rel.context.is_validity() && rel.value.get() > ASSERTION_THRESHOLD {
                bound.entry(rel.context.subject()).or_default().insert(rel.trustee.clone());
            }
        }
        bound.into_iter().filter(|(_, keys)| keys.len() >= 2).map(|(id, keys)| (id.clone(), keys)).collect()
    }

    /// Sub-multigraph of live edges reachable from `root` within `max_depth`
    /// hops. Archived relations are not carried over.
    pub fn subgraph_view(&self, root: &EntityId, max_depth: usize) -> TrustGraph {
        let mut out = TrustGraph::new();
        let mut dist: BTreeMap<&EntityId, usize> = BTreeMap::new();
        let mut queue = VecDeque::new();
        dist.insert(root, 0);
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            let d = dist[v];
            if d >= max_depth {
                continue;
            }
            for rel in self.outgoing(v) {
                out.live.insert(rel.key(), rel.clone());
                out.high_water.insert(rel.key(), rel.time.clone());
                if !dist.contains_key(&rel.trustee) {
                    dist.insert(&rel.trustee, d + 1);
                    queue.push_back(&rel.trustee);
                }
            }
        }
        out
    }

    /// Graph made of the given relations, bypassing attestation checks. The
    /// caller vouches that they come from a valid graph.
    pub fn from_trusted<I: IntoIterator<Item = TrustRelation>>(relations: I) -> TrustGraph {
        let mut out = TrustGraph::new();
        for rel in relations {
            let key = rel.key();
            match out.live.get(&key) {
                Some(existing) if existing.time >= rel.time => {}
                _ => {
                    out.high_water.insert(key.clone(), rel.time.clone());
                    out.live.insert(key, rel);
                }
            }
        }
        out
    }

    /// Canonical serialization: one line per live relation, in key order.
    pub fn canonical_lines(&self) -> impl Iterator<Item = String> + '_ {
        self.live.values().map(TrustRelation::canonical_line)
    }

    /// SHA-256 over the canonical lines, each terminated by `\n`. The empty
    /// graph hashes to the SHA-256 of the empty string,
    /// `e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855`.
    pub fn snapshot_digest(&self) -> Digest {
        Digest::of_lines(self.canonical_lines())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trust_graph::{Context, KeyRegistry, TrustValue};
    use proptest::prelude::*;

    fn e(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn validity(name: &str) -> Context {
        Context::validity(Identity::named(name)).unwrap()
    }

    fn rel(reg: &KeyRegistry, from: &str, to: &str, ctx: Context, v: f64, t: u64) -> TrustRelation {
        reg.signing_key(&e(from)).relation(e(to), ctx, TrustValue::new(v).unwrap(), LogicalTime::new(t, e(from)))
    }

    #[test]
    fn insert_into_empty_graph() {
        let reg = KeyRegistry::from_seed(1);
        let mut g = TrustGraph::new();
        g.upsert_relation(rel(&reg, "A", "B", validity("B"), 1.0, 1), &reg).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.vertices(), [e("A"), e("B")].into_iter().collect());
    }

    #[test]
    fn newer_same_key_relation_supersedes() {
        let reg = KeyRegistry::from_seed(1);
        let mut g = TrustGraph::new();
        let tr1 = rel(&reg, "B", "C", validity("C"), 1.0, 1);
        let tr2 = rel(&reg, "B", "C", validity("C"), 0.0, 2);
        g.upsert_relation(tr1.clone(), &reg).unwrap();
        g.upsert_relation(tr2.clone(), &reg).unwrap();
        assert_eq!(g.get(&tr2.key()), Some(&tr2));
        assert_eq!(g.history(), &[tr1]);
    }

    #[test]
    fn equal_time_is_stale() {
        let reg = KeyRegistry::from_seed(1);
        let mut g = TrustGraph::new();
        g.upsert_relation(rel(&reg, "B", "C", validity("C"), 1.0, 5), &reg).unwrap();
        let err = g.upsert_relation(rel(&reg, "B", "C", validity("C"), 0.9, 5), &reg).unwrap_err();
        assert!(matches!(err, GraphError::StaleWrite { .. }));
        // older times too, even after the key was removed
        let key = RelationKey::new(e("B"), e("C"), validity("C"));
        let t6 = LogicalTime::new(6, e("B"));
        g.remove_relation(&key, &reg.signing_key(&e("B")).removal(&key, &t6), &t6, &reg).unwrap();
        let err = g.upsert_relation(rel(&reg, "B", "C", validity("C"), 1.0, 6), &reg).unwrap_err();
        assert!(matches!(err, GraphError::StaleWrite { .. }));
        g.upsert_relation(rel(&reg, "B", "C", validity("C"), 1.0, 7), &reg).unwrap();
    }

    #[test]
    fn forged_and_misattributed_relations_are_rejected() {
        let reg = KeyRegistry::from_seed(1);
        let mut g = TrustGraph::new();
        // M signs a relation claiming A as trustor
        let mut r = rel(&reg, "M", "B", validity("B"), 1.0, 1);
        r.trustor = e("A");
        assert!(matches!(g.upsert_relation(r.clone(), &reg), Err(GraphError::BadAttestation(_))));
        // and relabelling the signer does not help
        r.attestation.signer = e("A");
        assert!(matches!(g.upsert_relation(r, &reg), Err(GraphError::BadAttestation(_))));
        assert!(g.is_empty());
        assert!(matches!(
            g.upsert_relation(rel(&reg, "A", "A", validity("A"), 1.0, 1), &reg),
            Err(GraphError::SelfRelation(_))
        ));
    }

    #[test]
    fn removing_the_last_edge_yields_the_empty_graph() {
        let reg = KeyRegistry::from_seed(1);
        let mut g = TrustGraph::new();
        let r = rel(&reg, "A", "B", validity("B"), 1.0, 1);
        let key = r.key();
        g.upsert_relation(r, &reg).unwrap();
        let t = LogicalTime::new(2, e("A"));
        g.remove_relation(&key, &reg.signing_key(&e("A")).removal(&key, &t), &t, &reg).unwrap();
        assert!(g.is_empty());
        assert!(g.vertices().is_empty());
        assert_eq!(g.snapshot_digest(), TrustGraph::new().snapshot_digest());
        assert_eq!(g.history().len(), 1);
    }

    #[test]
    fn remove_errors() {
        let reg = KeyRegistry::from_seed(1);
        let mut g = TrustGraph::new();
        let r = rel(&reg, "A", "B", validity("B"), 1.0, 3);
        let key = r.key();
        g.upsert_relation(r, &reg).unwrap();
        let t = LogicalTime::new(4, e("B"));
        let by_b = reg.signing_key(&e("B")).removal(&key, &t);
        assert!(matches!(g.remove_relation(&key, &by_b, &t, &reg), Err(GraphError::BadAttestation(_))));
        let missing = RelationKey::new(e("A"), e("Z"), validity("Z"));
        let t = LogicalTime::new(4, e("A"));
        let att = reg.signing_key(&e("A")).removal(&missing, &t);
        assert!(matches!(g.remove_relation(&missing, &att, &t, &reg), Err(GraphError::NotFound(_))));
        let t2 = LogicalTime::new(2, e("A"));
        let att = reg.signing_key(&e("A")).removal(&key, &t2);
        assert!(matches!(g.remove_relation(&key, &att, &t2, &reg), Err(GraphError::StaleWrite { .. })));
        // attestation for a different time does not verify
        let t5 = LogicalTime::new(5, e("A"));
        let att = reg.signing_key(&e("A")).removal(&key, &t5);
        let t6 = LogicalTime::new(6, e("A"));
        assert!(matches!(g.remove_relation(&key, &att, &t6, &reg), Err(GraphError::BadAttestation(_))));
    }

    #[test]
    fn conflicts() {
        let reg = KeyRegistry::from_seed(1);
        let mut g = TrustGraph::new();
        g.upsert_relation(rel(&reg, "B", "C'", validity("C"), 1.0, 1), &reg).unwrap();
        g.upsert_relation(rel(&reg, "I", "C", validity("C"), 1.0, 1), &reg).unwrap();
        assert_eq!(g.find_conflicts(), vec![(Identity::named("C"), [e("C"), e("C'")].into_iter().collect())]);

        let mut g = TrustGraph::new();
        g.upsert_relation(rel(&reg, "B", "C", validity("C"), 1.0, 1), &reg).unwrap();
        g.upsert_relation(rel(&reg, "B", "D", validity("D"), 1.0, 2), &reg).unwrap();
        assert!(g.find_conflicts().is_empty());

        // revoked binding does not assert; nor does complete uncertainty
        let mut g = TrustGraph::new();
        g.upsert_relation(rel(&reg, "I", "C", validity("C"), 1.0, 1), &reg).unwrap();
        g.upsert_relation(rel(&reg, "B", "C'", validity("C"), 0.0, 1), &reg).unwrap();
        g.upsert_relation(rel(&reg, "J", "C''", validity("C"), 0.5, 1), &reg).unwrap();
        assert!(g.find_conflicts().is_empty());
    }

    #[test]
    fn subgraph_depth_bounds() {
        let reg = KeyRegistry::from_seed(1);
        let mut g = TrustGraph::new();
        for (a, b) in [("A", "B"), ("B", "C"), ("C", "D")] {
            g.upsert_relation(rel(&reg, a, b, validity(b), 1.0, 1), &reg).unwrap();
        }
        assert!(g.subgraph_view(&e("A"), 0).is_empty());
        let v = g.subgraph_view(&e("A"), 2);
        let pairs: Vec<_> = v.relations().map(|r| (r.trustor.to_string(), r.trustee.to_string())).collect();
        assert_eq!(pairs, vec![("A".into(), "B".into()), ("B".into(), "C".into())]);
    }

    #[test]
    fn digest_distinguishes_values() {
        let reg = KeyRegistry::from_seed(1);
        let mut g1 = TrustGraph::new();
        let mut g2 = TrustGraph::new();
        g1.upsert_relation(rel(&reg, "A", "B", validity("B"), 1.0, 1), &reg).unwrap();
        g2.upsert_relation(rel(&reg, "A", "B", validity("B"), 0.9, 1), &reg).unwrap();
        assert_ne!(g1.snapshot_digest(), g2.snapshot_digest());
        assert_eq!(
            TrustGraph::new().snapshot_digest().to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn canonical_line_roundtrip() {
        let reg = KeyRegistry::from_seed(1);
        let r = rel(&reg, "A b", "C;D", Context::validity(Identity::new().with("mail", "x=y@z")).unwrap(), 0.25, 9);
        let line = r.canonical_line();
        assert_eq!(TrustRelation::parse_canonical_line(&line).unwrap(), r);
        assert!(TrustRelation::parse_canonical_line(&line.replace("0.25", "0.250")).is_err());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Upsert { from: u8, to: u8, validity: bool, value: u8, t: u8 },
        Remove { from: u8, to: u8, validity: bool, t: u8 },
        Forge { from: u8, to: u8, victim: u8, t: u8 },
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u8..4, 0u8..4, any::<bool>(), 0u8..=10, 0u8..8).prop_map(|(from, to, validity, value, t)| Op::Upsert {
                from,
                to,
                validity,
                value,
                t
            }),
            (0u8..4, 0u8..4, any::<bool>(), 0u8..8).prop_map(|(from, to, validity, t)| Op::Remove {
                from,
                to,
                validity,
                t
            }),
            (0u8..4, 0u8..4, 0u8..4, 0u8..8).prop_map(|(from, to, victim, t)| Op::Forge { from, to, victim, t }),
        ]
    }

    fn name(i: u8) -> EntityId {
        e(&format!("N{i}"))
    }

    fn ctx(validity_ctx: bool, to: u8) -> Context {
        if validity_ctx {
            validity(&format!("N{to}"))
        } else {
            Context::authenticator_trust()
        }
    }

    proptest! {
        #[test]
        fn invariants_hold_under_random_operations(ops in proptest::collection::vec(op(), 0..40)) {
            let reg = KeyRegistry::from_seed(3);
            let honest: BTreeSet<EntityId> = (0..3).map(name).collect();
            let mut g = TrustGraph::new();
            for op in ops {
                match op {
                    Op::Upsert { from, to, validity, value, t } => {
                        let r = reg.signing_key(&name(from)).relation(
                            name(to), ctx(validity, to),
                            TrustValue::new(value as f64 / 10.0).unwrap(),
                            LogicalTime::new(t as u64, name(from)));
                        let _ = g.upsert_relation(r, &reg);
                    }
                    Op::Remove { from, to, validity, t } => {
                        let key = RelationKey::new(name(from), name(to), ctx(validity, to));
                        let time = LogicalTime::new(t as u64, name(from));
                        let att = reg.signing_key(&name(from)).removal(&key, &time);
                        let _ = g.remove_relation(&key, &att, &time, &reg);
                    }
                    Op::Forge { from, to, victim, t } => {
                        // adversary N3 signs for an honest victim
                        let mut r = reg.signing_key(&name(3)).relation(
                            name(to), ctx(true, to), TrustValue::FULL, LogicalTime::new(t as u64, name(from)));
                        r.trustor = name(victim);
                        r.attestation.signer = name(victim);
                        let _ = g.upsert_relation(r, &reg);
                    }
                }
                for r in g.relations() {
                    prop_assert!((0.0..=1.0).contains(&r.value.get()));
                    prop_assert!(reg.verify(r.payload().as_bytes(), &r.attestation));
                    for old in g.history().iter().filter(|h| h.key() == r.key()) {
                        prop_assert!(old.time < r.time);
                    }
                    // honest trustors only ever appear through their own keys
                    if honest.contains(&r.trustor) {
                        prop_assert_eq!(&r.attestation.signer, &r.trustor);
                    }
                }
                prop_assert_eq!(g.vertices(), g.relations().flat_map(|r| [r.trustor.clone(), r.trustee.clone()]).collect());
            }
        }

        #[test]
        fn digest_is_insertion_order_independent(perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle()) {
            let reg = KeyRegistry::from_seed(5);
            let rels: Vec<TrustRelation> = (0..6u8)
                .map(|i| reg.signing_key(&name(i % 3)).relation(
                    name(i % 3 + 3), ctx(i % 2 == 0, i), TrustValue::new(0.1 * i as f64).unwrap(),
                    LogicalTime::new(i as u64, name(i % 3))))
                .collect();
            let mut sorted = TrustGraph::new();
            for r in &rels { sorted.upsert_relation(r.clone(), &reg).unwrap(); }
            let mut shuffled = TrustGraph::new();
            for i in perm { shuffled.upsert_relation(rels[i].clone(), &reg).unwrap(); }
            prop_assert_eq!(sorted.snapshot_digest(), shuffled.snapshot_digest());
        }
    }
}
