use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AssessError, AssessmentResult};
use crate::trust_graph::{ContextClass, EntityId, Identity, TrustGraph, TrustRelation, TrustValue};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct X509Policy {
    /// Pre-trusted anchors.
    pub roots: BTreeSet<EntityId>,
    /// Longest accepted chain, counted in edges.
    #[serde(default = "default_max_chain")]
    pub max_chain: usize,
}

fn default_max_chain() -> usize {
    8
}

impl X509Policy {
    pub fn new(roots: BTreeSet<EntityId>) -> Self {
        X509Policy { roots, max_chain: default_max_chain() }
    }

    pub fn validate(&self) -> Result<(), AssessError> {
        if self.max_chain == 0 {
            return Err(AssessError::InvalidPolicy("max_chain must be positive".into()));
        }
        Ok(())
    }
}

fn is_certify(rel: &TrustRelation) -> bool {
    rel.context.class() == ContextClass::AuthenticatorTrust && rel.value == TrustValue::FULL
}

/// 1 iff some root reaches `binding.0` through certify edges (value 1)
/// followed by one authenticate edge (value 1) for exactly `binding.1`, in at
/// most `max_chain` edges. Evidence lists every shortest such chain.
pub fn x509_validate(view: &TrustGraph, policy: &X509Policy, binding: (&EntityId, &Identity)) -> AssessmentResult {
    let (key, identity) = binding;

    // Multi-source BFS over certify edges. The queried key is never an
    // intermediate hop, which keeps accepted chains simple.
    let mut dist: BTreeMap<EntityId, usize> = BTreeMap::new();
    let mut preds: BTreeMap<EntityId, Vec<TrustRelation>> = BTreeMap::new();
    let mut frontier: Vec<EntityId> = policy.roots.iter().filter(|r| *r != key).cloned().collect();
    for r in &frontier {
        dist.insert(r.clone(), 0);
    }
    let mut depth = 0;
    while !frontier.is_empty() && depth + 1 < policy.max_chain {
        let mut next = Vec::new();
        for v in &frontier {
            for rel in view.outgoing(v).filter(|r| is_certify(r) && &r.trustee != key) {
                match dist.get(&rel.trustee) {
                    None => {
                        dist.insert(rel.trustee.clone(), depth + 1);
                        preds.entry(rel.trustee.clone()).or_default().push(rel.clone());
                        next.push(rel.trustee.clone());
                    }
                    Some(&d) if d == depth + 1 => {
                        preds.entry(rel.trustee.clone()).or_default().push(rel.clone());
                    }
                    Some(_) => {}
                }
            }
        }
        frontier = next;
        depth += 1;
    }

    let finals: Vec<&TrustRelation> = view
        .about(key)
        .filter(|r| {
            r.context.class() == ContextClass::Validity
                && r.context.subject() == identity
                && r.value == TrustValue::FULL
                && dist.get(&r.trustor).is_some_and(|&d| d < policy.max_chain)
        })
        .collect();
    let Some(best) = finals.iter().map(|r| dist[&r.trustor]).min() else {
        return AssessmentResult::no_evidence(TrustValue::REVOKED);
    };

    let mut evidence = Vec::new();
    for last in finals.into_iter().filter(|r| dist[&r.trustor] == best) {
        for mut prefix in paths_to(&last.trustor, &dist, &preds) {
            prefix.push(last.clone());
            evidence.push(prefix);
        }
    }
    evidence.sort_by_key(|chain| chain.iter().map(TrustRelation::canonical_line).collect::<Vec<_>>());
    AssessmentResult { value: TrustValue::FULL, evidence }
}

// All shortest certify paths from any root to `v`.
fn paths_to(
    v: &EntityId,
    dist: &BTreeMap<EntityId, usize>,
    preds: &BTreeMap<EntityId, Vec<TrustRelation>>,
) -> Vec<Vec<TrustRelation>> {
    if dist[v] == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rel in &preds[v] {
        for mut p in paths_to(&rel.trustor, dist, preds) {
            p.push(rel.clone());
            out.push(p);
        }
    }
    out
}
