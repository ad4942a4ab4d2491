use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AssessError, AssessmentResult};
use crate::trust_graph::{ContextClass, EntityId, Identity, TrustGraph, TrustRelation, TrustValue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PgpLabel {
    Untrusted,
    Unknown,
    Marginal,
    Full,
    Ultimate,
}

/// Numeric image of the OpenPGP trust labels. `unknown` doubles as
/// `undefined`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelMap {
    pub ultimate: f64,
    pub full: f64,
    pub marginal: f64,
    pub unknown: f64,
    pub untrusted: f64,
}

impl Default for LabelMap {
    fn default() -> Self {
        LabelMap { ultimate: 1.0, full: 0.9, marginal: 0.6, unknown: 0.5, untrusted: 0.0 }
    }
}

impl LabelMap {
    pub fn value(&self, label: PgpLabel) -> f64 {
        match label {
            PgpLabel::Ultimate => self.ultimate,
            PgpLabel::Full => self.full,
            PgpLabel::Marginal => self.marginal,
            PgpLabel::Unknown => self.unknown,
            PgpLabel::Untrusted => self.untrusted,
        }
    }

    /// Highest label whose value does not exceed `v`; values between
    /// `untrusted` and `marginal` read as unknown.
    pub fn label_of(&self, v: TrustValue) -> PgpLabel {
        let v = v.get();
        if v >= self.ultimate {
            PgpLabel::Ultimate
        } else if v >= self.full {
            PgpLabel::Full
        } else if v >= self.marginal {
            PgpLabel::Marginal
        } else if v <= self.untrusted {
            PgpLabel::Untrusted
        } else {
            PgpLabel::Unknown
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgpPolicy {
    pub full_needed: usize,
    pub marginal_needed: usize,
    pub max_depth: usize,
    pub label_map: LabelMap,
}

impl Default for PgpPolicy {
    fn default() -> Self {
        PgpPolicy { full_needed: 1, marginal_needed: 2, max_depth: 4, label_map: LabelMap::default() }
    }
}

impl PgpPolicy {
    pub fn validate(&self) -> Result<(), AssessError> {
        let m = &self.label_map;
        if self.full_needed == 0 || self.marginal_needed == 0 || self.max_depth == 0 {
            return Err(AssessError::InvalidPolicy("thresholds and depth must be positive".into()));
        }
        let ordered = m.ultimate >= m.full && m.full > m.marginal && m.marginal > m.unknown && m.unknown >= m.untrusted;
        let in_range = [m.ultimate, m.full, m.marginal, m.unknown, m.untrusted].iter().all(|v| (0.0..=1.0).contains(v));
        if !ordered || !in_range {
            return Err(AssessError::InvalidPolicy("label map must be ordered within [0, 1]".into()));
        }
        Ok(())
    }

    /// Introducer labels the source assigns through its own authenticator
    /// trust edges.
    pub fn introducer_labels(&self, view: &TrustGraph, source: &EntityId) -> BTreeMap<EntityId, PgpLabel> {
        view.outgoing(source)
            .filter(|r| r.context.class() == ContextClass::AuthenticatorTrust)
            .map(|r| (r.trustee.clone(), self.label_map.label_of(r.value)))
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Weight {
    Full,
    Marginal,
}

/// Web-of-trust validity of `binding` from `source`'s point of view.
///
/// The source and the keys it trusts ultimately start out valid. In each of
/// up to `max_depth` rounds, a binding `(K, id)` becomes valid once asserting
/// validity signatures on it come from `full_needed` valid keys the source
/// trusts fully (or ultimately; the source itself counts as such), or from
/// `marginal_needed` valid keys it trusts marginally. A key is valid once any
/// of its bindings is. Untrusted and unknown introducers never count, and a
/// signature counts only if it asserts validity (value above 0.5).
pub fn pgp_validity(
    view: &TrustGraph,
    source: &EntityId,
    binding: (&EntityId, &Identity),
    policy: &PgpPolicy,
) -> AssessmentResult {
    let labels = policy.introducer_labels(view, source);
    let weight = |signer: &EntityId| -> Option<Weight> {
        if signer == source {
            return Some(Weight::Full);
        }
        match labels.get(signer)? {
            PgpLabel::Ultimate | PgpLabel::Full => Some(Weight::Full),
            PgpLabel::Marginal => Some(Weight::Marginal),
            PgpLabel::Unknown | PgpLabel::Untrusted => None,
        }
    };

    // asserting signatures grouped by binding
    let mut sigs: BTreeMap<(EntityId, Identity), Vec<&TrustRelation>> = BTreeMap::new();
    for rel in view.relations() {
        if rel.context.class() == ContextClass::Validity && rel.value.asserts() && weight(&rel.trustor).is_some() {
            sigs.entry((rel.trustee.clone(), rel.context.subject().clone())).or_default().push(rel);
        }
    }

    let mut valid_keys: BTreeSet<EntityId> =
        labels.iter().filter(|(_, l)| **l == PgpLabel::Ultimate).map(|(k, _)| k.clone()).collect();
    valid_keys.insert(source.clone());

    // binding -> signatures that validated it
    let mut valid_bindings: BTreeMap<(EntityId, Identity), Vec<&TrustRelation>> = BTreeMap::new();
    for _ in 0..policy.max_depth {
        let mut newly = Vec::new();
        for (b, rels) in &sigs {
            if valid_bindings.contains_key(b) {
                continue;
            }
            let counted: Vec<&TrustRelation> =
                rels.iter().copied().filter(|r| valid_keys.contains(&r.trustor) && r.trustor != b.0).collect();
            let fulls = counted.iter().filter(|r| weight(&r.trustor) == Some(Weight::Full)).count();
            let marginals = counted.iter().filter(|r| weight(&r.trustor) == Some(Weight::Marginal)).count();
            if fulls >= policy.full_needed || marginals >= policy.marginal_needed {
                newly.push((b.clone(), counted));
            }
        }
        if newly.is_empty() {
            break;
        }
        for (b, counted) in newly {
            valid_keys.insert(b.0.clone());
            valid_bindings.insert(b, counted);
        }
    }

    let target = (binding.0.clone(), binding.1.clone());
    match valid_bindings.get(&target) {
        Some(counted) => {
            let ctx = Support { view, source, labels: &labels, valid_bindings: &valid_bindings };
            let evidence = counted
                .iter()
                .map(|sig| {
                    let mut chain = Vec::new();
                    ctx.introducer_support(&sig.trustor, &mut chain, &mut BTreeSet::new());
                    chain.push((*sig).clone());
                    dedup(chain)
                })
                .collect();
            AssessmentResult { value: TrustValue::new(policy.label_map.full).expect("validated"), evidence }
        }
        None => AssessmentResult::no_evidence(TrustValue::new(policy.label_map.unknown).expect("validated")),
    }
}

struct Support<'a> {
    view: &'a TrustGraph,
    source: &'a EntityId,
    labels: &'a BTreeMap<EntityId, PgpLabel>,
    valid_bindings: &'a BTreeMap<(EntityId, Identity), Vec<&'a TrustRelation>>,
}

impl Support<'_> {
    // Relations that make `signer` a valid, trusted introducer: the source's
    // trust edge to it plus, unless ultimate, the signatures that validated
    // one of its bindings (recursively).
    fn introducer_support(&self, signer: &EntityId, out: &mut Vec<TrustRelation>, seen: &mut BTreeSet<EntityId>) {
        if signer == self.source || !seen.insert(signer.clone()) {
            return;
        }
        if self.labels.get(signer) != Some(&PgpLabel::Ultimate) {
            let first = self.valid_bindings.iter().find(|((k, _), _)| k == signer);
            if let Some((_, sigs)) = first {
                for sig in sigs {
                    self.introducer_support(&sig.trustor, out, seen);
                    out.push((*sig).clone());
                }
            }
        }
        if let Some(trust) = self
            .view
            .outgoing(self.source)
            .find(|r| &r.trustee == signer && r.context.class() == ContextClass::AuthenticatorTrust)
        {
            out.push(trust.clone());
        }
    }
}

fn dedup(chain: Vec<TrustRelation>) -> Vec<TrustRelation> {
    let mut seen = BTreeSet::new();
    chain.into_iter().filter(|r| seen.insert(r.key())).collect()
}
