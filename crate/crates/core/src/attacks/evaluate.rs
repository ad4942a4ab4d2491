use std::collections::{BTreeMap, BTreeSet};

use super::build::{adversary_set, identity_of, node_names};
use super::{AttackError, AttackOutcome, ScenarioKind, ScenarioSpec};
use crate::ledger::TrustTransaction;
use crate::netsim::{Event, Trace};
use crate::trust_graph::{EntityId, Identity, TrustRelation};
use crate::Digest;

struct Pub {
    round: u64,
    rel: TrustRelation,
    subject: Digest,
}

struct Row<'a> {
    round: u64,
    accepted: bool,
    unavailable: bool,
    evidence: &'a [Digest],
}

struct Facts<'a> {
    trace: &'a Trace,
    honest: BTreeSet<EntityId>,
    pubs: Vec<Pub>,
}

impl<'a> Facts<'a> {
    fn new(spec: &ScenarioSpec, trace: &'a Trace) -> Result<Self, AttackError> {
        match trace.header() {
            Some((digest, mode, seed))
                if *digest == spec.digest() && mode == spec.sim.mode.name() && seed == spec.sim.seed => {}
            _ => return Err(AttackError::TraceMismatch),
        }
        let adversaries = adversary_set(spec)?;
        let honest = node_names(spec)?.into_iter().filter(|n| !adversaries.contains(n)).collect();
        let pubs = trace
            .records
            .iter()
            .filter_map(|r| match &r.event {
                Event::Published { subject, line, .. } => match TrustTransaction::parse_canonical_line(line) {
                    Ok(TrustTransaction::Upsert(rel)) => Some(Pub { round: r.round, rel, subject: *subject }),
                    _ => None,
                },
                _ => None,
            })
            .collect();
        Ok(Facts { trace, honest, pubs })
    }

    fn find(&self, pred: impl Fn(&TrustRelation) -> bool) -> Option<&Pub> {
        self.pubs.iter().find(|p| pred(&p.rel))
    }

    fn at<'b>(&'b self, node: &'b EntityId) -> impl Iterator<Item = (u64, &'a Event)> + 'b {
        self.trace.records.iter().filter(move |r| r.node == node.as_str()).map(|r| (r.round, &r.event))
    }

    fn assessments<'b>(&'b self, node: &'b EntityId, of: &'b EntityId) -> impl Iterator<Item = Row<'a>> + 'b {
        self.at(node).filter_map(move |(round, ev)| match ev {
            Event::Assessment { key, accepted, unavailable, evidence, .. } if key == of => {
                Some(Row { round, accepted: *accepted, unavailable: *unavailable, evidence })
            }
            _ => None,
        })
    }

    /// First round each honest node's conflict check fired on `identity`.
    fn detections(&self, identity: &Identity) -> BTreeMap<EntityId, u64> {
        let mut out = BTreeMap::new();
        for node in &self.honest {
            let first = self.at(node).find_map(|(round, ev)| match ev {
                Event::ConflictDetected { identity: i, .. } if i == identity => Some(round),
                Event::Assessment { identity: i, conflict_flagged: true, .. } if i == identity => Some(round),
                _ => None,
            });
            if let Some(round) = first {
                out.insert(node.clone(), round);
            }
        }
        out
    }

    /// First round `node`'s stable prefix holds every digest in `want`.
    fn stable_round(&self, node: &EntityId, want: &[Digest]) -> Option<u64> {
        let mut seen = BTreeSet::new();
        self.at(node).find_map(|(round, ev)| match ev {
            Event::StableAdvanced { txs, .. } => {
                seen.extend(txs.iter().copied());
                want.iter().all(|d| seen.contains(d)).then_some(round)
            }
            _ => None,
        })
    }

    fn included_round(&self, node: &EntityId, want: &Digest) -> Option<u64> {
        self.at(node).find_map(|(round, ev)| match ev {
            Event::Included { txs, .. } if txs.contains(want) => Some(round),
            _ => None,
        })
    }

    fn competing_blocks(&self) -> usize {
        let mut heights = BTreeSet::new();
        self.trace
            .records
            .iter()
            .filter(|r| matches!(&r.event, Event::BlockProposed { height, .. } if !heights.insert(*height)))
            .count()
    }
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[m] } else { (xs[m - 1] + xs[m]) / 2.0 })
}

/// Success, detection and metrics of one run, read off its trace.
///
/// Fails with [`AttackError::TraceMismatch`] unless the trace header names
/// this exact scenario, mode and seed.
pub fn evaluate_outcome(spec: &ScenarioSpec, trace: &Trace) -> Result<AttackOutcome, AttackError> {
    let facts = Facts::new(spec, trace)?;
    let ledger = spec.sim.mode.is_ledger();
    let mut metrics = BTreeMap::new();
    let mut detected_by = BTreeSet::new();
    let r = |role: &str| spec.role(role).cloned();

    let success = match spec.kind {
        ScenarioKind::StealthyTargeted => {
            let (a, c, c2) = (r("target")?, r("impersonated")?, r("fake_key")?);
            let accepted = facts.assessments(&a, &c2).filter(|row| row.accepted).count();
            detected_by.extend(facts.detections(&identity_of(&c)).into_keys());
            metrics.insert("accepted_rounds".into(), accepted as f64);
            metrics.insert("competing_blocks".into(), facts.competing_blocks() as f64);
            accepted > 0 && detected_by.is_empty()
        }
        ScenarioKind::DoubleRegistration => {
            let targets = [r("target")?, r("peer1")?, r("peer2")?];
            let (c, c2) = (r("impersonated")?, r("fake_key")?);
            let id = identity_of(&c);
            let all_accept = targets.iter().all(|t| facts.assessments(t, &c2).any(|row| row.accepted));
            let detections = facts.detections(&id);
            if let Some(first) = detections.values().min() {
                metrics.insert("conflict_first_seen_round".into(), *first as f64);
            }
            let binding = |key: &EntityId| {
                facts
                    .find(|rel| &rel.trustee == key && rel.context.subject() == &id && rel.value.asserts())
                    .map(|p| p.subject)
            };
            if let (true, Some(d1), Some(d2)) = (ledger, binding(&c), binding(&c2)) {
                let stable = facts.honest.iter().filter_map(|n| facts.stable_round(n, &[d1, d2])).min();
                if let Some(s) = stable {
                    metrics.insert("both_stable_round".into(), s as f64);
                    let in_time =
                        facts.honest.iter().filter(|n| detections.get(*n).is_some_and(|d| *d <= s + 1)).count();
                    metrics.insert("detection_coverage".into(), in_time as f64 / facts.honest.len() as f64);
                    if let Some(lag) = facts
                        .honest
                        .iter()
                        .map(|n| detections.get(n).map(|d| d.saturating_sub(s)))
                        .collect::<Option<Vec<_>>>()
                    {
                        metrics.insert("detection_lag_max_rounds".into(), lag.into_iter().max().unwrap_or(0) as f64);
                    }
                }
            }
            detected_by.extend(detections.into_keys());
            metrics.insert("detecting_nodes".into(), detected_by.len() as f64);
            all_accept && detected_by.is_empty()
        }
        ScenarioKind::StaleInformation => {
            let (a, c, e) = (r("target")?, r("issuer")?, r("subject")?);
            let tr1 = facts.find(|rel| rel.trustor == c && rel.trustee == e && rel.value.asserts());
            let tr2 = facts.find(|rel| rel.trustor == c && rel.trustee == e && rel.value.is_revoked());
            match (tr1, tr2) {
                (Some(tr1), Some(tr2)) => {
                    let stale_at = |from: u64, to: Option<u64>| {
                        facts
                            .assessments(&a, &e)
                            .filter(|row| row.round >= from && to.is_none_or(|t| row.round < t))
                            .filter(|row| row.accepted && row.evidence.contains(&tr1.subject))
                            .count()
                    };
                    for node in &facts.honest {
                        let rejected = facts
                            .at(node)
                            .any(|(_, ev)| matches!(ev, Event::StaleRejected { subject } if *subject == tr1.subject));
                        if rejected {
                            detected_by.insert(node.clone());
                        }
                    }
                    let window = if ledger {
                        let stable = facts.stable_round(&a, &[tr2.subject]);
                        if let (Some(s), Some(i)) = (stable, facts.included_round(&a, &tr2.subject)) {
                            let tips: BTreeSet<u64> = facts
                                .at(&a)
                                .filter_map(|(round, ev)| match ev {
                                    Event::Included { height, .. } if (i..s).contains(&round) => Some(*height),
                                    _ => None,
                                })
                                .collect();
                            metrics.insert("pre_stability_window_blocks".into(), tips.len() as f64);
                            metrics.insert("pre_stability_window_rounds".into(), (s - i) as f64);
                        }
                        metrics.insert("stale_rounds_before_stability".into(), stale_at(tr2.round, stable) as f64);
                        stable.map_or(0, |s| stale_at(s, None))
                    } else {
                        stale_at(tr2.round, None)
                    };
                    metrics.insert("mitm_window_rounds".into(), window as f64);
                    window > 0
                }
                _ => false,
            }
        }
        ScenarioKind::DenialOfService => {
            let (a, k) = (r("target")?, r("subject")?);
            let unavailable = facts.assessments(&a, &k).filter(|row| row.unavailable).count();
            metrics.insert("unavailable_rounds".into(), unavailable as f64);
            unavailable > 0
        }
        ScenarioKind::Censorship => {
            let (x, y, w) = (r("censored")?, r("relying")?, r("subject")?);
            match facts.find(|rel| rel.trustor == x && rel.trustee == w) {
                None => false,
                Some(tx) => {
                    let censored: usize = trace
                        .records
                        .iter()
                        .map(|r| match &r.event {
                            Event::BlockProposed { censored, .. } => *censored,
                            _ => 0,
                        })
                        .sum();
                    metrics.insert("censored_skips".into(), censored as f64);
                    if ledger {
                        let included = trace.records.iter().find_map(|r| match &r.event {
                            Event::BlockProposed { txs, .. } if txs.contains(&tx.subject) => Some(r.round),
                            _ => None,
                        });
                        if let Some(at) = included {
                            metrics.insert("inclusion_delay_blocks".into(), (at + 1 - tx.round) as f64);
                        }
                        included.is_none()
                    } else {
                        let accepted = facts.assessments(&y, &w).filter(|row| row.accepted).count();
                        metrics.insert("accepted_rounds".into(), accepted as f64);
                        accepted == 0
                    }
                }
            }
        }
    };
    Ok(AttackOutcome { success, detected_by, metrics, assumption_violation: spec.sim.violates_honest_majority() })
}

/// Median of `metric` over the outcomes that report it.
pub fn median_metric(outcomes: &[AttackOutcome], metric: &str) -> Option<f64> {
    median(outcomes.iter().filter_map(|o| o.metrics.get(metric).copied()).collect())
}
