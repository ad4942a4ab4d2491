use std::collections::BTreeSet;

use crate::trust_graph::{EntityId, TrustGraph, TrustRelation};

/// Every simple directed path of live edges from `from` to `to` with at most
/// `max_len` edges. Parallel edges give distinct chains. Exponential; meant
/// for small views and as a test oracle.
pub fn enumerate_chains(view: &TrustGraph, from: &EntityId, to: &EntityId, max_len: usize) -> Vec<Vec<TrustRelation>> {
    let mut out = Vec::new();
    if from == to || max_len == 0 {
        return out;
    }
    let mut visited = BTreeSet::new();
    visited.insert(from.clone());
    let mut path = Vec::new();
    walk(view, from, to, max_len, &mut visited, &mut path, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| lines(a).cmp(&lines(b))));
    out
}

fn lines(chain: &[TrustRelation]) -> Vec<String> {
    chain.iter().map(TrustRelation::canonical_line).collect()
}

fn walk(
    view: &TrustGraph,
    at: &EntityId,
    to: &EntityId,
    budget: usize,
    visited: &mut BTreeSet<EntityId>,
    path: &mut Vec<TrustRelation>,
    out: &mut Vec<Vec<TrustRelation>>,
) {
    if budget == 0 {
        return;
    }
    for rel in view.outgoing(at) {
        if &rel.trustee == to {
            path.push(rel.clone());
            out.push(path.clone());
            path.pop();
        } else if !visited.contains(&rel.trustee) {
            visited.insert(rel.trustee.clone());
            path.push(rel.clone());
            walk(view, &rel.trustee, to, budget - 1, visited, path, out);
            path.pop();
            visited.remove(&rel.trustee);
        }
    }
}
