//! Brute-force resolver oracles over random graphs of at most 8 vertices.
//! Shared by the core tests and the acceptance target.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tmsim_core::assessment::{enumerate_chains, pgp_validity, x509_validate, PgpPolicy, X509Policy};
use tmsim_core::trust_graph::{
    Context, ContextClass, EntityId, Identity, KeyRegistry, LogicalTime, TrustGraph, TrustRelation, TrustValue,
};

fn e(s: &str) -> EntityId {
    EntityId::new(s).unwrap()
}

fn rel(reg: &KeyRegistry, a: &str, b: &str, ctx: Context, v: f64, t: u64) -> TrustRelation {
    reg.signing_key(&e(a)).relation(e(b), ctx, TrustValue::new(v).unwrap(), LogicalTime::new(t, e(a)))
}

const VALUES: [f64; 7] = [0.0, 0.3, 0.5, 0.6, 0.7, 0.9, 1.0];

pub struct RandomCase {
    pub graph: TrustGraph,
    pub names: Vec<String>,
}

pub fn random_case(rng: &mut ChaCha8Rng, reg: &KeyRegistry) -> RandomCase {
    let n = rng.gen_range(2..=8);
    let names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
    let m = rng.gen_range(0..=3 * n);
    let mut graph = TrustGraph::new();
    for t in 1..=m as u64 {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let ctx = if rng.gen_bool(0.5) {
            Context::authenticator_trust()
        } else {
            // usually the trustee's own name, sometimes someone else's
            let id = if rng.gen_bool(0.8) { b } else { rng.gen_range(0..n) };
            Context::validity(Identity::named(&names[id])).unwrap()
        };
        let v = VALUES[rng.gen_range(0..VALUES.len())];
        let r = rel(reg, &names[a], &names[b], ctx, v, t);
        graph.upsert_relation(r, reg).unwrap();
    }
    RandomCase { graph, names }
}

/// Chains from a root made of certify edges followed by one authenticate
/// edge for `id`, all at value 1, filtered from the exhaustive enumeration.
pub fn x509_oracle(
    g: &TrustGraph,
    roots: &BTreeSet<EntityId>,
    key: &EntityId,
    id: &Identity,
    max: usize,
) -> Vec<Vec<TrustRelation>> {
    let mut ok = Vec::new();
    for root in roots {
        for chain in enumerate_chains(g, root, key, max) {
            let (last, prefix) = chain.split_last().unwrap();
            let good =
                prefix.iter().all(|r| r.context.class() == ContextClass::AuthenticatorTrust && r.value.get() == 1.0)
                    && last.context.class() == ContextClass::Validity
                    && last.context.subject() == id
                    && last.value.get() == 1.0;
            if good {
                ok.push(chain);
            }
        }
    }
    ok
}

fn lines(chain: &[TrustRelation]) -> Vec<String> {
    chain.iter().map(TrustRelation::canonical_line).collect()
}

pub fn check_x509(case: &RandomCase, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let n = case.names.len();
    let roots: BTreeSet<EntityId> = (0..rng.gen_range(1..=2)).map(|_| e(&case.names[rng.gen_range(0..n)])).collect();
    let max_chain = rng.gen_range(1..=8);
    let policy = X509Policy { roots: roots.clone(), max_chain };
    for k in &case.names {
        for idn in &case.names {
            let (key, id) = (e(k), Identity::named(idn));
            let got = x509_validate(&case.graph, &policy, (&key, &id));
            let oracle = x509_oracle(&case.graph, &roots, &key, &id, max_chain);
            let expect = if oracle.is_empty() { 0.0 } else { 1.0 };
            if got.value.get() != expect {
                return Err(format!("x509 value for ({k},{idn}): got {:?}, oracle {expect}", got.value));
            }
            let shortest = oracle.iter().map(Vec::len).min().unwrap_or(0);
            let mut want: Vec<Vec<String>> = oracle.iter().filter(|c| c.len() == shortest).map(|c| lines(c)).collect();
            want.sort();
            let have: Vec<Vec<String>> = got.evidence.iter().map(|c| lines(c)).collect();
            if have != want {
                return Err(format!("x509 evidence for ({k},{idn}) differs"));
            }
        }
    }
    Ok(())
}

// Independent PGP evaluation: recursive by depth, trying every subset of
// signers of a binding against the threshold rule.
struct PgpOracle<'a> {
    g: &'a TrustGraph,
    source: EntityId,
    labels: BTreeMap<EntityId, &'static str>,
    policy: PgpPolicy,
}

impl<'a> PgpOracle<'a> {
    fn new(g: &'a TrustGraph, source: EntityId, policy: PgpPolicy) -> Self {
        let mut labels = BTreeMap::new();
        for r in g.relations() {
            if r.trustor == source && r.context.class() == ContextClass::AuthenticatorTrust {
                let v = r.value.get();
                let label = match v {
                    v if v >= 1.0 => "ultimate",
                    v if v >= 0.9 => "full",
                    v if v >= 0.6 => "marginal",
                    _ => "none",
                };
                labels.insert(r.trustee.clone(), label);
            }
        }
        PgpOracle { g, source, labels, policy }
    }

    fn key_valid(&self, k: &EntityId, depth: usize) -> bool {
        if *k == self.source || self.labels.get(k) == Some(&"ultimate") {
            return true;
        }
        if depth == 0 {
            return false;
        }
        let ids: BTreeSet<Identity> =
            self.g.about(k).filter(|r| r.context.is_validity()).map(|r| r.context.subject().clone()).collect();
        ids.iter().any(|id| self.binding_valid(k, id, depth))
    }

    fn binding_valid(&self, k: &EntityId, id: &Identity, depth: usize) -> bool {
        if depth == 0 {
            return false;
        }
        let signers: Vec<&EntityId> = self
            .g
            .about(k)
            .filter(|r| r.context.is_validity() && r.context.subject() == id && r.value.get() > 0.5)
            .map(|r| &r.trustor)
            .collect();
        let n = signers.len();
        for mask in 1u32..(1 << n) {
            let subset: Vec<&EntityId> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| signers[i]).collect();
            if !subset.iter().all(|s| self.key_valid(s, depth - 1)) {
                continue;
            }
            let class = |s: &EntityId| {
                if *s == self.source {
                    "full"
                } else {
                    match self.labels.get(s).copied() {
                        Some("ultimate") | Some("full") => "full",
                        Some("marginal") => "marginal",
                        _ => "none",
                    }
                }
            };
            if subset.iter().any(|s| class(s) == "none") {
                continue;
            }
            let fulls = subset.iter().filter(|s| class(s) == "full").count();
            let marginals = subset.iter().filter(|s| class(s) == "marginal").count();
            if fulls >= self.policy.full_needed || marginals >= self.policy.marginal_needed {
                return true;
            }
        }
        false
    }
}

pub fn check_pgp(case: &RandomCase, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let n = case.names.len();
    let source = e(&case.names[rng.gen_range(0..n)]);
    let policy = PgpPolicy { max_depth: 2, ..PgpPolicy::default() };
    let oracle = PgpOracle::new(&case.graph, source.clone(), policy.clone());
    for k in &case.names {
        for idn in &case.names {
            let (key, id) = (e(k), Identity::named(idn));
            let got = pgp_validity(&case.graph, &source, (&key, &id), &policy);
            let expect = if oracle.binding_valid(&key, &id, policy.max_depth) {
                policy.label_map.full
            } else {
                policy.label_map.unknown
            };
            if got.value.get() != expect {
                return Err(format!("pgp value for ({k},{idn}) from {source}: got {:?}, oracle {expect}", got.value));
            }
            // evidence replays to the same value
            let replay = TrustGraph::from_trusted(got.evidence_relations());
            let again = pgp_validity(&replay, &source, (&key, &id), &policy);
            if again.value != got.value {
                return Err(format!("pgp evidence for ({k},{idn}) does not replay"));
            }
        }
    }
    Ok(())
}

/// Runs `count` random graphs from `seed` through both resolvers and their
/// oracles; returns the disagreements.
pub fn disagreements(count: usize, seed: u64) -> Vec<String> {
    let reg = KeyRegistry::from_seed(99);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for i in 0..count {
        let case = random_case(&mut rng, &reg);
        if let Err(msg) = check_x509(&case, &mut rng) {
            failures.push(format!("graph {i}: {msg}"));
        }
        if let Err(msg) = check_pgp(&case, &mut rng) {
            failures.push(format!("graph {i}: {msg}"));
        }
    }
    failures
}
