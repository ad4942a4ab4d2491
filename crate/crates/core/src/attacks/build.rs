use std::collections::BTreeSet;

use super::{AttackError, ScenarioKind, ScenarioSpec};
use crate::assessment::AssessmentProgram;
use crate::netsim::{
    ChannelAction, ChannelDirective, NodeSetup, Probe, Publication, PublicationBody, RelationFilter, RelationTemplate,
    World,
};
use crate::trust_graph::{Context, EntityId, Identity};

/// Identity an entity's validity bindings name.
pub(crate) fn identity_of(id: &EntityId) -> Identity {
    Identity::named(format!("id_{}", id.as_str()))
}

fn validity(of: &EntityId) -> Context {
    Context::validity(identity_of(of)).expect("named identities are non-empty")
}

/// Cast entities in role order, then bystanders `N01`, `N02`, ... up to
/// `n_nodes`.
pub fn node_names(spec: &ScenarioSpec) -> Result<Vec<EntityId>, AttackError> {
    let roles = spec.kind.roles();
    if let Some(extra) = spec.cast.keys().find(|k| !roles.contains(&k.as_str())) {
        return Err(AttackError::MisconfiguredCast(format!("unknown role {extra} for {}", spec.kind.name())));
    }
    let mut names = Vec::new();
    for role in roles {
        let id = spec.role(role)?;
        if names.contains(id) {
            return Err(AttackError::MisconfiguredCast(format!("{id} plays more than one role")));
        }
        names.push(id.clone());
    }
    if spec.sim.n_nodes < names.len() {
        return Err(AttackError::MisconfiguredCast(format!(
            "{} needs at least {} nodes, got {}",
            spec.kind.name(),
            names.len(),
            spec.sim.n_nodes
        )));
    }
    let mut i = 1;
    while names.len() < spec.sim.n_nodes {
        let id = EntityId::new(format!("N{i:02}")).expect("non-empty");
        if !names.contains(&id) {
            names.push(id);
        }
        i += 1;
    }
    Ok(names)
}

fn eligible(spec: &ScenarioSpec, id: &EntityId) -> bool {
    match spec.kind {
        ScenarioKind::Censorship => spec.cast.get("censored") != Some(id) && spec.cast.get("relying") != Some(id),
        _ => true,
    }
}

/// `round(f * eligible)` nodes: the adversarial roles first, then
/// bystanders, then any other eligible node in cast order.
pub fn adversary_set(spec: &ScenarioSpec) -> Result<BTreeSet<EntityId>, AttackError> {
    let names = node_names(spec)?;
    let pool: Vec<&EntityId> = names.iter().filter(|n| eligible(spec, n)).collect();
    let size = (spec.sim.adversary_fraction * pool.len() as f64).round() as usize;
    if size == 0 {
        return Ok(BTreeSet::new());
    }
    let roles: Vec<&EntityId> = spec.kind.adversarial_roles().iter().map(|r| spec.role(r)).collect::<Result<_, _>>()?;
    if size < roles.len() {
        return Err(AttackError::MisconfiguredCast(format!(
            "adversary set of {size} cannot hold the {} adversarial roles",
            roles.len()
        )));
    }
    let cast: BTreeSet<&EntityId> = spec.cast.values().collect();
    let order = roles
        .iter()
        .copied()
        .chain(pool.iter().copied().filter(|n| !cast.contains(n)))
        .chain(pool.iter().copied().filter(|n| cast.contains(n) && !roles.contains(n)));
    let mut out = BTreeSet::new();
    for id in order {
        if out.len() == size {
            break;
        }
        out.insert(id.clone());
    }
    Ok(out)
}

fn x509(root: &EntityId) -> AssessmentProgram {
    AssessmentProgram::by_name("x509", [root.clone()].into()).expect("known program")
}

fn pgp() -> AssessmentProgram {
    AssessmentProgram::by_name("pgp", BTreeSet::new()).expect("known program")
}

fn probe(
    node: &EntityId,
    key: &EntityId,
    identity_owner: &EntityId,
    program: AssessmentProgram,
    from_round: u64,
) -> Probe {
    Probe { node: node.clone(), key: key.clone(), identity: identity_of(identity_owner), program, from_round }
}

fn directive(
    from: Option<&EntityId>,
    to: Option<&EntityId>,
    start: u64,
    end: Option<u64>,
    action: ChannelAction,
) -> ChannelDirective {
    ChannelDirective { from: from.cloned(), to: to.cloned(), start, end, action }
}

/// Initial topology, scheduled publications, probes and adversary script
/// for `spec`.
pub fn build_world(spec: &ScenarioSpec) -> Result<World, AttackError> {
    spec.sim.validate()?;
    let names = node_names(spec)?;
    let adversaries = adversary_set(spec)?;
    let mut world = World {
        nodes: names
            .iter()
            .map(|id| NodeSetup {
                adversarial: adversaries.contains(id),
                eligible: eligible(spec, id),
                ..NodeSetup::new(id.clone())
            })
            .collect(),
        ..World::default()
    };
    let local = !spec.sim.mode.is_ledger();
    // explicit recipients only matter before the ledger
    let send =
        |p: Publication, to: &[&EntityId]| if local { p.to(to.iter().map(|e| (*e).clone()).collect()) } else { p };
    let certify = Context::authenticator_trust;
    let p = &spec.params;
    let at = p.attack_round();
    let r = |role: &str| spec.role(role).cloned();

    match spec.kind {
        ScenarioKind::StealthyTargeted => {
            let (a, b, c, c2, d, e) =
                (r("target")?, r("adversary")?, r("impersonated")?, r("fake_key")?, r("witness1")?, r("witness2")?);
            world.node_mut(&a).expect("cast").sources = vec![b.clone()];
            if p.target_trusts_adversary.unwrap_or(true) {
                world.publications.push(send(Publication::upsert(0, &a, &b, certify(), 1.0), &[&b]));
            }
            for w in [&d, &e] {
                world.publications.push(send(Publication::upsert(0, w, &b, certify(), 1.0), &[&b]));
            }
            world.publications.push(send(Publication::upsert(0, &b, &c, validity(&c), 1.0), &[&d, &e]));
            world.probes.push(probe(&a, &c2, &c, x509(&a), at));
            world.script.channels.push(directive(
                Some(&b),
                Some(&a),
                at,
                None,
                ChannelAction::EquivocateTo {
                    target: a.clone(),
                    substitutes: vec![RelationTemplate {
                        trustor: b.clone(),
                        trustee: c2.clone(),
                        context: validity(&c),
                        value: 1.0,
                    }],
                },
            ));
            let mut leak: Vec<EntityId> = p.leak_to.iter().cloned().collect();
            if !local {
                leak.insert(0, a.clone());
            }
            if !leak.is_empty() {
                world.script.publications.push(Publication::upsert(at, &b, &c2, validity(&c), 1.0).to(leak));
            }
        }
        ScenarioKind::DoubleRegistration => {
            let (a, d, e, b) = (r("target")?, r("peer1")?, r("peer2")?, r("adversary")?);
            let (c, c2, i, ks1, ks2) =
                (r("impersonated")?, r("fake_key")?, r("introducer")?, r("keyserver1")?, r("keyserver2")?);
            let near = [&a, &d, &e, &b];
            for node in world.nodes.iter_mut() {
                let ks = if near.contains(&&node.entity) { &ks1 } else { &ks2 };
                if node.entity == ks1 || node.entity == ks2 {
                    node.forward_to = vec![if node.entity == ks1 { ks2.clone() } else { ks1.clone() }];
                } else {
                    node.publish_to = vec![ks.clone()];
                    node.sources = vec![ks.clone()];
                }
            }
            for t in [&a, &d, &e] {
                world.publications.push(Publication::upsert(0, t, &b, certify(), 0.9));
                world.publications.push(Publication::upsert(0, t, &b, validity(&b), 1.0));
                world.probes.push(probe(t, &c2, &c, pgp(), at));
            }
            if p.legit_multi_key.unwrap_or(false) {
                world.publications.push(send(Publication::upsert(0, &i, &c, validity(&c), 1.0), &[&ks1, &ks2]));
                world.publications.push(send(Publication::upsert(at, &i, &c2, validity(&c), 1.0), &[&ks1, &ks2]));
            } else {
                world.publications.push(Publication::upsert(0, &i, &c, validity(&c), 1.0));
                world.script.publications.push(Publication {
                    round: at,
                    author: b.clone(),
                    body: PublicationBody::Upsert { trustee: c2.clone(), context: validity(&c), value: 1.0 },
                    recipients: None,
                });
                for (x, y) in [(&ks1, &ks2), (&ks2, &ks1)] {
                    world.script.channels.push(directive(Some(x), Some(y), 0, None, ChannelAction::Drop));
                }
            }
        }
        ScenarioKind::StaleInformation => {
            let (a, b, c, e) = (r("target")?, r("adversary")?, r("issuer")?, r("subject")?);
            world.node_mut(&a).expect("cast").sources = vec![b.clone()];
            world.publications.push(send(Publication::upsert(0, &a, &b, certify(), 1.0), &[&b]));
            world.publications.push(Publication::upsert(0, &b, &c, certify(), 1.0));
            world.publications.push(send(Publication::upsert(0, &c, &e, validity(&e), 1.0), &[&b]));
            if p.publish_revocation.unwrap_or(true) {
                world
                    .publications
                    .push(send(Publication::upsert(p.revocation_round(), &c, &e, validity(&e), 0.0), &[&b]));
            }
            world.probes.push(probe(&a, &e, &e, x509(&a), 0));
            let filter =
                RelationFilter { author: Some(c.clone()), revocations_only: true, ..RelationFilter::default() };
            world.script.channels.push(directive(Some(&b), Some(&a), 0, None, ChannelAction::Withhold { filter }));
        }
        ScenarioKind::DenialOfService => {
            let (a, i, k, ks1, ks2) =
                (r("target")?, r("introducer")?, r("subject")?, r("keyserver1")?, r("keyserver2")?);
            let (start, end) = p.window();
            let partition = p.partition_target.unwrap_or(false);
            if partition && !local {
                return Err(AttackError::OutOfScope("cutting every link of the target is an eclipse attack".into()));
            }
            world.node_mut(&ks1).expect("cast").forward_to = vec![ks2.clone()];
            world.node_mut(&ks2).expect("cast").forward_to = vec![ks1.clone()];
            world.node_mut(&a).expect("cast").sources = vec![ks1.clone(), ks2.clone()];
            world.publications.push(send(Publication::upsert(0, &a, &i, certify(), 0.9), &[&ks1]));
            world.publications.push(send(Publication::upsert(0, &a, &i, validity(&i), 1.0), &[&ks1]));
            world.publications.push(send(Publication::upsert(0, &i, &k, validity(&k), 1.0), &[&ks1, &ks2]));
            world.probes.push(probe(&a, &k, &k, pgp(), 0));
            let mut cut = vec![&ks1, &ks2];
            if partition {
                cut.push(&a);
            }
            for node in cut {
                world.script.channels.push(directive(Some(node), None, start, Some(end), ChannelAction::Drop));
                world.script.channels.push(directive(None, Some(node), start, Some(end), ChannelAction::Drop));
            }
        }
        ScenarioKind::Censorship => {
            let (x, y, auth, w) = (r("censored")?, r("relying")?, r("authority")?, r("subject")?);
            world.node_mut(&y).expect("cast").sources = vec![auth.clone()];
            world.publications.push(send(Publication::upsert(0, &y, &x, certify(), 1.0), &[&auth]));
            world.publications.push(send(Publication::upsert(at, &x, &w, validity(&w), 1.0), &[&auth]));
            world.probes.push(probe(&y, &w, &w, x509(&y), at));
            let filter = RelationFilter { author: Some(x.clone()), ..RelationFilter::default() };
            world.script.channels.push(directive(Some(&auth), None, 0, None, ChannelAction::Withhold { filter }));
            world.script.censor.insert(x);
        }
    }
    Ok(world)
}
