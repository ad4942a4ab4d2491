//! Scenario builders and outcome evaluators for the five impersonation
//! attacks, each runnable under a local-view mode and under the ledger.
//!
//! A scenario names a cast (role -> entity), a base [`SimConfig`] and a few
//! kind-specific knobs. Builders turn it into a [`World`]; evaluators read
//! only the resulting trace.

mod build;
mod evaluate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use build::{adversary_set, build_world, node_names};
pub use evaluate::{evaluate_outcome, median_metric};

use crate::netsim::{DisseminationMode, SimConfig, SimError, Simulation, Trace};
use crate::trust_graph::EntityId;
use crate::Digest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    StealthyTargeted,
    DoubleRegistration,
    StaleInformation,
    DenialOfService,
    Censorship,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::StealthyTargeted,
        ScenarioKind::DoubleRegistration,
        ScenarioKind::StaleInformation,
        ScenarioKind::DenialOfService,
        ScenarioKind::Censorship,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::StealthyTargeted => "stealthy-targeted",
            ScenarioKind::DoubleRegistration => "double-registration",
            ScenarioKind::StaleInformation => "stale-information",
            ScenarioKind::DenialOfService => "denial-of-service",
            ScenarioKind::Censorship => "censorship",
        }
    }

    /// The pre-ledger dissemination mode the attack is staged against.
    pub fn local_mode(self) -> DisseminationMode {
        match self {
            ScenarioKind::DoubleRegistration | ScenarioKind::DenialOfService => DisseminationMode::KeyserverWot,
            _ => DisseminationMode::HierarchicalPki,
        }
    }

    /// Roles the cast must fill.
    pub fn roles(self) -> &'static [&'static str] {
        match self {
            ScenarioKind::StealthyTargeted => {
                &["target", "adversary", "impersonated", "fake_key", "witness1", "witness2"]
            }
            ScenarioKind::DoubleRegistration => &[
                "target",
                "peer1",
                "peer2",
                "adversary",
                "impersonated",
                "fake_key",
                "introducer",
                "keyserver1",
                "keyserver2",
            ],
            ScenarioKind::StaleInformation => &["target", "adversary", "issuer", "subject"],
            ScenarioKind::DenialOfService => &["target", "introducer", "subject", "keyserver1", "keyserver2"],
            ScenarioKind::Censorship => &["censored", "relying", "authority", "subject"],
        }
    }

    /// Roles that must be adversarial whenever the adversary set is non-empty.
    pub fn adversarial_roles(self) -> &'static [&'static str] {
        match self {
            ScenarioKind::StealthyTargeted | ScenarioKind::DoubleRegistration | ScenarioKind::StaleInformation => {
                &["adversary"]
            }
            ScenarioKind::DenialOfService => &[],
            ScenarioKind::Censorship => &["authority"],
        }
    }

    /// Cast used when a scenario does not name one.
    pub fn default_cast(self) -> BTreeMap<String, EntityId> {
        let names: &[&str] = match self {
            ScenarioKind::StealthyTargeted => &["A", "B", "C", "C'", "D", "E"],
            ScenarioKind::DoubleRegistration => &["A", "D", "E", "B", "C", "C'", "I", "KS1", "KS2"],
            ScenarioKind::StaleInformation => &["A", "B", "C", "E"],
            ScenarioKind::DenialOfService => &["A", "I", "K", "KS1", "KS2"],
            ScenarioKind::Censorship => &["X", "Y", "R", "W"],
        };
        self.roles()
            .iter()
            .zip(names)
            .map(|(role, name)| (role.to_string(), EntityId::new(*name).expect("non-empty")))
            .collect()
    }
}

/// Kind-specific knobs; unset fields take their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    /// Round the adversary acts (default 10). Censorship: the round the
    /// censored entity publishes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_round: Option<u64>,
    /// Stealthy: an honest node the malicious relation also reaches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leak_to: Option<EntityId>,
    /// Stealthy: whether the target certifies the adversary (default true).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_trusts_adversary: Option<bool>,
    /// Double registration: replace the attack by a legitimate second key
    /// published everywhere (default false).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legit_multi_key: Option<bool>,
    /// Stale information: round the revocation is published (default 12).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revocation_round: Option<u64>,
    /// Stale information: whether the revocation exists at all (default true).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub publish_revocation: Option<bool>,
    /// Denial of service: rounds `[start, end)` of the outage (default 10..20).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(u64, u64)>,
    /// Denial of service: also cut every link of the target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition_target: Option<bool>,
}

impl ScenarioParams {
    pub fn attack_round(&self) -> u64 {
        self.attack_round.unwrap_or(10)
    }

    pub fn revocation_round(&self) -> u64 {
        self.revocation_round.unwrap_or(12)
    }

    pub fn window(&self) -> (u64, u64) {
        self.window.unwrap_or((10, 20))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub sim: SimConfig,
    pub cast: BTreeMap<String, EntityId>,
    #[serde(default)]
    pub params: ScenarioParams,
}

impl ScenarioSpec {
    /// Default cast and parameters for `kind`.
    pub fn new(kind: ScenarioKind, sim: SimConfig) -> Self {
        ScenarioSpec { kind, sim, cast: kind.default_cast(), params: ScenarioParams::default() }
    }

    /// Identifies the scenario in trace headers.
    pub fn digest(&self) -> Digest {
        Digest::of(&serde_json::to_vec(self).expect("specs serialize"))
    }

    pub fn role(&self, role: &str) -> Result<&EntityId, AttackError> {
        self.cast.get(role).ok_or_else(|| AttackError::MisconfiguredCast(format!("missing role {role}")))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.sim.seed = seed;
        s
    }

    pub fn with_mode(&self, mode: DisseminationMode) -> Self {
        let mut s = self.clone();
        s.sim.mode = mode;
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub success: bool,
    pub detected_by: std::collections::BTreeSet<EntityId>,
    pub metrics: BTreeMap<String, f64>,
    /// The run broke the honest-majority assumption.
    pub assumption_violation: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttackError {
    #[error("misconfigured cast: {0}")]
    MisconfiguredCast(String),
    #[error("trace was not produced by this scenario")]
    TraceMismatch,
    #[error("out of scope: {0}")]
    OutOfScope(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Builds, runs and evaluates one trial of `spec`.
pub fn run_trial(spec: &ScenarioSpec, verbose: bool) -> Result<(AttackOutcome, Trace), AttackError> {
    let world = build_world(spec)?;
    let mut sim = Simulation::new(spec.sim.clone(), world, spec.digest(), verbose)?;
    sim.run();
    let trace = sim.into_trace();
    let outcome = evaluate_outcome(spec, &trace)?;
    Ok((outcome, trace))
}
