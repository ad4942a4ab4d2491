//! Scenario and matrix files (TOML).
//!
//! ```toml
//! seed = 42
//! kind = "stealthy-targeted"   # omit for a plain simulation
//! trials = 100
//!
//! [sim]
//! n_nodes = 20
//! adversary_fraction = 0.3
//! rounds = 30
//! mode = "hierarchical-pki"    # keyserver-wot | hierarchical-pki | ledger
//! k = 6
//! txs_per_block = 16
//!
//! [cast]                       # role = entity; defaults per kind
//! target = "A"
//!
//! [params]                     # kind-specific knobs
//! attack_round = 10
//!
//! [[relations]]                # known to every node before round 0
//! trustor = "A"
//! trustee = "B"
//! class = "validity"           # or "authenticator-trust"
//! identity = "B"               # validity only; defaults to the trustee
//! value = 0.8
//! time = 1
//! ```
//!
//! Unknown fields are rejected everywhere and `seed` is mandatory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tmsim_core::attacks::{build_world, ScenarioKind, ScenarioParams, ScenarioSpec};
use tmsim_core::ledger::DEFAULT_CONFIRMATION_DEPTH;
use tmsim_core::netsim::{DisseminationMode, InitialRelation, NodeSetup, SimConfig, World};
use tmsim_core::trust_graph::{Context, ContextClass, EntityId, Identity};

use crate::CliError;

pub const DEFAULT_TRIALS: usize = 100;

fn default_k() -> usize {
    DEFAULT_CONFIRMATION_DEPTH
}

fn default_cap() -> usize {
    16
}

fn default_rounds() -> u64 {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n_nodes: usize,
    pub adversary_fraction: f64,
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    pub mode: DisseminationMode,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_cap")]
    pub txs_per_block: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationEntry {
    pub trustor: EntityId,
    pub trustee: EntityId,
    pub class: ContextClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<String>,
    pub value: f64,
    pub time: u64,
}

impl RelationEntry {
    pub fn context(&self) -> Result<Context, CliError> {
        match self.class {
            ContextClass::Validity => {
                let name = self.identity.clone().unwrap_or_else(|| self.trustee.as_str().to_string());
                Context::validity(Identity::named(name)).map_err(|e| CliError::Schema(e.to_string()))
            }
            ContextClass::AuthenticatorTrust if self.identity.is_some() => Err(CliError::Schema(format!(
                "{} -> {}: authenticator-trust takes no identity",
                self.trustor, self.trustee
            ))),
            ContextClass::AuthenticatorTrust => Ok(Context::authenticator_trust()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ScenarioKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    pub sim: SimSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cast: Option<BTreeMap<String, EntityId>>,
    #[serde(default)]
    pub params: ScenarioParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<RelationEntry>,
}

/// Command-line overrides applied on top of a file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<DisseminationMode>,
    pub k: Option<usize>,
    pub adversary_fraction: Option<f64>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        file.check()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&crate::read(path)?)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(t) = o.trials {
            self.trials = Some(t);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.mode {
            self.sim.mode = m;
        }
        if let Some(k) = o.k {
            self.sim.k = k;
        }
        if let Some(f) = o.adversary_fraction {
            self.sim.adversary_fraction = f;
        }
        self.check()
    }

    fn check(&self) -> Result<(), CliError> {
        self.sim_config(self.seed).validate().map_err(|e| CliError::Schema(e.to_string()))?;
        if self.trials == Some(0) {
            return Err(CliError::Schema("trials must be positive".into()));
        }
        if self.kind.is_none() && (self.cast.is_some() || self.params != ScenarioParams::default()) {
            return Err(CliError::Schema("cast and params need an attack kind".into()));
        }
        for r in &self.relations {
            r.context()?;
        }
        Ok(())
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(DEFAULT_TRIALS)
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        let s = &self.sim;
        SimConfig {
            n_nodes: s.n_nodes,
            adversary_fraction: s.adversary_fraction,
            rounds: s.rounds,
            mode: s.mode,
            k: s.k,
            seed,
            txs_per_block: s.txs_per_block,
        }
    }

    /// The attack scenario for trial seed `seed`.
    pub fn spec(&self, seed: u64) -> Result<ScenarioSpec, CliError> {
        let kind = self.kind.ok_or_else(|| CliError::Schema("no attack kind given".into()))?;
        let mut spec = ScenarioSpec::new(kind, self.sim_config(seed));
        if let Some(cast) = &self.cast {
            spec.cast.extend(cast.clone());
        }
        spec.params = self.params.clone();
        Ok(spec)
    }

    /// Nodes, schedule and script for trial seed `seed`, including the
    /// initial relations.
    pub fn world(&self, seed: u64) -> Result<World, CliError> {
        let mut world = match self.kind {
            Some(_) => build_world(&self.spec(seed)?).map_err(CliError::from_attack)?,
            None => {
                let mut names: BTreeSet<EntityId> = BTreeSet::new();
                for r in &self.relations {
                    names.insert(r.trustor.clone());
                    names.insert(r.trustee.clone());
                }
                if names.len() > self.sim.n_nodes {
                    return Err(CliError::Schema(format!(
                        "relations name {} entities but n_nodes is {}",
                        names.len(),
                        self.sim.n_nodes
                    )));
                }
                let mut i = 1;
                while names.len() < self.sim.n_nodes {
                    names.insert(EntityId::new(format!("N{i:02}")).expect("non-empty"));
                    i += 1;
                }
                World { nodes: names.into_iter().map(NodeSetup::new).collect(), ..World::default() }
            }
        };
        for r in &self.relations {
            if world.node(&r.trustor).is_none() || world.node(&r.trustee).is_none() {
                return Err(CliError::Schema(format!(
                    "relation {} -> {} names an entity outside the run",
                    r.trustor, r.trustee
                )));
            }
            world.initial.push(InitialRelation {
                trustor: r.trustor.clone(),
                trustee: r.trustee.clone(),
                context: r.context()?,
                value: r.value,
                counter: r.time,
            });
        }
        Ok(world)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSim {
    pub n_nodes: usize,
    pub adversary_fraction: f64,
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_cap")]
    pub txs_per_block: usize,
}

/// Base configuration shared by every matrix cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    pub sim: MatrixSim,
}

impl Default for MatrixFile {
    fn default() -> Self {
        MatrixFile {
            seed: 1,
            trials: None,
            sim: MatrixSim {
                n_nodes: 20,
                adversary_fraction: 0.3,
                rounds: default_rounds(),
                k: default_k(),
                txs_per_block: default_cap(),
            },
        }
    }
}

impl MatrixFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&crate::read(path)?)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if o.mode.is_some() {
            return Err(CliError::Schema("matrix runs every mode; --mode does not apply".into()));
        }
        if let Some(t) = o.trials {
            self.trials = Some(t);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(k) = o.k {
            self.sim.k = k;
        }
        if let Some(f) = o.adversary_fraction {
            self.sim.adversary_fraction = f;
        }
        Ok(())
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(DEFAULT_TRIALS)
    }

    /// The scenario file for one cell.
    pub fn cell(&self, kind: ScenarioKind, mode: DisseminationMode) -> ScenarioFile {
        let s = &self.sim;
        ScenarioFile {
            seed: self.seed,
            kind: Some(kind),
            trials: Some(self.trials()),
            sim: SimSection {
                n_nodes: s.n_nodes,
                adversary_fraction: s.adversary_fraction,
                rounds: s.rounds,
                mode,
                k: s.k,
                txs_per_block: s.txs_per_block,
            },
            cast: None,
            params: ScenarioParams::default(),
            relations: Vec::new(),
        }
    }
}
