//! Command implementations behind the `tmsim` binary.
//!
//! Exit codes: 0 success, 2 invalid input (scenario schema, ledger export
//! syntax, out-of-range arguments), 3 runtime failure (I/O, replay
//! validation or digest mismatch), 4 honest-majority assumption violated.

pub mod dot;
pub mod report;
pub mod scenario;

use std::path::Path;

use rayon::prelude::*;
use tmsim_core::attacks::{evaluate_outcome, AttackError, ScenarioKind};
use tmsim_core::ledger::{export_blocks, import_blocks, replay_check, ReplayVerdict, DEFAULT_CONFIRMATION_DEPTH};
use tmsim_core::netsim::{DisseminationMode, Simulation, Trace};
use tmsim_core::trust_graph::EntityId;

use report::{Aggregate, Environment, MatrixCell, MatrixReport, RunReport, TrialRecord};
use scenario::{MatrixFile, ScenarioFile};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "TRUSTSIM_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("honest-majority assumption violated: {0}")]
    AssumptionViolation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) | CliError::Parse(_) | CliError::OutOfRange(_) => 2,
            CliError::Io(_) | CliError::Validation(_) | CliError::Runtime(_) => 3,
            CliError::AssumptionViolation(_) => 4,
        }
    }

    pub(crate) fn from_attack(e: AttackError) -> Self {
        match e {
            AttackError::TraceMismatch => CliError::Runtime(e.to_string()),
            other => CliError::Schema(other.to_string()),
        }
    }
}

pub(crate) fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Per-trial output kept for `--verbose-trace`.
#[derive(Clone, Debug)]
pub struct TrialArtifacts {
    pub trace: Trace,
    /// Ledger export of the first honest node's replica (ledger mode only).
    pub ledger: Option<String>,
}

/// Runs trial `i` of `file` with seed `file.seed + i`.
pub fn run_one(file: &ScenarioFile, i: usize, verbose: bool) -> Result<(TrialRecord, TrialArtifacts), CliError> {
    let seed = file.seed.wrapping_add(i as u64);
    let spec = file.spec(seed)?;
    let world = file.world(seed)?;
    let mut sim = Simulation::new(spec.sim.clone(), world, spec.digest(), verbose)
        .map_err(|e| CliError::Schema(e.to_string()))?;
    sim.run();
    let ledger = sim
        .honest()
        .find_map(|n| n.replica())
        .map(|tree| export_blocks(sim.key_seed(), tree.blocks().map(|b| b.as_ref())));
    let trace = sim.into_trace();
    let outcome = evaluate_outcome(&spec, &trace).map_err(CliError::from_attack)?;
    Ok((TrialRecord { trial: i, seed, outcome, trace_digest: trace.digest() }, TrialArtifacts { trace, ledger }))
}

/// Every trial of `file`, in trial order. Per-trial artifacts are kept
/// only when `verbose` is set.
pub fn cmd_run(file: &ScenarioFile, verbose: bool) -> Result<(RunReport, Vec<TrialArtifacts>), CliError> {
    let kind = file.kind.ok_or_else(|| CliError::Schema("run needs an attack kind".into()))?;
    // fail fast on cast problems before spinning up workers
    file.world(file.seed)?;
    let results: Vec<(TrialRecord, TrialArtifacts)> =
        (0..file.trials()).into_par_iter().map(|i| run_one(file, i, verbose)).collect::<Result<_, _>>()?;
    let (trials, artifacts): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let report = RunReport {
        environment: Environment::now(),
        scenario: file.clone(),
        kind,
        mode: file.sim.mode,
        aggregate: Aggregate::of(&trials),
        trials,
    };
    Ok((report, if verbose { artifacts } else { Vec::new() }))
}

/// All five attacks under their local-view mode and under the ledger.
pub fn cmd_matrix(base: &MatrixFile) -> Result<MatrixReport, CliError> {
    if !(0.0..0.5).contains(&base.sim.adversary_fraction) {
        return Err(CliError::AssumptionViolation(format!(
            "adversary_fraction {} is not below 0.5",
            base.sim.adversary_fraction
        )));
    }
    let mut cells = Vec::new();
    for kind in ScenarioKind::ALL {
        for mode in [kind.local_mode(), DisseminationMode::Ledger] {
            let (run, _) = cmd_run(&base.cell(kind, mode), false)?;
            cells.push(MatrixCell { kind, mode, aggregate: run.aggregate, trials: run.trials });
        }
    }
    Ok(MatrixReport { environment: Environment::now(), base: base.clone(), cells })
}

/// Parses a ledger export and replays it twice.
pub fn cmd_replay_check(text: &str, k: usize, shuffle_seed: u64) -> Result<ReplayVerdict, CliError> {
    let export = import_blocks(text).map_err(|e| CliError::Parse(e.to_string()))?;
    replay_check(&export, k, shuffle_seed)
        .map_err(|f| CliError::Validation(format!("block {} at position {}: {}", f.id.to_hex(), f.index, f.cause)))
}

pub const DEFAULT_REPLAY_K: usize = DEFAULT_CONFIRMATION_DEPTH;

/// DOT rendering of `node`'s view after `round` rounds of `file` (seed as
/// given, no trial offset). Round 0 is the initial graph.
pub fn cmd_export_graph(file: &ScenarioFile, round: u64, node: &str) -> Result<String, CliError> {
    if round > file.sim.rounds {
        return Err(CliError::OutOfRange(format!("round {round} is past the run length {}", file.sim.rounds)));
    }
    let id = EntityId::new(node).map_err(|e| CliError::OutOfRange(e.to_string()))?;
    let config = file.sim_config(file.seed);
    let (world, spec_digest) = match file.kind {
        Some(_) => {
            let spec = file.spec(file.seed)?;
            (file.world(file.seed)?, spec.digest())
        }
        None => (file.world(file.seed)?, tmsim_core::Digest::of(report::to_json(file).as_bytes())),
    };
    if world.node(&id).is_none() {
        return Err(CliError::OutOfRange(format!("no node {node} in the run")));
    }
    let mut sim = Simulation::new(config, world, spec_digest, false).map_err(|e| CliError::Schema(e.to_string()))?;
    while sim.round() < round {
        sim.run_round();
    }
    let view = sim.view_of(&id).expect("node checked");
    Ok(dot::to_dot(&format!("{node}@{round}"), &view))
}
