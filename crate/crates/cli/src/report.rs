//! Reports: one structured JSON document plus a plain-text table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tmsim_core::attacks::{AttackOutcome, ScenarioKind};
use tmsim_core::netsim::DisseminationMode;
use tmsim_core::{Digest, DIGEST_ALGORITHM};

use crate::scenario::{MatrixFile, ScenarioFile};

pub const FORK_CHOICE: &str = "longest chain, ties broken by the smallest block digest";
pub const TRIAL_SEEDS: &str = "trial i runs with seed + i";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub tool: String,
    pub version: String,
    pub digest_algorithm: String,
    pub fork_choice: String,
    pub trial_seeds: String,
    /// The only field allowed to differ between reruns.
    pub generated_at_unix: u64,
}

impl Environment {
    pub fn now() -> Self {
        Environment {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            digest_algorithm: DIGEST_ALGORITHM.to_string(),
            fork_choice: FORK_CHOICE.to_string(),
            trial_seeds: TRIAL_SEEDS.to_string(),
            generated_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub outcome: AttackOutcome,
    pub trace_digest: Digest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricSummary {
    fn of(mut xs: Vec<f64>) -> Self {
        xs.sort_by(f64::total_cmp);
        let n = xs.len();
        let median = if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 };
        MetricSummary { count: n, mean: xs.iter().sum::<f64>() / n as f64, median, min: xs[0], max: xs[n - 1] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub success_rate: f64,
    /// Share of trials with at least one detecting honest node.
    pub detection_rate: f64,
    pub assumption_violations: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl Aggregate {
    pub fn of(records: &[TrialRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in records {
            for (k, v) in &r.outcome.metrics {
                values.entry(k.clone()).or_default().push(*v);
            }
        }
        Aggregate {
            trials: records.len(),
            success_rate: records.iter().filter(|r| r.outcome.success).count() as f64 / n,
            detection_rate: records.iter().filter(|r| !r.outcome.detected_by.is_empty()).count() as f64 / n,
            assumption_violations: records.iter().filter(|r| r.outcome.assumption_violation).count(),
            metrics: values.into_iter().map(|(k, v)| (k, MetricSummary::of(v))).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub environment: Environment,
    pub scenario: ScenarioFile,
    pub kind: ScenarioKind,
    pub mode: DisseminationMode,
    pub aggregate: Aggregate,
    pub trials: Vec<TrialRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub kind: ScenarioKind,
    pub mode: DisseminationMode,
    pub aggregate: Aggregate,
    pub trials: Vec<TrialRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub environment: Environment,
    pub base: MatrixFile,
    pub cells: Vec<MatrixCell>,
}

impl MatrixReport {
    pub fn cell(&self, kind: ScenarioKind, ledger: bool) -> Option<&MatrixCell> {
        self.cells.iter().find(|c| c.kind == kind && c.mode.is_ledger() == ledger)
    }
}

/// JSON text, pretty-printed, with a trailing newline.
pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

/// `to_json` output with the timestamp blanked, for reproducibility checks.
pub fn without_timestamp(json: &str) -> String {
    json.lines()
        .map(|l| if l.trim_start().starts_with("\"generated_at_unix\"") { "    \"generated_at_unix\": 0" } else { l })
        .collect::<Vec<_>>()
        .join("\n")
}

fn metric_rows(out: &mut String, agg: &Aggregate) {
    if agg.metrics.is_empty() {
        return;
    }
    let _ = writeln!(out, "{:<32}{:>7}{:>10}{:>10}{:>10}{:>10}", "metric", "count", "mean", "median", "min", "max");
    for (name, m) in &agg.metrics {
        let _ =
            writeln!(out, "{:<32}{:>7}{:>10.3}{:>10.3}{:>10.3}{:>10.3}", name, m.count, m.mean, m.median, m.min, m.max);
    }
}

pub fn run_table(r: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} under {}: {} trials from seed {}",
        r.kind.name(),
        r.mode.name(),
        r.aggregate.trials,
        r.scenario.seed
    );
    let _ = writeln!(out, "success rate    {:.2}", r.aggregate.success_rate);
    let _ = writeln!(out, "detection rate  {:.2}", r.aggregate.detection_rate);
    if r.aggregate.assumption_violations > 0 {
        let _ = writeln!(out, "honest-majority assumption violated in {} trials", r.aggregate.assumption_violations);
    }
    metric_rows(&mut out, &r.aggregate);
    out
}

// The headline number for a kind beside its success rates.
fn headline(kind: ScenarioKind) -> (bool, &'static str) {
    match kind {
        ScenarioKind::StealthyTargeted => (false, "accepted_rounds"),
        ScenarioKind::DoubleRegistration => (true, "detection_coverage"),
        ScenarioKind::StaleInformation => (true, "pre_stability_window_blocks"),
        ScenarioKind::DenialOfService => (false, "unavailable_rounds"),
        ScenarioKind::Censorship => (true, "inclusion_delay_blocks"),
    }
}

pub fn matrix_table(r: &MatrixReport) -> String {
    let mut out = String::new();
    let b = &r.base;
    let _ = writeln!(
        out,
        "n={} f={} k={} rounds={} trials={} seed={}",
        b.sim.n_nodes,
        b.sim.adversary_fraction,
        b.sim.k,
        b.sim.rounds,
        b.trials(),
        b.seed
    );
    let _ = writeln!(out, "{:<22}{:<19}{:>7}{:>8}  median", "attack", "local mode", "local", "ledger");
    for kind in ScenarioKind::ALL {
        let (Some(local), Some(ledger)) = (r.cell(kind, false), r.cell(kind, true)) else { continue };
        let (on_ledger, metric) = headline(kind);
        let cell = if on_ledger { ledger } else { local };
        let note = cell
            .aggregate
            .metrics
            .get(metric)
            .map(|m| format!("{metric} ({}) {}", if on_ledger { "ledger" } else { "local" }, m.median))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{:<22}{:<19}{:>7.2}{:>8.2}  {}",
            kind.name(),
            local.mode.name(),
            local.aggregate.success_rate,
            ledger.aggregate.success_rate,
            note
        );
    }
    out
}
