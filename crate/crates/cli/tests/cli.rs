use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use tmsim::scenario::{Overrides, ScenarioFile};
use tmsim::{cmd_export_graph, cmd_run, CliError};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn fixture(name: &str) -> PathBuf {
    Path::new(FIXTURES).join(name)
}

fn tmsim(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmsim")).args(args).env("TRUSTSIM_OUTPUT_DIR", out_dir).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_report_and_table_to_the_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmsim(&["run", fixture("stealthy.toml").to_str().unwrap(), "--trials", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(dir.path().join("stealthy-targeted-hierarchical-pki.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(report["aggregate"]["success_rate"], 1.0);
    assert_eq!(report["environment"]["digest_algorithm"], "sha256");
    assert_eq!(report["trials"].as_array().unwrap().len(), 3);
    assert_eq!(report["trials"][2]["seed"], 44);
    assert!(dir.path().join("stealthy-targeted-hierarchical-pki.txt").exists());
}

#[test]
fn ledger_override_defeats_the_stealthy_attack() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        tmsim(&["run", fixture("stealthy.toml").to_str().unwrap(), "--trials", "2", "--mode", "ledger"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let json = std::fs::read_to_string(dir.path().join("stealthy-targeted-ledger.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(report["aggregate"]["success_rate"], 0.0);
}

#[test]
fn schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("garbage.toml", "this is = = not toml"),
        ("noseed.toml", "kind = \"censorship\"\n[sim]\nn_nodes = 20\nadversary_fraction = 0.3\nmode = \"ledger\"\n"),
        ("extra.toml", "seed = 1\ncolour = \"red\"\n[sim]\nn_nodes = 20\nadversary_fraction = 0.3\nmode = \"ledger\"\n"),
        ("badf.toml", "seed = 1\nkind = \"censorship\"\n[sim]\nn_nodes = 20\nadversary_fraction = 1.5\nmode = \"ledger\"\n"),
        ("small.toml", "seed = 1\nkind = \"double-registration\"\n[sim]\nn_nodes = 4\nadversary_fraction = 0.3\nmode = \"ledger\"\n"),
    ];
    for (name, text) in cases {
        let p = write(dir.path(), name, text);
        let out = tmsim(&["run", p.to_str().unwrap()], dir.path());
        assert_eq!(out.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let missing = tmsim(&["run", dir.path().join("absent.toml").to_str().unwrap()], dir.path());
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn matrix_refuses_a_dishonest_majority() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmsim(&["matrix", "--adversary-fraction", "0.5", "--trials", "1"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn single_trial_matrix_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out_path = dir.path().join(run).join("m.json");
        let out =
            tmsim(&["matrix", "--trials", "1", "--seed", "5", "--output", out_path.to_str().unwrap()], dir.path());
        assert_eq!(out.status.code(), Some(0));
        tables.push(tmsim::report::without_timestamp(&std::fs::read_to_string(&out_path).unwrap()));
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn captured_censorship_runs_but_flags_the_violation() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "captured.toml",
        "seed = 3\nkind = \"censorship\"\ntrials = 2\n[sim]\nn_nodes = 20\nadversary_fraction = 1.0\nmode = \"ledger\"\n",
    );
    let out = tmsim(&["run", p.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(4));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("censorship-ledger.json")).unwrap()).unwrap();
    assert_eq!(report["aggregate"]["success_rate"], 1.0);
    assert_eq!(report["aggregate"]["assumption_violations"], 2);
}

#[test]
fn replay_check_fixture_empty_and_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let ok = tmsim(&["replay-check", fixture("ledger-10.txt").to_str().unwrap()], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("5e5483c3d65882722f17b8cd67f76efdef36790cee2516913d878b6b4c425ca2"), "{stdout}");
    assert!(stdout.trim_end().ends_with("PASS"));

    let empty = write(dir.path(), "empty.txt", "");
    let out = tmsim(&["replay-check", empty.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout)
        .contains("e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"));

    let text = std::fs::read_to_string(fixture("ledger-10.txt")).unwrap();
    let corrupt = write(dir.path(), "corrupt.txt", &text.replacen("\tvalidity\t", "\tvalidiTy\t", 1));
    let out = tmsim(&["replay-check", corrupt.to_str().unwrap()], dir.path());
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn export_graph_rounds_and_nodes() {
    let file = ScenarioFile::load(&fixture("example-network.toml")).unwrap();
    let dot = cmd_export_graph(&file, 1, "D").unwrap();
    assert_eq!(dot.lines().filter(|l| l.contains("->")).count(), 10);
    assert!(matches!(cmd_export_graph(&file, 0, "Q"), Err(CliError::OutOfRange(_))));
    assert!(matches!(cmd_export_graph(&file, 2, "A"), Err(CliError::OutOfRange(_))));
    // a plain ledger run holds nothing before the first block
    let mut ledger = file.clone();
    ledger
        .apply(&Overrides { mode: Some(tmsim_core::netsim::DisseminationMode::Ledger), ..Overrides::default() })
        .unwrap();
    let dot = cmd_export_graph(&ledger, 0, "A").unwrap();
    assert_eq!(dot.lines().filter(|l| l.contains("->")).count(), 0);

    let dir = tempfile::tempdir().unwrap();
    let out = tmsim(&["export-graph", fixture("example-network.toml").to_str().unwrap(), "--node", "Z"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_needs_a_kind() {
    let file = ScenarioFile::load(&fixture("example-network.toml")).unwrap();
    assert!(matches!(cmd_run(&file, false), Err(CliError::Schema(_))));
}

fn kinds() -> impl Strategy<Value = Option<&'static str>> {
    prop_oneof![
        Just(None),
        Just(Some("stealthy-targeted")),
        Just(Some("double-registration")),
        Just(Some("stale-information")),
        Just(Some("denial-of-service")),
        Just(Some("censorship")),
    ]
}

proptest! {
    #[test]
    fn scenario_files_round_trip(seed in 0..=i64::MAX as u64, kind in kinds(), n in 20usize..40, f in 0.0f64..1.0, k in 1usize..10, trials in 1usize..50) {
        let kind_line = kind.map(|k| format!("kind = \"{k}\"\n")).unwrap_or_default();
        let text = format!("seed = {seed}\n{kind_line}trials = {trials}\n[sim]\nn_nodes = {n}\nadversary_fraction = {f}\nmode = \"ledger\"\nk = {k}\n");
        let file = ScenarioFile::parse(&text).unwrap();
        let again = ScenarioFile::parse(&toml::to_string(&file).unwrap()).unwrap();
        prop_assert_eq!(&file, &again);
        prop_assert_eq!(file.seed, seed);
        prop_assert_eq!(file.sim.k, k);
    }
}

#[test]
fn verbose_ledger_run_writes_replayable_exports() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("stealthy.toml");
    let out =
        tmsim(&["run", scenario.to_str().unwrap(), "--trials", "2", "--mode", "ledger", "--verbose-trace"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    for i in 0..2 {
        assert!(dir.path().join(format!("stealthy-targeted-ledger.trace-{i}.jsonl")).exists());
        let export = dir.path().join(format!("stealthy-targeted-ledger.ledger-{i}.txt"));
        let check = tmsim(&["replay-check", export.to_str().unwrap()], dir.path());
        assert_eq!(check.status.code(), Some(0), "{}", String::from_utf8_lossy(&check.stdout));
    }
}
