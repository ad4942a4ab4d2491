use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tmsim::report::{matrix_table, run_table, to_json};
use tmsim::scenario::{MatrixFile, Overrides, ScenarioFile};
use tmsim::{
    cmd_export_graph, cmd_matrix, cmd_replay_check, cmd_run, write, CliError, DEFAULT_REPLAY_K, OUTPUT_DIR_ENV,
};
use tmsim_core::netsim::DisseminationMode;

/// Trust-management attack simulator.
#[derive(Parser)]
#[command(name = "tmsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Trials per scenario (seeds seed, seed+1, ...).
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dissemination mode: keyserver-wot, hierarchical-pki or ledger.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<DisseminationMode>,
    /// Confirmation depth.
    #[arg(long)]
    k: Option<usize>,
    /// Fraction of nodes under adversary control.
    #[arg(long)]
    adversary_fraction: Option<f64>,
    /// Also write full per-trial traces, delivery events included, and in
    /// ledger mode one honest replica per trial as a ledger export.
    #[arg(long)]
    verbose_trace: bool,
    /// Output file (defaults to a name under $TRUSTSIM_OUTPUT_DIR or the
    /// current directory).
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            trials: self.trials,
            seed: self.seed,
            mode: self.mode,
            k: self.k,
            adversary_fraction: self.adversary_fraction,
        }
    }

    fn output(&self, default_name: &str) -> PathBuf {
        self.output.clone().unwrap_or_else(|| {
            let dir = std::env::var_os(OUTPUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from);
            dir.join(default_name)
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its report.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every attack under its local-view mode and under the ledger.
    Matrix {
        /// Base configuration; built-in defaults when omitted.
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Replay a ledger export twice and compare stable-view digests.
    ReplayCheck {
        blocks: PathBuf,
        #[arg(long, default_value_t = DEFAULT_REPLAY_K)]
        k: usize,
        /// Seed of the shuffle before the second replay.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a node's view at a round as DOT.
    ExportGraph {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        round: u64,
        #[arg(long)]
        node: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<DisseminationMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown mode {s}"))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Run { scenario, common } => {
            let mut file = ScenarioFile::load(&scenario)?;
            file.apply(&common.overrides())?;
            let (report, artifacts) = cmd_run(&file, common.verbose_trace)?;
            let out = common.output(&format!("{}-{}.json", report.kind.name(), report.mode.name()));
            write(&out, &to_json(&report))?;
            let table = run_table(&report);
            write(&sibling(&out, ".txt"), &table)?;
            for (i, t) in artifacts.iter().enumerate() {
                write(&sibling(&out, &format!(".trace-{i}.jsonl")), &t.trace.to_jsonl())?;
                if let Some(ledger) = &t.ledger {
                    write(&sibling(&out, &format!(".ledger-{i}.txt")), ledger)?;
                }
            }
            print!("{table}");
            println!("report: {}", out.display());
            Ok(if report.aggregate.assumption_violations > 0 { 4 } else { 0 })
        }
        Command::Matrix { config, common } => {
            let mut base = match &config {
                Some(p) => MatrixFile::load(p)?,
                None => MatrixFile::default(),
            };
            base.apply(&common.overrides())?;
            let report = cmd_matrix(&base)?;
            let out = common.output("matrix.json");
            write(&out, &to_json(&report))?;
            let table = matrix_table(&report);
            write(&sibling(&out, ".txt"), &table)?;
            print!("{table}");
            println!("report: {}", out.display());
            Ok(0)
        }
        Command::ReplayCheck { blocks, k, seed } => {
            let text =
                std::fs::read_to_string(&blocks).map_err(|e| CliError::Io(format!("{}: {e}", blocks.display())))?;
            let verdict = cmd_replay_check(&text, k, seed)?;
            println!("blocks {}  k {}", verdict.blocks, verdict.confirmation_depth);
            println!("forward   {}", verdict.forward.to_hex());
            println!("reordered {}", verdict.reordered.to_hex());
            if verdict.pass() {
                println!("PASS");
                Ok(0)
            } else {
                println!("FAIL");
                Ok(3)
            }
        }
        Command::ExportGraph { scenario, round, node, output } => {
            let file = ScenarioFile::load(&scenario)?;
            let dot = cmd_export_graph(&file, round, &node)?;
            match output {
                Some(p) => write(&p, &dot)?,
                None => print!("{dot}"),
            }
            Ok(0)
        }
    }
}
