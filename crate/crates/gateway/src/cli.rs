use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chainvoice_core::bn::BnError;
use chainvoice_core::flow::{
    run_financing_sequence, DecisionOverride, FinancingRequest, Fixtures, FlowError, FlowFault,
    FlowOptions,
};
use chainvoice_core::ledger::{LedgerError, World, WorldConfig};
use chainvoice_core::model::{
    fit_model, published_scenarios, run_scenario, FinanceModel, FitOptions, ModelError, ScenarioSet,
};
use chainvoice_core::xchain::Coordinator;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "chainvoice",
    version,
    about = "Invoice-financing decision models and supply-chain ledger simulation"
)]
pub struct Cli {
    /// Artifact directory [default: ./chainvoice-home]
    #[arg(long, env = "CHAINVOICE_HOME", global = true)]
    pub home: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive the sub-model CPTs, fit the overall model and write the model files.
    Fit {
        /// Scenario file with the target posteriors [default: bundled set]
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Output directory [default: HOME/models]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scenario commands.
    Scenario {
        #[command(subcommand)]
        action: ScenarioCommand,
    },
    /// Simulation commands.
    Sim {
        #[command(subcommand)]
        action: SimCommand,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// World seed; overrides the seed in the world file.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Built console to serve at the root path.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    /// Evaluate every scenario and compare with its expected posteriors.
    Run {
        /// Model directory [default: HOME/models if present, else bundled models]
        #[arg(long)]
        models: Option<PathBuf>,
        /// [default: bundled set]
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultPhase {
    Lock,
    Stage,
    Commit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecisionArg {
    Approve,
    Decline,
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Run the financing sequence once and write ledgers, journal and outcome.
    Run {
        /// [default: bundled world]
        #[arg(long)]
        world: Option<PathBuf>,
        /// [default: bundled request]
        #[arg(long)]
        request: Option<PathBuf>,
        /// [default: bundled fixtures]
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Overrides the seed in the world file.
        #[arg(long)]
        seed: Option<u64>,
        /// Crash the coordinator before sequence step N.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=12), conflicts_with = "fault_phase")]
        fault_step: Option<u8>,
        /// Crash the coordinator during a commit phase.
        #[arg(long)]
        fault_phase: Option<FaultPhase>,
        /// Replace the threshold rule with a fixed decision.
        #[arg(long)]
        decision: Option<DecisionArg>,
        /// Output directory [default: HOME/sim]
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scenario `{scenario}`: {source}")]
    Scenario { scenario: String, source: BnError },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Write(#[from] std::io::Error),
}

pub fn home(cli_home: Option<&Path>) -> PathBuf {
    cli_home
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("chainvoice-home"))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn input<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T, String>) -> Result<T, CliError> {
    parse(&read(path)?).map_err(|message| CliError::Input {
        path: path.to_path_buf(),
        message,
    })
}

pub fn load_scenarios(path: Option<&Path>) -> Result<ScenarioSet, CliError> {
    match path {
        Some(p) => input(p, |t| ScenarioSet::from_json(t).map_err(|e| e.to_string())),
        None => Ok(published_scenarios()),
    }
}

pub fn load_world(path: Option<&Path>, seed: Option<u64>) -> Result<WorldConfig, CliError> {
    let mut config = match path {
        Some(p) => input(p, |t| WorldConfig::from_json(t).map_err(|e| e.to_string()))?,
        None => WorldConfig::standard(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

/// Explicit directory, else `HOME/models` when it exists, else the bundled models.
pub fn load_models(explicit: Option<&Path>, home: &Path) -> Result<FinanceModel, CliError> {
    let dir = match explicit {
        Some(d) => d.to_path_buf(),
        None => home.join("models"),
    };
    if explicit.is_none() && !dir.exists() {
        return Ok(FinanceModel::golden());
    }
    if !dir.is_dir() {
        return Err(CliError::Input {
            path: dir,
            message: "model directory not found".into(),
        });
    }
    Ok(FinanceModel::load_dir(&dir)?)
}

pub fn fit(scenarios: Option<&Path>, out: &Path, w: &mut dyn Write) -> Result<i32, CliError> {
    let set = load_scenarios(scenarios)?;
    match fit_model(&set, &FitOptions::default()) {
        Ok((model, report)) => {
            write!(w, "{}", report.table())?;
            writeln!(
                w,
                "fit converged in {} iterations, max residual {:.3e}",
                report.iterations, report.max_abs_residual
            )?;
            model.write_dir(out)?;
            writeln!(w, "models written to {}", out.display())?;
            Ok(0)
        }
        Err(ModelError::FitFailed(report)) => {
            write!(w, "{}", report.table())?;
            writeln!(
                w,
                "fit failed: max residual {:.3e} exceeds tolerance",
                report.max_abs_residual
            )?;
            Ok(1)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn scenario_run(
    model: &FinanceModel,
    set: &ScenarioSet,
    w: &mut dyn Write,
) -> Result<i32, CliError> {
    let mut passed = 0;
    for s in set.scenarios() {
        let report =
            run_scenario(model.network(s.model), s).map_err(|source| CliError::Scenario {
                scenario: s.name.clone(),
                source,
            })?;
        write!(w, "{}", report.table())?;
        passed += usize::from(report.pass);
    }
    writeln!(w, "{passed}/{} scenarios pass", set.len())?;
    Ok(if passed == set.len() { 0 } else { 1 })
}

pub struct SimInputs {
    pub world: WorldConfig,
    pub request: FinancingRequest,
    pub fixtures: Fixtures,
    pub model: FinanceModel,
    pub options: FlowOptions,
}

pub fn fault_from_flags(step: Option<u8>, phase: Option<FaultPhase>) -> Option<FlowFault> {
    match (step, phase) {
        (Some(n), _) => Some(FlowFault::Step(n)),
        (None, Some(FaultPhase::Lock)) => Some(FlowFault::Lock),
        (None, Some(FaultPhase::Stage)) => Some(FlowFault::Stage),
        (None, Some(FaultPhase::Commit)) => Some(FlowFault::Commit),
        (None, None) => None,
    }
}

pub fn decision_from_flag(d: Option<DecisionArg>) -> Option<DecisionOverride> {
    d.map(|d| match d {
        DecisionArg::Approve => DecisionOverride::Approve,
        DecisionArg::Decline => DecisionOverride::Decline,
    })
}

pub fn load_request(path: Option<&Path>) -> Result<FinancingRequest, CliError> {
    match path {
        Some(p) => input(p, |t| {
            FinancingRequest::from_json(t).map_err(|e| e.to_string())
        }),
        None => Ok(FinancingRequest::standard()),
    }
}

pub fn load_fixtures(path: Option<&Path>) -> Result<Fixtures, CliError> {
    match path {
        Some(p) => input(p, |t| Fixtures::from_json(t).map_err(|e| e.to_string())),
        None => Ok(Fixtures::standard()),
    }
}

/// Run the sequence and write `world.json`, `ledger/<chain>.jsonl`,
/// `journal.jsonl`, `outcome.json` and `trace.txt` under `out`.
pub fn sim_run(inputs: &SimInputs, out: &Path, w: &mut dyn Write) -> Result<i32, CliError> {
    let mut world = World::bootstrap(&inputs.world)?;
    let mut coord = Coordinator::new();
    let outcome = run_financing_sequence(
        &mut world,
        &mut coord,
        &inputs.model,
        &inputs.request,
        &inputs.fixtures,
        &inputs.options,
    )?;
    let trace = outcome.trace();
    write(&out.join("world.json"), world.export_bytes())?;
    for (chain, text) in world.ledger_files() {
        write(&out.join("ledger").join(format!("{chain}.jsonl")), text)?;
    }
    write(&out.join("journal.jsonl"), coord.journal().to_jsonl())?;
    let report = serde_json::to_string_pretty(&outcome).expect("outcome serializes") + "\n";
    write(&out.join("outcome.json"), report)?;
    write(&out.join("trace.txt"), &trace)?;
    write!(w, "{trace}")?;
    writeln!(w, "artifacts written to {}", out.display())?;
    Ok(0)
}
