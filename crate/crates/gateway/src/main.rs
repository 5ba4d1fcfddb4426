use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use chainvoice_core::flow::FlowOptions;
use chainvoice_gateway::cli::{self, Cli, CliError, Command, ScenarioCommand, SimCommand};
use chainvoice_gateway::server;
use chainvoice_gateway::session::Session;
use clap::Parser;

fn run(cli: Cli) -> Result<i32, CliError> {
    let home = cli::home(cli.home.as_deref());
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Fit {
            scenarios,
            out: dir,
        } => {
            let dir = dir.unwrap_or_else(|| home.join("models"));
            cli::fit(scenarios.as_deref(), &dir, &mut out)
        }
        Command::Scenario {
            action: ScenarioCommand::Run { models, scenarios },
        } => {
            let model = cli::load_models(models.as_deref(), &home)?;
            let set = cli::load_scenarios(scenarios.as_deref())?;
            cli::scenario_run(&model, &set, &mut out)
        }
        Command::Sim {
            action:
                SimCommand::Run {
                    world,
                    request,
                    fixtures,
                    models,
                    seed,
                    fault_step,
                    fault_phase,
                    decision,
                    out: dir,
                },
        } => {
            let inputs = cli::SimInputs {
                world: cli::load_world(world.as_deref(), seed)?,
                request: cli::load_request(request.as_deref())?,
                fixtures: cli::load_fixtures(fixtures.as_deref())?,
                model: cli::load_models(models.as_deref(), &home)?,
                options: FlowOptions {
                    fault: cli::fault_from_flags(fault_step, fault_phase),
                    decision_override: cli::decision_from_flag(decision),
                },
            };
            let dir = dir.unwrap_or_else(|| home.join("sim"));
            cli::sim_run(&inputs, &dir, &mut out)
        }
        Command::Serve {
            port,
            host,
            seed,
            world,
            models,
            ui_dir,
        } => {
            let config = cli::load_world(world.as_deref(), Some(seed))?;
            let model = cli::load_models(models.as_deref(), &home)?;
            let session = Session::new(
                &config,
                model,
                chainvoice_core::model::published_scenarios(),
            )
            .map_err(|e| CliError::Input {
                path: "world".into(),
                message: e.to_string(),
            })?;
            let runtime = tokio::runtime::Runtime::new()?;
            let state = Arc::new(Mutex::new(session));
            runtime.block_on(server::serve((host, port).into(), state, ui_dir))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
