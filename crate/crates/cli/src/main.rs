use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use clap::{Parser, Subcommand};
use hetsoc_cli::commands::{self, Exit, NetChoice, SimulateOptions};
use hetsoc_cli::serve::{serve, Served};
use hetsoc_core::pipeline;
use hetsoc_core::robot::{serve_tcp, RobotSim};
use hetsoc_core::runtime::{RunConfig, SocietyRun};

#[derive(Parser)]
#[command(name = "hetsoc", version, about = "Derive, check and run agent societies described as colored Petri nets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a society spec.
    Validate { spec: PathBuf },
    /// Write one task file per agent and the channel table.
    Derive {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Render a net of a spec, or an agent task file, as Graphviz.
    ExportDot {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        net: NetChoice,
        /// Render this agent's task instead.
        #[arg(long)]
        agent: Option<String>,
        /// Output file; stdout when absent or `-`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the society to quiescence with scripted human answers.
    Simulate {
        spec: PathBuf,
        /// Seeded uniform choice among enabled actions; round-robin otherwise.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        max_steps: u64,
        /// host:port of a robot server; the built-in simulator otherwise.
        #[arg(long)]
        robot: Option<String>,
        /// Print the trace as JSON lines.
        #[arg(long)]
        json: bool,
    },
    /// Check that the composed agent tasks accept the global task's work traces.
    Verify {
        spec: PathBuf,
        #[arg(long, default_value_t = 12)]
        depth: usize,
        /// Remove the channel carrying this place before checking.
        #[arg(long)]
        drop_channel: Option<String>,
    },
    /// Run the society behind an HTTP and websocket interface.
    Serve {
        spec: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Pause between steps, in milliseconds.
        #[arg(long, default_value_t = 250)]
        step_ms: u64,
        #[arg(long)]
        robot: Option<String>,
    },
    /// Serve the robot simulator's line protocol over TCP.
    Robot {
        #[arg(long, default_value_t = 7000)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn serve_command(spec: PathBuf, host: String, port: u16, seed: Option<u64>, step_ms: u64, robot: Option<String>) -> anyhow::Result<Exit> {
    let mut err = io::stderr();
    let Some(spec) = commands::load_spec(&spec, &mut err)? else {
        return Ok(Exit::Invalid);
    };
    let d = match pipeline::derive(&spec) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("derivation failed: {e}");
            return Ok(Exit::Invalid);
        }
    };
    let mut run = SocietyRun::new(&spec, &d, RunConfig { seed, ..RunConfig::default() })?;
    run.attach_robot(commands::connect_robot(robot.as_deref())?);
    let state = Served::new(run, Duration::from_millis(step_ms));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        serve(listener, state).await
    })?;
    Ok(Exit::Ok)
}

fn robot_command(host: &str, port: u16) -> anyhow::Result<Exit> {
    let listener = std::net::TcpListener::bind((host, port))?;
    println!("robot listening on {}", listener.local_addr()?);
    let sim = Arc::new(Mutex::new(RobotSim::new()));
    serve_tcp(listener, sim).join().map_err(|_| anyhow::anyhow!("robot server panicked"))?;
    Ok(Exit::Ok)
}

fn dispatch(cli: Cli) -> anyhow::Result<Exit> {
    let (mut out, mut err) = (io::stdout(), io::stderr());
    match cli.command {
        Command::Validate { spec } => commands::validate(&spec, &mut out, &mut err),
        Command::Derive { spec, output } => commands::derive(&spec, &output, &mut out, &mut err),
        Command::ExportDot {
            input,
            net,
            agent,
            output,
        } => commands::export_dot(&input, net, agent.as_deref(), output.as_deref(), &mut out, &mut err),
        Command::Simulate {
            spec,
            seed,
            script,
            max_steps,
            robot,
            json,
        } => {
            let opts = SimulateOptions {
                seed,
                script,
                max_steps,
                robot,
                json,
            };
            commands::simulate(&spec, &opts, &mut out, &mut err)
        }
        Command::Verify {
            spec,
            depth,
            drop_channel,
        } => commands::verify(&spec, depth, drop_channel.as_deref(), &mut out, &mut err),
        Command::Serve {
            spec,
            port,
            host,
            seed,
            step_ms,
            robot,
        } => serve_command(spec, host, port, seed, step_ms, robot),
        Command::Robot { port, host } => robot_command(&host, port),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code.into(),
        Err(e) => {
            eprintln!("error: {e:#}");
            Exit::Runtime.into()
        }
    }
}
