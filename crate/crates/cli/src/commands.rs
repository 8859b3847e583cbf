use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use hetsoc_core::cpn::{Net, TransitionKind};
use hetsoc_core::derive::{compose, verify_equivalence};
use hetsoc_core::format::{emit_dot, parse_spec, read_task_file, write_artifacts, SocietySpec, TASK_FORMAT};
use hetsoc_core::pipeline::{self, Derivation};
use hetsoc_core::robot::{RobotPort, RobotSim, TcpRobot};
use hetsoc_core::runtime::{parse_answers, run_society, AnswerScript, RunConfig, ScriptedHuman, SocietyRun};

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Invalid = 1,
    Runtime = 2,
    Counterexample = 3,
}

impl From<Exit> for std::process::ExitCode {
    fn from(e: Exit) -> Self {
        std::process::ExitCode::from(e as u8)
    }
}

/// Which net of a derivation to render.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum NetChoice {
    Global,
    Mas,
    #[default]
    Simplified,
    Composed,
}

/// Reads and validates a spec, printing positioned diagnostics on failure.
pub fn load_spec(path: &Path, err: &mut dyn Write) -> Result<Option<SocietySpec>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match parse_spec(&text) {
        Ok(spec) => Ok(Some(spec)),
        Err(e) => {
            for d in e.diagnostics() {
                let kind = serde_json::to_value(d.kind)?;
                let kind = kind.as_str().unwrap_or("error");
                write!(err, "{}:{}:{}: {kind}: {}", path.display(), d.line, d.column, d.message)?;
                if let Some(p) = &d.path {
                    write!(err, " (at {p})")?;
                }
                writeln!(err)?;
            }
            Ok(None)
        }
    }
}

fn derive_or_report(spec: &SocietySpec, err: &mut dyn Write) -> Result<Option<Derivation>> {
    match pipeline::derive(spec) {
        Ok(d) => Ok(Some(d)),
        Err(e) => {
            writeln!(err, "derivation failed: {e}")?;
            Ok(None)
        }
    }
}

pub fn validate(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<Exit> {
    let Some(spec) = load_spec(path, err)? else {
        return Ok(Exit::Invalid);
    };
    writeln!(
        out,
        "{}: ok ({} agents, {} roles, {} transitions)",
        path.display(),
        spec.mas.agents.len(),
        spec.organization.roles.len(),
        spec.organization.task.transitions.len()
    )?;
    Ok(Exit::Ok)
}

pub fn derive(path: &Path, dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<Exit> {
    let Some(spec) = load_spec(path, err)? else {
        return Ok(Exit::Invalid);
    };
    let Some(d) = derive_or_report(&spec, err)? else {
        return Ok(Exit::Invalid);
    };
    for p in write_artifacts(dir, &d).with_context(|| format!("writing to {}", dir.display()))? {
        writeln!(out, "{}", p.display())?;
    }
    Ok(Exit::Ok)
}

/// Renders a spec's net, or the net of an agent task file.
pub fn export_dot(
    input: &Path,
    net: NetChoice,
    agent: Option<&str>,
    output: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Exit> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let format = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.get("format").and_then(|f| f.as_str().map(str::to_string)));
    let chosen: Net = if format.as_deref() == Some(TASK_FORMAT) {
        match read_task_file(&text) {
            Ok(t) => t.net,
            Err(e) => {
                writeln!(err, "{}: {e}", input.display())?;
                return Ok(Exit::Invalid);
            }
        }
    } else {
        let Some(spec) = load_spec(input, err)? else {
            return Ok(Exit::Invalid);
        };
        let Some(d) = derive_or_report(&spec, err)? else {
            return Ok(Exit::Invalid);
        };
        match agent {
            Some(a) => match d.task(a) {
                Some(t) => t.net.clone(),
                None => {
                    writeln!(err, "no agent `{a}`")?;
                    return Ok(Exit::Invalid);
                }
            },
            None => match net {
                NetChoice::Global => spec.global_task(),
                NetChoice::Mas => d.mas_task,
                NetChoice::Simplified => d.simplified,
                NetChoice::Composed => d.composed,
            },
        }
    };
    let dot = emit_dot(&chosen);
    match output {
        Some(p) if p != Path::new("-") => fs::write(p, dot).with_context(|| format!("writing {}", p.display()))?,
        _ => out.write_all(dot.as_bytes())?,
    }
    Ok(Exit::Ok)
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    pub seed: Option<u64>,
    pub script: Option<PathBuf>,
    pub max_steps: u64,
    /// Address of a robot server; the in-process simulator otherwise.
    pub robot: Option<String>,
    pub json: bool,
}

pub fn load_answers(path: Option<&Path>) -> Result<AnswerScript> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_answers(&text).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))
        }
        None => Ok(AnswerScript {
            format: hetsoc_core::runtime::ANSWERS_FORMAT.into(),
            answers: BTreeMap::new(),
        }),
    }
}

pub fn connect_robot(addr: Option<&str>) -> Result<Box<dyn RobotPort>> {
    Ok(match addr {
        Some(a) => Box::new(TcpRobot::connect(a).with_context(|| format!("connecting to robot at {a}"))?),
        None => Box::new(RobotSim::new()),
    })
}

pub fn simulate(path: &Path, opts: &SimulateOptions, out: &mut dyn Write, err: &mut dyn Write) -> Result<Exit> {
    let Some(spec) = load_spec(path, err)? else {
        return Ok(Exit::Invalid);
    };
    let Some(d) = derive_or_report(&spec, err)? else {
        return Ok(Exit::Invalid);
    };
    let answers = match load_answers(opts.script.as_deref()) {
        Ok(a) => a,
        Err(e) => {
            writeln!(err, "{e:#}")?;
            return Ok(Exit::Invalid);
        }
    };
    let config = RunConfig {
        seed: opts.seed,
        ..RunConfig::default()
    };
    let mut run = match SocietyRun::new(&spec, &d, config) {
        Ok(r) => r,
        Err(e) => {
            writeln!(err, "{e}")?;
            return Ok(Exit::Runtime);
        }
    };
    run.attach_robot(connect_robot(opts.robot.as_deref())?);
    let result = run_society(&mut run, &mut ScriptedHuman::new(answers), opts.max_steps);
    for e in run.trace() {
        if opts.json {
            writeln!(out, "{}", serde_json::to_string(e)?)?;
        } else {
            let detail = match (&e.message, e.kind) {
                (Some(m), TransitionKind::Emission) => format!(" -> {} {} {}", m.receiver, m.performative, m.action),
                (Some(m), TransitionKind::Reception) => format!(" <- {} {} {}", m.sender, m.performative, m.action),
                _ => String::new(),
            };
            writeln!(out, "{:>3} {:<4} {:<9} {}{detail}", e.seq, e.agent, e.kind.to_string(), e.transition)?;
        }
    }
    match result {
        Ok(()) => {
            if !opts.json {
                writeln!(out, "quiescent after {} steps", run.steps())?;
                for (agent, m) in run.markings() {
                    let places: Vec<String> = m.iter().map(|(p, toks)| format!("{p}={}", toks.len())).collect();
                    writeln!(out, "  {agent}: {}", places.join(" "))?;
                }
            }
            Ok(Exit::Ok)
        }
        Err(e) => {
            writeln!(err, "run failed: {e}")?;
            Ok(Exit::Runtime)
        }
    }
}

pub fn verify(
    path: &Path,
    depth: usize,
    drop_channel: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Exit> {
    let Some(spec) = load_spec(path, err)? else {
        return Ok(Exit::Invalid);
    };
    let Some(d) = derive_or_report(&spec, err)? else {
        return Ok(Exit::Invalid);
    };
    let composed = match drop_channel {
        None => d.composed.clone(),
        Some(place) => {
            let Some(i) = d.channels.points.iter().position(|p| p.place == place) else {
                writeln!(err, "no channel carries place `{place}`")?;
                return Ok(Exit::Invalid);
            };
            compose(&d.tasks, &d.channels.without(i))?
        }
    };
    match verify_equivalence(&d.simplified, &composed, depth) {
        Ok(r) => match r.counterexample {
            None => {
                writeln!(out, "equivalent up to depth {depth} ({} states)", r.states)?;
                Ok(Exit::Ok)
            }
            Some(cx) => {
                writeln!(out, "counterexample: {cx}")?;
                Ok(Exit::Counterexample)
            }
        },
        Err(e) => {
            writeln!(err, "{e}")?;
            Ok(Exit::Runtime)
        }
    }
}
