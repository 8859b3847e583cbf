use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::procedures::{script_vars, substitute, KnowledgeProcedure, Param, ProcedureBody, SoftwareLibrary};
use super::RuntimeError;
use crate::cpn::{enabled, fire, Binding, Enabling, Firing, Marking, Net, Token, TransitionKind};
use crate::derive::AgentTask;
use crate::format::SocietySpec;
use crate::messaging::{Channels, Message};
use crate::org::{AgentKind, AgentSpec};
use crate::pipeline::{self, Derivation};
use crate::robot::{Reply, RobotPort, RobotState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentStatus {
    Idle,
    Ready,
    WaitingHuman,
    WaitingRobot,
    WaitingMessage,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestState {
    Pending,
    Answered,
}

/// A procedure a human must carry out, with its inputs rendered as text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HumanRequest {
    pub id: String,
    pub agent: String,
    pub procedure: String,
    pub description: String,
    pub data: BTreeMap<String, String>,
    pub result_schema: Vec<Param>,
    pub state: RequestState,
}

/// One committed occurrence. `binding` and `outputs` are enough to replay it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub seq: u64,
    pub agent: String,
    pub transition: String,
    pub kind: TransitionKind,
    pub procedure: String,
    pub binding: Binding,
    pub outputs: Binding,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<Message>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request: Option<String>,
}

/// A frame of the event stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    #[serde(rename = "type")]
    pub kind: String,
    pub payload: Value,
    pub seq: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    /// Seeded uniform choice among candidates; round-robin when absent.
    pub seed: Option<u64>,
    pub channel_capacity: Option<usize>,
}

impl RunConfig {
    pub fn seeded(seed: u64) -> Self {
        RunConfig {
            seed: Some(seed),
            ..RunConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
enum Work {
    Human { request: String, answer: Option<Binding> },
    Robot { commands: Vec<String>, next: usize },
}

#[derive(Debug, Clone)]
struct Pending {
    transition: String,
    binding: Binding,
    work: Work,
}

/// One agent: its individual task, local marking and procedures.
#[derive(Debug, Clone)]
pub struct AgentControl {
    pub spec: AgentSpec,
    pub task: AgentTask,
    pub marking: Marking,
    pub procedures: BTreeMap<String, KnowledgeProcedure>,
    pending: Option<Pending>,
}

impl AgentControl {
    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn kind(&self) -> AgentKind {
        self.spec.kind
    }

    fn net(&self) -> &Net {
        &self.task.net
    }
}

#[derive(Debug, Clone)]
enum Action {
    Start(Enabling),
    RobotCommand,
    Commit,
}

pub struct SocietyRun {
    pub agents: Vec<AgentControl>,
    pub channels: Channels,
    pub seed: Option<u64>,
    trace: Vec<TraceEntry>,
    requests: Vec<HumanRequest>,
    events: Vec<Event>,
    rng: Option<ChaCha8Rng>,
    cursor: usize,
    steps: u64,
    software: SoftwareLibrary,
    robot: Option<Box<dyn RobotPort>>,
}

impl SocietyRun {
    /// Derives `spec` and builds a run over the result.
    pub fn from_spec(spec: &SocietySpec, config: RunConfig) -> Result<Self, RuntimeError> {
        let d = pipeline::derive(spec)?;
        Self::new(spec, &d, config)
    }

    /// One agent per derived task, with every procedure of the spec that the
    /// agent performs registered.
    pub fn new(spec: &SocietySpec, d: &Derivation, config: RunConfig) -> Result<Self, RuntimeError> {
        let mut run = SocietyRun {
            agents: Vec::new(),
            channels: config.channel_capacity.map_or_else(Channels::new, Channels::bounded),
            seed: config.seed,
            trace: Vec::new(),
            requests: Vec::new(),
            events: Vec::new(),
            rng: config.seed.map(ChaCha8Rng::seed_from_u64),
            cursor: 0,
            steps: 0,
            software: SoftwareLibrary::default(),
            robot: None,
        };
        for task in &d.tasks {
            let agent_spec = spec
                .mas
                .agent(&task.agent)
                .cloned()
                .ok_or_else(|| RuntimeError::UnknownAgent(task.agent.clone()))?;
            run.agents.push(AgentControl {
                spec: agent_spec,
                marking: task.net.initial_marking(),
                task: task.clone(),
                procedures: BTreeMap::new(),
                pending: None,
            });
        }
        for i in 0..run.agents.len() {
            let net = run.agents[i].net().clone();
            let agent = run.agents[i].id().to_string();
            let mut names = BTreeSet::new();
            for t in net.work_transitions() {
                if !names.insert(t.procedure.clone()) {
                    continue;
                }
                let decl = spec.procedure(&t.procedure).ok_or_else(|| RuntimeError::UndeclaredProcedure {
                    agent: agent.clone(),
                    procedure: t.procedure.clone(),
                })?;
                let body = match (&decl.software, &decl.robot) {
                    (Some(cb), _) => ProcedureBody::Software { callback: cb.clone() },
                    (None, Some(r)) => ProcedureBody::Robot(r.clone()),
                    (None, None) => ProcedureBody::Human,
                };
                let params = |labels: Vec<(String, String)>| -> Vec<Param> {
                    let mut out: Vec<Param> = Vec::new();
                    for (label, place) in labels {
                        if out.iter().any(|p| p.label == label) {
                            continue;
                        }
                        if let Some(cs) = net.place_colorset(&place) {
                            out.push(Param {
                                label,
                                colorset: cs.clone(),
                            });
                        }
                    }
                    out
                };
                let proc = KnowledgeProcedure {
                    name: t.procedure.clone(),
                    description: decl.description.clone(),
                    inputs: params(net.in_arcs(&t.id).map(|a| (a.label.clone(), a.place.clone())).collect()),
                    outputs: params(net.out_arcs(&t.id).map(|a| (a.label.clone(), a.place.clone())).collect()),
                    body,
                };
                run.register_procedure(&agent, proc)?;
            }
        }
        Ok(run)
    }

    pub fn attach_robot(&mut self, port: Box<dyn RobotPort>) {
        self.robot = Some(port);
    }

    pub fn software_mut(&mut self) -> &mut SoftwareLibrary {
        &mut self.software
    }

    /// Sends one command line to the attached robot.
    pub fn robot_command(&mut self, line: &str) -> Result<Reply, String> {
        let port = self.robot.as_mut().ok_or("no robot attached")?;
        port.send(line).map_err(|e| e.to_string())
    }

    pub fn robot_state(&self) -> Option<RobotState> {
        self.robot.as_ref().and_then(|r| r.state())
    }

    fn agent_index(&self, agent: &str) -> Result<usize, RuntimeError> {
        self.agents
            .iter()
            .position(|a| a.id() == agent)
            .ok_or_else(|| RuntimeError::UnknownAgent(agent.to_string()))
    }

    pub fn agent(&self, agent: &str) -> Option<&AgentControl> {
        self.agents.iter().find(|a| a.id() == agent)
    }

    /// Makes `proc` callable by `agent`'s control loop.
    pub fn register_procedure(&mut self, agent: &str, proc: KnowledgeProcedure) -> Result<(), RuntimeError> {
        let i = self.agent_index(agent)?;
        let a = &self.agents[i];
        let mismatch = |reason: &str| RuntimeError::SignatureMismatch {
            agent: agent.to_string(),
            procedure: proc.name.clone(),
            reason: reason.to_string(),
        };
        if a.procedures.contains_key(&proc.name) {
            return Err(RuntimeError::DuplicateName {
                agent: agent.to_string(),
                procedure: proc.name.clone(),
            });
        }
        let sig = |ps: &[Param]| -> BTreeSet<(String, String)> {
            ps.iter().map(|p| (p.label.clone(), p.colorset.name.clone())).collect()
        };
        let net = a.net();
        let arcs_sig = |t: &str, inputs: bool| -> BTreeSet<(String, String)> {
            let arcs: Vec<_> = if inputs { net.in_arcs(t).collect() } else { net.out_arcs(t).collect() };
            arcs.iter()
                .filter_map(|x| net.place(&x.place).map(|p| (x.label.clone(), p.colorset.clone())))
                .collect()
        };
        let candidates: Vec<_> = net.work_transitions().filter(|t| t.procedure == proc.name).collect();
        if candidates.is_empty() {
            return Err(mismatch("no transition runs it"));
        }
        if !candidates
            .iter()
            .any(|t| arcs_sig(&t.id, true) == sig(&proc.inputs) && arcs_sig(&t.id, false) == sig(&proc.outputs))
        {
            return Err(mismatch("inputs or outputs differ from the arc labels"));
        }
        let allowed = match &proc.body {
            ProcedureBody::Human => a.kind() == AgentKind::HumanInterface,
            ProcedureBody::Robot(r) => {
                let labels: BTreeSet<&String> = proc.outputs.iter().map(|p| &p.label).collect();
                if r.outputs.keys().collect::<BTreeSet<_>>() != labels {
                    return Err(mismatch("robot outputs do not cover the out-arc labels"));
                }
                a.kind() == AgentKind::RobotInterface
            }
            ProcedureBody::Software { .. } => true,
        };
        if !allowed {
            return Err(RuntimeError::BodyMismatch {
                agent: agent.to_string(),
                procedure: proc.name.clone(),
                kind: a.kind(),
            });
        }
        self.agents[i].procedures.insert(proc.name.clone(), proc);
        Ok(())
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn requests(&self) -> &[HumanRequest] {
        &self.requests
    }

    pub fn pending_requests(&self) -> Vec<&HumanRequest> {
        self.requests.iter().filter(|r| r.state == RequestState::Pending).collect()
    }

    pub fn markings(&self) -> BTreeMap<String, Marking> {
        self.agents.iter().map(|a| (a.id().to_string(), a.marking.clone())).collect()
    }

    /// Tokens per place summed over agents, keyed `<agent>/<place>`.
    pub fn token_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for a in &self.agents {
            for (p, toks) in a.marking.iter() {
                out.insert(format!("{}/{p}", a.id()), toks.len());
            }
        }
        out
    }

    /// Appends an event of a kind the run does not produce itself, such as
    /// a failure noticed by a driver.
    pub fn log_event(&mut self, kind: &str, payload: Value) {
        self.emit(kind, payload);
    }

    fn emit(&mut self, kind: &str, payload: Value) {
        let seq = self.events.len() as u64 + 1;
        self.events.push(Event {
            kind: kind.into(),
            payload,
            seq,
        });
    }

    fn actions(&self, i: usize) -> Vec<Action> {
        let a = &self.agents[i];
        match &a.pending {
            Some(Pending {
                work: Work::Human { answer: Some(_), .. },
                ..
            }) => vec![Action::Commit],
            Some(Pending {
                work: Work::Human { answer: None, .. },
                ..
            }) => vec![],
            Some(Pending {
                work: Work::Robot { .. }, ..
            }) => vec![Action::RobotCommand],
            None => enabled(a.net(), &a.marking, &self.channels)
                .into_iter()
                .map(Action::Start)
                .collect(),
        }
    }

    pub fn status(&self, agent: &str) -> Option<AgentStatus> {
        let i = self.agents.iter().position(|a| a.id() == agent)?;
        let a = &self.agents[i];
        if self.steps == 0 {
            return Some(AgentStatus::Idle);
        }
        Some(match &a.pending {
            Some(Pending {
                work: Work::Human { answer: None, .. },
                ..
            }) => AgentStatus::WaitingHuman,
            Some(Pending {
                work: Work::Robot { .. }, ..
            }) => AgentStatus::WaitingRobot,
            Some(_) => AgentStatus::Ready,
            None if !self.actions(i).is_empty() => AgentStatus::Ready,
            None => {
                let receives = a.net().transitions.iter().any(|t| t.kind == TransitionKind::Reception);
                if receives && !self.is_quiescent() {
                    AgentStatus::WaitingMessage
                } else {
                    AgentStatus::Done
                }
            }
        })
    }

    pub fn statuses(&self) -> BTreeMap<String, AgentStatus> {
        self.agents
            .iter()
            .filter_map(|a| self.status(a.id()).map(|s| (a.id().to_string(), s)))
            .collect()
    }

    /// No agent can act, nothing is pending and every channel is empty.
    pub fn is_quiescent(&self) -> bool {
        self.channels.is_empty()
            && self.agents.iter().all(|a| a.pending.is_none())
            && (0..self.agents.len()).all(|i| self.actions(i).is_empty())
    }

    /// Performs one occurrence or one robot command. Returns false when no
    /// agent can act; the run is then unchanged. A procedure failure leaves
    /// markings, channels and trace as they were.
    pub fn step(&mut self) -> Result<bool, RuntimeError> {
        let n = self.agents.len();
        let choice = if let Some(rng) = self.rng.as_mut() {
            let mut all = Vec::new();
            for i in 0..n {
                let a = &self.agents[i];
                let acts = match &a.pending {
                    Some(_) => Self::pending_actions(a),
                    None => enabled(a.net(), &a.marking, &self.channels).into_iter().map(Action::Start).collect(),
                };
                all.extend(acts.into_iter().map(|act| (i, act)));
            }
            all.choose(rng).cloned()
        } else {
            (0..n)
                .map(|k| (self.cursor + k) % n.max(1))
                .find_map(|i| self.actions(i).into_iter().next().map(|act| (i, act)))
        };
        let Some((i, action)) = choice else {
            return Ok(false);
        };
        self.cursor = (i + 1) % n;
        self.steps += 1;
        match action {
            Action::Start(e) => self.start(i, e)?,
            Action::RobotCommand => self.robot_step(i)?,
            Action::Commit => self.commit_human(i)?,
        }
        Ok(true)
    }

    fn pending_actions(a: &AgentControl) -> Vec<Action> {
        match &a.pending {
            Some(Pending {
                work: Work::Human { answer: Some(_), .. },
                ..
            }) => vec![Action::Commit],
            Some(Pending {
                work: Work::Robot { .. }, ..
            }) => vec![Action::RobotCommand],
            _ => vec![],
        }
    }

    fn failure(&self, i: usize, procedure: &str, reason: impl Into<String>) -> RuntimeError {
        RuntimeError::ProcedureFailure {
            agent: self.agents[i].id().to_string(),
            procedure: procedure.to_string(),
            reason: reason.into(),
        }
    }

    fn start(&mut self, i: usize, e: Enabling) -> Result<(), RuntimeError> {
        let t = self.agents[i].net().transition(&e.transition).expect("enabled").clone();
        if t.kind != TransitionKind::Work {
            let a = &self.agents[i];
            let f = fire(a.net(), &a.marking, &self.channels, &t.id, &e.binding, &Binding::new())?;
            let msg = f.sent.clone().or_else(|| f.received.clone());
            self.commit(i, &t.id, e.binding, Binding::new(), f, msg, None);
            return Ok(());
        }
        let agent = self.agents[i].id().to_string();
        let proc = self.agents[i]
            .procedures
            .get(&t.procedure)
            .cloned()
            .ok_or_else(|| RuntimeError::UndeclaredProcedure {
                agent: agent.clone(),
                procedure: t.procedure.clone(),
            })?;
        match &proc.body {
            ProcedureBody::Software { callback } => {
                let cb = self
                    .software
                    .get(callback)
                    .cloned()
                    .ok_or_else(|| self.failure(i, &proc.name, format!("no software callback `{callback}`")))?;
                let result = cb(&e.binding, &proc.outputs).map_err(|r| self.failure(i, &proc.name, r))?;
                self.commit_work(i, &t.id, e.binding, result, None)
            }
            ProcedureBody::Robot(body) => {
                let vars = script_vars(&e.binding);
                let commands = body
                    .script
                    .iter()
                    .map(|c| substitute(c, &vars))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|r| self.failure(i, &proc.name, r))?;
                self.agents[i].pending = Some(Pending {
                    transition: t.id.clone(),
                    binding: e.binding,
                    work: Work::Robot { commands, next: 0 },
                });
                Ok(())
            }
            ProcedureBody::Human => {
                let id = format!("req-{}", self.requests.len() + 1);
                let request = HumanRequest {
                    id: id.clone(),
                    agent,
                    procedure: proc.name.clone(),
                    description: proc.description.clone(),
                    data: e.binding.iter().map(|(k, v)| (k.to_string(), v.scalar())).collect(),
                    result_schema: proc.outputs.clone(),
                    state: RequestState::Pending,
                };
                self.emit("request", json!(request));
                self.requests.push(request);
                self.agents[i].pending = Some(Pending {
                    transition: t.id.clone(),
                    binding: e.binding,
                    work: Work::Human {
                        request: id,
                        answer: None,
                    },
                });
                Ok(())
            }
        }
    }

    fn robot_step(&mut self, i: usize) -> Result<(), RuntimeError> {
        let pending = self.agents[i].pending.clone().expect("robot action implies pending");
        let Work::Robot { commands, next } = &pending.work else {
            unreachable!("robot action on non-robot work")
        };
        let procedure = self.agents[i].net().transition(&pending.transition).expect("exists").procedure.clone();
        let line = commands[*next].clone();
        let reply = match self.robot_command(&line) {
            Ok(r) => r,
            Err(reason) => {
                self.agents[i].pending = None;
                return Err(self.failure(i, &procedure, reason));
            }
        };
        self.emit(
            "robot",
            json!({"agent": self.agents[i].id(), "command": line, "reply": reply.to_string()}),
        );
        if !reply.is_ok() {
            self.agents[i].pending = None;
            return Err(self.failure(i, &procedure, format!("`{line}` answered {reply}")));
        }
        if next + 1 < commands.len() {
            if let Some(Pending {
                work: Work::Robot { next, .. },
                ..
            }) = &mut self.agents[i].pending
            {
                *next += 1;
            }
            return Ok(());
        }
        let proc = self.agents[i].procedures[&procedure].clone();
        let ProcedureBody::Robot(body) = &proc.body else {
            unreachable!("robot work has a robot body")
        };
        let mut vars = script_vars(&pending.binding);
        vars.insert("reply".into(), reply.value().unwrap_or_default().to_string());
        let mut result = Binding::new();
        for p in &proc.outputs {
            let template = &body.outputs[&p.label];
            let text = substitute(template, &vars).map_err(|r| {
                self.agents[i].pending = None;
                self.failure(i, &procedure, r)
            })?;
            result.insert(&p.label, Token::new(p.colorset.name.clone(), p.colorset.value_from_scalar(&text)));
        }
        self.agents[i].pending = None;
        self.commit_work(i, &pending.transition, pending.binding, result, None)
    }

    fn commit_human(&mut self, i: usize) -> Result<(), RuntimeError> {
        let pending = self.agents[i].pending.take().expect("commit implies pending");
        let Work::Human {
            request,
            answer: Some(result),
        } = pending.work.clone()
        else {
            unreachable!("commit only for answered requests")
        };
        let r = self.commit_work(i, &pending.transition, pending.binding.clone(), result, Some(request));
        if r.is_err() {
            self.agents[i].pending = Some(pending);
        }
        r
    }

    fn commit_work(
        &mut self,
        i: usize,
        transition: &str,
        binding: Binding,
        result: Binding,
        request: Option<String>,
    ) -> Result<(), RuntimeError> {
        let a = &self.agents[i];
        let f = fire(a.net(), &a.marking, &self.channels, transition, &binding, &result).map_err(|e| {
            let procedure = a.net().transition(transition).map(|t| t.procedure.clone()).unwrap_or_default();
            self.failure(i, &procedure, e.to_string())
        })?;
        self.commit(i, transition, binding, result, f, None, request);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn commit(
        &mut self,
        i: usize,
        transition: &str,
        binding: Binding,
        outputs: Binding,
        f: Firing,
        message: Option<Message>,
        request: Option<String>,
    ) {
        let t = self.agents[i].net().transition(transition).expect("exists").clone();
        self.agents[i].marking = f.marking;
        self.channels = f.inbox;
        let entry = TraceEntry {
            seq: self.trace.len() as u64 + 1,
            agent: self.agents[i].id().to_string(),
            transition: t.id.clone(),
            kind: t.kind,
            procedure: t.procedure.clone(),
            binding,
            outputs,
            message,
            request,
        };
        self.emit("trace", json!(entry));
        self.trace.push(entry);
    }

    /// Answers a pending request. The blocked occurrence commits on a later
    /// step.
    pub fn submit_result(&mut self, id: &str, outputs: BTreeMap<String, Token>) -> Result<(), RuntimeError> {
        let r = self
            .requests
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| RuntimeError::UnknownRequest(id.to_string()))?;
        let req = &self.requests[r];
        if req.state == RequestState::Answered {
            return Err(RuntimeError::AlreadyAnswered(id.to_string()));
        }
        let mismatch = |reason: String| RuntimeError::SchemaMismatch {
            request: id.to_string(),
            reason,
        };
        for label in outputs.keys() {
            if !req.result_schema.iter().any(|p| p.label == *label) {
                return Err(mismatch(format!("unexpected output `{label}`")));
            }
        }
        for p in &req.result_schema {
            let tok = outputs.get(&p.label).ok_or_else(|| mismatch(format!("missing output `{}`", p.label)))?;
            if tok.colorset != p.colorset.name || !p.colorset.admits(&tok.value) {
                return Err(mismatch(format!(
                    "output `{}` must be a `{}` token, got {tok}",
                    p.label, p.colorset.name
                )));
            }
        }
        let agent = req.agent.clone();
        self.requests[r].state = RequestState::Answered;
        let i = self.agent_index(&agent)?;
        if let Some(Pending {
            work: Work::Human { answer, .. },
            ..
        }) = &mut self.agents[i].pending
        {
            *answer = Some(outputs.into_iter().collect());
        }
        self.emit("answered", json!({"id": id, "agent": agent}));
        Ok(())
    }
}

/// Re-executes `trace` from the tasks' initial markings. Returns the final
/// markings and channels.
pub fn replay(tasks: &[AgentTask], trace: &[TraceEntry]) -> Result<(BTreeMap<String, Marking>, Channels), RuntimeError> {
    let mut markings: BTreeMap<String, Marking> =
        tasks.iter().map(|t| (t.agent.clone(), t.net.initial_marking())).collect();
    let mut channels = Channels::new();
    for e in trace {
        let task = tasks
            .iter()
            .find(|t| t.agent == e.agent)
            .ok_or_else(|| RuntimeError::UnknownAgent(e.agent.clone()))?;
        let m = &markings[&e.agent];
        let f = fire(&task.net, m, &channels, &e.transition, &e.binding, &e.outputs)?;
        markings.insert(e.agent.clone(), f.marking);
        channels = f.inbox;
    }
    Ok((markings, channels))
}
