//! Execution of a derived society.
//!
//! A [`SocietyRun`] owns every agent's marking and the channels between them
//! and advances one occurrence per [`SocietyRun::step`]. Work transitions run
//! the knowledge procedure bound to them, whose body depends on the agent
//! kind: software callbacks complete within the step, robot scripts send one
//! command per step, and human procedures surface as [`HumanRequest`]s that
//! block only their own agent until answered.

mod drivers;
mod procedures;
mod society;

pub use drivers::{parse_answers, run_society, AnswerScript, HumanDriver, ScriptedAnswer, ScriptedHuman, ANSWERS_FORMAT};
pub use procedures::{substitute, Callback, KnowledgeProcedure, Param, ProcedureBody, SoftwareLibrary};
pub use society::{
    replay, AgentControl, AgentStatus, Event, HumanRequest, RequestState, RunConfig, SocietyRun, TraceEntry,
};

use thiserror::Error;

use crate::cpn::FireError;
use crate::messaging::MessagingError;
use crate::org::AgentKind;
use crate::pipeline::PipelineError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("procedure `{procedure}` does not match any transition of `{agent}`: {reason}")]
    SignatureMismatch {
        agent: String,
        procedure: String,
        reason: String,
    },
    #[error("agent `{agent}` already has a procedure named `{procedure}`")]
    DuplicateName { agent: String, procedure: String },
    #[error("procedure `{procedure}` cannot be carried out by {kind} agent `{agent}`")]
    BodyMismatch {
        agent: String,
        procedure: String,
        kind: AgentKind,
    },
    #[error("no procedure `{procedure}` is registered for `{agent}`")]
    UndeclaredProcedure { agent: String, procedure: String },
    #[error("procedure `{procedure}` of `{agent}` failed: {reason}")]
    ProcedureFailure {
        agent: String,
        procedure: String,
        reason: String,
    },
    #[error("unknown request `{0}`")]
    UnknownRequest(String),
    #[error("result for `{request}` does not match its schema: {reason}")]
    SchemaMismatch { request: String, reason: String },
    #[error("request `{0}` was already answered")]
    AlreadyAnswered(String),
    #[error("no progress after {steps} steps")]
    Starvation { steps: u64 },
    #[error("no scripted answer for procedure `{procedure}` (request {request})")]
    UnscriptedRequest { procedure: String, request: String },
    #[error("society is stuck: nothing enabled, {queued} message(s) queued")]
    Deadlock { queued: usize },
    #[error(transparent)]
    Messaging(#[from] MessagingError),
    #[error(transparent)]
    Fire(#[from] FireError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}
