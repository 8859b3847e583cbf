//! The society spec format, derived artifact files and DOT rendering.

mod artifacts;
mod dot;
pub mod locate;
mod spec;

pub use artifacts::{
    channels_file, read_task_file, task_file, write_artifacts, AgentTaskFile, ChannelsFile, CHANNELS_FORMAT, TASK_FORMAT,
};
pub use dot::emit_dot;
pub use spec::{
    parse_spec, serialize_spec, validate_spec, Diagnostic, DiagnosticKind, ProcedureDecl, RobotBody, Routing,
    SocietySpec, SpecError, SOCIETY_FORMAT,
};
