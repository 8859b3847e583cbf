//! Colored Petri net task models for agent societies: decomposition of a
//! global task into per-agent nets, and execution of the resulting society.

pub mod cpn;
pub mod messaging;
pub mod org;
pub mod derive;
pub mod format;
pub mod pipeline;
pub mod robot;
pub mod runtime;
pub mod case_study;
