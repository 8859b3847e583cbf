//! The full derivation from a society spec to composed agent tasks.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::cpn::Net;
use crate::derive::{compose, decompose, AgentTask, ChannelTable, ComposeError, DeriveError};
use crate::format::SocietySpec;
use crate::org::{derive_comm_links, simplify, substitute_roles, Link, OrgError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error(transparent)]
    Org(#[from] OrgError),
    #[error(transparent)]
    Derive(#[from] DeriveError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

/// Every intermediate artifact of a derivation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    /// Role → agent.
    pub attribution: BTreeMap<String, String>,
    pub comm_links: BTreeSet<Link>,
    /// Global task with roles replaced by agents.
    pub mas_task: Net,
    pub simplified: Net,
    pub tasks: Vec<AgentTask>,
    pub channels: ChannelTable,
    pub composed: Net,
}

impl Derivation {
    pub fn task(&self, agent: &str) -> Option<&AgentTask> {
        self.tasks.iter().find(|t| t.agent == agent)
    }
}

pub fn derive(spec: &SocietySpec) -> Result<Derivation, PipelineError> {
    let attribution = spec.mas.attribution();
    let comm_links = derive_comm_links(&spec.organization.comm_relation, &attribution)?;
    let mas_task = substitute_roles(&spec.global_task(), &attribution)?;
    let simplified = simplify(&mas_task);
    let (tasks, channels) = decompose(&simplified, &spec.mas.agents, &spec.derive_options())?;
    let composed = compose(&tasks, &channels)?;
    Ok(Derivation {
        attribution,
        comm_links,
        mas_task,
        simplified,
        tasks,
        channels,
        composed,
    })
}
