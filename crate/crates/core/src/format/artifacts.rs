use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cpn::Net;
use crate::derive::{AgentTask, ChannelTable, CommPoint};
use crate::org::AgentKind;
use crate::pipeline::Derivation;

pub const TASK_FORMAT: &str = "agent-task/1";
pub const CHANNELS_FORMAT: &str = "channels/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentTaskFile {
    pub format: String,
    pub agent: String,
    pub kind: AgentKind,
    pub net: Net,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelsFile {
    pub format: String,
    /// Unordered agent pairs, each sorted.
    pub comm_links: Vec<[String; 2]>,
    pub points: Vec<CommPoint>,
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialize");
    s.push('\n');
    s
}

pub fn task_file(task: &AgentTask) -> String {
    pretty(&AgentTaskFile {
        format: TASK_FORMAT.into(),
        agent: task.agent.clone(),
        kind: task.kind,
        net: task.net.clone(),
    })
}

pub fn read_task_file(text: &str) -> Result<AgentTask, serde_json::Error> {
    let f: AgentTaskFile = serde_json::from_str(text)?;
    if f.format != TASK_FORMAT {
        return Err(serde::de::Error::custom(format!("unsupported format `{}`", f.format)));
    }
    Ok(AgentTask {
        agent: f.agent,
        kind: f.kind,
        net: f.net,
    })
}

pub fn channels_file(d: &Derivation) -> String {
    let table: &ChannelTable = &d.channels;
    pretty(&ChannelsFile {
        format: CHANNELS_FORMAT.into(),
        comm_links: d.comm_links.iter().map(|l| [l.0.clone(), l.1.clone()]).collect(),
        points: table.points.clone(),
    })
}

/// Writes `<agent>.task.json` for every agent and `channels.json` into
/// `dir`, creating it if needed. Returns the written paths in order.
pub fn write_artifacts(dir: &Path, d: &Derivation) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in &d.tasks {
        let path = dir.join(format!("{}.task.json", t.agent));
        std::fs::write(&path, task_file(t))?;
        written.push(path);
    }
    let path = dir.join("channels.json");
    std::fs::write(&path, channels_file(d))?;
    written.push(path);
    Ok(written)
}
