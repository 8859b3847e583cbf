use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::locate::locate;
use crate::cpn::{ColorSet, Net, ValidationReport};
use crate::derive::{ChannelOverride, DeriveOptions};
use crate::org::{validate_mas, validate_organization, MasModel, Organization};
use crate::pipeline;

pub const SOCIETY_FORMAT: &str = "society/1";

/// Command script of a procedure executed by a robot. `$X` in a command is
/// replaced by the scalar of input `X`; in `outputs`, `$reply` is the detail
/// of the last reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotBody {
    pub script: Vec<String>,
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
}

/// A knowledge procedure. Procedures without a software or robot body are
/// carried out by a human.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcedureDecl {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub software: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<RobotBody>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Routing {
    pub place: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocietySpec {
    pub format: String,
    pub colorsets: Vec<ColorSet>,
    pub organization: Organization,
    pub mas: MasModel,
    #[serde(default)]
    pub procedures: Vec<ProcedureDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelOverride>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routing: Vec<Routing>,
}

impl SocietySpec {
    /// The organization's task with the spec-level color sets in scope.
    pub fn global_task(&self) -> Net {
        let mut net = self.organization.task.clone();
        let mut colorsets = self.colorsets.clone();
        colorsets.append(&mut net.colorsets);
        net.colorsets = colorsets;
        net
    }

    /// The organization with [`Self::global_task`] as its task.
    pub fn organization(&self) -> Organization {
        Organization {
            task: self.global_task(),
            ..self.organization.clone()
        }
    }

    pub fn derive_options(&self) -> DeriveOptions {
        DeriveOptions {
            overrides: self.channels.clone(),
            routed: self.routing.iter().map(|r| r.place.clone()).collect(),
        }
    }

    pub fn procedure(&self, name: &str) -> Option<&ProcedureDecl> {
        self.procedures.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosticKind {
    Syntax,
    Schema,
    Semantic,
}

/// A positioned problem in a spec document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub line: usize,
    pub column: usize,
    /// JSON pointer of the offending value, for semantic problems.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if let Some(p) = &self.path {
            write!(f, " (at {p})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("{0}")]
    Syntax(Diagnostic),
    #[error("{} semantic error(s); first: {}", .0.len(), .0[0])]
    Semantic(Vec<Diagnostic>),
}

impl SpecError {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            SpecError::Syntax(d) => vec![d.clone()],
            SpecError::Semantic(ds) => ds.clone(),
        }
    }
}

/// Parses and validates a society spec.
pub fn parse_spec(text: &str) -> Result<SocietySpec, SpecError> {
    let spec: SocietySpec = serde_json::from_str(text).map_err(|e| {
        let kind = match e.classify() {
            serde_json::error::Category::Data => DiagnosticKind::Schema,
            _ => DiagnosticKind::Syntax,
        };
        let message = e.to_string();
        // serde appends " at line L column C"; the position is kept separately
        let message = message.split(" at line ").next().unwrap_or(&message).to_string();
        SpecError::Syntax(Diagnostic {
            kind,
            line: e.line().max(1),
            column: e.column().max(1),
            path: None,
            message,
        })
    })?;
    let problems = validate_spec(&spec);
    if problems.is_empty() {
        return Ok(spec);
    }
    Err(SpecError::Semantic(
        problems
            .into_iter()
            .map(|(path, message)| {
                let (line, column) = locate(text, &path);
                Diagnostic {
                    kind: DiagnosticKind::Semantic,
                    line,
                    column,
                    path: Some(path),
                    message,
                }
            })
            .collect(),
    ))
}

/// Canonical pretty form, newline-terminated.
pub fn serialize_spec(spec: &SocietySpec) -> String {
    let mut s = serde_json::to_string_pretty(spec).expect("spec types serialize");
    s.push('\n');
    s
}

fn index_of<T>(items: &[T], pred: impl Fn(&T) -> bool) -> Option<usize> {
    items.iter().position(pred)
}

/// JSON pointer for an element named by a validation report.
fn pointer_for(spec: &SocietySpec, element: &str) -> String {
    let task = "/organization/task";
    let (kind, name) = element.split_once(':').unwrap_or((element, ""));
    let found = match kind {
        "colorset" => index_of(&spec.colorsets, |c| c.name == name)
            .map(|i| format!("/colorsets/{i}"))
            .or_else(|| {
                index_of(&spec.organization.task.colorsets, |c| c.name == name).map(|i| format!("{task}/colorsets/{i}"))
            }),
        "place" => index_of(&spec.organization.task.places, |p| p.id == name).map(|i| format!("{task}/places/{i}")),
        "transition" => {
            index_of(&spec.organization.task.transitions, |t| t.id == name).map(|i| format!("{task}/transitions/{i}"))
        }
        "role" => index_of(&spec.organization.roles, |r| r.id == name).map(|i| format!("/organization/roles/{i}")),
        "agent" => index_of(&spec.mas.agents, |a| a.id == name).map(|i| format!("/mas/agents/{i}")),
        _ => None,
    };
    if let Some(p) = found {
        return p;
    }
    if let Some(rest) = element.strip_prefix("arc#") {
        let i: String = rest.chars().take_while(char::is_ascii_digit).collect();
        return format!("{task}/arcs/{i}");
    }
    if let Some(i) = element.strip_prefix("comm_relation#") {
        return format!("/organization/comm_relation/{i}");
    }
    task.to_string()
}

fn report_into(spec: &SocietySpec, report: ValidationReport, out: &mut Vec<(String, String)>) {
    for v in report.violations {
        out.push((pointer_for(spec, &v.element), format!("{} [{}]: {}", v.element, v.rule, v.message)));
    }
}

/// Semantic checks: every problem as a (JSON pointer, message) pair.
pub fn validate_spec(spec: &SocietySpec) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if spec.format != SOCIETY_FORMAT {
        out.push(("/format".into(), format!("unsupported format `{}`, expected `{SOCIETY_FORMAT}`", spec.format)));
    }
    let org = spec.organization();
    report_into(spec, validate_organization(&org), &mut out);
    if spec.mas.organization != spec.organization.id {
        out.push((
            "/mas/organization".into(),
            format!("MAS model refers to organization `{}`, spec declares `{}`", spec.mas.organization, spec.organization.id),
        ));
    }
    report_into(spec, validate_mas(&org, &spec.mas), &mut out);

    for (i, p) in spec.procedures.iter().enumerate() {
        if spec.procedures[..i].iter().any(|q| q.name == p.name) {
            out.push((format!("/procedures/{i}/name"), format!("procedure `{}` declared twice", p.name)));
        }
        if p.software.is_some() && p.robot.is_some() {
            out.push((format!("/procedures/{i}"), format!("procedure `{}` has two bodies", p.name)));
        }
    }
    for (i, t) in spec.organization.task.transitions.iter().enumerate() {
        if spec.procedure(&t.procedure).is_none() {
            out.push((
                format!("/organization/task/transitions/{i}/procedure"),
                format!("procedure `{}` of transition `{}` is not declared", t.procedure, t.id),
            ));
        }
    }
    let task = &spec.organization.task;
    for (i, c) in spec.channels.iter().enumerate() {
        if task.place(&c.place).is_none() {
            out.push((format!("/channels/{i}/place"), format!("unknown place `{}`", c.place)));
        }
        if spec.mas.agent(&c.receiver).is_none() {
            out.push((format!("/channels/{i}/receiver"), format!("unknown agent `{}`", c.receiver)));
        }
    }
    for (i, r) in spec.routing.iter().enumerate() {
        if task.place(&r.place).is_none() {
            out.push((format!("/routing/{i}/place"), format!("unknown place `{}`", r.place)));
        }
    }

    if out.is_empty() {
        if let Err(e) = pipeline::derive(spec) {
            out.push(("/organization/task".into(), e.to_string()));
        }
    }
    out
}
