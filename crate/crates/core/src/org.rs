//! Organizations, MAS models and the role-level derivation steps: role
//! substitution, merging of replicated transitions, and communication links.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpn::{is_identifier, validate_net, Arc, Direction, Net, Place, Rule, Transition, ValidationReport};

/// Role multiplicity: a symbol such as `n`, or a fixed count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Multiplicity {
    Count(u32),
    Symbol(String),
}

impl Default for Multiplicity {
    fn default() -> Self {
        Multiplicity::Count(1)
    }
}

impl fmt::Display for Multiplicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Multiplicity::Count(n) => write!(f, "{n}"),
            Multiplicity::Symbol(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Role {
    pub id: String,
    pub model: String,
    #[serde(default)]
    pub count: Multiplicity,
}

impl Role {
    pub fn new(id: &str, model: &str, count: Multiplicity) -> Self {
        Role {
            id: id.into(),
            model: model.into(),
            count,
        }
    }
}

/// Unordered pair of ids, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link(pub String, pub String);

impl Link {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            Link(a, b)
        } else {
            Link(b, a)
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0 == id || self.1 == id
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Organization {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub roles: Vec<Role>,
    /// Undirected pairs of role ids, kept in declaration order.
    #[serde(default)]
    pub comm_relation: Vec<[String; 2]>,
    pub task: Net,
}

impl Organization {
    pub fn role(&self, id: &str) -> Option<&Role> {
        self.roles.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Software,
    HumanInterface,
    RobotInterface,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Software => "software",
            AgentKind::HumanInterface => "human-interface",
            AgentKind::RobotInterface => "robot-interface",
        })
    }
}

/// How an agent interprets its objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    Intelligent,
    Procedural,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    pub kind: AgentKind,
    pub roles: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<Control>,
    /// Objects the agent manipulates; descriptive only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objects: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sensors: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effectors: Vec<String>,
}

impl AgentSpec {
    pub fn new(id: &str, kind: AgentKind, roles: &[&str]) -> Self {
        AgentSpec {
            id: id.into(),
            kind,
            roles: roles.iter().map(|r| r.to_string()).collect(),
            control: None,
            objects: Vec::new(),
            sensors: Vec::new(),
            effectors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasModel {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub organization: String,
    pub agents: Vec<AgentSpec>,
}

impl MasModel {
    pub fn agent(&self, id: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.id == id)
    }

    /// Role → agent map. Later attributions of the same role are ignored;
    /// [`validate_mas`] reports them.
    pub fn attribution(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        for a in &self.agents {
            for r in &a.roles {
                map.entry(r.clone()).or_insert_with(|| a.id.clone());
            }
        }
        map
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrgError {
    #[error("role `{0}` is not attributed to any agent")]
    UnmappedRole(String),
}

pub fn validate_organization(org: &Organization) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut ids = BTreeSet::new();
    for r in &org.roles {
        let el = format!("role:{}", r.id);
        if !is_identifier(&r.id) {
            report.push(&el, Rule::BadIdentifier, "role id is not an identifier");
        }
        if !ids.insert(r.id.as_str()) {
            report.push(&el, Rule::DuplicateRole, "role declared twice");
        }
    }
    for (i, [a, b]) in org.comm_relation.iter().enumerate() {
        let el = format!("comm_relation#{i}");
        for r in [a, b] {
            if !ids.contains(r.as_str()) {
                report.push(&el, Rule::UnknownRole, format!("undeclared role `{r}`"));
            }
        }
        if a == b {
            report.push(&el, Rule::SelfPair, format!("role `{a}` paired with itself"));
        }
    }
    for t in &org.task.transitions {
        if !ids.contains(t.actor.as_str()) {
            report.push(
                format!("transition:{}", t.id),
                Rule::UndeclaredActor,
                format!("actor `{}` is not a declared role", t.actor),
            );
        }
    }
    report.extend(validate_net(&org.task));
    report
}

/// Checks the MAS model against its organization: attribution must be total
/// and disjoint.
pub fn validate_mas(org: &Organization, mas: &MasModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut ids = BTreeSet::new();
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for a in &mas.agents {
        let el = format!("agent:{}", a.id);
        if !is_identifier(&a.id) {
            report.push(&el, Rule::BadIdentifier, "agent id is not an identifier");
        }
        if !ids.insert(a.id.as_str()) {
            report.push(&el, Rule::DuplicateAgent, "agent declared twice");
        }
        if a.roles.is_empty() {
            report.push(&el, Rule::NoRoles, "agent has no roles");
        }
        for r in &a.roles {
            if org.role(r).is_none() {
                report.push(&el, Rule::UnknownRole, format!("undeclared role `{r}`"));
            }
            if let Some(prev) = owner.insert(r, &a.id) {
                report.push(
                    &el,
                    Rule::RoleAttributedTwice,
                    format!("role `{r}` already attributed to `{prev}`"),
                );
            }
        }
    }
    for r in &org.roles {
        if !owner.contains_key(r.id.as_str()) {
            report.push(format!("role:{}", r.id), Rule::RoleUnattributed, "role is attributed to no agent");
        }
    }
    report
}

/// Replaces each transition's actor by the agent its role is attributed to.
pub fn substitute_roles(net: &Net, attribution: &BTreeMap<String, String>) -> Result<Net, OrgError> {
    let mut out = net.clone();
    for t in &mut out.transitions {
        t.actor = attribution
            .get(&t.actor)
            .cloned()
            .ok_or_else(|| OrgError::UnmappedRole(t.actor.clone()))?;
    }
    Ok(out)
}

/// Image of the role relation under the attribution, without self-links.
pub fn derive_comm_links(
    relation: &[[String; 2]],
    attribution: &BTreeMap<String, String>,
) -> Result<BTreeSet<Link>, OrgError> {
    let agent = |r: &String| attribution.get(r).ok_or_else(|| OrgError::UnmappedRole(r.clone()));
    let mut links = BTreeSet::new();
    for [a, b] in relation {
        let (x, y) = (agent(a)?, agent(b)?);
        if x != y {
            links.insert(Link::new(x, y));
        }
    }
    Ok(links)
}

static INDEX_SUFFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"_\d+$").expect("valid regex"));

/// Drops a trailing role-index suffix such as `_3`.
pub fn erase_index(id: &str) -> &str {
    INDEX_SUFFIX.find(id).map_or(id, |m| &id[..m.start()])
}

type Signature = Vec<(String, String, String)>;

/// Merges transitions that agree on actor, procedure, kind and arc
/// signature once index suffixes are erased. Places are merged by erased id
/// and colorset, pooling their initial tokens.
///
/// Merged elements keep the erased id when it is unambiguous and the id of
/// their first member otherwise, so the result is a fixed point.
pub fn simplify(net: &Net) -> Net {
    // place classes
    let mut class_of: BTreeMap<&str, usize> = BTreeMap::new();
    let mut class_keys: Vec<(&str, &str)> = Vec::new();
    let mut class_members: Vec<Vec<&Place>> = Vec::new();
    for p in &net.places {
        let key = (erase_index(&p.id), p.colorset.as_str());
        let idx = match class_keys.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                class_keys.push(key);
                class_members.push(Vec::new());
                class_keys.len() - 1
            }
        };
        class_of.insert(&p.id, idx);
        class_members[idx].push(p);
    }
    let class_ids = representative_ids(class_keys.iter().map(|k| k.0).collect(), |i| &class_members[i][0].id);

    let sig = |t: &Transition, dir: Direction| -> Signature {
        let mut s: Signature = net
            .arcs
            .iter()
            .filter(|a| a.transition == t.id && a.direction == dir)
            .map(|a| {
                let cls = class_of.get(a.place.as_str()).copied();
                let (place, cs) = cls.map_or((a.place.as_str(), ""), |i| class_keys[i]);
                (erase_index(&a.label).to_string(), place.to_string(), cs.to_string())
            })
            .collect();
        s.sort();
        s.dedup();
        s
    };

    let mut group_keys = Vec::new();
    let mut groups: Vec<Vec<&Transition>> = Vec::new();
    for t in &net.transitions {
        let key = (
            t.actor.clone(),
            t.procedure.clone(),
            t.kind,
            t.guard.clone(),
            t.emit.clone(),
            sig(t, Direction::In),
            sig(t, Direction::Out),
        );
        match group_keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(t),
            None => {
                group_keys.push(key);
                groups.push(vec![t]);
            }
        }
    }
    let group_ids = representative_ids(groups.iter().map(|g| erase_index(&g[0].id)).collect(), |i| &groups[i][0].id);

    let mut out = Net::new(net.id.clone());
    out.colorsets = net.colorsets.clone();
    for (i, members) in class_members.iter().enumerate() {
        let mut p = Place::new(class_ids[i].clone(), members[0].colorset.clone());
        for m in members {
            p.initial.extend(m.initial.iter().cloned());
        }
        out.places.push(p);
    }
    let place_id = |p: &str| class_of.get(p).map_or_else(|| p.to_string(), |&i| class_ids[i].clone());
    for (i, g) in groups.iter().enumerate() {
        let rep = g[0];
        let mut t = rep.clone();
        t.id = group_ids[i].clone();
        out.transitions.push(t);
        for a in net.arcs.iter().filter(|a| a.transition == rep.id) {
            let arc = Arc {
                place: place_id(&a.place),
                transition: group_ids[i].clone(),
                direction: a.direction,
                label: erase_index(&a.label).to_string(),
            };
            if !out.arcs.contains(&arc) {
                out.arcs.push(arc);
            }
        }
    }
    // arcs whose transition does not exist are carried over untouched
    for a in &net.arcs {
        if net.transition(&a.transition).is_none() {
            out.arcs.push(a.clone());
        }
    }
    out
}

/// Erased id when it names exactly one group, the first member's id
/// otherwise.
fn representative_ids<'a>(erased: Vec<&'a str>, first: impl Fn(usize) -> &'a String) -> Vec<String> {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &erased {
        *freq.entry(e).or_default() += 1;
    }
    erased
        .iter()
        .enumerate()
        .map(|(i, e)| if freq[e] == 1 { e.to_string() } else { first(i).clone() })
        .collect()
}
