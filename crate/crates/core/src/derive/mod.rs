//! Decomposition of a MAS task into per-agent non-autonomous nets.
//!
//! A place written by one agent and read by another becomes a communication
//! point. On the producer side the out-arc is redirected into a parameter
//! place `<p>.par` that feeds an emission transition; on the consumer side a
//! reception transition, gated on the channel and action, deposits the
//! parameters into the consumer's own copy of the place.

mod compose;
mod equivalence;

pub use compose::{compose, message_place, ComposeError};
pub use equivalence::{verify_equivalence, verify_equivalence_with_cap, Counterexample, EquivalenceReport, Side, WorkStep};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpn::{sensor_of, Arc, Direction, Emit, EventGuard, Net, Place, Transition, TransitionKind};
use crate::messaging::{ChannelKey, Performative};
use crate::org::{AgentKind, AgentSpec, Link};

/// Label used on the arcs of communication transitions.
pub const PARAM_LABEL: &str = "par";

/// Procedure name of emission transitions.
pub const EMIT_PROCEDURE: &str = "AE";

/// Procedure name of reception transitions.
pub const RECEIVE_PROCEDURE: &str = "AR";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentTask {
    pub agent: String,
    pub kind: AgentKind,
    pub net: Net,
}

/// A place crossing the boundary between two agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommPoint {
    pub place: String,
    pub sender: String,
    pub receiver: String,
    pub performative: Performative,
    pub action: String,
    pub sensor: String,
    /// Emission transition id in the sender's net.
    pub emission: String,
    /// Reception transition id in the receiver's net.
    pub reception: String,
}

impl CommPoint {
    pub fn channel(&self) -> ChannelKey {
        ChannelKey::new(&self.sender, &self.receiver)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelTable {
    pub points: Vec<CommPoint>,
}

impl ChannelTable {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn links(&self) -> BTreeSet<Link> {
        self.points.iter().map(|p| Link::new(&p.sender, &p.receiver)).collect()
    }

    /// The table without its `index`-th point.
    pub fn without(&self, index: usize) -> ChannelTable {
        let mut points = self.points.clone();
        points.remove(index);
        ChannelTable { points }
    }
}

/// Performative forced for the point on `place` towards `receiver`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelOverride {
    pub place: String,
    pub receiver: String,
    pub performative: Performative,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeriveOptions {
    pub overrides: Vec<ChannelOverride>,
    /// Places read by several agents whose producer routes each token to one
    /// of them.
    pub routed: BTreeSet<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeriveError {
    #[error("transition `{transition}` is performed by `{actor}`, which is not an agent")]
    OrphanActor { transition: String, actor: String },
    #[error("place `{place}` is read by agents {consumers:?}; declare a routing for it")]
    UnroutedSplit { place: String, consumers: Vec<String> },
    #[error("routed place `{0}` cannot hold initial tokens")]
    RoutedPlaceMarked(String),
    #[error("routed place `{place}` is both written and read by `{agent}`")]
    RoutingCycle { place: String, agent: String },
}

struct PlaceUse {
    producers: Vec<String>,
    consumers: Vec<String>,
}

impl PlaceUse {
    fn has_copy(&self, agent: &str) -> bool {
        let a = agent.to_string();
        self.consumers.contains(&a) || (self.producers.contains(&a) && self.consumers.iter().all(|c| *c == a))
    }

    fn needs_param(&self, agent: &str) -> bool {
        let a = agent.to_string();
        self.producers.contains(&a) && !self.consumers.contains(&a) && !self.consumers.is_empty()
    }

    /// Agent receiving the initial tokens.
    fn initial_holder(&self) -> Option<&String> {
        match self.consumers.as_slice() {
            [one] => Some(one),
            [] => self.producers.first(),
            _ => None,
        }
    }
}

fn param_place(place: &str) -> String {
    format!("{place}.par")
}

fn emission_id(receiver: &str, place: &str) -> String {
    format!("{}.{EMIT_PROCEDURE}:{place}", sensor_of(receiver))
}

fn reception_id(receiver: &str, sender: &str, place: &str) -> String {
    format!("{}:{sender}.{place}", sensor_of(receiver))
}

/// Splits `net` into one task per agent plus the channel table linking them.
/// Agents keep the order of `agents`; an agent without transitions gets an
/// empty net.
pub fn decompose(
    net: &Net,
    agents: &[AgentSpec],
    options: &DeriveOptions,
) -> Result<(Vec<AgentTask>, ChannelTable), DeriveError> {
    let agent_ids: Vec<&str> = agents.iter().map(|a| a.id.as_str()).collect();
    for t in &net.transitions {
        if !agent_ids.contains(&t.actor.as_str()) {
            return Err(DeriveError::OrphanActor {
                transition: t.id.clone(),
                actor: t.actor.clone(),
            });
        }
    }
    let actor_of = |t: &str| net.transition(t).map(|t| t.actor.as_str());
    let in_agent_order = |set: BTreeSet<&str>| -> Vec<String> {
        agent_ids.iter().filter(|a| set.contains(**a)).map(|a| a.to_string()).collect()
    };

    let mut uses: BTreeMap<&str, PlaceUse> = BTreeMap::new();
    for p in &net.places {
        let by_dir = |dir: Direction| -> BTreeSet<&str> {
            net.arcs
                .iter()
                .filter(|a| a.place == p.id && a.direction == dir)
                .filter_map(|a| actor_of(&a.transition))
                .collect()
        };
        let u = PlaceUse {
            producers: in_agent_order(by_dir(Direction::Out)),
            consumers: in_agent_order(by_dir(Direction::In)),
        };
        if u.consumers.len() > 1 {
            if !options.routed.contains(&p.id) {
                return Err(DeriveError::UnroutedSplit {
                    place: p.id.clone(),
                    consumers: u.consumers.clone(),
                });
            }
            if !p.initial.is_empty() {
                return Err(DeriveError::RoutedPlaceMarked(p.id.clone()));
            }
            if let Some(a) = u.producers.iter().find(|a| u.consumers.contains(a)) {
                return Err(DeriveError::RoutingCycle {
                    place: p.id.clone(),
                    agent: a.clone(),
                });
            }
        }
        uses.insert(&p.id, u);
    }

    // communication points, with actions qualified where a channel would
    // otherwise carry one action for two places
    let mut points = Vec::new();
    for p in &net.places {
        let u = &uses[p.id.as_str()];
        for sender in u.producers.iter().filter(|a| u.needs_param(a)) {
            for receiver in &u.consumers {
                let consumer = net
                    .arcs
                    .iter()
                    .filter(|a| a.place == p.id && a.direction == Direction::In)
                    .filter_map(|a| net.transition(&a.transition))
                    .find(|t| t.actor == *receiver)
                    .expect("consumer agents own a consuming transition");
                let default = if net.in_arcs(&consumer.id).count() == 1 {
                    Performative::Request
                } else {
                    Performative::Inform
                };
                let performative = options
                    .overrides
                    .iter()
                    .find(|o| o.place == p.id && o.receiver == *receiver)
                    .map_or(default, |o| o.performative);
                points.push(CommPoint {
                    place: p.id.clone(),
                    sender: sender.clone(),
                    receiver: receiver.clone(),
                    performative,
                    action: consumer.procedure.clone(),
                    sensor: sensor_of(receiver),
                    emission: emission_id(receiver, &p.id),
                    reception: reception_id(receiver, sender, &p.id),
                });
            }
        }
    }
    let mut seen: BTreeMap<(String, String, String), usize> = BTreeMap::new();
    for pt in &points {
        *seen.entry((pt.sender.clone(), pt.receiver.clone(), pt.action.clone())).or_default() += 1;
    }
    for pt in &mut points {
        if seen[&(pt.sender.clone(), pt.receiver.clone(), pt.action.clone())] > 1 {
            pt.action = format!("{}@{}", pt.action, pt.place);
        }
    }

    let mut tasks = Vec::new();
    for spec in agents {
        let a = spec.id.as_str();
        let mut out = Net::new(format!("{}.{a}", net.id));
        let mut places = Vec::new();
        for p in &net.places {
            let u = &uses[p.id.as_str()];
            if u.has_copy(a) {
                let mut copy = Place::new(p.id.clone(), p.colorset.clone());
                if u.initial_holder().is_some_and(|h| h == a) {
                    copy.initial = p.initial.clone();
                }
                places.push(copy);
            } else if u.needs_param(a) {
                places.push(Place::new(param_place(&p.id), p.colorset.clone()));
            }
        }
        for t in net.transitions.iter().filter(|t| t.actor == a) {
            out.transitions.push(t.clone());
            for arc in net.arcs.iter().filter(|x| x.transition == t.id) {
                let mut arc = arc.clone();
                if arc.direction == Direction::Out && uses[arc.place.as_str()].needs_param(a) {
                    arc.place = param_place(&arc.place);
                }
                out.arcs.push(arc);
            }
        }
        for pt in points.iter().filter(|pt| pt.sender == a) {
            out.transitions.push(Transition {
                id: pt.emission.clone(),
                actor: a.to_string(),
                procedure: EMIT_PROCEDURE.into(),
                kind: TransitionKind::Emission,
                guard: None,
                emit: Some(Emit {
                    channel: pt.channel(),
                    performative: pt.performative,
                    action: pt.action.clone(),
                    sensor: pt.sensor.clone(),
                }),
            });
            out.arcs.push(Arc::input(&param_place(&pt.place), &pt.emission, PARAM_LABEL));
        }
        for pt in points.iter().filter(|pt| pt.receiver == a) {
            out.transitions.push(Transition {
                id: pt.reception.clone(),
                actor: a.to_string(),
                procedure: RECEIVE_PROCEDURE.into(),
                kind: TransitionKind::Reception,
                guard: Some(EventGuard {
                    channel: pt.channel(),
                    action: pt.action.clone(),
                    sensor: pt.sensor.clone(),
                }),
                emit: None,
            });
            out.arcs.push(Arc::output(&pt.reception, &pt.place, PARAM_LABEL));
        }
        out.places = places;
        let used: BTreeSet<&str> = out.places.iter().map(|p| p.colorset.as_str()).collect();
        out.colorsets = net.colorsets.iter().filter(|c| used.contains(c.name.as_str())).cloned().collect();
        tasks.push(AgentTask {
            agent: a.to_string(),
            kind: spec.kind,
            net: out,
        });
    }
    Ok((tasks, ChannelTable { points }))
}
