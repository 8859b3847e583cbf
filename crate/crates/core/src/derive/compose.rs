use std::collections::BTreeSet;

use thiserror::Error;

use super::{AgentTask, ChannelTable, CommPoint, PARAM_LABEL};
use crate::cpn::{Arc, Net, Place};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ComposeError {
    #[error("channel point on `{place}` ({sender}->{receiver}) refers to missing transition `{transition}`")]
    DanglingChannel {
        place: String,
        sender: String,
        receiver: String,
        transition: String,
    },
    #[error("agent `{0}` has two tasks")]
    DuplicateAgent(String),
}

fn scoped(agent: &str, id: &str) -> String {
    format!("{agent}/{id}")
}

/// Id of the place standing for the messages of one channel point.
pub fn message_place(pt: &CommPoint) -> String {
    format!("msg:{}->{}:{}", pt.sender, pt.receiver, pt.place)
}

/// Union of the agent nets, ids prefixed with `<agent>/`, in which each
/// listed channel point is an explicit message place between its emission
/// and its reception. The result is autonomous except for receptions whose
/// point is missing from `channels`: they keep their guard and never fire.
pub fn compose(tasks: &[AgentTask], channels: &ChannelTable) -> Result<Net, ComposeError> {
    let mut agents = BTreeSet::new();
    let mut net = Net::new("composed");
    for task in tasks {
        if !agents.insert(task.agent.as_str()) {
            return Err(ComposeError::DuplicateAgent(task.agent.clone()));
        }
        for cs in &task.net.colorsets {
            if net.colorset(&cs.name).is_none() {
                net.colorsets.push(cs.clone());
            }
        }
        for p in &task.net.places {
            let mut p = p.clone();
            p.id = scoped(&task.agent, &p.id);
            net.places.push(p);
        }
        for t in &task.net.transitions {
            let mut t = t.clone();
            t.id = scoped(&task.agent, &t.id);
            t.emit = None;
            net.transitions.push(t);
        }
        for a in &task.net.arcs {
            let mut a = a.clone();
            a.place = scoped(&task.agent, &a.place);
            a.transition = scoped(&task.agent, &a.transition);
            net.arcs.push(a);
        }
    }

    for pt in &channels.points {
        let dangling = |transition: String| ComposeError::DanglingChannel {
            place: pt.place.clone(),
            sender: pt.sender.clone(),
            receiver: pt.receiver.clone(),
            transition,
        };
        let emission = scoped(&pt.sender, &pt.emission);
        let reception = scoped(&pt.receiver, &pt.reception);
        if net.transition(&emission).is_none() {
            return Err(dangling(emission));
        }
        let Some(r) = net.transitions.iter_mut().find(|t| t.id == reception) else {
            return Err(dangling(reception));
        };
        r.guard = None;
        let colorset = net
            .in_arcs(&emission)
            .find_map(|a| net.place(&a.place))
            .map(|p| p.colorset.clone())
            .unwrap_or_default();
        let msg = message_place(pt);
        net.places.push(Place::new(msg.clone(), colorset));
        net.arcs.push(Arc::output(&emission, &msg, PARAM_LABEL));
        net.arcs.push(Arc::input(&msg, &reception, PARAM_LABEL));
    }
    Ok(net)
}
