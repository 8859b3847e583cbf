use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cpn::{
    enabled, fire, CanonicalStub, Direction, ExploreError, Marking, Net, OutputStub, Token, TransitionKind,
    DEFAULT_STATE_CAP,
};
use crate::messaging::{ChannelKey, Channels, Message};

/// A work occurrence with its transition id erased.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WorkStep {
    pub actor: String,
    pub procedure: String,
}

impl fmt::Display for WorkStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.actor, self.procedure)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Global,
    Composed,
}

/// A work trace accepted by one net but not the other: `trace` is accepted by
/// both, `trace + step` only by `accepted_by`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub trace: Vec<WorkStep>,
    pub step: WorkStep,
    pub accepted_by: Side,
    /// Receptions feeding the missing step in the rejecting net.
    pub blocked_receptions: Vec<String>,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let trace: Vec<String> = self.trace.iter().map(ToString::to_string).collect();
        write!(
            f,
            "after [{}], {} is possible only in the {:?} net",
            trace.join(", "),
            self.step,
            self.accepted_by
        )?;
        if !self.blocked_receptions.is_empty() {
            write!(f, " (blocked: {})", self.blocked_receptions.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub depth: usize,
    /// Distinct states visited over both nets.
    pub states: usize,
    pub counterexample: Option<Counterexample>,
}

impl EquivalenceReport {
    pub fn is_equal(&self) -> bool {
        self.counterexample.is_none()
    }
}

type StateKey = (Vec<(String, Vec<Token>)>, Vec<(ChannelKey, Vec<Message>)>);
type State = (Marking, Channels);

/// Set of states reachable through non-work transitions.
#[derive(Default)]
struct Macro {
    states: BTreeMap<StateKey, State>,
}

impl Macro {
    fn id(&self) -> Vec<StateKey> {
        self.states.keys().cloned().collect()
    }
}

struct Budget {
    used: usize,
    cap: usize,
}

impl Budget {
    fn spend(&mut self) -> Result<(), ExploreError> {
        self.used += 1;
        if self.used > self.cap {
            return Err(ExploreError::DepthExceededBudget { cap: self.cap });
        }
        Ok(())
    }
}

fn key(s: &State) -> StateKey {
    (s.0.canonical(), s.1.contents())
}

fn closure(net: &Net, seeds: Vec<State>, budget: &mut Budget) -> Result<Macro, ExploreError> {
    let mut m = Macro::default();
    let mut queue: VecDeque<State> = VecDeque::new();
    for s in seeds {
        if m.states.insert(key(&s), s.clone()).is_none() {
            budget.spend()?;
            queue.push_back(s);
        }
    }
    while let Some((marking, inbox)) = queue.pop_front() {
        for e in enabled(net, &marking, &inbox) {
            let t = net.transition(&e.transition).expect("enabled transitions exist");
            if t.kind == TransitionKind::Work {
                continue;
            }
            let f = fire(net, &marking, &inbox, &e.transition, &e.binding, &CanonicalStub.outputs(net, t, &e.binding))?;
            let next = (f.marking, f.inbox);
            let k = key(&next);
            if let std::collections::btree_map::Entry::Vacant(slot) = m.states.entry(k) {
                budget.spend()?;
                slot.insert(next.clone());
                queue.push_back(next);
            }
        }
    }
    Ok(m)
}

fn work_successors(net: &Net, m: &Macro) -> Result<BTreeMap<WorkStep, Vec<State>>, ExploreError> {
    let mut out: BTreeMap<WorkStep, Vec<State>> = BTreeMap::new();
    for (marking, inbox) in m.states.values() {
        for e in enabled(net, marking, inbox) {
            let t = net.transition(&e.transition).expect("enabled transitions exist");
            if t.kind != TransitionKind::Work {
                continue;
            }
            let f = fire(net, marking, inbox, &e.transition, &e.binding, &CanonicalStub.outputs(net, t, &e.binding))?;
            out.entry(WorkStep {
                actor: t.actor.clone(),
                procedure: t.procedure.clone(),
            })
            .or_default()
            .push((f.marking, f.inbox));
        }
    }
    Ok(out)
}

/// Non-work transitions that feed an input place of a transition labelled
/// `step`.
fn feeding_receptions(net: &Net, step: &WorkStep) -> Vec<String> {
    let mut out = Vec::new();
    for t in net.work_transitions().filter(|t| t.actor == step.actor && t.procedure == step.procedure) {
        for a in net.in_arcs(&t.id) {
            for feeder in net
                .arcs
                .iter()
                .filter(|x| x.place == a.place && x.direction == Direction::Out)
                .filter_map(|x| net.transition(&x.transition))
                .filter(|x| x.kind == TransitionKind::Reception)
            {
                if !out.contains(&feeder.id) {
                    out.push(feeder.id.clone());
                }
            }
        }
    }
    out
}

/// Compares the work-projected, prefix-closed trace languages of two nets up
/// to `depth` work occurrences. Procedure results come from
/// [`CanonicalStub`]; communication transitions are treated as silent.
pub fn verify_equivalence(global: &Net, composed: &Net, depth: usize) -> Result<EquivalenceReport, ExploreError> {
    verify_equivalence_with_cap(global, composed, depth, DEFAULT_STATE_CAP)
}

pub fn verify_equivalence_with_cap(
    global: &Net,
    composed: &Net,
    depth: usize,
    cap: usize,
) -> Result<EquivalenceReport, ExploreError> {
    let mut budget = Budget { used: 0, cap };
    let g0 = closure(global, vec![(global.initial_marking(), Channels::new())], &mut budget)?;
    let c0 = closure(composed, vec![(composed.initial_marking(), Channels::new())], &mut budget)?;

    let mut seen: HashMap<(Vec<StateKey>, Vec<StateKey>), usize> = HashMap::new();
    let mut queue = VecDeque::from([(g0, c0, Vec::<WorkStep>::new())]);
    while let Some((g, c, trace)) = queue.pop_front() {
        let remaining = depth - trace.len();
        let pair = (g.id(), c.id());
        if seen.get(&pair).is_some_and(|&r| r >= remaining) {
            continue;
        }
        seen.insert(pair, remaining);
        if remaining == 0 {
            continue;
        }
        let gs = work_successors(global, &g)?;
        let cs = work_successors(composed, &c)?;
        let mismatch = gs
            .keys()
            .find(|k| !cs.contains_key(*k))
            .map(|k| (k, Side::Global, composed))
            .or_else(|| cs.keys().find(|k| !gs.contains_key(*k)).map(|k| (k, Side::Composed, global)));
        if let Some((step, accepted_by, rejecting)) = mismatch {
            return Ok(EquivalenceReport {
                depth,
                states: budget.used,
                counterexample: Some(Counterexample {
                    trace,
                    step: step.clone(),
                    accepted_by,
                    blocked_receptions: feeding_receptions(rejecting, step),
                }),
            });
        }
        let mut cs = cs;
        for (step, next_g) in gs {
            let next_c = cs.remove(&step).expect("labels agree");
            let mut t = trace.clone();
            t.push(step);
            queue.push_back((closure(global, next_g, &mut budget)?, closure(composed, next_c, &mut budget)?, t));
        }
    }
    Ok(EquivalenceReport {
        depth,
        states: budget.used,
        counterexample: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpn::{Arc, ColorSet, Place, Transition, TokenValue};
    use crate::derive::{compose, decompose, DeriveOptions};
    use crate::org::{AgentKind, AgentSpec};

    fn chain() -> Net {
        let mut net = Net::new("n");
        net.colorsets.push(ColorSet::atom("C"));
        net.places.push(Place::new("a", "C").with_initial([TokenValue::Atom("x".into())]));
        net.places.push(Place::new("b", "C"));
        net.places.push(Place::new("c", "C"));
        net.transitions.push(Transition::work("t1", "X", "One"));
        net.transitions.push(Transition::work("t2", "Y", "Two"));
        net.arcs.push(Arc::input("a", "t1", "x"));
        net.arcs.push(Arc::output("t1", "b", "y"));
        net.arcs.push(Arc::input("b", "t2", "y"));
        net.arcs.push(Arc::output("t2", "c", "z"));
        net
    }

    fn agents() -> Vec<AgentSpec> {
        ["X", "Y"].iter().map(|a| AgentSpec::new(a, AgentKind::Software, &[a])).collect()
    }

    #[test]
    fn identical_nets_are_equal() {
        for depth in 0..4 {
            assert!(verify_equivalence(&chain(), &chain(), depth).unwrap().is_equal());
        }
    }

    #[test]
    fn decomposition_preserves_work_traces() {
        let net = chain();
        let (tasks, table) = decompose(&net, &agents(), &DeriveOptions::default()).unwrap();
        let c = compose(&tasks, &table).unwrap();
        assert!(verify_equivalence(&net, &c, 5).unwrap().is_equal());
    }

    #[test]
    fn deleted_channel_yields_a_blocked_reception() {
        let net = chain();
        let (tasks, table) = decompose(&net, &agents(), &DeriveOptions::default()).unwrap();
        let c = compose(&tasks, &table.without(0)).unwrap();
        let r = verify_equivalence(&net, &c, 5).unwrap();
        let cx = r.counterexample.expect("counterexample");
        assert_eq!(cx.accepted_by, Side::Global);
        assert_eq!(cx.step.procedure, "Two");
        assert_eq!(cx.trace.len(), 1);
        assert_eq!(cx.blocked_receptions, vec![format!("Y/{}", table.points[0].reception)]);
    }

    #[test]
    fn budget_is_reported() {
        assert_eq!(
            verify_equivalence_with_cap(&chain(), &chain(), 3, 1),
            Err(ExploreError::DepthExceededBudget { cap: 1 })
        );
    }
}
