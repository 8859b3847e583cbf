use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{enabled, fire, Binding, FireError, Marking, Net, Token, Transition, TransitionKind};
use crate::messaging::Channels;

/// Default bound on visited states for exhaustive exploration.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheduler {
    /// Always the first enabled occurrence.
    Deterministic,
    /// Uniform choice among enabled occurrences, driven by a seeded ChaCha stream.
    Seeded(u64),
    /// Every firing sequence.
    All,
}

/// What the depth bound counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DepthCount {
    #[default]
    Occurrences,
    WorkOnly,
}

#[derive(Debug, Clone)]
pub struct ExploreConfig {
    pub depth: usize,
    pub scheduler: Scheduler,
    pub count: DepthCount,
    pub state_cap: usize,
    /// Initial channel contents, for nets with guarded receptions.
    pub inbox: Channels,
}

impl ExploreConfig {
    pub fn new(depth: usize, scheduler: Scheduler) -> Self {
        ExploreConfig {
            depth,
            scheduler,
            count: DepthCount::default(),
            state_cap: DEFAULT_STATE_CAP,
            inbox: Channels::new(),
        }
    }

    pub fn all(depth: usize) -> Self {
        Self::new(depth, Scheduler::All)
    }

    pub fn work_only(mut self) -> Self {
        self.count = DepthCount::WorkOnly;
        self
    }

    pub fn with_state_cap(mut self, cap: usize) -> Self {
        self.state_cap = cap;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExploreError {
    #[error("exploration visited more than {cap} states")]
    DepthExceededBudget { cap: usize },
    #[error(transparent)]
    Fire(#[from] FireError),
}

/// Supplies procedure results when exploring without real procedures.
pub trait OutputStub {
    fn outputs(&self, net: &Net, transition: &Transition, binding: &Binding) -> Binding;
}

/// One fixed token per out-label, taken from the colorset of the place the
/// label flows into.
#[derive(Debug, Clone, Copy, Default)]
pub struct CanonicalStub;

impl OutputStub for CanonicalStub {
    fn outputs(&self, net: &Net, transition: &Transition, _binding: &Binding) -> Binding {
        let mut out = Binding::new();
        for a in net.out_arcs(&transition.id) {
            if let Some(cs) = net.place_colorset(&a.place) {
                out.insert(&a.label, Token::new(cs.name.clone(), cs.canonical_value()));
            }
        }
        out
    }
}

/// A transition occurrence as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Occurrence {
    pub transition: String,
    pub actor: String,
    pub procedure: String,
    pub kind: TransitionKind,
}

impl Occurrence {
    pub fn of(t: &Transition) -> Self {
        Occurrence {
            transition: t.id.clone(),
            actor: t.actor.clone(),
            procedure: t.procedure.clone(),
            kind: t.kind,
        }
    }
}

pub type Trace = Vec<Occurrence>;

/// Bounded exploration from `marking`.
///
/// With [`Scheduler::All`] the result holds every firing sequence of at most
/// `depth` counted occurrences, including the empty one and every prefix.
/// The other schedulers return one trace: the run they pick.
pub fn explore(
    net: &Net,
    marking: &Marking,
    config: &ExploreConfig,
    stub: &dyn OutputStub,
) -> Result<BTreeSet<Trace>, ExploreError> {
    match config.scheduler {
        Scheduler::All => {
            let mut out = BTreeSet::new();
            let mut visited = 0;
            let mut trace = Vec::new();
            dfs(net, marking, &config.inbox, config, stub, 0, &mut trace, &mut visited, &mut out)?;
            Ok(out)
        }
        Scheduler::Deterministic => single_run(net, marking, config, stub, None),
        Scheduler::Seeded(seed) => single_run(net, marking, config, stub, Some(ChaCha8Rng::seed_from_u64(seed))),
    }
}

fn counts(config: &ExploreConfig, t: &Transition) -> usize {
    match config.count {
        DepthCount::Occurrences => 1,
        DepthCount::WorkOnly => usize::from(t.kind == TransitionKind::Work),
    }
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    net: &Net,
    marking: &Marking,
    inbox: &Channels,
    config: &ExploreConfig,
    stub: &dyn OutputStub,
    used: usize,
    trace: &mut Trace,
    visited: &mut usize,
    out: &mut BTreeSet<Trace>,
) -> Result<(), ExploreError> {
    *visited += 1;
    if *visited > config.state_cap {
        return Err(ExploreError::DepthExceededBudget { cap: config.state_cap });
    }
    out.insert(trace.clone());
    for e in enabled(net, marking, inbox) {
        let t = net.transition(&e.transition).expect("enabled transitions exist");
        let cost = counts(config, t);
        if used + cost > config.depth {
            continue;
        }
        let result = stub.outputs(net, t, &e.binding);
        let f = fire(net, marking, inbox, &e.transition, &e.binding, &result)?;
        trace.push(Occurrence::of(t));
        dfs(net, &f.marking, &f.inbox, config, stub, used + cost, trace, visited, out)?;
        trace.pop();
    }
    Ok(())
}

fn single_run(
    net: &Net,
    marking: &Marking,
    config: &ExploreConfig,
    stub: &dyn OutputStub,
    mut rng: Option<ChaCha8Rng>,
) -> Result<BTreeSet<Trace>, ExploreError> {
    let mut marking = marking.clone();
    let mut inbox = config.inbox.clone();
    let mut trace = Vec::new();
    let mut used = 0;
    for step in 0.. {
        if step >= config.state_cap {
            return Err(ExploreError::DepthExceededBudget { cap: config.state_cap });
        }
        let candidates: Vec<_> = enabled(net, &marking, &inbox)
            .into_iter()
            .filter(|e| used + counts(config, net.transition(&e.transition).expect("exists")) <= config.depth)
            .collect();
        let pick = match rng.as_mut() {
            Some(rng) => candidates.choose(rng),
            None => candidates.first(),
        };
        let Some(e) = pick else { break };
        let t = net.transition(&e.transition).expect("exists");
        let result = stub.outputs(net, t, &e.binding);
        let f = fire(net, &marking, &inbox, &e.transition, &e.binding, &result)?;
        marking = f.marking;
        inbox = f.inbox;
        used += counts(config, t);
        trace.push(Occurrence::of(t));
    }
    Ok(BTreeSet::from([trace]))
}
