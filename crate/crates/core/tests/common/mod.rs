//! Seeded generator of small acyclic societies shared by the integration
//! tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use hetsoc_core::cpn::{validate_net, Arc, ColorSet, Direction, Net, Place, TokenValue, Transition, ValueKind};
use hetsoc_core::derive::{compose, decompose, AgentTask, ChannelTable, DeriveOptions};
use hetsoc_core::format::{ProcedureDecl, Routing, SocietySpec, SOCIETY_FORMAT};
use hetsoc_core::org::{AgentKind, AgentSpec, MasModel, Multiplicity, Organization, Role};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_WORK: usize = 6;
pub const MAX_PLACES: usize = 8;
pub const MAX_AGENTS: usize = 3;

/// A generated global task, already in simplified form, with actors that
/// are agent ids.
#[derive(Debug, Clone)]
pub struct Generated {
    pub seed: u64,
    pub net: Net,
    pub agents: Vec<AgentSpec>,
    pub options: DeriveOptions,
}

impl Generated {
    pub fn decompose(&self) -> (Vec<AgentTask>, ChannelTable) {
        decompose(&self.net, &self.agents, &self.options).expect("generator only keeps decomposable nets")
    }

    pub fn composed(&self) -> Net {
        let (tasks, table) = self.decompose();
        compose(&tasks, &table).expect("fresh decomposition composes")
    }
}

fn agent_id(i: usize) -> String {
    format!("a{i}")
}

fn attempt(rng: &mut ChaCha8Rng) -> Net {
    let n_agents = rng.random_range(1..=MAX_AGENTS);
    let n_work = rng.random_range(n_agents..=MAX_WORK);
    let mut net = Net::new("gen");
    net.colorsets.push(ColorSet::atom("C"));
    net.colorsets.push(ColorSet::record("R", &[("id", ValueKind::Text)]));
    let fresh_place = |net: &mut Net, rng: &mut ChaCha8Rng| -> String {
        let id = format!("p{}", net.places.len());
        let cs = if rng.random_bool(0.25) { "R" } else { "C" };
        net.places.push(Place::new(id.clone(), cs));
        id
    };
    for _ in 0..rng.random_range(1..=2) {
        let id = fresh_place(&mut net, rng);
        let tokens = if rng.random_bool(0.2) { 2 } else { 1 };
        let p = net.places.last_mut().expect("just pushed");
        let value = |k: usize| {
            if p.colorset == "R" {
                TokenValue::id(&format!("x{k}"))
            } else {
                TokenValue::Atom(format!("x{k}"))
            }
        };
        p.initial = (0..tokens).map(value).collect();
        let _ = id;
    }
    for i in 0..n_work {
        let t = format!("t{i}");
        let actor = agent_id(if i < n_agents { i } else { rng.random_range(0..n_agents) });
        // a place read by several agents must be unmarked and not read by
        // its producer
        let eligible: Vec<String> = net
            .places
            .iter()
            .filter(|p| {
                let actors = |dir: Direction| -> BTreeSet<&str> {
                    net.arcs
                        .iter()
                        .filter(|a| a.place == p.id && a.direction == dir)
                        .filter_map(|a| net.transition(&a.transition).map(|t| t.actor.as_str()))
                        .collect()
                };
                let mut readers = actors(Direction::In);
                readers.insert(&actor);
                readers.len() == 1 || (p.initial.is_empty() && actors(Direction::Out).is_disjoint(&readers))
            })
            .map(|p| p.id.clone())
            .collect();
        if eligible.is_empty() {
            break;
        }
        net.transitions.push(Transition::work(&t, &actor, format!("W{i}")));
        let k = rng.random_range(1..=2).min(eligible.len());
        let mut inputs = BTreeSet::new();
        while inputs.len() < k {
            inputs.insert(eligible[rng.random_range(0..eligible.len())].clone());
        }
        for p in inputs {
            net.arcs.push(Arc::input(&p, &t, &p));
        }
        let room = MAX_PLACES - net.places.len();
        let least = usize::from(i + 1 < n_agents);
        for _ in 0..rng.random_range(least..=2).min(room) {
            let p = fresh_place(&mut net, rng);
            net.arcs.push(Arc::output(&t, &p, &p));
        }
    }
    let used: BTreeSet<String> = net.arcs.iter().map(|a| a.place.clone()).collect();
    net.places.retain(|p| used.contains(&p.id));
    net
}

fn multi_consumer_places(net: &Net) -> BTreeSet<String> {
    let mut consumers: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for a in net.arcs.iter().filter(|a| a.direction == Direction::In) {
        let actor = net.transition(&a.transition).map(|t| t.actor.as_str()).unwrap_or("");
        consumers.entry(a.place.as_str()).or_default().insert(actor);
    }
    consumers
        .into_iter()
        .filter(|(_, c)| c.len() > 1)
        .map(|(p, _)| p.to_string())
        .collect()
}

/// A decomposable, valid society drawn from `seed`. Rejected draws are
/// replaced by further draws from the same stream.
pub fn random_society(seed: u64) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let net = attempt(&mut rng);
        if !validate_net(&net).is_valid() {
            continue;
        }
        let actors: BTreeSet<&str> = net.transitions.iter().map(|t| t.actor.as_str()).collect();
        let agents: Vec<AgentSpec> = (0..MAX_AGENTS)
            .map(agent_id)
            .filter(|a| actors.contains(a.as_str()))
            .map(|a| AgentSpec::new(&a, AgentKind::Software, &[&a]))
            .collect();
        let options = DeriveOptions {
            routed: multi_consumer_places(&net),
            ..DeriveOptions::default()
        };
        if decompose(&net, &agents, &options).is_err() {
            continue;
        }
        return Generated {
            seed,
            net,
            agents,
            options,
        };
    }
}

/// `count` societies from consecutive seeds starting at `base`.
pub fn societies(base: u64, count: usize) -> Vec<Generated> {
    (0..count as u64).map(|i| random_society(base + i)).collect()
}

/// The generated society as a spec document: one role per agent, one
/// software or human procedure per transition.
pub fn random_spec(seed: u64) -> SocietySpec {
    let g = random_society(seed);
    let role = |a: &str| format!("R{a}");
    let mut task = g.net.clone();
    let colorsets = std::mem::take(&mut task.colorsets);
    for t in &mut task.transitions {
        t.actor = role(&t.actor);
    }
    let mut pairs = BTreeSet::new();
    for a in task.arcs.iter().filter(|a| a.direction == Direction::In) {
        let consumer = &task.transition(&a.transition).expect("arc target").actor;
        for b in task.arcs.iter().filter(|b| b.direction == Direction::Out && b.place == a.place) {
            let producer = &task.transition(&b.transition).expect("arc source").actor;
            if producer != consumer {
                let mut pair = [producer.clone(), consumer.clone()];
                pair.sort();
                pairs.insert(pair);
            }
        }
    }
    let procedures = task
        .transitions
        .iter()
        .enumerate()
        .map(|(i, t)| ProcedureDecl {
            name: t.procedure.clone(),
            description: format!("step {i}"),
            software: (i % 2 == 0).then(|| "memory_image".to_string()),
            robot: None,
        })
        .collect();
    SocietySpec {
        format: SOCIETY_FORMAT.into(),
        colorsets,
        organization: Organization {
            id: format!("Org{seed}"),
            description: String::new(),
            roles: g
                .agents
                .iter()
                .map(|a| Role {
                    id: role(&a.id),
                    model: format!("{}M", role(&a.id)),
                    count: if seed.is_multiple_of(2) {
                        Multiplicity::Count(1)
                    } else {
                        Multiplicity::Symbol("n".into())
                    },
                })
                .collect(),
            comm_relation: pairs.into_iter().collect(),
            task,
        },
        mas: MasModel {
            id: format!("Mas{seed}"),
            description: String::new(),
            organization: format!("Org{seed}"),
            agents: g
                .agents
                .iter()
                .map(|a| AgentSpec::new(&a.id, AgentKind::Software, &[&role(&a.id)]))
                .collect(),
        },
        procedures,
        channels: Vec::new(),
        routing: g.options.routed.iter().map(|p| Routing { place: p.clone() }).collect(),
    }
}

/// For every ordered pair of procedures `(a, b)` occurring in `traces`:
/// true when each trace containing `b` has an `a` before its first `b`.
pub fn must_precede(traces: &[Vec<String>]) -> BTreeSet<(String, String)> {
    let names: BTreeSet<&String> = traces.iter().flatten().collect();
    let mut out = BTreeSet::new();
    for a in &names {
        for b in &names {
            if a == b {
                continue;
            }
            let holds = traces.iter().all(|t| match t.iter().position(|x| x == *b) {
                Some(j) => t[..j].contains(a),
                None => true,
            });
            let witnessed = traces.iter().any(|t| t.contains(b));
            if holds && witnessed {
                out.insert(((*a).clone(), (*b).clone()));
            }
        }
    }
    out
}
