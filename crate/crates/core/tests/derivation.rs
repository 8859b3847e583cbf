mod common;

use std::collections::{BTreeMap, BTreeSet};

use hetsoc_core::case_study::{build_pmo, replicated_mas_task, ORDER_CONSTRAINTS};
use hetsoc_core::cpn::{explore, validate_net, CanonicalStub, Direction, ExploreConfig, Net, TransitionKind};
use hetsoc_core::derive::{compose, decompose, verify_equivalence, Side};
use hetsoc_core::messaging::Performative;
use hetsoc_core::org::{derive_comm_links, simplify, Link};

fn link(a: &str, b: &str) -> Link {
    Link::new(a, b)
}

#[test]
fn case_study_comm_links() {
    let f = build_pmo();
    let links = derive_comm_links(&f.spec.organization.comm_relation, &f.derivation.attribution).unwrap();
    assert_eq!(links, BTreeSet::from([link("WP", "M"), link("PP", "M"), link("WP", "PP")]));
}

#[test]
fn simplified_cross_places_follow_comm_links() {
    let f = build_pmo();
    let net = &f.derivation.simplified;
    for p in &net.places {
        let actors = |dir: Direction| -> BTreeSet<String> {
            net.arcs
                .iter()
                .filter(|a| a.place == p.id && a.direction == dir)
                .map(|a| net.transition(&a.transition).unwrap().actor.clone())
                .collect()
        };
        for prod in actors(Direction::Out) {
            for cons in actors(Direction::In) {
                if prod != cons {
                    assert!(f.derivation.comm_links.contains(&link(&prod, &cons)), "{prod}-{cons} via {}", p.id);
                }
            }
        }
    }
}

#[test]
fn case_study_simplifies_to_one_transition_per_procedure() {
    let f = build_pmo();
    let s = &f.derivation.simplified;
    let pairs: BTreeSet<(&str, &str)> = s.transitions.iter().map(|t| (t.actor.as_str(), t.procedure.as_str())).collect();
    assert_eq!(
        pairs,
        BTreeSet::from([
            ("WP", "Des"),
            ("WP", "P"),
            ("PP", "G"),
            ("WP", "Sup"),
            ("M", "Ma"),
            ("WP", "C")
        ])
    );
    assert_eq!(simplify(s), *s);
    assert_eq!(simplify(&replicated_mas_task(4)), *s);
}

#[test]
fn case_study_channels() {
    let f = build_pmo();
    let got: BTreeSet<(String, String, String, String, Performative)> = f
        .derivation
        .channels
        .points
        .iter()
        .map(|p| (p.sender.clone(), p.receiver.clone(), p.place.clone(), p.action.clone(), p.performative))
        .collect();
    let want = BTreeSet::from([
        ("WP".into(), "PP".into(), "Pg".into(), "G".into(), Performative::Request),
        ("PP".into(), "M".into(), "I".into(), "Ma".into(), Performative::Inform),
        ("WP".into(), "M".into(), "Rm".into(), "Ma".into(), Performative::Inform),
        ("M".into(), "WP".into(), "Wst".into(), "C".into(), Performative::Request),
    ]);
    assert_eq!(got, want);
    let sensors: BTreeSet<&str> = f.derivation.channels.points.iter().map(|p| p.sensor.as_str()).collect();
    assert_eq!(sensors, BTreeSet::from(["PPS", "MS", "WPS"]));
}

#[test]
fn case_study_tasks_partition_the_work() {
    let f = build_pmo();
    let mut seen = BTreeMap::new();
    for task in &f.derivation.tasks {
        assert!(validate_net(&task.net).is_valid(), "{}", validate_net(&task.net));
        for t in task.net.work_transitions() {
            *seen.entry(t.id.clone()).or_insert(0) += 1;
        }
    }
    let expected: BTreeMap<String, i32> = f.derivation.simplified.transitions.iter().map(|t| (t.id.clone(), 1)).collect();
    assert_eq!(seen, expected);
}

#[test]
fn case_study_composition_is_equivalent() {
    let f = build_pmo();
    let r = verify_equivalence(&f.derivation.simplified, &f.derivation.composed, 12).unwrap();
    assert!(r.is_equal(), "{:?}", r.counterexample);
    assert_eq!(f.derivation.composed.places.iter().filter(|p| p.id.starts_with("msg:")).count(), 4);
}

#[test]
fn every_deleted_case_study_channel_is_detected() {
    let f = build_pmo();
    let table = &f.derivation.channels;
    for i in 0..table.len() {
        let composed = compose(&f.derivation.tasks, &table.without(i)).unwrap();
        let r = verify_equivalence(&f.derivation.simplified, &composed, 12).unwrap();
        let cx = r.counterexample.unwrap_or_else(|| panic!("deleting {} went unnoticed", table.points[i].place));
        assert_eq!(cx.accepted_by, Side::Global);
        assert!(
            cx.blocked_receptions.iter().any(|r| r.ends_with(&table.points[i].reception)),
            "{cx:?}"
        );
    }
}

#[test]
fn random_societies_compose_equivalently() {
    for g in common::societies(1000, 50) {
        let c = g.composed();
        assert!(validate_net(&c).is_valid(), "seed {}: {}", g.seed, validate_net(&c));
        let r = verify_equivalence(&g.net, &c, 12).unwrap();
        assert!(r.is_equal(), "seed {}: {:?}", g.seed, r.counterexample);
    }
}

/// Independent count of channel points: every producing agent that does not
/// itself consume from the place sends to every consuming agent.
fn expected_points(net: &Net) -> usize {
    net.places
        .iter()
        .map(|p| {
            let actors = |dir: Direction| -> BTreeSet<&str> {
                net.arcs
                    .iter()
                    .filter(|a| a.place == p.id && a.direction == dir)
                    .map(|a| net.transition(&a.transition).unwrap().actor.as_str())
                    .collect()
            };
            let consumers = actors(Direction::In);
            let senders = actors(Direction::Out).difference(&consumers).count();
            senders * consumers.len()
        })
        .sum()
}

#[test]
fn reception_counts_match_the_oracle() {
    for g in common::societies(2000, 50) {
        let (tasks, table) = g.decompose();
        let receptions: usize = tasks
            .iter()
            .map(|t| t.net.transitions.iter().filter(|t| t.kind == TransitionKind::Reception).count())
            .sum();
        let emissions: usize = tasks
            .iter()
            .map(|t| t.net.transitions.iter().filter(|t| t.kind == TransitionKind::Emission).count())
            .sum();
        assert_eq!(receptions, expected_points(&g.net), "seed {}", g.seed);
        assert_eq!(emissions, receptions, "seed {}", g.seed);
        assert_eq!(table.len(), receptions);
    }
}

#[test]
fn explored_partial_order_contains_the_case_study_constraints() {
    let f = build_pmo();
    let net = &f.derivation.simplified;
    let traces = explore(net, &net.initial_marking(), &ExploreConfig::all(12), &CanonicalStub).unwrap();
    let traces: Vec<Vec<String>> = traces
        .into_iter()
        .map(|t| t.into_iter().map(|o| o.procedure).collect())
        .collect();
    let order = common::must_precede(&traces);
    for (a, b) in ORDER_CONSTRAINTS {
        assert!(order.contains(&(a.to_string(), b.to_string())), "{a} before {b}");
    }
    // Sup and P/G are concurrent
    assert!(!order.contains(&("P".to_string(), "Sup".to_string())));
    assert!(!order.contains(&("Sup".to_string(), "G".to_string())));
    let longest = traces.iter().map(Vec::len).max().unwrap();
    assert_eq!(longest, 6);
}

#[test]
fn composed_receptions_follow_their_emissions() {
    let f = build_pmo();
    let c = &f.derivation.composed;
    let pairs: BTreeMap<String, String> = f
        .derivation
        .channels
        .points
        .iter()
        .map(|p| (format!("{}/{}", p.receiver, p.reception), format!("{}/{}", p.sender, p.emission)))
        .collect();
    let traces = explore(c, &c.initial_marking(), &ExploreConfig::all(10), &CanonicalStub).unwrap();
    assert!(traces.len() > 1);
    for t in traces {
        let mut sent: BTreeMap<&str, i64> = BTreeMap::new();
        for o in &t {
            match o.kind {
                TransitionKind::Emission => *sent.entry(o.transition.as_str()).or_default() += 1,
                TransitionKind::Reception => {
                    let e = sent.entry(pairs[&o.transition].as_str()).or_default();
                    *e -= 1;
                    assert!(*e >= 0, "{} before its emission", o.transition);
                }
                TransitionKind::Work => {}
            }
        }
    }
}

#[test]
fn decomposition_rejects_unknown_agents() {
    let f = build_pmo();
    let agents: Vec<_> = f.spec.mas.agents.iter().filter(|a| a.id != "PP").cloned().collect();
    assert!(decompose(&f.derivation.simplified, &agents, &f.spec.derive_options()).is_err());
}
