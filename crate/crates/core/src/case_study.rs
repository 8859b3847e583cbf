//! The pieces-manufacturing society bundled as a fixture.

use crate::cpn::{Arc, Net, Place, Transition};
use crate::format::{parse_spec, SocietySpec};
use crate::pipeline::{self, Derivation};
use crate::runtime::{parse_answers, AnswerScript};

pub const PMO_SPEC: &str = include_str!("../fixtures/pmo.society.json");
pub const PMO_ANSWERS: &str = include_str!("../fixtures/answers.json");

/// Work procedures that must occur in this order in every run.
pub const ORDER_CONSTRAINTS: [(&str, &str); 5] = [("Des", "P"), ("P", "G"), ("G", "Ma"), ("Sup", "Ma"), ("Ma", "C")];

pub struct PmoFixture {
    pub spec: SocietySpec,
    pub derivation: Derivation,
    pub answers: AnswerScript,
}

pub fn pmo_spec() -> SocietySpec {
    parse_spec(PMO_SPEC).expect("bundled fixture parses")
}

pub fn build_pmo() -> PmoFixture {
    let spec = pmo_spec();
    let derivation = pipeline::derive(&spec).expect("bundled fixture derives");
    PmoFixture {
        spec,
        derivation,
        answers: parse_answers(PMO_ANSWERS).expect("bundled answers parse"),
    }
}

/// The fixture's MAS task with `n` index-suffixed replicas of every place
/// and transition. Only the first replica's demand place is marked, so the
/// simplified net is the fixture's own simplified task.
pub fn replicated_mas_task(n: usize) -> Net {
    let base = build_pmo().derivation.mas_task;
    let mut out = Net::new(base.id.clone());
    out.colorsets = base.colorsets.clone();
    for i in 1..=n.max(1) {
        let sfx = |s: &str| format!("{s}_{i}");
        for p in &base.places {
            let mut q = Place::new(sfx(&p.id), p.colorset.clone());
            if i == 1 {
                q.initial = p.initial.clone();
            }
            out.places.push(q);
        }
        for t in &base.transitions {
            out.transitions.push(Transition {
                id: sfx(&t.id),
                ..t.clone()
            });
        }
        for a in &base.arcs {
            out.arcs.push(Arc {
                place: sfx(&a.place),
                transition: sfx(&a.transition),
                direction: a.direction,
                label: sfx(&a.label),
            });
        }
    }
    out
}
