use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::{ColorKind, Direction, Net, TransitionKind};
use crate::cpn::sensor_of;

/// Structural rule a net element can break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    DuplicateColorSet,
    DuplicateField,
    AtomWithFields,
    DuplicatePlace,
    UnknownColorSet,
    NonConformingToken,
    DuplicateTransition,
    ReceptionWithoutGuard,
    GuardedWork,
    EmitOnNonEmission,
    SensorNaming,
    NoInput,
    DanglingPlace,
    DanglingTransition,
    EmptyLabel,
    DuplicateInLabel,
    LabelColorConflict,
    DuplicateRole,
    UnknownRole,
    SelfPair,
    UndeclaredActor,
    DuplicateAgent,
    NoRoles,
    RoleUnattributed,
    RoleAttributedTwice,
    UndeclaredProcedure,
    DuplicateProcedure,
    BadIdentifier,
    UnknownPlace,
    UnknownAgent,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Offending element, e.g. `place:Pg` or `arc#3`.
    pub element: String,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.element, self.rule, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, element: impl Into<String>, rule: Rule, message: impl Into<String>) {
        self.violations.push(Violation {
            element: element.into(),
            rule,
            message: message.into(),
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// ASCII identifier: a letter or `_`, then letters, digits or `_`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Checks every structural invariant of `net`. Violations are reported, never
/// raised.
pub fn validate_net(net: &Net) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen = BTreeSet::new();
    for cs in &net.colorsets {
        if !seen.insert(cs.name.as_str()) {
            report.push(format!("colorset:{}", cs.name), Rule::DuplicateColorSet, "color set declared twice");
        }
        if cs.kind == ColorKind::Atom && !cs.fields.is_empty() {
            report.push(format!("colorset:{}", cs.name), Rule::AtomWithFields, "atom color sets have no fields");
        }
        let mut fields = BTreeSet::new();
        for f in &cs.fields {
            if !fields.insert(f.name.as_str()) {
                report.push(
                    format!("colorset:{}", cs.name),
                    Rule::DuplicateField,
                    format!("field `{}` declared twice", f.name),
                );
            }
        }
    }

    let mut places = BTreeSet::new();
    for p in &net.places {
        let el = format!("place:{}", p.id);
        if !places.insert(p.id.as_str()) {
            report.push(&el, Rule::DuplicatePlace, "place declared twice");
        }
        match net.colorset(&p.colorset) {
            None => report.push(&el, Rule::UnknownColorSet, format!("unknown color set `{}`", p.colorset)),
            Some(cs) => {
                for v in &p.initial {
                    if !cs.admits(v) {
                        report.push(
                            &el,
                            Rule::NonConformingToken,
                            format!("initial token {v} does not conform to `{}`", cs.name),
                        );
                    }
                }
            }
        }
    }

    let mut transitions = BTreeSet::new();
    for t in &net.transitions {
        let el = format!("transition:{}", t.id);
        if !transitions.insert(t.id.as_str()) {
            report.push(&el, Rule::DuplicateTransition, "transition declared twice");
        }
        let has_input = net.in_arcs(&t.id).next().is_some();
        match t.kind {
            TransitionKind::Work if t.guard.is_some() => {
                report.push(&el, Rule::GuardedWork, "work transitions are not event-gated");
            }
            TransitionKind::Reception if t.guard.is_none() && !has_input => {
                report.push(&el, Rule::ReceptionWithoutGuard, "reception needs an event guard");
                continue;
            }
            _ => {}
        }
        if t.emit.is_some() && t.kind != TransitionKind::Emission {
            report.push(&el, Rule::EmitOnNonEmission, "only emissions send messages");
        }
        if let Some(g) = &t.guard {
            if g.sensor != sensor_of(&g.channel.receiver) {
                report.push(
                    &el,
                    Rule::SensorNaming,
                    format!("guard sensor `{}` should be `{}`", g.sensor, sensor_of(&g.channel.receiver)),
                );
            }
        }
        if let Some(e) = &t.emit {
            if e.sensor != sensor_of(&e.channel.receiver) {
                report.push(
                    &el,
                    Rule::SensorNaming,
                    format!("emission sensor `{}` should be `{}`", e.sensor, sensor_of(&e.channel.receiver)),
                );
            }
        }
        if !has_input && t.guard.is_none() {
            report.push(&el, Rule::NoInput, "transition has neither an input arc nor a guard");
        }
    }

    let mut in_labels: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut out_label_colors: BTreeMap<(&str, &str), &str> = BTreeMap::new();
    for (i, a) in net.arcs.iter().enumerate() {
        let el = format!("arc#{i}({}->{})", a.place, a.transition);
        let place = net.place(&a.place);
        if place.is_none() {
            report.push(&el, Rule::DanglingPlace, format!("no place `{}`", a.place));
        }
        if net.transition(&a.transition).is_none() {
            report.push(&el, Rule::DanglingTransition, format!("no transition `{}`", a.transition));
        }
        if a.label.is_empty() {
            report.push(&el, Rule::EmptyLabel, "arc label is empty");
            continue;
        }
        match a.direction {
            Direction::In => {
                if !in_labels.insert((&a.transition, &a.label)) {
                    report.push(
                        &el,
                        Rule::DuplicateInLabel,
                        format!("label `{}` binds two inputs of `{}`", a.label, a.transition),
                    );
                }
            }
            Direction::Out => {
                if let Some(p) = place {
                    let prev = out_label_colors.entry((&a.transition, &a.label)).or_insert(&p.colorset);
                    if *prev != p.colorset {
                        report.push(
                            &el,
                            Rule::LabelColorConflict,
                            format!("output `{}` routed to places of different color sets", a.label),
                        );
                    }
                }
            }
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpn::{Arc, ColorSet, EventGuard, Place, Transition};
    use crate::messaging::ChannelKey;

    fn tiny() -> Net {
        let mut net = Net::new("tiny");
        net.colorsets.push(ColorSet::atom("C"));
        net.places.push(Place::new("a", "C"));
        net.places.push(Place::new("b", "C"));
        net.transitions.push(Transition::work("t", "X", "Do"));
        net.arcs.push(Arc::input("a", "t", "x"));
        net.arcs.push(Arc::output("t", "b", "y"));
        net
    }

    #[test]
    fn tiny_net_is_valid() {
        assert!(validate_net(&tiny()).is_valid());
    }

    #[test]
    fn dangling_arc_is_one_violation_citing_the_arc() {
        let mut net = tiny();
        net.arcs.push(Arc::input("missing", "t", "z"));
        let r = validate_net(&net);
        assert_eq!(r.len(), 1, "{r}");
        assert_eq!(r.violations[0].rule, Rule::DanglingPlace);
        assert!(r.violations[0].element.starts_with("arc#2"));
    }

    #[test]
    fn unguarded_reception_is_one_violation() {
        let mut net = tiny();
        let mut r = Transition::work("recv", "X", "AR");
        r.kind = TransitionKind::Reception;
        net.transitions.push(r);
        net.arcs.push(Arc::output("recv", "a", "par"));
        let report = validate_net(&net);
        assert_eq!(report.len(), 1, "{report}");
        assert_eq!(report.violations[0].rule, Rule::ReceptionWithoutGuard);
    }

    #[test]
    fn guarded_work_and_bad_sensor_are_reported() {
        let mut net = tiny();
        net.transitions[0].guard = Some(EventGuard {
            channel: ChannelKey::new("A", "X"),
            action: "Do".into(),
            sensor: "AS".into(),
        });
        let rules: Vec<Rule> = validate_net(&net).iter().map(|v| v.rule).collect();
        assert!(rules.contains(&Rule::GuardedWork));
        assert!(rules.contains(&Rule::SensorNaming));
    }

    #[test]
    fn non_conforming_initial_token() {
        let mut net = tiny();
        net.places[0].initial.push(crate::cpn::TokenValue::id("nope"));
        let r = validate_net(&net);
        assert_eq!(r.violations[0].rule, Rule::NonConformingToken);
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("WP"));
        assert!(is_identifier("_x1"));
        assert!(!is_identifier("1x"));
        assert!(!is_identifier("a-b"));
        assert!(!is_identifier(""));
    }
}
