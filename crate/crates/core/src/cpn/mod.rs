//! Colored Petri nets with role/procedure labelled transitions.
//!
//! A [`Net`] is a bipartite graph of [`Place`]s and [`Transition`]s. Every
//! transition names the actor that performs it and the knowledge procedure it
//! runs. Arc labels are plain variables: an in-arc binds one input token of the
//! procedure, an out-arc receives one of its outputs.
//!
//! Transitions come in three kinds. Work transitions are autonomous. Reception
//! transitions are additionally gated by an [`EventGuard`]: they fire only
//! when the head message of a channel carries the expected action. Emission
//! transitions hand their input tokens to a channel as a message.

mod explore;
mod firing;
mod marking;
mod validate;

pub use explore::{explore, DEFAULT_STATE_CAP, DepthCount, ExploreConfig, ExploreError, OutputStub, CanonicalStub, Occurrence, Scheduler, Trace};
pub use firing::{check_enabled, enabled, fire, fire_autonomous, Enabling, FireError, Firing};
pub use marking::{Binding, Marking};
pub use validate::{validate_net, is_identifier, Rule, ValidationReport, Violation};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::messaging::{ChannelKey, Performative};

/// Kind of a scalar record field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Text,
    Integer,
    Identifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDecl {
    pub name: String,
    pub kind: ValueKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorKind {
    Atom,
    Record,
}

/// A color set: the type of the tokens a place may hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorSet {
    pub name: String,
    pub kind: ColorKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldDecl>,
}

impl ColorSet {
    pub fn atom(name: impl Into<String>) -> Self {
        ColorSet {
            name: name.into(),
            kind: ColorKind::Atom,
            fields: Vec::new(),
        }
    }

    pub fn record(name: impl Into<String>, fields: &[(&str, ValueKind)]) -> Self {
        ColorSet {
            name: name.into(),
            kind: ColorKind::Record,
            fields: fields
                .iter()
                .map(|(n, k)| FieldDecl {
                    name: (*n).to_string(),
                    kind: *k,
                })
                .collect(),
        }
    }

    /// Does `value` conform to this color set?
    pub fn admits(&self, value: &TokenValue) -> bool {
        match (self.kind, value) {
            (ColorKind::Atom, TokenValue::Atom(tag)) => !tag.is_empty(),
            (ColorKind::Record, TokenValue::Record(fields)) => {
                fields.len() == self.fields.len()
                    && self.fields.iter().all(|decl| match fields.get(&decl.name) {
                        Some(Scalar::Int(_)) => decl.kind == ValueKind::Integer,
                        Some(Scalar::Str(s)) => match decl.kind {
                            ValueKind::Text => true,
                            ValueKind::Identifier => is_identifier(s),
                            ValueKind::Integer => false,
                        },
                        None => false,
                    })
            }
            _ => false,
        }
    }

    /// Builds a value of this color set from a single scalar. Atoms take the
    /// text as their tag; records put it in their first field and fill the
    /// remaining fields with defaults.
    pub fn value_from_scalar(&self, text: &str) -> TokenValue {
        match self.kind {
            ColorKind::Atom => TokenValue::Atom(text.to_string()),
            ColorKind::Record => {
                let mut fields = BTreeMap::new();
                for (i, decl) in self.fields.iter().enumerate() {
                    let v = if i == 0 {
                        match decl.kind {
                            ValueKind::Integer => Scalar::Int(text.parse().unwrap_or(0)),
                            _ => Scalar::Str(text.to_string()),
                        }
                    } else {
                        default_scalar(decl.kind)
                    };
                    fields.insert(decl.name.clone(), v);
                }
                TokenValue::Record(fields)
            }
        }
    }

    /// The fixed token used when procedure results are stubbed out.
    pub fn canonical_value(&self) -> TokenValue {
        match self.kind {
            ColorKind::Atom => TokenValue::Atom("c".into()),
            ColorKind::Record => TokenValue::Record(
                self.fields
                    .iter()
                    .map(|d| (d.name.clone(), default_scalar(d.kind)))
                    .collect(),
            ),
        }
    }
}

fn default_scalar(kind: ValueKind) -> Scalar {
    match kind {
        ValueKind::Integer => Scalar::Int(0),
        ValueKind::Text | ValueKind::Identifier => Scalar::Str("c".into()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Int(i64),
    Str(String),
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Str(s) => f.write_str(s),
        }
    }
}

/// The value carried by a token: an atom tag or a record of scalars.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TokenValue {
    Atom(String),
    Record(BTreeMap<String, Scalar>),
}

impl TokenValue {
    pub fn id(id: &str) -> Self {
        TokenValue::Record(BTreeMap::from([("id".to_string(), Scalar::Str(id.to_string()))]))
    }
}

impl fmt::Display for TokenValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenValue::Atom(tag) => f.write_str(tag),
            TokenValue::Record(fields) => {
                f.write_str("{")?;
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

/// A colored token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Token {
    pub colorset: String,
    pub value: TokenValue,
}

impl Token {
    pub fn new(colorset: impl Into<String>, value: TokenValue) -> Self {
        Token {
            colorset: colorset.into(),
            value,
        }
    }

    /// Single-scalar rendering: an atom's tag, or a record's first field.
    pub fn scalar(&self) -> String {
        match &self.value {
            TokenValue::Atom(tag) => tag.clone(),
            TokenValue::Record(fields) => fields
                .get("id")
                .or_else(|| fields.values().next())
                .map(|s| s.to_string())
                .unwrap_or_default(),
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.colorset, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Place {
    pub id: String,
    pub colorset: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial: Vec<TokenValue>,
}

impl Place {
    pub fn new(id: impl Into<String>, colorset: impl Into<String>) -> Self {
        Place {
            id: id.into(),
            colorset: colorset.into(),
            initial: Vec::new(),
        }
    }

    pub fn with_initial(mut self, values: impl IntoIterator<Item = TokenValue>) -> Self {
        self.initial.extend(values);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionKind {
    #[default]
    Work,
    Emission,
    Reception,
}

impl TransitionKind {
    fn is_work(&self) -> bool {
        *self == TransitionKind::Work
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransitionKind::Work => "work",
            TransitionKind::Emission => "emission",
            TransitionKind::Reception => "reception",
        })
    }
}

/// Gate of a reception transition: the head message of `channel` must carry
/// `action`. `sensor` is the receiving agent's communication sensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventGuard {
    pub channel: ChannelKey,
    pub action: String,
    pub sensor: String,
}

/// Message produced by an emission transition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Emit {
    pub channel: ChannelKey,
    pub performative: Performative,
    pub action: String,
    pub sensor: String,
}

/// Name of the communication sensor of an agent.
pub fn sensor_of(agent: &str) -> String {
    format!("{agent}S")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub id: String,
    pub actor: String,
    pub procedure: String,
    #[serde(default, skip_serializing_if = "TransitionKind::is_work")]
    pub kind: TransitionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<EventGuard>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emit: Option<Emit>,
}

impl Transition {
    pub fn work(id: impl Into<String>, actor: impl Into<String>, procedure: impl Into<String>) -> Self {
        Transition {
            id: id.into(),
            actor: actor.into(),
            procedure: procedure.into(),
            kind: TransitionKind::Work,
            guard: None,
            emit: None,
        }
    }

    /// Display label. Work transitions read `actor.procedure`; communication
    /// transitions carry the sensor naming (`<R>S.AE` for emissions, `<R>S`
    /// for receptions).
    pub fn label(&self) -> String {
        match self.kind {
            TransitionKind::Work => format!("{}.{}", self.actor, self.procedure),
            TransitionKind::Emission => match &self.emit {
                Some(e) => format!("{}.AE", e.sensor),
                None => self.id.split(':').next().unwrap_or(&self.id).to_string(),
            },
            TransitionKind::Reception => match &self.guard {
                Some(g) => g.sensor.clone(),
                None => self.id.split(':').next().unwrap_or(&self.id).to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arc {
    pub place: String,
    pub transition: String,
    pub direction: Direction,
    pub label: String,
}

impl Arc {
    pub fn input(place: &str, transition: &str, label: &str) -> Self {
        Arc {
            place: place.into(),
            transition: transition.into(),
            direction: Direction::In,
            label: label.into(),
        }
    }

    pub fn output(transition: &str, place: &str, label: &str) -> Self {
        Arc {
            place: place.into(),
            transition: transition.into(),
            direction: Direction::Out,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Net {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub colorsets: Vec<ColorSet>,
    #[serde(default)]
    pub places: Vec<Place>,
    #[serde(default)]
    pub transitions: Vec<Transition>,
    #[serde(default)]
    pub arcs: Vec<Arc>,
}

impl Net {
    pub fn new(id: impl Into<String>) -> Self {
        Net {
            id: id.into(),
            ..Net::default()
        }
    }

    pub fn colorset(&self, name: &str) -> Option<&ColorSet> {
        self.colorsets.iter().find(|c| c.name == name)
    }

    pub fn place(&self, id: &str) -> Option<&Place> {
        self.places.iter().find(|p| p.id == id)
    }

    pub fn transition(&self, id: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.id == id)
    }

    pub fn place_colorset(&self, place: &str) -> Option<&ColorSet> {
        self.place(place).and_then(|p| self.colorset(&p.colorset))
    }

    pub fn in_arcs<'a>(&'a self, transition: &'a str) -> impl Iterator<Item = &'a Arc> + 'a {
        self.arcs
            .iter()
            .filter(move |a| a.transition == transition && a.direction == Direction::In)
    }

    pub fn out_arcs<'a>(&'a self, transition: &'a str) -> impl Iterator<Item = &'a Arc> + 'a {
        self.arcs
            .iter()
            .filter(move |a| a.transition == transition && a.direction == Direction::Out)
    }

    /// Distinct out-arc labels in declaration order.
    pub fn out_labels<'a>(&'a self, transition: &'a str) -> Vec<&'a str> {
        let mut labels: Vec<&str> = Vec::new();
        for a in self.out_arcs(transition) {
            if !labels.contains(&a.label.as_str()) {
                labels.push(&a.label);
            }
        }
        labels
    }

    pub fn initial_marking(&self) -> Marking {
        let mut m = Marking::new();
        for p in &self.places {
            for v in &p.initial {
                m.add(&p.id, Token::new(p.colorset.clone(), v.clone()));
            }
        }
        m
    }

    pub fn work_transitions(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| t.kind == TransitionKind::Work)
    }

    /// Number of transitions per kind: (work, emission, reception).
    pub fn kind_counts(&self) -> (usize, usize, usize) {
        self.transitions.iter().fold((0, 0, 0), |(w, e, r), t| match t.kind {
            TransitionKind::Work => (w + 1, e, r),
            TransitionKind::Emission => (w, e + 1, r),
            TransitionKind::Reception => (w, e, r + 1),
        })
    }
}
