use std::collections::BTreeMap;

use thiserror::Error;

use super::{Binding, Marking, Net, Token, Transition, TransitionKind};
use crate::messaging::{Channels, Message, MessagingError};

/// One enabled occurrence: a transition and a binding of its labels.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Enabling {
    pub transition: String,
    pub binding: Binding,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FireError {
    #[error("unknown transition `{0}`")]
    UnknownTransition(String),
    #[error("transition `{0}` is not enabled under the given binding")]
    NotEnabled(String),
    #[error("result of `{transition}` lacks output `{label}`")]
    MissingOutput { transition: String, label: String },
    #[error("output `{label}` of `{transition}` is a `{found}` token, place expects `{expected}`")]
    OutputMismatch {
        transition: String,
        label: String,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Send(#[from] MessagingError),
}

/// State after an occurrence. `received` is the message a reception
/// consumed, `sent` the one an emission produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Firing {
    pub marking: Marking,
    pub inbox: Channels,
    pub received: Option<Message>,
    pub sent: Option<Message>,
}

/// Every enabled (transition, binding) pair, in transition declaration order
/// and then FIFO token order. Equal bindings are reported once.
pub fn enabled(net: &Net, marking: &Marking, inbox: &Channels) -> Vec<Enabling> {
    let mut out = Vec::new();
    for t in &net.transitions {
        let Some(seed) = guard_binding(net, t, inbox) else {
            continue;
        };
        let arcs: Vec<(&str, &str)> = net.in_arcs(&t.id).map(|a| (a.place.as_str(), a.label.as_str())).collect();
        let mut bindings = Vec::new();
        let mut used: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        enumerate(&arcs, 0, marking, &mut used, &mut seed.clone(), &mut bindings);
        for b in bindings {
            let e = Enabling {
                transition: t.id.clone(),
                binding: b,
            };
            if !out.contains(&e) {
                out.push(e);
            }
        }
    }
    out
}

fn enumerate<'a>(
    arcs: &[(&'a str, &'a str)],
    i: usize,
    marking: &Marking,
    used: &mut BTreeMap<&'a str, Vec<usize>>,
    current: &mut Binding,
    out: &mut Vec<Binding>,
) {
    let Some(&(place, label)) = arcs.get(i) else {
        out.push(current.clone());
        return;
    };
    for (idx, token) in marking.tokens(place).iter().enumerate() {
        if used.get(place).is_some_and(|u| u.contains(&idx)) {
            continue;
        }
        used.entry(place).or_default().push(idx);
        current.insert(label, token.clone());
        enumerate(arcs, i + 1, marking, used, current, out);
        current.0.remove(label);
        used.get_mut(place).map(Vec::pop);
    }
}

/// For guarded transitions, the head message must carry the guard's action;
/// its parameters are bound to the out-arc labels in order. Returns the
/// partial binding, or `None` if the guard blocks.
fn guard_binding(net: &Net, t: &Transition, inbox: &Channels) -> Option<Binding> {
    let Some(guard) = &t.guard else {
        return Some(Binding::new());
    };
    let head = inbox.head(&guard.channel)?;
    if head.action != guard.action {
        return None;
    }
    let labels = net.out_labels(&t.id);
    if labels.len() != head.params.len() {
        return None;
    }
    let mut b = Binding::new();
    for (label, token) in labels.iter().zip(&head.params) {
        let expected = net.out_arcs(&t.id).find(|a| a.label == *label).and_then(|a| net.place(&a.place));
        if expected.is_some_and(|p| p.colorset != token.colorset) {
            return None;
        }
        b.insert(*label, token.clone());
    }
    Some(b)
}

/// Checks a single occurrence without enumerating every binding.
pub fn check_enabled(net: &Net, marking: &Marking, inbox: &Channels, t: &str, binding: &Binding) -> Result<(), FireError> {
    let tr = net.transition(t).ok_or_else(|| FireError::UnknownTransition(t.to_string()))?;
    let not_enabled = || FireError::NotEnabled(t.to_string());
    let seed = guard_binding(net, tr, inbox).ok_or_else(not_enabled)?;
    for (label, token) in seed.iter() {
        if binding.get(label) != Some(token) {
            return Err(not_enabled());
        }
    }
    let mut needed: BTreeMap<&str, Vec<&Token>> = BTreeMap::new();
    for a in net.in_arcs(t) {
        let token = binding.get(&a.label).ok_or_else(not_enabled)?;
        needed.entry(&a.place).or_default().push(token);
    }
    for (place, tokens) in needed {
        let mut available: Vec<&Token> = marking.tokens(place).iter().collect();
        for tok in tokens {
            let pos = available.iter().position(|a| *a == tok).ok_or_else(not_enabled)?;
            available.swap_remove(pos);
        }
    }
    Ok(())
}

/// Fires `t` under `binding`. Work transitions take their outputs from
/// `result`; communication transitions may also pass bound tokens through.
/// Inputs are never mutated.
pub fn fire(
    net: &Net,
    marking: &Marking,
    inbox: &Channels,
    t: &str,
    binding: &Binding,
    result: &Binding,
) -> Result<Firing, FireError> {
    check_enabled(net, marking, inbox, t, binding)?;
    let tr = net.transition(t).expect("checked above");

    let mut outputs = Vec::new();
    for a in net.out_arcs(t) {
        let token = result
            .get(&a.label)
            .or_else(|| (tr.kind != TransitionKind::Work).then(|| binding.get(&a.label)).flatten())
            .ok_or_else(|| FireError::MissingOutput {
                transition: t.to_string(),
                label: a.label.clone(),
            })?;
        let place = net.place(&a.place).ok_or_else(|| FireError::NotEnabled(t.to_string()))?;
        if place.colorset != token.colorset {
            return Err(FireError::OutputMismatch {
                transition: t.to_string(),
                label: a.label.clone(),
                expected: place.colorset.clone(),
                found: token.colorset.clone(),
            });
        }
        outputs.push((a.place.as_str(), token.clone()));
    }

    let mut next = marking.clone();
    for a in net.in_arcs(t) {
        let token = binding.get(&a.label).expect("checked above");
        next.remove(&a.place, token);
    }
    for (place, token) in outputs {
        next.add(place, token);
    }

    let mut inbox = inbox.clone();
    let received = match &tr.guard {
        Some(g) => Some(inbox.receive_on(&g.channel, &g.action).ok_or_else(|| FireError::NotEnabled(t.to_string()))?),
        None => None,
    };
    let sent = match &tr.emit {
        Some(e) => {
            let params = net.in_arcs(t).filter_map(|a| binding.get(&a.label).cloned()).collect();
            let mut msg = Message::new(&e.channel.sender, &e.channel.receiver, e.performative, &e.action, params);
            msg.seq = inbox.send(msg.clone())?;
            Some(msg)
        }
        None => None,
    };

    Ok(Firing {
        marking: next,
        inbox,
        received,
        sent,
    })
}

/// [`fire`] for nets without channels; any emitted message is discarded.
pub fn fire_autonomous(net: &Net, marking: &Marking, t: &str, binding: &Binding, result: &Binding) -> Result<Marking, FireError> {
    fire(net, marking, &Channels::new(), t, binding, result).map(|f| f.marking)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpn::{Arc, ColorSet, EventGuard, Place, TokenValue, ValueKind};
    use crate::messaging::{ChannelKey, Performative};

    fn design_net() -> Net {
        let mut net = Net::new("design");
        net.colorsets.push(ColorSet::record("Dem", &[("id", ValueKind::Text)]));
        net.colorsets.push(ColorSet::record("S", &[("id", ValueKind::Text)]));
        net.places.push(Place::new("Dem", "Dem"));
        net.places.push(Place::new("S", "S"));
        net.transitions.push(Transition::work("Des", "WP", "Des"));
        net.arcs.push(Arc::input("Dem", "Des", "Dem"));
        net.arcs.push(Arc::output("Des", "S", "S"));
        net
    }

    fn dem(id: &str) -> Token {
        Token::new("Dem", TokenValue::id(id))
    }

    #[test]
    fn empty_marking_enables_nothing() {
        assert!(enabled(&design_net(), &Marking::new(), &Channels::new()).is_empty());
    }

    #[test]
    fn demand_token_enables_design() {
        let mut m = Marking::new();
        m.add("Dem", dem("dem1"));
        let e = enabled(&design_net(), &m, &Channels::new());
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].transition, "Des");
        assert_eq!(e[0].binding.get("Dem"), Some(&dem("dem1")));
    }

    #[test]
    fn fire_design_moves_one_token() {
        let net = design_net();
        let mut m = Marking::new();
        m.add("Dem", dem("dem1"));
        let b = enabled(&net, &m, &Channels::new()).remove(0).binding;
        let result: Binding = [("S", Token::new("S", TokenValue::id("s1")))].into_iter().collect();
        let next = fire_autonomous(&net, &m, "Des", &b, &result).unwrap();
        assert_eq!(next.count("Dem"), 0);
        assert_eq!(next.count("S"), 1);
        assert_eq!(m.count("Dem"), 1, "input marking untouched");
    }

    #[test]
    fn disabled_and_missing_output_errors() {
        let net = design_net();
        let b: Binding = [("Dem", dem("dem1"))].into_iter().collect();
        assert_eq!(
            fire_autonomous(&net, &Marking::new(), "Des", &b, &Binding::new()),
            Err(FireError::NotEnabled("Des".into()))
        );
        let mut m = Marking::new();
        m.add("Dem", dem("dem1"));
        assert!(matches!(
            fire_autonomous(&net, &m, "Des", &b, &Binding::new()),
            Err(FireError::MissingOutput { .. })
        ));
    }

    #[test]
    fn self_loop_with_identity_result_conserves_marking() {
        let mut net = Net::new("loop");
        net.colorsets.push(ColorSet::atom("C"));
        net.places.push(Place::new("p", "C"));
        net.transitions.push(Transition::work("t", "A", "Keep"));
        net.arcs.push(Arc::input("p", "t", "x"));
        net.arcs.push(Arc::output("t", "p", "x"));
        let tok = Token::new("C", TokenValue::Atom("a".into()));
        let mut m = Marking::new();
        m.add("p", tok.clone());
        let b: Binding = [("x", tok)].into_iter().collect();
        assert_eq!(fire_autonomous(&net, &m, "t", &b, &b).unwrap(), m);
    }

    #[test]
    fn duplicate_tokens_yield_one_binding_and_fifo_choice() {
        let net = design_net();
        let mut m = Marking::new();
        m.add("Dem", dem("b"));
        m.add("Dem", dem("a"));
        m.add("Dem", dem("b"));
        let e = enabled(&net, &m, &Channels::new());
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].binding.get("Dem"), Some(&dem("b")));
    }

    fn reception_net() -> Net {
        let mut net = Net::new("recv");
        net.colorsets.push(ColorSet::record("Pg", &[("id", ValueKind::Text)]));
        net.places.push(Place::new("Pg", "Pg"));
        let mut r = Transition::work("PPS:WP.Pg", "PP", "AR");
        r.kind = TransitionKind::Reception;
        r.guard = Some(EventGuard {
            channel: ChannelKey::new("WP", "PP"),
            action: "G".into(),
            sensor: "PPS".into(),
        });
        net.transitions.push(r);
        net.arcs.push(Arc::output("PPS:WP.Pg", "Pg", "par"));
        net
    }

    #[test]
    fn reception_needs_a_matching_head_message() {
        let net = reception_net();
        let mut inbox = Channels::new();
        assert!(enabled(&net, &Marking::new(), &inbox).is_empty());

        let pg = Token::new("Pg", TokenValue::id("pg1"));
        inbox
            .send(Message::new("WP", "PP", Performative::Request, "Ma", vec![pg.clone()]))
            .unwrap();
        assert!(enabled(&net, &Marking::new(), &inbox).is_empty(), "head action mismatch blocks");

        let mut inbox = Channels::new();
        inbox
            .send(Message::new("WP", "PP", Performative::Request, "G", vec![pg.clone()]))
            .unwrap();
        let e = enabled(&net, &Marking::new(), &inbox);
        assert_eq!(e.len(), 1);
        let f = fire(&net, &Marking::new(), &inbox, &e[0].transition, &e[0].binding, &Binding::new()).unwrap();
        assert_eq!(f.marking.tokens("Pg"), &[pg]);
        assert!(f.inbox.is_empty());
        assert_eq!(f.received.unwrap().seq, 1);
        assert_eq!(inbox.queued(), 1, "input inbox untouched");
    }
}
