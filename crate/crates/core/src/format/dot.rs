use std::fmt::Write;

use crate::cpn::{Direction, Net, TransitionKind};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n"))
}

/// Graphviz rendering of `net`. Places are ellipses and transitions boxes;
/// receptions are dashed and emissions name their channel. The output only
/// depends on the net's declaration order.
pub fn emit_dot(net: &Net) -> String {
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quote(&net.id)).unwrap();
    writeln!(out, "  rankdir=LR;").unwrap();
    for p in &net.places {
        let mut label = p.id.clone();
        if !p.initial.is_empty() {
            write!(label, "\n{}:{}", p.colorset, p.initial.len()).unwrap();
        }
        writeln!(out, "  {} [shape=ellipse, label={}];", quote(&format!("p:{}", p.id)), quote(&label)).unwrap();
    }
    for t in &net.transitions {
        let node = quote(&format!("t:{}", t.id));
        match (t.kind, &t.emit, &t.guard) {
            (TransitionKind::Emission, Some(e), _) => {
                let label = format!("{}\n{}", t.label(), e.channel);
                writeln!(out, "  {node} [shape=box, label={}];", quote(&label)).unwrap();
            }
            (TransitionKind::Reception, _, guard) => {
                let label = match guard {
                    Some(g) => format!("{}\n{}", t.label(), g.channel),
                    None => t.label(),
                };
                writeln!(out, "  {node} [shape=box, style=dashed, label={}];", quote(&label)).unwrap();
            }
            _ => writeln!(out, "  {node} [shape=box, label={}];", quote(&t.label())).unwrap(),
        }
    }
    for a in &net.arcs {
        let (p, t) = (quote(&format!("p:{}", a.place)), quote(&format!("t:{}", a.transition)));
        let (from, to) = match a.direction {
            Direction::In => (p, t),
            Direction::Out => (t, p),
        };
        writeln!(out, "  {from} -> {to} [label={}];", quote(&a.label)).unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpn::{Arc, ColorSet, Place, Transition};

    #[test]
    fn empty_net_has_no_nodes() {
        let dot = emit_dot(&Net::new("empty"));
        assert_eq!(dot, "digraph \"empty\" {\n  rankdir=LR;\n}\n");
    }

    #[test]
    fn shapes_and_labels() {
        let mut net = Net::new("n");
        net.colorsets.push(ColorSet::atom("C"));
        net.places.push(Place::new("a", "C"));
        net.transitions.push(Transition::work("t", "X", "Do"));
        net.arcs.push(Arc::input("a", "t", "x"));
        let dot = emit_dot(&net);
        assert!(dot.contains("\"p:a\" [shape=ellipse, label=\"a\"];"));
        assert!(dot.contains("\"t:t\" [shape=box, label=\"X.Do\"];"));
        assert!(dot.contains("\"p:a\" -> \"t:t\" [label=\"x\"];"));
        assert!(!dot.contains("dashed"));
        assert_eq!(dot, emit_dot(&net.clone()));
    }
}
