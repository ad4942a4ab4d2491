//! DOT rendering of a trust graph, one labeled edge per relation.

use std::fmt::Write as _;

use tmsim_core::trust_graph::{ContextClass, TrustGraph};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Edge label `<c, v, t>`: `c1` for validity, `c2` for authenticator trust,
/// the value, and the Lamport counter.
pub fn edge_label(class: ContextClass, value: f64, counter: u64) -> String {
    let c = match class {
        ContextClass::Validity => "c1",
        ContextClass::AuthenticatorTrust => "c2",
    };
    format!("<{c},{value},t{counter}>")
}

pub fn to_dot(name: &str, graph: &TrustGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(name));
    for v in graph.vertices() {
        let _ = writeln!(out, "  {};", quote(v.as_str()));
    }
    for r in graph.relations() {
        let _ = writeln!(
            out,
            "  {} -> {} [label={}, subject={}];",
            quote(r.trustor.as_str()),
            quote(r.trustee.as_str()),
            quote(&edge_label(r.context.class(), r.value.get(), r.time.counter)),
            quote(&r.context.subject().canonical())
        );
    }
    out.push_str("}\n");
    out
}
