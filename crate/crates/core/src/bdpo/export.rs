//! JSON and Graphviz renderings of block-decomposed plans.

use std::fmt::Write as _;

use serde_json::{json, Value};

use super::{BdpoPlan, BlockId, BlockKind};

impl BdpoPlan {
    /// A JSON description of steps, links, blocks (with profiles) and the
    /// reasoned orderings of every level.
    pub fn to_json(&self) -> Value {
        let steps: Vec<Value> = self
            .steps
            .iter()
            .map(|(id, s)| json!({"id": id.to_string(), "name": s.op.name, "operator": s.source, "cost": s.op.cost}))
            .collect();
        let links: Vec<Value> = self
            .links
            .iter()
            .map(|l| json!({"producer": l.producer.to_string(), "fact": l.fact, "consumer": l.consumer.to_string()}))
            .collect();
        let blocks: Vec<Value> = self
            .blocks
            .iter()
            .map(|(&id, b)| {
                let kind = match &b.kind {
                    BlockKind::Primitive(s) => json!({"primitive": s.to_string()}),
                    BlockKind::Compound(ch) => json!({"compound": ch.iter().map(ToString::to_string).collect::<Vec<_>>()}),
                };
                json!({
                    "id": id.to_string(),
                    "kind": kind,
                    "parent": b.parent.map(|p| p.to_string()),
                    "profile": self.profile(id),
                })
            })
            .collect();
        let orderings: Vec<Value> = self
            .reasons
            .iter()
            .map(|((a, b), r)| {
                json!({
                    "before": a.to_string(),
                    "after": b.to_string(),
                    "reasons": r.iter().map(ToString::to_string).collect::<Vec<_>>(),
                })
            })
            .collect();
        let flex = self.flex();
        json!({
            "steps": steps,
            "links": links,
            "blocks": blocks,
            "orderings": orderings,
            "cost": self.cost(),
            "flex": {"unordered_pairs": flex.unordered_pairs, "total_pairs": flex.total_pairs},
        })
    }

    /// A Graphviz rendering with one cluster per compound block and one edge
    /// per reasoned block ordering.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph bdpo {\n  compound=true;\n  rankdir=TB;\n  node [shape=box];\n");
        for b in self.children(None) {
            self.dot_block(b, 1, &mut out);
        }
        for ((a, b), reasons) in &self.reasons {
            let (ra, rb) = (self.representative(*a), self.representative(*b));
            let mut attrs = vec![format!(
                "label=\"{}\"",
                reasons.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
            )];
            if self.is_compound(*a) {
                attrs.push(format!("ltail=\"cluster_{}\"", a.0));
            }
            if self.is_compound(*b) {
                attrs.push(format!("lhead=\"cluster_{}\"", b.0));
            }
            let _ = writeln!(out, "  \"{ra}\" -> \"{rb}\" [{}];", attrs.join(", "));
        }
        out.push_str("}\n");
        out
    }

    fn dot_block(&self, b: BlockId, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match &self.blocks[&b].kind {
            BlockKind::Primitive(s) => {
                let _ = writeln!(out, "{pad}\"{s}\" [label=\"{}\"];", self.steps[s].op.name);
            }
            BlockKind::Compound(_) => {
                let _ = writeln!(out, "{pad}subgraph \"cluster_{}\" {{\n{pad}  label=\"{b}\";", b.0);
                for c in self.children(Some(b)) {
                    self.dot_block(c, indent + 1, out);
                }
                let _ = writeln!(out, "{pad}}}");
            }
        }
    }
}
