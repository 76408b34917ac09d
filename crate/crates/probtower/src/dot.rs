//! Deterministic DOT rendering of towers for graph viewers.
//!
//! The output clusters atoms by level, draws one projection edge per deeper
//! atom labeled with that atom's weight, fills the atoms of an optional
//! trace footprint, and overlays an optional level map family as dashed
//! edges. Rendering iterates everything in canonical order, so the same
//! inputs always produce byte-identical text.

use crate::tower::{ClosedTrace, LevelMapFamily, Tower};

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            _ => out.push(c),
        }
    }
    out
}

/// Renders a tower as DOT text, one cluster per level.
///
/// Projection edges run from each deeper atom to its image and carry the
/// deeper atom's weight. When a trace is given, its footprint atoms are
/// drawn filled. When a family is given, it must relate the tower to
/// itself, and each certified bijection is drawn as dashed edges between
/// the paired levels.
pub fn export_dot(
    tower: &Tower,
    trace: Option<&ClosedTrace>,
    family: Option<&LevelMapFamily>,
) -> String {
    let mut out = String::new();
    out.push_str("digraph tower {\n");
    out.push_str("  rankdir=BT;\n");
    out.push_str("  node [shape=box];\n");
    for (level, space) in tower.levels().iter().enumerate() {
        out.push_str(&format!("  subgraph cluster_level{level} {{\n"));
        out.push_str(&format!("    label=\"level {level}\";\n"));
        for (index, atom) in space.atoms().iter().enumerate() {
            let highlighted = trace
                .map(|tr| level < tr.levels() && tr.footprint(level).contains(&index))
                .unwrap_or(false);
            let style = if highlighted {
                ", style=filled, fillcolor=lightgray"
            } else {
                ""
            };
            out.push_str(&format!(
                "    n{level}_{index} [label=\"{}\\n{}\"{style}];\n",
                escape(&atom.label),
                atom.weight
            ));
        }
        out.push_str("  }\n");
    }
    for n in 0..tower.depth() {
        let bond = tower.bond(n);
        let deeper = n + 1;
        for (index, &target) in bond.map().iter().enumerate() {
            out.push_str(&format!(
                "  n{deeper}_{index} -> n{n}_{target} [label=\"{}\"];\n",
                bond.domain().weight(index)
            ));
        }
    }
    if let Some(family) = family {
        for entry in family.entries() {
            for (index, &target) in entry.map.map().iter().enumerate() {
                out.push_str(&format!(
                    "  n{}_{index} -> n{}_{target} [style=dashed, constraint=false];\n",
                    entry.level_a, entry.level_b
                ));
            }
        }
    }
    out.push_str("}\n");
    out
}
