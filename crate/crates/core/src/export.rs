//! Tree serialisation: JSON (round-trippable), Graphviz DOT and an indented
//! text outline.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{InstabilityTree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Dot,
    Text,
}

pub fn export_tree(tree: &InstabilityTree, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Json => to_json(tree).into_bytes(),
        ExportFormat::Dot => to_dot(tree).into_bytes(),
        ExportFormat::Text => to_text(tree).into_bytes(),
    }
}

pub fn to_json(tree: &InstabilityTree) -> String {
    let mut s = serde_json::to_string_pretty(tree).expect("tree serialises");
    s.push('\n');
    s
}

pub fn from_json(s: &str) -> Result<InstabilityTree> {
    let tree: InstabilityTree = serde_json::from_str(s).map_err(|e| Error::Serde(e.to_string()))?;
    if tree.schema_version != crate::tree::SCHEMA_VERSION {
        return Err(Error::Serde(format!("unsupported schema version {}", tree.schema_version)));
    }
    Ok(tree)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.digits$}"))
}

/// The child's effective condition on the split covariate: its folded
/// predicate atoms, which exclude levels ruled out higher up.
fn edge_label(child: &TreeNode, covariate: &str) -> String {
    child
        .predicate
        .atoms
        .iter()
        .filter(|a| a.covariate() == covariate)
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join(" & ")
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz digraph; pruned subtrees are drawn dashed.
pub fn to_dot(tree: &InstabilityTree) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph instability_tree {{");
    let _ = writeln!(out, "  node [shape=box, fontname=\"Helvetica\"];");
    fn walk(node: &TreeNode, inside_pruned: bool, out: &mut String) {
        let title = match &node.split {
            Some(s) if !node.children.is_empty() => s.covariate.clone(),
            _ => "leaf".to_string(),
        };
        let style = if inside_pruned { ", style=dashed" } else { "" };
        let _ = writeln!(
            out,
            "  n{} [label=\"{}: {}\\nn_cond = {}\\ndelta = {}\"{}];",
            node.id,
            node.id,
            dot_escape(&title),
            node.n_cond(),
            fmt_opt(node.delta, 3),
            style
        );
        if let Some(split) = &node.split {
            for child in &node.children {
                walk(child, inside_pruned || node.pruned, out);
                let _ = writeln!(
                    out,
                    "  n{} -> n{} [label=\"{}\\np = {:.3e}\"{}];",
                    node.id,
                    child.id,
                    dot_escape(&edge_label(child, &split.covariate)),
                    split.p_bonferroni,
                    if inside_pruned || node.pruned { ", style=dashed" } else { "" }
                );
            }
        }
    }
    walk(&tree.root, false, &mut out);
    let _ = writeln!(out, "}}");
    out
}

/// Indented outline of the effective tree.
pub fn to_text(tree: &InstabilityTree) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "metric = {}; sensitive = {} ({} vs {}); m1 = {}; m2 = {}",
        tree.metric, tree.sensitive.column, tree.sensitive.a1, tree.sensitive.a2, tree.model_a, tree.model_b
    );
    fn walk(node: &TreeNode, label: &str, out: &mut String) {
        let indent = "  ".repeat(node.depth);
        let _ = write!(
            out,
            "{indent}[{}] {label}: n = {}, n_cond = {}/{}, delta = {}",
            node.id,
            node.n,
            node.n_cond_a1,
            node.n_cond_a2,
            fmt_opt(node.delta, 4)
        );
        if node.is_leaf() {
            if node.pruned {
                let _ = write!(out, " (pruned)");
            }
            out.push('\n');
            return;
        }
        let split = node.split.as_ref().expect("internal node has a split");
        let _ = writeln!(
            out,
            " | split on {} (T = {:.3}, df = {}, p = {:.3e})",
            split.covariate, split.statistic, split.df, split.p_bonferroni
        );
        for child in &node.children {
            walk(child, &edge_label(child, &split.covariate), out);
        }
    }
    walk(&tree.root, "Overall", &mut out);
    out
}
