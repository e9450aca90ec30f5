#![allow(dead_code)]

use std::path::PathBuf;

use fairdiff::synth::Scenario;
use fairdiff::tree::{Atom, TreeNode};
use fairdiff::{AuditConfig, ObservationTable};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data").join(name)
}

pub fn compas_config() -> AuditConfig {
    AuditConfig::load(&data_path("compas_fpr.toml")).expect("COMPAS fixture config")
}

pub fn compas_table(config: &AuditConfig) -> ObservationTable {
    fairdiff::ingest(&data_path("compas-scores-two-years.csv"), config).expect("COMPAS data")
}

pub fn scenario(name: &str) -> Scenario {
    let text = std::fs::read_to_string(data_path(name)).expect("scenario file");
    Scenario::from_toml_str(&text).expect("scenario parses")
}

/// Every node of the grown tree, pruned subtrees included.
pub fn all_nodes(root: &TreeNode) -> Vec<&TreeNode> {
    fn walk<'a>(n: &'a TreeNode, out: &mut Vec<&'a TreeNode>) {
        out.push(n);
        n.children.iter().for_each(|c| walk(c, out));
    }
    let mut out = Vec::new();
    walk(root, &mut out);
    out
}

/// Atom as (covariate, sorted levels) for order-insensitive comparison.
pub fn level_set(atom: &Atom) -> Option<(String, Vec<String>)> {
    match atom {
        Atom::Levels { covariate, levels, .. } => {
            let mut l = levels.clone();
            l.sort();
            Some((covariate.clone(), l))
        }
        Atom::Threshold { .. } => None,
    }
}
