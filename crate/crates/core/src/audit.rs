//! End-to-end audit: grow, prune and tabulate.

use rayon::prelude::*;

use crate::config::AuditConfig;
use crate::error::{Error, Result};
use crate::report::DisparityReport;
use crate::table::{ObservationTable, SensitivePair};
use crate::tree::{self, InstabilityTree};

#[derive(Debug, Clone)]
pub struct AuditResult {
    pub pair: SensitivePair,
    /// Pruned tree; collapsed subtrees are retained and flagged.
    pub tree: InstabilityTree,
    pub report: DisparityReport,
}

/// Resolved settings written at the top of every report.
pub fn report_header(table: &ObservationTable, config: &AuditConfig, tree: &InstabilityTree) -> Vec<String> {
    let p = &tree.params;
    let mut h = vec![
        format!("metric = {}", tree.metric),
        format!("m1 = {} ({})", tree.model_a, config.model_a.describe()),
        format!("m2 = {} ({})", tree.model_b, config.model_b.describe()),
        format!("sensitive = {}: a1 = {}, a2 = {}", tree.sensitive.column, tree.sensitive.a1, tree.sensitive.a2),
        format!(
            "split = {}",
            config
                .split
                .iter()
                .map(|s| format!("{}:{}", s.name, serde_json::to_value(s.kind).unwrap().as_str().unwrap()))
                .collect::<Vec<_>>()
                .join(",")
        ),
        format!(
            "alpha = {}; min_node = {}; tau = {}; max_bins = {}; max_depth = {}; min_disagreements = {}; exhaustive_limit = {}; ridge = {:e}; decorrelation = {}",
            p.alpha,
            p.min_node,
            p.tau,
            p.max_bins,
            p.max_depth,
            p.min_disagreements,
            p.exhaustive_limit,
            p.ridge,
            serde_json::to_value(p.decorrelation).unwrap().as_str().unwrap()
        ),
        format!("test = {}", tree.test),
        format!("rows = {}; rejected = {}", table.len(), table.provenance.rejected.len()),
    ];
    if let Some(o) = &config.outcome {
        h.insert(1, format!("outcome = {} == {}", o.column, o.positive));
    }
    if let Some(src) = &table.provenance.source {
        h.push(format!("source = {}", src.display()));
    }
    h
}

/// Audits one sensitive pair.
pub fn run_audit_pair(table: &ObservationTable, config: &AuditConfig, pair: SensitivePair) -> Result<AuditResult> {
    config.validate()?;
    let mut tree = tree::grow(table, pair, config.metric, &config.tree)?;
    tree::prune_in_place(&mut tree, config.tree.tau);
    let report = DisparityReport::from_tree(&tree, report_header(table, config, &tree));
    Ok(AuditResult { pair, tree, report })
}

/// Audits the configured `(a1, a2)` pair.
pub fn run_audit(table: &ObservationTable, config: &AuditConfig) -> Result<AuditResult> {
    let [a1, a2] = config.sensitive.levels.as_slice() else {
        return Err(Error::Config(
            "a single audit needs exactly two sensitive levels; use all-pairs mode otherwise".into(),
        ));
    };
    run_audit_pair(table, config, table.pair(a1, a2)?)
}

/// One audit per unordered pair of sensitive levels, in level order.
pub fn run_all_pairs(table: &ObservationTable, config: &AuditConfig) -> Result<Vec<AuditResult>> {
    table
        .all_pairs()
        .into_par_iter()
        .map(|pair| run_audit_pair(table, config, pair))
        .collect()
}
