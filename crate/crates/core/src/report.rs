//! Per-node disparity table (the data behind the disparity bar charts).

use serde::{Deserialize, Serialize};

use crate::tree::{InstabilityTree, TreeNode};

pub const TSV_COLUMNS: [&str; 19] = [
    "node_id",
    "predicate",
    "n",
    "n_cond_a1",
    "n_cond_a2",
    "rate_m1_a1",
    "rate_m1_a2",
    "rate_m2_a1",
    "rate_m2_a2",
    "disparity_m1",
    "disparity_m2",
    "delta",
    "split_var",
    "statistic",
    "df",
    "p_raw",
    "p_bonferroni",
    "leaf",
    "stop",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub node_id: usize,
    pub predicate: String,
    pub n: u64,
    pub n_cond_a1: u64,
    pub n_cond_a2: u64,
    pub rate_m1_a1: Option<f64>,
    pub rate_m1_a2: Option<f64>,
    pub rate_m2_a1: Option<f64>,
    pub rate_m2_a2: Option<f64>,
    pub disparity_m1: Option<f64>,
    pub disparity_m2: Option<f64>,
    pub delta: Option<f64>,
    pub split_var: Option<String>,
    pub statistic: Option<f64>,
    pub df: Option<u32>,
    pub p_raw: Option<f64>,
    pub p_bonferroni: Option<f64>,
    pub leaf: bool,
    pub stop: Option<String>,
}

impl ReportRow {
    fn from_node(node: &TreeNode) -> Self {
        let split = node.split.as_ref().filter(|_| !node.is_leaf());
        let r = node.rates;
        Self {
            node_id: node.id,
            predicate: node.predicate.to_string(),
            n: node.n,
            n_cond_a1: node.n_cond_a1,
            n_cond_a2: node.n_cond_a2,
            rate_m1_a1: r.map(|r| r.m1_a1),
            rate_m1_a2: r.map(|r| r.m1_a2),
            rate_m2_a1: r.map(|r| r.m2_a1),
            rate_m2_a2: r.map(|r| r.m2_a2),
            disparity_m1: r.map(|r| r.disparity_m1()),
            disparity_m2: r.map(|r| r.disparity_m2()),
            delta: node.delta,
            split_var: split.map(|s| s.covariate.clone()),
            statistic: split.map(|s| s.statistic),
            df: split.map(|s| s.df),
            p_raw: split.map(|s| s.p_raw),
            p_bonferroni: split.map(|s| s.p_bonferroni),
            leaf: node.is_leaf(),
            stop: if node.pruned {
                Some("pruned".to_string())
            } else {
                node.stop.as_ref().map(|s| s.to_string())
            },
        }
    }
}

/// Rows for every node of the effective tree, root ("Overall") first, in
/// depth-first order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    /// `key = value` lines describing the run, emitted as `#` comments.
    pub header: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl DisparityReport {
    pub fn from_tree(tree: &InstabilityTree, header: Vec<String>) -> Self {
        Self {
            header,
            rows: tree.nodes().into_iter().map(ReportRow::from_node).collect(),
        }
    }

    pub fn leaf_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.leaf)
    }

    /// Tab-separated table with a fixed column order; missing values are
    /// written as `NA`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for h in &self.header {
            out.push_str("# ");
            out.push_str(h);
            out.push('\n');
        }
        out.push_str(&self.body_tsv());
        out
    }

    /// The table without the `#` header block.
    pub fn body_tsv(&self) -> String {
        let mut out = TSV_COLUMNS.join("\t");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&self.row_tsv(r));
            out.push('\n');
        }
        out
    }

    fn row_tsv(&self, r: &ReportRow) -> String {
        fn f(v: Option<f64>) -> String {
            v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
        }
        fn p(v: Option<f64>) -> String {
            v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6e}"))
        }
        let clean = |s: &str| s.replace(['\t', '\n'], " ");
        [
            r.node_id.to_string(),
            clean(&r.predicate),
            r.n.to_string(),
            r.n_cond_a1.to_string(),
            r.n_cond_a2.to_string(),
            f(r.rate_m1_a1),
            f(r.rate_m1_a2),
            f(r.rate_m2_a1),
            f(r.rate_m2_a2),
            f(r.disparity_m1),
            f(r.disparity_m2),
            f(r.delta),
            r.split_var.as_deref().map_or_else(|| "NA".to_string(), clean),
            f(r.statistic),
            r.df.map_or_else(|| "NA".to_string(), |d| d.to_string()),
            p(r.p_raw),
            p(r.p_bonferroni),
            (r.leaf as u8).to_string(),
            r.stop.as_deref().map_or_else(|| "NA".to_string(), clean),
        ]
        .join("\t")
    }
}
