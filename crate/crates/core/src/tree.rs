//! Growing and pruning the parameter instability tree.
//!
//! At every node the conditioned sample is tested for disparity instability
//! along each splitting covariate, the most significant covariate (after
//! Bonferroni adjustment) is selected, and its levels are split in two so
//! as to minimise the summed deviance of the children. Growth stops on
//! small or degenerate nodes, at the depth limit, or when nothing is
//! significant. Pruning then collapses subtrees whose leaf disparities
//! differ by less than `tau`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::TreeParams;
use crate::error::{Error, Result};
use crate::instability::{
    select_split_variable, CovariateKind, InstabilityTest, LevelKey, ScoreTest, SplitCandidate, SplitTest,
};
use crate::model::{self, count_cells, group_rates, CellCounts, GroupRates, Metric, Record, ThetaHat};
use crate::table::{CovariateValues, ObservationTable, SensitivePair};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdOp {
    Le,
    Gt,
}

/// One condition of a node predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Atom {
    /// Value is one of `levels` (or missing, when `missing` is set).
    Levels {
        covariate: String,
        levels: Vec<String>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        missing: bool,
    },
    /// Numeric comparison against `value` (or missing, when `missing` is set).
    Threshold {
        covariate: String,
        op: ThresholdOp,
        value: f64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        missing: bool,
    },
}

impl Atom {
    pub fn covariate(&self) -> &str {
        match self {
            Atom::Levels { covariate, .. } | Atom::Threshold { covariate, .. } => covariate,
        }
    }

    /// Evaluates the atom on table row `row`.
    pub fn matches(&self, table: &ObservationTable, row: usize) -> Result<bool> {
        let cov = table
            .covariate_index(self.covariate())
            .map(|i| &table.covariates[i])
            .ok_or_else(|| Error::Config(format!("unknown covariate `{}`", self.covariate())))?;
        Ok(match (self, &cov.values) {
            (Atom::Levels { levels, missing, .. }, CovariateValues::Codes { codes, levels: dict }) => {
                match codes[row] {
                    Some(c) => levels.iter().any(|l| *l == dict[c as usize]),
                    None => *missing,
                }
            }
            (Atom::Threshold { op, value, missing, .. }, CovariateValues::Numeric(v)) => match v[row] {
                Some(x) => match op {
                    ThresholdOp::Le => x <= *value,
                    ThresholdOp::Gt => x > *value,
                },
                None => *missing,
            },
            _ => {
                return Err(Error::Config(format!(
                    "predicate on `{}` does not match the covariate's kind",
                    self.covariate()
                )))
            }
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Levels { covariate, levels, missing } => {
                write!(f, "{covariate} in {{{}}}", levels.join(", "))?;
                if *missing {
                    write!(f, " or missing")?;
                }
            }
            Atom::Threshold { covariate, op, value, missing } => {
                let sym = match op {
                    ThresholdOp::Le => "<=",
                    ThresholdOp::Gt => ">",
                };
                write!(f, "{covariate} {sym} {value}")?;
                if *missing {
                    write!(f, " or missing")?;
                }
            }
        }
        Ok(())
    }
}

/// Conjunction of atoms from the root to a node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodePredicate {
    pub atoms: Vec<Atom>,
}

impl NodePredicate {
    /// Adds `atom`, folding it into an earlier atom on the same covariate
    /// (level sets intersect, same-direction thresholds tighten).
    pub fn and(&self, atom: Atom) -> Self {
        let mut atoms = self.atoms.clone();
        for a in atoms.iter_mut() {
            match (a, &atom) {
                (
                    Atom::Levels { covariate, levels, missing },
                    Atom::Levels { covariate: c2, levels: l2, missing: m2 },
                ) if covariate == c2 => {
                    levels.retain(|l| l2.contains(l));
                    *missing &= *m2;
                    return Self { atoms };
                }
                (
                    Atom::Threshold { covariate, op, value, missing },
                    Atom::Threshold { covariate: c2, op: o2, value: v2, missing: m2 },
                ) if covariate == c2 && op == o2 => {
                    *value = match op {
                        ThresholdOp::Le => value.min(*v2),
                        ThresholdOp::Gt => value.max(*v2),
                    };
                    *missing &= *m2;
                    return Self { atoms };
                }
                _ => {}
            }
        }
        atoms.push(atom);
        Self { atoms }
    }

    pub fn matches(&self, table: &ObservationTable, row: usize) -> Result<bool> {
        for a in &self.atoms {
            if !a.matches(table, row)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl fmt::Display for NodePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return f.write_str("Overall");
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchKind {
    Exhaustive,
    Greedy,
    Ordered,
}

/// Why a node was not split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// A sensitive group is absent or disagreements are below the floor.
    Degenerate(String),
    MinSize,
    MaxDepth,
    NoSignificantSplit,
    NoFeasiblePartition,
    Untestable(String),
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::Degenerate(why) => write!(f, "degenerate: {why}"),
            StopReason::MinSize => f.write_str("below minimum size"),
            StopReason::MaxDepth => f.write_str("maximum depth"),
            StopReason::NoSignificantSplit => f.write_str("no significant split"),
            StopReason::NoFeasiblePartition => f.write_str("no feasible partition"),
            StopReason::Untestable(why) => write!(f, "untestable: {why}"),
        }
    }
}

/// The realised split of an internal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub covariate: String,
    pub kind: CovariateKind,
    pub left: Atom,
    pub right: Atom,
    pub statistic: f64,
    pub df: u32,
    pub p_raw: f64,
    pub p_bonferroni: f64,
    pub deviance_parent: f64,
    pub deviance_children: f64,
    pub search: SearchKind,
    /// Child receiving rows whose value is missing, when that was decided by
    /// the majority rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_to: Option<Side>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub depth: usize,
    pub predicate: NodePredicate,
    /// Rows of the audited pair reaching the node, before conditioning.
    pub n: u64,
    pub n_cond_a1: u64,
    pub n_cond_a2: u64,
    pub counts: CellCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaHat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<GroupRates>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tests: Vec<SplitTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopReason>,
    /// Collapsed by pruning; `children` are kept for provenance only.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub pruned: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn n_cond(&self) -> u64 {
        self.n_cond_a1 + self.n_cond_a2
    }

    /// Leaf of the effective (post-pruning) tree.
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty() || self.pruned
    }

    /// Effective leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a TreeNode>) {
        if self.is_leaf() {
            out.push(self);
        } else {
            self.children.iter().for_each(|c| c.collect_leaves(out));
        }
    }

    /// Effective nodes (pruned subtrees skipped) in depth-first order.
    pub fn nodes(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        self.collect_nodes(&mut out);
        out
    }

    fn collect_nodes<'a>(&'a self, out: &mut Vec<&'a TreeNode>) {
        out.push(self);
        if !self.is_leaf() {
            self.children.iter().for_each(|c| c.collect_nodes(out));
        }
    }

    fn number(&mut self, next: &mut usize) {
        self.id = *next;
        *next += 1;
        for c in &mut self.children {
            c.number(next);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveInfo {
    pub column: String,
    pub a1: String,
    pub a2: String,
}

/// A grown (and possibly pruned) tree plus the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityTree {
    pub schema_version: u32,
    pub metric: Metric,
    pub sensitive: SensitiveInfo,
    pub model_a: String,
    pub model_b: String,
    pub test: String,
    pub params: TreeParams,
    pub root: TreeNode,
}

impl InstabilityTree {
    pub fn leaves(&self) -> Vec<&TreeNode> {
        self.root.leaves()
    }

    pub fn nodes(&self) -> Vec<&TreeNode> {
        self.root.nodes()
    }

    pub fn root_is_degenerate(&self) -> bool {
        matches!(self.root.stop, Some(StopReason::Degenerate(_)))
    }
}

/// Outcome of the level-grouping search for a selected covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Side of each candidate level.
    pub left: Vec<bool>,
    /// `-2 (l_left + l_right)` at the child MLEs.
    pub deviance: f64,
    pub search: SearchKind,
    /// Number of bipartitions evaluated (feasible or not).
    pub evaluated: usize,
}

fn group_ok(c: &CellCounts, min_node: u64) -> bool {
    let floor = min_node.max(1);
    c.a1.total() >= floor && c.a2.total() >= floor
}

fn split_deviance(left: &CellCounts, right: &CellCounts) -> Option<f64> {
    let l = model::max_log_likelihood(left).ok()?;
    let r = model::max_log_likelihood(right).ok()?;
    Some(-2.0 * (l + r))
}

/// Finds the two-group level assignment minimising total deviance, subject
/// to both children having at least `min_node` conditioned observations in
/// each sensitive group.
///
/// Categorical covariates with at most `exhaustive_limit` levels are
/// searched exhaustively; larger ones are ordered by per-level disparity
/// and cut contiguously. Ordinal and numeric covariates use order-respecting
/// cuts only, with a missing-value level sent to the side holding more
/// non-missing observations.
pub fn best_binary_partition(
    sample: &[Record],
    candidate: &SplitCandidate,
    min_node: u64,
    exhaustive_limit: usize,
) -> Option<Partition> {
    let k = candidate.k();
    if k < 2 {
        return None;
    }
    let per_level = candidate.level_counts(sample);
    let mut best: Option<Partition> = None;
    let mut evaluated = 0usize;
    let mut consider = |left: Vec<bool>, search: SearchKind| {
        evaluated += 1;
        let mut lc = CellCounts::default();
        let mut rc = CellCounts::default();
        for (c, &is_left) in per_level.iter().zip(&left) {
            if is_left {
                lc.merge(c)
            } else {
                rc.merge(c)
            }
        }
        if !group_ok(&lc, min_node) || !group_ok(&rc, min_node) {
            return;
        }
        let Some(dev) = split_deviance(&lc, &rc) else { return };
        if best.as_ref().is_none_or(|b| dev < b.deviance) {
            best = Some(Partition { left, deviance: dev, search, evaluated: 0 });
        }
    };

    match candidate.kind {
        CovariateKind::Categorical if k <= exhaustive_limit => {
            // the last level stays on the right: 2^(k-1) - 1 distinct bipartitions
            for mask in 1u64..(1u64 << (k - 1)) {
                let left = (0..k).map(|i| i < k - 1 && mask & (1 << i) != 0).collect();
                consider(left, SearchKind::Exhaustive);
            }
        }
        CovariateKind::Categorical => {
            let mut order: Vec<usize> = (0..k).collect();
            let key = |i: usize| model::mle(&per_level[i]).ok().map(|t| t.delta());
            order.sort_by(|&a, &b| match (key(a), key(b)) {
                (Some(x), Some(y)) => x.total_cmp(&y).then(a.cmp(&b)),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => a.cmp(&b),
            });
            for cut in 1..k {
                let mut left = vec![false; k];
                for &i in &order[..cut] {
                    left[i] = true;
                }
                consider(left, SearchKind::Greedy);
            }
        }
        CovariateKind::Ordinal | CovariateKind::Numeric => {
            let ordered = candidate.ordered_levels();
            let missing = candidate.missing_level();
            let sizes: Vec<u64> = per_level.iter().map(|c| c.n()).collect();
            for cut in 1..ordered {
                let mut left: Vec<bool> = (0..k).map(|i| i < cut).collect();
                if let Some(m) = missing {
                    let l: u64 = sizes[..cut].iter().sum();
                    let r: u64 = sizes[cut..ordered].iter().sum();
                    left[m] = l >= r;
                }
                consider(left, SearchKind::Ordered);
            }
        }
    }
    best.map(|mut b| {
        b.evaluated = evaluated;
        b
    })
}

struct GrowContext<'a> {
    table: &'a ObservationTable,
    /// Conditioned record of each table row, if it is in the pair and passes
    /// the metric's condition.
    cond: Vec<Option<Record>>,
    params: &'a TreeParams,
    tester: &'a dyn InstabilityTest,
}

impl GrowContext<'_> {
    fn candidate(&self, covariate: usize, rows: &[usize]) -> SplitCandidate {
        let cov = &self.table.covariates[covariate];
        match &cov.values {
            CovariateValues::Codes { codes, .. } => {
                let vals: Vec<Option<u32>> = rows.iter().map(|&r| codes[r]).collect();
                SplitCandidate::from_codes(covariate, cov.name.clone(), cov.kind, &vals)
            }
            CovariateValues::Numeric(v) => {
                let vals: Vec<Option<f64>> = rows.iter().map(|&r| v[r]).collect();
                SplitCandidate::from_numeric(covariate, cov.name.clone(), &vals, self.params.max_bins)
            }
        }
    }

    /// Turns a level grouping into predicates covering every value of the
    /// covariate, so the children partition the parent exactly.
    fn atoms(&self, cand: &SplitCandidate, part: &Partition, per_level_n: &[u64]) -> (Atom, Atom, Option<Side>) {
        let cov = &self.table.covariates[cand.covariate];
        let left_n: u64 = per_level_n.iter().zip(&part.left).filter(|(_, &l)| l).map(|(n, _)| n).sum();
        let right_n: u64 = per_level_n.iter().sum::<u64>() - left_n;
        let majority_left = left_n >= right_n;
        let missing_side = |lvl: Option<usize>| -> bool {
            match lvl {
                Some(m) => part.left[m],
                None => majority_left,
            }
        };
        let name = cov.name.clone();
        match (&cov.values, cand.kind) {
            (CovariateValues::Codes { levels, .. }, CovariateKind::Categorical) => {
                let mut side = vec![majority_left; levels.len()];
                for (lk, &l) in cand.levels.iter().zip(&part.left) {
                    if let LevelKey::Code(c) = lk {
                        side[*c as usize] = l;
                    }
                }
                let pick = |want: bool| -> Vec<String> {
                    levels.iter().zip(&side).filter(|(_, &s)| s == want).map(|(l, _)| l.clone()).collect()
                };
                (
                    Atom::Levels { covariate: name.clone(), levels: pick(true), missing: false },
                    Atom::Levels { covariate: name, levels: pick(false), missing: false },
                    None,
                )
            }
            (CovariateValues::Codes { levels, .. }, _) => {
                let last_left = cand
                    .levels
                    .iter()
                    .zip(&part.left)
                    .filter_map(|(lk, &l)| match lk {
                        LevelKey::Code(c) if l => Some(*c),
                        _ => None,
                    })
                    .max()
                    .expect("left side has an ordered level");
                let miss_left = missing_side(cand.missing_level());
                let (lo, hi) = levels.split_at(last_left as usize + 1);
                (
                    Atom::Levels { covariate: name.clone(), levels: lo.to_vec(), missing: miss_left },
                    Atom::Levels { covariate: name, levels: hi.to_vec(), missing: !miss_left },
                    Some(if miss_left { Side::Left } else { Side::Right }),
                )
            }
            (CovariateValues::Numeric(_), _) => {
                let threshold = cand
                    .levels
                    .iter()
                    .zip(&part.left)
                    .filter_map(|(lk, &l)| match lk {
                        LevelKey::Bin { upper } if l => *upper,
                        _ => None,
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                let miss_left = missing_side(cand.missing_level());
                (
                    Atom::Threshold { covariate: name.clone(), op: ThresholdOp::Le, value: threshold, missing: miss_left },
                    Atom::Threshold { covariate: name, op: ThresholdOp::Gt, value: threshold, missing: !miss_left },
                    Some(if miss_left { Side::Left } else { Side::Right }),
                )
            }
        }
    }

    fn grow(&self, rows: Vec<usize>, predicate: NodePredicate, depth: usize) -> TreeNode {
        let sample_rows: Vec<usize> = rows.iter().copied().filter(|&r| self.cond[r].is_some()).collect();
        let sample: Vec<Record> = sample_rows.iter().map(|&r| self.cond[r].unwrap()).collect();
        let counts = count_cells(&sample);
        let theta = model::mle(&counts).ok();
        let rates = theta.map(|_| group_rates(&sample));
        let mut node = TreeNode {
            id: 0,
            depth,
            predicate,
            n: rows.len() as u64,
            n_cond_a1: counts.a1.total(),
            n_cond_a2: counts.a2.total(),
            counts,
            theta,
            delta: theta.map(|t| t.delta()),
            rates,
            tests: Vec::new(),
            split: None,
            stop: None,
            pruned: false,
            children: Vec::new(),
        };

        let p = self.params;
        if theta.is_none() {
            node.stop = Some(StopReason::Degenerate("a sensitive group has no conditioned observations".into()));
            return node;
        }
        if counts.disagreements() < p.min_disagreements || counts.disagreements() == 0 {
            node.stop = Some(StopReason::Degenerate(format!(
                "{} disagreements (floor {})",
                counts.disagreements(),
                p.min_disagreements
            )));
            return node;
        }
        if depth >= p.max_depth {
            node.stop = Some(StopReason::MaxDepth);
            return node;
        }
        let min2 = 2 * p.min_node.max(1);
        if counts.a1.total() < min2 || counts.a2.total() < min2 {
            node.stop = Some(StopReason::MinSize);
            return node;
        }

        let candidates: Vec<SplitCandidate> =
            (0..self.table.covariates.len()).map(|c| self.candidate(c, &sample_rows)).collect();
        let tests = match self.tester.test_node(&sample, &candidates) {
            Ok(t) => t,
            Err(e) => {
                node.stop = Some(StopReason::Untestable(e.to_string()));
                return node;
            }
        };
        let selected = select_split_variable(&tests, p.alpha);
        node.tests = tests;
        let Some(sel) = selected else {
            node.stop = Some(StopReason::NoSignificantSplit);
            return node;
        };
        let cand = &candidates[sel];
        let Some(part) = best_binary_partition(&sample, cand, p.min_node, p.exhaustive_limit) else {
            node.stop = Some(StopReason::NoFeasiblePartition);
            return node;
        };
        let per_level_n: Vec<u64> = cand.level_counts(&sample).iter().map(CellCounts::n).collect();
        let (left_atom, right_atom, missing_to) = self.atoms(cand, &part, &per_level_n);

        let mut left_rows = Vec::new();
        let mut right_rows = Vec::new();
        for &r in &rows {
            if left_atom.matches(self.table, r).expect("atom built from table") {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }

        let test = &node.tests[sel];
        node.split = Some(SplitRecord {
            covariate: cand.name.clone(),
            kind: cand.kind,
            left: left_atom.clone(),
            right: right_atom.clone(),
            statistic: test.statistic,
            df: test.df,
            p_raw: test.p_raw,
            p_bonferroni: test.p_bonferroni,
            deviance_parent: -2.0 * model::log_likelihood(&counts, &theta.unwrap()),
            deviance_children: part.deviance,
            search: part.search,
            missing_to,
        });
        let lp = node.predicate.and(left_atom);
        let rp = node.predicate.and(right_atom);
        let (l, r) = rayon::join(
            || self.grow(left_rows, lp, depth + 1),
            || self.grow(right_rows, rp, depth + 1),
        );
        node.children = vec![l, r];
        node
    }
}

/// Grows the tree with the score test.
pub fn grow(
    table: &ObservationTable,
    pair: SensitivePair,
    metric: Metric,
    params: &TreeParams,
) -> Result<InstabilityTree> {
    grow_with(table, pair, metric, params, &ScoreTest { ridge: params.ridge, decorrelation: params.decorrelation })
}

/// Grows the tree with any instability test.
pub fn grow_with(
    table: &ObservationTable,
    pair: SensitivePair,
    metric: Metric,
    params: &TreeParams,
    tester: &dyn InstabilityTest,
) -> Result<InstabilityTree> {
    params.validate()?;
    if pair.a1 == pair.a2 {
        return Err(Error::Config("sensitive levels a1 and a2 must differ".into()));
    }
    let label = |c: u32| {
        table
            .sensitive_levels
            .get(c as usize)
            .cloned()
            .ok_or_else(|| Error::Config(format!("sensitive code {c} out of range")))
    };
    let sensitive = SensitiveInfo {
        column: table.sensitive_column.clone(),
        a1: label(pair.a1)?,
        a2: label(pair.a2)?,
    };
    let mut rows = Vec::new();
    let mut cond = vec![None; table.len()];
    for (i, slot) in cond.iter_mut().enumerate() {
        if let Some(lab) = table.labeled(i, pair) {
            rows.push(i);
            *slot = metric.condition(&lab)?;
        }
    }
    let ctx = GrowContext { table, cond, params, tester };
    let mut root = ctx.grow(rows, NodePredicate::default(), 0);
    root.number(&mut 1);
    Ok(InstabilityTree {
        schema_version: SCHEMA_VERSION,
        metric,
        sensitive,
        model_a: table.model_a.spec.display_name().to_string(),
        model_b: table.model_b.spec.display_name().to_string(),
        test: tester.name().to_string(),
        params: params.clone(),
        root,
    })
}

fn leaf_delta_range(node: &TreeNode) -> Option<f64> {
    let ds: Vec<f64> = node.leaves().iter().filter_map(|l| l.delta).collect();
    if ds.is_empty() {
        return None;
    }
    let lo = ds.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(hi - lo)
}

fn prune_pass(node: &mut TreeNode, tau: f64) -> bool {
    if node.is_leaf() {
        return false;
    }
    let mut changed = false;
    for c in &mut node.children {
        changed |= prune_pass(c, tau);
    }
    if leaf_delta_range(node).is_some_and(|range| range < tau) {
        node.pruned = true;
        changed = true;
    }
    changed
}

/// Collapses every internal node whose effective leaves' disparities span
/// less than `tau`. Collapsed nodes keep their children, flagged `pruned`.
pub fn prune_in_place(tree: &mut InstabilityTree, tau: f64) {
    while prune_pass(&mut tree.root, tau) {}
    tree.params.tau = tau;
}

pub fn prune(tree: &InstabilityTree, tau: f64) -> InstabilityTree {
    let mut t = tree.clone();
    prune_in_place(&mut t, tau);
    t
}
