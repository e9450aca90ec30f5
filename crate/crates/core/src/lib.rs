//! Locating subgroups in which two binary classifiers differ in a group
//! fairness disparity.
//!
//! For a metric (false positive rate, false negative rate or acceptance
//! rate) and two sensitive groups `a1`, `a2`, the disparity of model `m` is
//! `rate_m(a2) - rate_m(a1)`, and the quantity of interest is the
//! difference-in-differences `delta = disparity(m2) - disparity(m1)`. An
//! instability tree recursively splits the data on covariates for which a
//! score test rejects a constant `delta`, then prunes splits whose leaves do
//! not differ materially.

// `!(x > 0.0)` is used on purpose to reject NaN; fixed 4x4 loops read best indexed.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod audit;
pub mod config;
pub mod error;
pub mod export;
pub mod instability;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod report;
pub mod synth;
pub mod table;
pub mod tree;

pub use audit::{run_all_pairs, run_audit, run_audit_pair, AuditResult};
pub use config::{AuditConfig, ModelSpec, OutcomeSpec, SensitiveSpec, SplitVarSpec, TreeParams};
pub use error::{Error, Result};
pub use export::{export_tree, ExportFormat};
pub use instability::{CovariateKind, InstabilityTest, ScoreTest, SplitTest};
pub use metrics::{baseline_metrics, BaselineMetrics};
pub use model::{Metric, ThetaHat};
pub use report::DisparityReport;
pub use table::{ingest, ObservationTable, SensitivePair};
pub use tree::{grow, prune, InstabilityTree, NodePredicate, TreeNode};
