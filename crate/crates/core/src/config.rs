//! Declarative audit configuration (TOML) and the command-line shorthands
//! that override it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instability::{CovariateKind, Decorrelation};
use crate::model::Metric;

/// How a score column is turned into a classification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoffRule {
    /// `yhat = 1{score >= cutoff}`
    #[default]
    Ge,
    /// `yhat = 1{score > cutoff}`
    Gt,
}

impl CutoffRule {
    pub fn apply(self, score: f64, cutoff: f64) -> bool {
        match self {
            CutoffRule::Ge => score >= cutoff,
            CutoffRule::Gt => score > cutoff,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CutoffRule::Ge => ">=",
            CutoffRule::Gt => ">",
        }
    }
}

/// One of the two compared classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub column: String,
    /// If absent the column must already hold 0/1 classifications.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(default)]
    pub rule: CutoffRule,
    /// Display name; defaults to the column name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl ModelSpec {
    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.column)
    }

    /// Parses `column`, `column:cutoff`, `column>=cutoff` or `column>cutoff`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse model spec `{s}`"));
        let number = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let (column, cutoff, rule) = if let Some((c, v)) = s.split_once(">=") {
            (c, Some(number(v)?), CutoffRule::Ge)
        } else if let Some((c, v)) = s.split_once('>') {
            (c, Some(number(v)?), CutoffRule::Gt)
        } else if let Some((c, v)) = s.rsplit_once(':') {
            (c, Some(number(v)?), CutoffRule::Ge)
        } else {
            (s, None, CutoffRule::Ge)
        };
        let column = column.trim();
        if column.is_empty() {
            return Err(bad());
        }
        Ok(Self {
            column: column.to_string(),
            cutoff,
            rule,
            name: None,
        })
    }

    pub fn describe(&self) -> String {
        match self.cutoff {
            Some(c) => format!("{}{}{}", self.column, self.rule.symbol(), c),
            None => self.column.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub column: String,
    /// Label of the positive class (`Y = 1`).
    pub positive: String,
}

impl OutcomeSpec {
    /// Parses `column=positive-label`.
    pub fn parse(s: &str) -> Result<Self> {
        let (column, positive) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("outcome must be `column=label`, got `{s}`")))?;
        Ok(Self {
            column: column.trim().to_string(),
            positive: positive.trim().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveSpec {
    pub column: String,
    /// `[a1, a2]` for a single audit; empty to keep every level and audit
    /// all unordered pairs.
    #[serde(default)]
    pub levels: Vec<String>,
}

impl SensitiveSpec {
    /// Parses `column:a1,a2` or bare `column`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((c, lv)) => Ok(Self {
                column: c.trim().to_string(),
                levels: lv.split(',').map(|l| l.trim().to_string()).collect(),
            }),
            None => Ok(Self { column: s.trim().to_string(), levels: Vec::new() }),
        }
    }
}

/// A candidate splitting covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitVarSpec {
    pub name: String,
    #[serde(default = "default_kind")]
    pub kind: CovariateKind,
    /// Level order for ordinal covariates; natural order if empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

fn default_kind() -> CovariateKind {
    CovariateKind::Categorical
}

impl SplitVarSpec {
    /// Parses `name` or `name:kind`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, kind) = match s.split_once(':') {
            Some((n, k)) => (n, k.parse()?),
            None => (s, CovariateKind::Categorical),
        };
        Ok(Self {
            name: name.trim().to_string(),
            kind,
            levels: Vec::new(),
        })
    }
}

/// Growth, stopping and pruning knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub alpha: f64,
    /// Minimum conditioned observations per sensitive group in every child.
    pub min_node: u64,
    pub tau: f64,
    pub max_bins: usize,
    pub max_depth: usize,
    /// Nodes with fewer total disagreements are not tested.
    pub min_disagreements: u64,
    /// Largest categorical level count searched exhaustively.
    pub exhaustive_limit: usize,
    pub ridge: f64,
    pub decorrelation: Decorrelation,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            min_node: 25,
            tau: 0.02,
            max_bins: 10,
            max_depth: 5,
            min_disagreements: 5,
            exhaustive_limit: 12,
            ridge: crate::numerics::DEFAULT_RIDGE,
            decorrelation: Decorrelation::Symmetric,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Config(format!("tau must be nonnegative, got {}", self.tau)));
        }
        if self.max_bins < 2 {
            return Err(Error::Config("max_bins must be at least 2".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config("ridge must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputOptions {
    pub delimiter: char,
    /// Lines starting with this character are skipped.
    pub comment: Option<char>,
    /// Cell values treated as missing.
    pub missing: Vec<String>,
}

impl Default for InputOptions {
    fn default() -> Self {
        Self {
            delimiter: ',',
            comment: Some('#'),
            missing: vec![String::new(), "NA".to_string()],
        }
    }
}

impl InputOptions {
    pub fn is_missing(&self, v: &str) -> bool {
        let v = v.trim();
        self.missing.iter().any(|m| m == v)
    }
}

/// Everything needed to run an audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeSpec>,
    pub model_a: ModelSpec,
    pub model_b: ModelSpec,
    pub sensitive: SensitiveSpec,
    #[serde(default)]
    pub split: Vec<SplitVarSpec>,
    #[serde(default)]
    pub tree: TreeParams,
    #[serde(default)]
    pub input: InputOptions,
}

impl AuditConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        if self.metric.needs_outcome() && self.outcome.is_none() {
            return Err(Error::Config(format!("metric `{}` needs an outcome column", self.metric)));
        }
        match self.sensitive.levels.len() {
            0 => {}
            2 if self.sensitive.levels[0] != self.sensitive.levels[1] => {}
            2 => return Err(Error::Config("sensitive levels a1 and a2 must differ".into())),
            n => {
                return Err(Error::Config(format!(
                    "sensitive attribute needs exactly two levels (or none for all pairs), got {n}"
                )))
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.split {
            if !seen.insert(&s.name) {
                return Err(Error::Config(format!("split variable `{}` listed twice", s.name)));
            }
        }
        for m in [&self.model_a, &self.model_b] {
            if let Some(c) = m.cutoff {
                if !c.is_finite() {
                    return Err(Error::Config(format!("cutoff for `{}` is not finite", m.column)));
                }
            }
        }
        Ok(())
    }
}
