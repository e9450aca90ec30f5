//! Record-level dataset and delimited-text ingestion.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{AuditConfig, ModelSpec, SplitVarSpec};
use crate::error::{Error, Result};
use crate::instability::CovariateKind;
use crate::model::{Group, LabeledRecord};

/// Label used for missing categorical values.
pub const MISSING_LEVEL: &str = "NA";

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateValues {
    /// Dictionary-coded values. Categorical codes are never `None` (missing
    /// becomes the [`MISSING_LEVEL`] level); ordinal codes are ranks in
    /// `levels` and `None` marks a missing value.
    Codes {
        codes: Vec<Option<u32>>,
        levels: Vec<String>,
    },
    Numeric(Vec<Option<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
    pub values: CovariateValues,
}

impl Covariate {
    pub fn level_name(&self, code: u32) -> &str {
        match &self.values {
            CovariateValues::Codes { levels, .. } => &levels[code as usize],
            CovariateValues::Numeric(_) => "",
        }
    }

    pub fn levels(&self) -> &[String] {
        match &self.values {
            CovariateValues::Codes { levels, .. } => levels,
            CovariateValues::Numeric(_) => &[],
        }
    }

    /// Builds a categorical covariate from raw labels; levels are sorted.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, labels: &[S]) -> Self {
        let mut levels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        levels.sort();
        levels.dedup();
        let codes = labels
            .iter()
            .map(|s| Some(levels.binary_search_by(|l| l.as_str().cmp(s.as_ref())).unwrap() as u32))
            .collect();
        Self {
            name: name.into(),
            kind: CovariateKind::Categorical,
            values: CovariateValues::Codes { codes, levels },
        }
    }

    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Numeric,
            values: CovariateValues::Numeric(values),
        }
    }
}

/// A model's classification column, with the raw scores kept when the
/// classification came from a cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelColumn {
    pub spec: ModelSpec,
    pub yhat: Vec<bool>,
    pub scores: Option<Vec<f64>>,
}

impl ModelColumn {
    pub fn from_bits(name: &str, yhat: Vec<bool>) -> Self {
        Self {
            spec: ModelSpec {
                column: name.to_string(),
                cutoff: None,
                rule: Default::default(),
                name: None,
            },
            yhat,
            scores: None,
        }
    }
}

/// A row dropped during ingestion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    /// 1-based line number in the source file (header is line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub source: Option<PathBuf>,
    pub input_rows: usize,
    pub rejected: Vec<Rejection>,
}

/// Columnar table of outcomes, paired classifications, sensitive labels and
/// splitting covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    /// Source line of each row.
    pub row_ids: Vec<usize>,
    pub outcome: Option<Vec<bool>>,
    pub model_a: ModelColumn,
    pub model_b: ModelColumn,
    pub sensitive_column: String,
    pub sensitive: Vec<u32>,
    pub sensitive_levels: Vec<String>,
    pub covariates: Vec<Covariate>,
    pub provenance: Provenance,
}

/// Which two sensitive levels an audit contrasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensitivePair {
    pub a1: u32,
    pub a2: u32,
}

impl SensitivePair {
    pub fn group_of(&self, code: u32) -> Option<Group> {
        if code == self.a1 {
            Some(Group::A1)
        } else if code == self.a2 {
            Some(Group::A2)
        } else {
            None
        }
    }

    pub fn swapped(self) -> Self {
        Self { a1: self.a2, a2: self.a1 }
    }
}

impl ObservationTable {
    pub fn len(&self) -> usize {
        self.sensitive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensitive.is_empty()
    }

    /// Assembles an in-memory table; used by the generator and tests.
    pub fn from_parts(
        outcome: Option<Vec<bool>>,
        model_a: ModelColumn,
        model_b: ModelColumn,
        sensitive_column: impl Into<String>,
        sensitive: Vec<u32>,
        sensitive_levels: Vec<String>,
        covariates: Vec<Covariate>,
    ) -> Result<Self> {
        let n = sensitive.len();
        let bad = |what: &str| Error::InvalidParameter(format!("{what} length differs from {n} rows"));
        if model_a.yhat.len() != n || model_b.yhat.len() != n {
            return Err(bad("prediction column"));
        }
        if outcome.as_ref().is_some_and(|o| o.len() != n) {
            return Err(bad("outcome column"));
        }
        for c in &covariates {
            let len = match &c.values {
                CovariateValues::Codes { codes, .. } => codes.len(),
                CovariateValues::Numeric(v) => v.len(),
            };
            if len != n {
                return Err(bad(&format!("covariate `{}`", c.name)));
            }
        }
        if sensitive.iter().any(|&s| s as usize >= sensitive_levels.len()) {
            return Err(Error::InvalidParameter("sensitive code without a level".into()));
        }
        Ok(Self {
            row_ids: (2..n + 2).collect(),
            outcome,
            model_a,
            model_b,
            sensitive_column: sensitive_column.into(),
            sensitive,
            sensitive_levels,
            covariates,
            provenance: Provenance {
                source: None,
                input_rows: n,
                rejected: Vec::new(),
            },
        })
    }

    pub fn sensitive_code(&self, label: &str) -> Option<u32> {
        self.sensitive_levels.iter().position(|l| l == label).map(|i| i as u32)
    }

    pub fn pair(&self, a1: &str, a2: &str) -> Result<SensitivePair> {
        let find = |l: &str| {
            self.sensitive_code(l)
                .ok_or_else(|| Error::Config(format!("sensitive level `{l}` not present in data")))
        };
        Ok(SensitivePair { a1: find(a1)?, a2: find(a2)? })
    }

    /// Every unordered pair of sensitive levels that occur in the data, in
    /// level order.
    pub fn all_pairs(&self) -> Vec<SensitivePair> {
        let mut present = vec![false; self.sensitive_levels.len()];
        for &s in &self.sensitive {
            present[s as usize] = true;
        }
        let codes: Vec<u32> = (0..present.len() as u32).filter(|&c| present[c as usize]).collect();
        let mut out = Vec::new();
        for (i, &a) in codes.iter().enumerate() {
            for &b in &codes[i + 1..] {
                out.push(SensitivePair { a1: a, a2: b });
            }
        }
        out
    }

    /// Row `i` as a labelled record, if its sensitive level is in `pair`.
    pub fn labeled(&self, i: usize, pair: SensitivePair) -> Option<LabeledRecord> {
        let group = pair.group_of(self.sensitive[i])?;
        Some(LabeledRecord {
            outcome: self.outcome.as_ref().map(|o| o[i]),
            yhat1: self.model_a.yhat[i],
            yhat2: self.model_b.yhat[i],
            group,
        })
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    /// Copy with `Y` and both classifications negated.
    pub fn bit_flipped(&self) -> Self {
        let mut t = self.clone();
        if let Some(o) = t.outcome.as_mut() {
            o.iter_mut().for_each(|y| *y = !*y);
        }
        for m in [&mut t.model_a, &mut t.model_b] {
            m.yhat.iter_mut().for_each(|y| *y = !*y);
        }
        t
    }

    /// Copy with the two models exchanged.
    pub fn models_swapped(&self) -> Self {
        let mut t = self.clone();
        std::mem::swap(&mut t.model_a, &mut t.model_b);
        t
    }
}

struct Header {
    index: HashMap<String, usize>,
}

impl Header {
    fn col(&self, path: &Path, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    }
}

fn parse_number(path: &Path, line: usize, column: &str, v: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|_| Error::Unparseable {
        path: path.to_path_buf(),
        row: line,
        column: column.to_string(),
        value: v.to_string(),
    })
}

fn parse_bit(v: &str) -> Option<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "yes" => Some(true),
        "0" | "0.0" | "false" | "no" => Some(false),
        _ => None,
    }
}

fn labels_equal(a: &str, b: &str) -> bool {
    let (a, b) = (a.trim(), b.trim());
    if a == b {
        return true;
    }
    matches!((a.parse::<f64>(), b.parse::<f64>()), (Ok(x), Ok(y)) if x == y)
}

/// Orders ordinal levels: numerically if every label parses, else
/// lexicographically.
fn natural_order(mut labels: Vec<String>) -> Vec<String> {
    if labels.iter().all(|l| l.parse::<f64>().is_ok()) {
        labels.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    } else {
        labels.sort();
    }
    labels
}

enum RawCovariate {
    Labels(Vec<Option<String>>),
    Numbers(Vec<Option<f64>>),
}

fn finish_covariate(spec: &SplitVarSpec, raw: RawCovariate) -> Result<Covariate> {
    let values = match raw {
        RawCovariate::Numbers(v) => CovariateValues::Numeric(v),
        RawCovariate::Labels(labels) => {
            let categorical = spec.kind == CovariateKind::Categorical;
            let mut levels: Vec<String> = if !categorical && !spec.levels.is_empty() {
                spec.levels.clone()
            } else {
                let mut seen: Vec<String> = labels.iter().flatten().cloned().collect();
                seen.sort();
                seen.dedup();
                if categorical && labels.iter().any(Option::is_none) && !seen.iter().any(|s| s == MISSING_LEVEL) {
                    seen.push(MISSING_LEVEL.to_string());
                    seen.sort();
                }
                if categorical {
                    seen
                } else {
                    natural_order(seen)
                }
            };
            levels.dedup();
            let lookup: HashMap<&str, u32> =
                levels.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
            let mut codes = Vec::with_capacity(labels.len());
            for l in &labels {
                let code = match l {
                    Some(l) => Some(*lookup.get(l.as_str()).ok_or_else(|| {
                        Error::Config(format!(
                            "value `{l}` of ordinal `{}` is not among its declared levels",
                            spec.name
                        ))
                    })?),
                    None if categorical => Some(lookup[MISSING_LEVEL]),
                    None => None,
                };
                codes.push(code);
            }
            CovariateValues::Codes { codes, levels }
        }
    };
    Ok(Covariate {
        name: spec.name.clone(),
        kind: spec.kind,
        values,
    })
}

/// Reads a delimited file with a header row into an [`ObservationTable`].
///
/// Rows missing the outcome, a prediction or the sensitive label, or whose
/// sensitive label lies outside the configured pair, are rejected with a
/// diagnostic; malformed numbers abort with file/line/column context.
pub fn ingest(path: &Path, config: &AuditConfig) -> Result<ObservationTable> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_bytes(&bytes, Some(path), config)
}

pub fn ingest_bytes(bytes: &[u8], source: Option<&Path>, config: &AuditConfig) -> Result<ObservationTable> {
    let path = source.unwrap_or_else(|| Path::new("<memory>"));
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    let delim = u8::try_from(config.input.delimiter)
        .map_err(|_| Error::Config("delimiter must be a single ASCII character".into()))?;
    let comment = match config.input.comment {
        Some(c) => Some(
            u8::try_from(c).map_err(|_| Error::Config("comment prefix must be a single ASCII character".into()))?,
        ),
        None => None,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .comment(comment)
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let header = Header {
        index: reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .collect::<Vec<_>>()
            .into_iter()
            .enumerate()
            // first occurrence wins for duplicated names
            .rev()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect(),
    };

    let outcome_col = match &config.outcome {
        Some(o) => Some((header.col(path, &o.column)?, o)),
        None => None,
    };
    let model_cols = [
        header.col(path, &config.model_a.column)?,
        header.col(path, &config.model_b.column)?,
    ];
    let models = [&config.model_a, &config.model_b];
    let sens_col = header.col(path, &config.sensitive.column)?;
    let split_cols = config
        .split
        .iter()
        .map(|s| header.col(path, &s.name))
        .collect::<Result<Vec<_>>>()?;

    let pair_filter: Option<&[String]> =
        (!config.sensitive.levels.is_empty()).then_some(&config.sensitive.levels[..]);
    let mut sensitive_levels: Vec<String> = pair_filter.map(|p| p.to_vec()).unwrap_or_default();

    let mut row_ids = Vec::new();
    let mut outcome = Vec::new();
    let mut yhat = [Vec::new(), Vec::new()];
    let mut scores: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut sensitive = Vec::new();
    let mut raw_covs: Vec<RawCovariate> = config
        .split
        .iter()
        .map(|s| match s.kind {
            CovariateKind::Numeric => RawCovariate::Numbers(Vec::new()),
            _ => RawCovariate::Labels(Vec::new()),
        })
        .collect();
    let mut rejected = Vec::new();
    let mut input_rows = 0;

    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        input_rows += 1;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let missing = |v: &str| config.input.is_missing(v);

        let mut reason = None;
        let y = match outcome_col {
            Some((c, spec)) => {
                let v = field(c);
                if missing(v) {
                    reason = Some(format!("missing outcome `{}`", spec.column));
                    None
                } else {
                    Some(labels_equal(v, &spec.positive))
                }
            }
            None => None,
        };
        let mut preds = [false; 2];
        let mut raw = [f64::NAN; 2];
        for k in 0..2 {
            let v = field(model_cols[k]);
            if reason.is_some() {
                break;
            }
            if missing(v) {
                reason = Some(format!("missing prediction `{}`", models[k].column));
                break;
            }
            match models[k].cutoff {
                Some(cut) => {
                    let s = parse_number(path, line, &models[k].column, v)?;
                    raw[k] = s;
                    preds[k] = models[k].rule.apply(s, cut);
                }
                None => match parse_bit(v) {
                    Some(b) => preds[k] = b,
                    None => {
                        return Err(Error::Unparseable {
                            path: path.to_path_buf(),
                            row: line,
                            column: models[k].column.clone(),
                            value: v.to_string(),
                        })
                    }
                },
            }
        }
        let g = field(sens_col).trim();
        let code = if reason.is_some() {
            None
        } else if missing(g) {
            reason = Some(format!("missing sensitive label `{}`", config.sensitive.column));
            None
        } else {
            match sensitive_levels.iter().position(|l| l == g) {
                Some(p) => Some(p as u32),
                None if pair_filter.is_some() => {
                    reason = Some(format!("sensitive label `{g}` outside the audited pair"));
                    None
                }
                None => {
                    sensitive_levels.push(g.to_string());
                    Some(sensitive_levels.len() as u32 - 1)
                }
            }
        };
        if let Some(reason) = reason {
            rejected.push(Rejection { line, reason });
            continue;
        }

        // covariates are parsed only for accepted rows
        let mut parsed = Vec::with_capacity(split_cols.len());
        for (spec, &c) in config.split.iter().zip(&split_cols) {
            let v = field(c);
            parsed.push(if missing(v) {
                (None, None)
            } else if spec.kind == CovariateKind::Numeric {
                (None, Some(parse_number(path, line, &spec.name, v)?))
            } else {
                (Some(v.trim().to_string()), None)
            });
        }
        for (raw_cov, (label, number)) in raw_covs.iter_mut().zip(parsed) {
            match raw_cov {
                RawCovariate::Labels(v) => v.push(label),
                RawCovariate::Numbers(v) => v.push(number),
            }
        }
        row_ids.push(line);
        if let Some(y) = y {
            outcome.push(y);
        }
        for k in 0..2 {
            yhat[k].push(preds[k]);
            scores[k].push(raw[k]);
        }
        sensitive.push(code.expect("accepted row has a group"));
    }

    if input_rows == 0 {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }

    let covariates = config
        .split
        .iter()
        .zip(raw_covs)
        .map(|(s, r)| finish_covariate(s, r))
        .collect::<Result<Vec<_>>>()?;

    if let Some(levels) = pair_filter {
        for (code, label) in levels.iter().enumerate() {
            if !sensitive.contains(&(code as u32)) {
                return Err(Error::Config(format!(
                    "sensitive level `{label}` has no usable rows in column `{}`",
                    config.sensitive.column
                )));
            }
        }
    }
    let [yhat_a, yhat_b] = yhat;
    let [scores_a, scores_b] = scores;
    let column = |spec: &ModelSpec, yhat: Vec<bool>, scores: Vec<f64>| ModelColumn {
        spec: spec.clone(),
        yhat,
        scores: spec.cutoff.is_some().then_some(scores),
    };

    let table = ObservationTable {
        row_ids,
        outcome: outcome_col.map(|_| outcome),
        model_a: column(&config.model_a, yhat_a, scores_a),
        model_b: column(&config.model_b, yhat_b, scores_b),
        sensitive_column: config.sensitive.column.clone(),
        sensitive,
        sensitive_levels,
        covariates,
        provenance: Provenance {
            source: source.map(Path::to_path_buf),
            input_rows,
            rejected,
        },
    };
    log::info!(
        "ingested {} rows ({} rejected) from {}",
        table.len(),
        table.provenance.rejected.len(),
        path.display()
    );
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{OutcomeSpec, SensitiveSpec};
    use crate::model::Metric;

    fn config() -> AuditConfig {
        AuditConfig {
            metric: Metric::Fpr,
            outcome: Some(OutcomeSpec::parse("y=1").unwrap()),
            model_a: ModelSpec::parse("s1:5").unwrap(),
            model_b: ModelSpec::parse("p2").unwrap(),
            sensitive: SensitiveSpec::parse("g:w,b").unwrap(),
            split: vec![
                SplitVarSpec::parse("sex").unwrap(),
                SplitVarSpec::parse("age:numeric").unwrap(),
            ],
            tree: Default::default(),
            input: Default::default(),
        }
    }

    const DATA: &str = "y,s1,p2,g,sex,age\n\
        1,7,1,w,M,30\n\
        0,2,0,b,F,NA\n\
        0,5,1,,M,41\n\
        1,9,0,h,F,22\n\
        0,4,1,b,,19\n";

    #[test]
    fn rejects_missing_group_and_outside_pair() {
        let t = ingest_bytes(DATA.as_bytes(), None, &config()).unwrap();
        assert_eq!(t.provenance.input_rows, 5);
        assert_eq!(t.len(), 3);
        assert_eq!(t.len() + t.provenance.rejected.len(), 5);
        assert_eq!(t.provenance.rejected[0].line, 4);
        assert_eq!(t.row_ids, vec![2, 3, 6]);
        assert_eq!(t.sensitive_levels, vec!["w", "b"]);
        assert_eq!(t.sensitive, vec![0, 1, 1]);
    }

    #[test]
    fn comment_lines_are_skipped_and_lines_still_count() {
        let text = format!("# generated\n{DATA}");
        let t = ingest_bytes(text.as_bytes(), None, &config()).unwrap();
        assert_eq!(t.provenance.input_rows, 5);
        assert_eq!(t.row_ids, vec![3, 4, 7]);
        assert_eq!(t.provenance.rejected[0].line, 5);
    }

    #[test]
    fn binarises_with_cutoff_and_keeps_scores() {
        let t = ingest_bytes(DATA.as_bytes(), None, &config()).unwrap();
        assert_eq!(t.model_a.yhat, vec![true, false, false]);
        assert_eq!(t.model_a.scores.as_deref(), Some(&[7.0, 2.0, 4.0][..]));
        assert_eq!(t.model_b.yhat, vec![true, false, true]);
        assert!(t.model_b.scores.is_none());
        assert_eq!(t.outcome.as_deref(), Some(&[true, false, false][..]));
    }

    #[test]
    fn missing_values_in_covariates() {
        let t = ingest_bytes(DATA.as_bytes(), None, &config()).unwrap();
        let sex = &t.covariates[0];
        assert_eq!(sex.levels(), &["F", "M", "NA"]);
        let age = &t.covariates[1];
        assert_eq!(age.values, CovariateValues::Numeric(vec![Some(30.0), None, Some(19.0)]));
    }

    #[test]
    fn error_contexts() {
        let cfg = config();
        let e = ingest_bytes(b"", None, &cfg).unwrap_err();
        assert!(matches!(e, Error::EmptyFile { .. }));
        let e = ingest_bytes(b"y,s1,p2,g,sex\n1,2,1,w,M\n", None, &cfg).unwrap_err();
        assert!(matches!(e, Error::MissingColumn { ref column, .. } if column == "age"));
        let e = ingest_bytes(b"y,s1,p2,g,sex,age\n1,x,1,w,M,3\n", None, &cfg).unwrap_err();
        assert!(matches!(e, Error::Unparseable { row: 2, ref column, .. } if column == "s1"));
    }

    #[test]
    fn all_levels_kept_without_pair() {
        let mut cfg = config();
        cfg.sensitive.levels.clear();
        let t = ingest_bytes(DATA.as_bytes(), None, &cfg).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.sensitive_levels, vec!["w", "b", "h"]);
        assert_eq!(t.all_pairs().len(), 3);
    }

    #[test]
    fn configured_level_absent_from_data_is_a_config_error() {
        let mut cfg = config();
        cfg.sensitive.levels = vec!["w".into(), "x".into()];
        let e = ingest_bytes(DATA.as_bytes(), None, &cfg).unwrap_err();
        assert!(matches!(e, Error::Config(ref m) if m.contains("`x`")), "{e}");
    }

    #[test]
    fn ordinal_natural_order() {
        let mut cfg = config();
        cfg.split = vec![SplitVarSpec { name: "age".into(), kind: CovariateKind::Ordinal, levels: vec![] }];
        let data = "y,s1,p2,g,age\n1,1,1,w,10\n1,1,1,w,9\n1,1,1,b,NA\n";
        let t = ingest_bytes(data.as_bytes(), None, &cfg).unwrap();
        assert_eq!(
            t.covariates[0].values,
            CovariateValues::Codes {
                codes: vec![Some(1), Some(0), None],
                levels: vec!["9".into(), "10".into()]
            }
        );
    }
}
