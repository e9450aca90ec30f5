//! Overall classification metrics of the two models and how often they
//! disagree.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::table::{ModelColumn, ObservationTable};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelMetrics {
    pub name: String,
    pub rule: String,
    pub accuracy: f64,
    /// `None` when the model has no raw scores.
    pub auc: Option<f64>,
    pub ppv: f64,
    pub tnr: f64,
    pub tpr: f64,
    /// Share of rows classified positive ("high risk").
    pub positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineMetrics {
    pub n: usize,
    pub prevalence: f64,
    pub models: [ModelMetrics; 2],
    pub disagreement: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

/// Area under the ROC curve via the rank-sum statistic, ties at midranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 || scores.len() != labels.len() {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks are 1-based: i+1 ..= j+1
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

fn model_metrics(m: &ModelColumn, y: &[bool], notices: &mut Vec<String>) -> ModelMetrics {
    let (mut tp, mut fp, mut tn, mut fneg) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in m.yhat.iter().zip(y) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let auc = match &m.scores {
        Some(s) => auc(s, y),
        None => None,
    };
    if auc.is_none() {
        notices.push(format!("AUC skipped for `{}`: no raw scores", m.spec.display_name()));
    }
    let n = tp + fp + tn + fneg;
    ModelMetrics {
        name: m.spec.display_name().to_string(),
        rule: m.spec.describe(),
        accuracy: ratio(tp + tn, n),
        auc,
        ppv: ratio(tp, tp + fp),
        tnr: ratio(tn, tn + fp),
        tpr: ratio(tp, tp + fneg),
        positive_rate: ratio(tp + fp, n),
    }
}

pub fn baseline_metrics(table: &ObservationTable) -> Result<BaselineMetrics> {
    let y = table
        .outcome
        .as_ref()
        .ok_or_else(|| Error::Config("baseline metrics need an outcome column".into()))?;
    if y.is_empty() {
        return Err(Error::Degenerate("no rows".into()));
    }
    let mut notices = Vec::new();
    let a = model_metrics(&table.model_a, y, &mut notices);
    let b = model_metrics(&table.model_b, y, &mut notices);
    let disagree = table
        .model_a
        .yhat
        .iter()
        .zip(&table.model_b.yhat)
        .filter(|(p, q)| p != q)
        .count();
    Ok(BaselineMetrics {
        n: y.len(),
        prevalence: ratio(y.iter().filter(|&&v| v).count() as u64, y.len() as u64),
        models: [a, b],
        disagreement: disagree as f64 / y.len() as f64,
        notices,
    })
}

impl BaselineMetrics {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("model\trule\taccuracy\tauc\tppv\ttnr\ttpr\tpositive_rate\n");
        for m in &self.models {
            out.push_str(&format!(
                "{}\t{}\t{:.4}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n",
                m.name,
                m.rule,
                m.accuracy,
                m.auc.map_or_else(|| "NA".to_string(), |a| format!("{a:.4}")),
                m.ppv,
                m.tnr,
                m.tpr,
                m.positive_rate
            ));
        }
        out.push_str(&format!("# n = {}\n# disagreement = {:.4}\n", self.n, self.disagreement));
        for n in &self.notices {
            out.push_str(&format!("# {n}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_auc(s: &[f64], y: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] && !y[j] {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_matches_pairwise_count_with_ties() {
        let s = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 5.0, 1.0, 4.0];
        let y = [false, true, false, true, false, true, true, false, false];
        assert!((auc(&s, &y).unwrap() - brute_auc(&s, &y)).abs() < 1e-12);
    }

    #[test]
    fn auc_needs_both_classes() {
        assert_eq!(auc(&[1.0, 2.0], &[true, true]), None);
    }

    #[test]
    fn perfect_classifier_against_itself() {
        let y = vec![true, false, true, true, false];
        let col = ModelColumn::from_bits("m", y.clone());
        let t = ObservationTable::from_parts(Some(y.clone()), col.clone(), col, "g", vec![0; 5], vec!["x".into()], vec![])
            .unwrap();
        let m = baseline_metrics(&t).unwrap();
        assert_eq!(m.models[0].accuracy, 1.0);
        assert_eq!(m.disagreement, 0.0);
        assert_eq!(m.models[0].auc, None);
        assert_eq!(m.notices.len(), 2);
    }
}
