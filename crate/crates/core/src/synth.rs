//! Synthetic tables with planted, cell-wise constant disparity structure,
//! and a direct row-counting disparity oracle.
//!
//! Random streams come from ChaCha8 seeded with `seed_from_u64`. Independent
//! replications use [`split_seed`], a SplitMix64 mix of the base seed and the
//! replication index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instability::{score_test, SplitCandidate};
use crate::model::{Metric, ThetaHat};
use crate::table::{Covariate, CovariateValues, ModelColumn, ObservationTable, SensitivePair};
use crate::tree::{Atom, NodePredicate, ThresholdOp};

pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), seed_from_u64; replication seeds via SplitMix64";

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index` derived from `base`.
pub fn split_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum CovariateDist {
    Categorical {
        levels: Vec<String>,
        /// Level probabilities; uniform if empty.
        #[serde(default)]
        probs: Vec<f64>,
    },
    Uniform {
        low: f64,
        high: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCovariate {
    pub name: String,
    #[serde(flatten)]
    pub dist: CovariateDist,
}

/// Disagreement probabilities of one group within a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellProbs {
    pub p01: f64,
    pub p10: f64,
    /// Share of agreements that are `(1, 1)`.
    #[serde(default = "half")]
    pub p11_share: f64,
}

fn half() -> f64 {
    0.5
}

impl CellProbs {
    pub fn new(p01: f64, p10: f64) -> Self {
        Self { p01, p10, p11_share: 0.5 }
    }
}

/// A region of covariate space with its own classification distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCell {
    /// Conjunction; empty matches everything.
    #[serde(default)]
    pub predicate: Vec<Atom>,
    pub a1: CellProbs,
    pub a2: CellProbs,
}

impl SynthCell {
    pub fn theta(&self) -> ThetaHat {
        ThetaHat::new(self.a1.p01, self.a1.p10, self.a2.p01, self.a2.p10)
    }

    /// Population disparity difference-in-differences of the cell under
    /// `metric`. The classification law does not depend on `Y`, so FPR and
    /// acceptance share it, and FNR (which swaps `01` and `10`) negates it.
    pub fn ground_truth_delta(&self, metric: Metric) -> f64 {
        let d = self.theta().delta();
        match metric {
            Metric::Fnr => -d,
            Metric::Fpr | Metric::Accept => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    /// `P(A = a2)`.
    pub p_a2: f64,
    /// `P(Y = 1 | A = a1)`.
    pub prevalence_a1: f64,
    /// `P(Y = 1 | A = a2)`.
    pub prevalence_a2: f64,
    #[serde(default)]
    pub covariates: Vec<SynthCovariate>,
    /// Must tile covariate space: every point lies in exactly one cell.
    pub cells: Vec<SynthCell>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Value {
    Level(usize),
    Number(f64),
}

fn prob_ok(p: f64) -> bool {
    p.is_finite() && (0.0..=1.0).contains(&p)
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    fn covariate(&self, name: &str) -> Result<(usize, &SynthCovariate)> {
        self.covariates
            .iter()
            .enumerate()
            .find(|(_, c)| c.name == name)
            .ok_or_else(|| Error::InvalidParameter(format!("cell predicate uses unknown covariate `{name}`")))
    }

    fn atom_holds(&self, atom: &Atom, values: &[Value]) -> Result<bool> {
        let (i, cov) = self.covariate(atom.covariate())?;
        match (atom, &cov.dist, values[i]) {
            (Atom::Levels { levels, .. }, CovariateDist::Categorical { levels: dict, .. }, Value::Level(l)) => {
                Ok(levels.iter().any(|x| *x == dict[l]))
            }
            (Atom::Threshold { op, value, .. }, CovariateDist::Uniform { .. }, Value::Number(x)) => Ok(match op {
                ThresholdOp::Le => x <= *value,
                ThresholdOp::Gt => x > *value,
            }),
            _ => Err(Error::InvalidParameter(format!(
                "predicate on `{}` does not match its distribution",
                atom.covariate()
            ))),
        }
    }

    fn cell_index(&self, values: &[Value]) -> Result<Option<usize>> {
        let mut hit = None;
        for (ci, cell) in self.cells.iter().enumerate() {
            let mut all = true;
            for a in &cell.predicate {
                if !self.atom_holds(a, values)? {
                    all = false;
                    break;
                }
            }
            if all {
                if hit.is_some() {
                    return Err(Error::InvalidParameter("scenario cells overlap".into()));
                }
                hit = Some(ci);
            }
        }
        Ok(hit)
    }

    /// Representative values per covariate: every level, and for numeric
    /// covariates the bounds, thresholds and midpoints between them.
    fn representatives(&self) -> Vec<Vec<Value>> {
        self.covariates
            .iter()
            .map(|c| match &c.dist {
                CovariateDist::Categorical { levels, .. } => (0..levels.len()).map(Value::Level).collect(),
                CovariateDist::Uniform { low, high } => {
                    let mut pts = vec![*low, *high];
                    for cell in &self.cells {
                        for a in &cell.predicate {
                            if let Atom::Threshold { covariate, value, .. } = a {
                                if *covariate == c.name {
                                    pts.push(*value);
                                }
                            }
                        }
                    }
                    pts.sort_by(f64::total_cmp);
                    pts.dedup();
                    let mids: Vec<f64> = pts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
                    pts.extend(mids);
                    pts.into_iter().map(Value::Number).collect()
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        for (name, p) in [("p_a2", self.p_a2), ("prevalence_a1", self.prevalence_a1), ("prevalence_a2", self.prevalence_a2)] {
            if !prob_ok(p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.cells.is_empty() {
            return bad("scenario needs at least one cell".into());
        }
        for c in &self.covariates {
            match &c.dist {
                CovariateDist::Categorical { levels, probs } => {
                    if levels.is_empty() {
                        return bad(format!("covariate `{}` has no levels", c.name));
                    }
                    if !probs.is_empty()
                        && (probs.len() != levels.len()
                            || probs.iter().any(|&p| !prob_ok(p))
                            || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9)
                    {
                        return bad(format!("covariate `{}` has invalid level probabilities", c.name));
                    }
                }
                CovariateDist::Uniform { low, high } => {
                    if !(low < high) {
                        return bad(format!("covariate `{}` needs low < high", c.name));
                    }
                }
            }
        }
        for (i, cell) in self.cells.iter().enumerate() {
            for (g, p) in [("a1", cell.a1), ("a2", cell.a2)] {
                if !prob_ok(p.p01) || !prob_ok(p.p10) || !prob_ok(p.p11_share) || p.p01 + p.p10 > 1.0 + 1e-12 {
                    return bad(format!("cell {i}, group {g}: invalid probabilities {p:?}"));
                }
            }
        }
        // exhaustive tiling check over representative points
        let reps = self.representatives();
        let total: usize = reps.iter().map(Vec::len).product();
        if total > 1_000_000 {
            return bad("too many covariate combinations to verify tiling".into());
        }
        let mut idx = vec![0usize; reps.len()];
        loop {
            let point: Vec<Value> = idx.iter().zip(&reps).map(|(&i, r)| r[i]).collect();
            if self.cell_index(&point)?.is_none() {
                return bad(format!("no cell covers the covariate point {point:?}"));
            }
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < reps[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
        Ok(())
    }

    /// Draws the table. For each row: covariates in declaration order, then
    /// the group, the outcome, and the pair of classifications from the
    /// row's cell.
    pub fn generate(&self) -> Result<ObservationTable> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.n;
        let mut values: Vec<Vec<Value>> = vec![Vec::with_capacity(n); self.covariates.len()];
        let mut group = Vec::with_capacity(n);
        let mut outcome = Vec::with_capacity(n);
        let mut y1 = Vec::with_capacity(n);
        let mut y2 = Vec::with_capacity(n);
        let mut point = vec![Value::Level(0); self.covariates.len()];
        for _ in 0..n {
            for (j, c) in self.covariates.iter().enumerate() {
                point[j] = match &c.dist {
                    CovariateDist::Categorical { levels, probs } => {
                        let u: f64 = rng.gen();
                        let l = if probs.is_empty() {
                            ((u * levels.len() as f64) as usize).min(levels.len() - 1)
                        } else {
                            let mut acc = 0.0;
                            probs
                                .iter()
                                .position(|p| {
                                    acc += p;
                                    u < acc
                                })
                                .unwrap_or(levels.len() - 1)
                        };
                        Value::Level(l)
                    }
                    CovariateDist::Uniform { low, high } => Value::Number(low + (high - low) * rng.gen::<f64>()),
                };
                values[j].push(point[j]);
            }
            let a2 = rng.gen::<f64>() < self.p_a2;
            let prev = if a2 { self.prevalence_a2 } else { self.prevalence_a1 };
            outcome.push(rng.gen::<f64>() < prev);
            let cell = &self.cells[self.cell_index(&point)?.expect("validated tiling")];
            let probs = if a2 { cell.a2 } else { cell.a1 };
            let u: f64 = rng.gen();
            let (p, q) = if u < probs.p01 {
                (false, true)
            } else if u < probs.p01 + probs.p10 {
                (true, false)
            } else {
                let both = rng.gen::<f64>() < probs.p11_share;
                (both, both)
            };
            y1.push(p);
            y2.push(q);
            group.push(a2 as u32);
        }
        let covariates = self
            .covariates
            .iter()
            .zip(values)
            .map(|(c, vals)| match &c.dist {
                CovariateDist::Categorical { levels, .. } => Covariate {
                    name: c.name.clone(),
                    kind: crate::instability::CovariateKind::Categorical,
                    values: CovariateValues::Codes {
                        codes: vals
                            .iter()
                            .map(|v| match v {
                                Value::Level(l) => Some(*l as u32),
                                Value::Number(_) => unreachable!(),
                            })
                            .collect(),
                        levels: levels.clone(),
                    },
                },
                CovariateDist::Uniform { .. } => Covariate::numeric(
                    c.name.clone(),
                    vals.iter()
                        .map(|v| match v {
                            Value::Number(x) => Some(*x),
                            Value::Level(_) => unreachable!(),
                        })
                        .collect(),
                ),
            })
            .collect();
        ObservationTable::from_parts(
            Some(outcome),
            ModelColumn::from_bits("m1", y1),
            ModelColumn::from_bits("m2", y2),
            "group",
            group,
            vec!["a1".into(), "a2".into()],
            covariates,
        )
    }
}

/// Disparity difference-in-differences by direct row counting: the four
/// rates `P(yhat_m = 1)` (FPR on `Y = 0`, acceptance on all rows) or
/// `P(yhat_m = 0)` (FNR on `Y = 1`) among rows matching `predicate`.
pub fn oracle_delta(
    table: &ObservationTable,
    metric: Metric,
    pair: SensitivePair,
    predicate: &NodePredicate,
) -> Result<f64> {
    // [group][model] event counts, [group] totals
    let mut hits = [[0u64; 2]; 2];
    let mut tot = [0u64; 2];
    for i in 0..table.len() {
        let g = match table.sensitive[i] {
            s if s == pair.a1 => 0,
            s if s == pair.a2 => 1,
            _ => continue,
        };
        if !predicate.matches(table, i)? {
            continue;
        }
        let y = table.outcome.as_ref().map(|o| o[i]);
        let keep = match metric {
            Metric::Fpr => y == Some(false),
            Metric::Fnr => y == Some(true),
            Metric::Accept => true,
        };
        if !keep {
            continue;
        }
        tot[g] += 1;
        let event = |yhat: bool| match metric {
            Metric::Fnr => !yhat,
            _ => yhat,
        };
        hits[g][0] += event(table.model_a.yhat[i]) as u64;
        hits[g][1] += event(table.model_b.yhat[i]) as u64;
    }
    if tot[0] == 0 || tot[1] == 0 {
        return Err(Error::Degenerate("a sensitive group is empty under the predicate".into()));
    }
    let rate = |g: usize, m: usize| hits[g][m] as f64 / tot[g] as f64;
    Ok((rate(1, 1) - rate(0, 1)) - (rate(1, 0) - rate(0, 0)))
}

/// Root-node score-test p-values, one per covariate, for a generated table.
pub fn root_p_values(table: &ObservationTable, metric: Metric, max_bins: usize) -> Result<Vec<f64>> {
    let pair = SensitivePair { a1: 0, a2: 1 };
    let mut idx = Vec::new();
    let mut records = Vec::new();
    for i in 0..table.len() {
        if let Some(lab) = table.labeled(i, pair) {
            if let Some(rec) = metric.condition(&lab)? {
                idx.push(i);
                records.push(rec);
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Degenerate("empty conditioned sample".into()));
    }
    table
        .covariates
        .iter()
        .enumerate()
        .map(|(j, cov)| {
            let cand = match &cov.values {
                CovariateValues::Codes { codes, .. } => {
                    let v: Vec<_> = idx.iter().map(|&i| codes[i]).collect();
                    SplitCandidate::from_codes(j, cov.name.clone(), cov.kind, &v)
                }
                CovariateValues::Numeric(vals) => {
                    let v: Vec<_> = idx.iter().map(|&i| vals[i]).collect();
                    SplitCandidate::from_numeric(j, cov.name.clone(), &v, max_bins)
                }
            };
            Ok(score_test(&records, &cand)?.p_raw)
        })
        .collect()
}

/// Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
pub fn ks_uniform(p: &[f64]) -> f64 {
    let mut s = p.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub covariate: String,
    pub replications: usize,
    pub rejection_rate: f64,
    pub ks_distance: f64,
}

/// Root-node rejection rates at `alpha` (unadjusted) over replications with
/// seeds `split_seed(scenario.seed, r)`.
pub fn calibrate(
    scenario: &Scenario,
    replications: usize,
    metric: Metric,
    alpha: f64,
    max_bins: usize,
) -> Result<Vec<CalibrationRow>> {
    let pvals: Vec<Vec<f64>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let table = scenario.with_seed(split_seed(scenario.seed, r)).generate()?;
            root_p_values(&table, metric, max_bins)
        })
        .collect::<Result<_>>()?;
    Ok(scenario
        .covariates
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let p: Vec<f64> = pvals.iter().map(|v| v[j]).collect();
            CalibrationRow {
                covariate: c.name.clone(),
                replications,
                rejection_rate: p.iter().filter(|&&x| x < alpha).count() as f64 / replications as f64,
                ks_distance: ks_uniform(&p),
            }
        })
        .collect())
}

/// The generated table as TSV: group, outcome, both classifications, then
/// covariates.
pub fn table_to_tsv(table: &ObservationTable) -> String {
    let mut out = String::from("group\ty\tm1\tm2");
    for c in &table.covariates {
        out.push('\t');
        out.push_str(&c.name);
    }
    out.push('\n');
    for i in 0..table.len() {
        out.push_str(&table.sensitive_levels[table.sensitive[i] as usize]);
        let y = table.outcome.as_ref().map_or("NA", |o| if o[i] { "1" } else { "0" });
        out.push_str(&format!(
            "\t{y}\t{}\t{}",
            table.model_a.yhat[i] as u8, table.model_b.yhat[i] as u8
        ));
        for c in &table.covariates {
            out.push('\t');
            match &c.values {
                CovariateValues::Codes { codes, levels } => match codes[i] {
                    Some(k) => out.push_str(&levels[k as usize]),
                    None => out.push_str("NA"),
                },
                CovariateValues::Numeric(v) => match v[i] {
                    Some(x) => out.push_str(&x.to_string()),
                    None => out.push_str("NA"),
                },
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_cell(p: CellProbs, q: CellProbs) -> Scenario {
        Scenario {
            n: 1000,
            p_a2: 0.5,
            prevalence_a1: 0.3,
            prevalence_a2: 0.4,
            covariates: vec![SynthCovariate {
                name: "x".into(),
                dist: CovariateDist::Categorical { levels: vec!["u".into(), "v".into()], probs: vec![] },
            }],
            cells: vec![SynthCell { predicate: vec![], a1: p, a2: q }],
            seed: 7,
        }
    }

    #[test]
    fn no_disagreement_gives_identical_models() {
        let s = one_cell(CellProbs::new(0.0, 0.0), CellProbs::new(0.0, 0.0));
        let t = s.generate().unwrap();
        assert_eq!(t.model_a.yhat, t.model_b.yhat);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let s = one_cell(CellProbs::new(0.1, 0.05), CellProbs::new(0.2, 0.1));
        assert_eq!(table_to_tsv(&s.generate().unwrap()), table_to_tsv(&s.generate().unwrap()));
        assert_ne!(
            table_to_tsv(&s.generate().unwrap()),
            table_to_tsv(&s.with_seed(8).generate().unwrap())
        );
    }

    #[test]
    fn tiling_is_checked() {
        let mut s = one_cell(CellProbs::new(0.1, 0.05), CellProbs::new(0.2, 0.1));
        s.cells[0].predicate = vec![Atom::Levels { covariate: "x".into(), levels: vec!["u".into()], missing: false }];
        assert!(s.validate().is_err());
        let mut other = s.cells[0].clone();
        other.predicate = vec![Atom::Levels { covariate: "x".into(), levels: vec!["v".into()], missing: false }];
        s.cells.push(other.clone());
        s.validate().unwrap();
        s.cells.push(other);
        assert!(s.validate().is_err());
    }

    #[test]
    fn invalid_probabilities_rejected() {
        let s = one_cell(CellProbs::new(0.7, 0.5), CellProbs::new(0.2, 0.1));
        assert!(s.generate().is_err());
    }

    #[test]
    fn hand_counted_oracle() {
        // FPR sample (Y = 0), a1 rows: m1 = 1,0,1,0  m2 = 1,1,1,0 ; a2 rows: m1 = 1,1,0,0  m2 = 0,0,0,1
        // FPR m1: a1 2/4, a2 2/4 -> disparity 0 ; m2: a1 3/4, a2 1/4 -> disparity -1/2 ; delta = -1/2.
        // Four Y = 1 rows must be ignored.
        let m1 = [1, 0, 1, 0, 1, 1, 0, 0, 1, 1, 0, 0];
        let m2 = [1, 1, 1, 0, 0, 0, 0, 1, 0, 1, 1, 1];
        let g = [0, 0, 0, 0, 1, 1, 1, 1, 0, 1, 0, 1];
        let y = [0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        let bits = |v: &[u8]| v.iter().map(|&b| b == 1).collect::<Vec<_>>();
        let t = ObservationTable::from_parts(
            Some(bits(&y)),
            ModelColumn::from_bits("m1", bits(&m1)),
            ModelColumn::from_bits("m2", bits(&m2)),
            "g",
            g.to_vec(),
            vec!["a1".into(), "a2".into()],
            vec![],
        )
        .unwrap();
        let pair = SensitivePair { a1: 0, a2: 1 };
        let root = NodePredicate::default();
        assert!((oracle_delta(&t, Metric::Fpr, pair, &root).unwrap() + 0.5).abs() < 1e-15);
        assert!((oracle_delta(&t, Metric::Fpr, pair.swapped(), &root).unwrap() - 0.5).abs() < 1e-15);
        // FNR rows (Y = 1): a1 rows 8,10: m1 = 1,0 m2 = 0,1 ; a2 rows 9,11: m1 = 1,0 m2 = 1,1
        // FNR m1: a1 1/2, a2 1/2 ; m2: a1 1/2, a2 0 -> delta = -1/2
        assert!((oracle_delta(&t, Metric::Fnr, pair, &root).unwrap() + 0.5).abs() < 1e-15);
        let same = ObservationTable { model_b: t.model_a.clone(), ..t.clone() };
        assert_eq!(oracle_delta(&same, Metric::Accept, pair, &root).unwrap(), 0.0);
    }

    #[test]
    fn ks_of_grid_is_small() {
        let p: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&p) <= 0.0005 + 1e-12);
        assert!((ks_uniform(&[0.0; 10]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_seed_differs_per_index() {
        let seeds: std::collections::BTreeSet<_> = (0..100).map(|i| split_seed(42, i)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
