//! Conditional multinomial model of a pair of classifications.
//!
//! Within each sensitive group the pair `(yhat1, yhat2)` is coarsened to three
//! events: `01` (only model 2 says positive), `10` (only model 1 says
//! positive) and agreement. The difference-in-differences of the target rate
//! is a linear function of the four disagreement probabilities:
//!
//! ```text
//! delta = p01[a2] - p01[a1] - p10[a2] + p10[a1]
//! ```
//!
//! The score test works in the coordinates `(eta+, eta-, d, delta)`:
//!
//! ```text
//! eta+ = p01[a1] + p10[a1]        d     = p01[a2] + p10[a2] - eta+
//! eta- = p01[a1] - p10[a1]        delta = p01[a2] - p10[a2] - eta-
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disparity metric, i.e. which outcome stratum the rates are computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// False positive rate: rows with `Y = 0`.
    Fpr,
    /// False negative rate: rows with `Y = 1`, classifications flipped.
    Fnr,
    /// Acceptance rate: all rows.
    Accept,
}

impl Metric {
    pub fn needs_outcome(self) -> bool {
        !matches!(self, Metric::Accept)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Fpr => "fpr",
            Metric::Fnr => "fnr",
            Metric::Accept => "accept",
        }
    }

    /// Applies the conditioning predicate to one labelled record.
    ///
    /// Returns `Ok(None)` if the row is filtered out, and an error if the
    /// metric needs an outcome the row does not carry.
    pub fn condition(self, row: &LabeledRecord) -> Result<Option<Record>> {
        let keep = |y: bool| -> Result<bool> {
            match row.outcome {
                Some(o) => Ok(o == y),
                None => Err(Error::InvalidParameter(format!(
                    "metric `{}` needs an outcome for every row",
                    self.name()
                ))),
            }
        };
        let rec = Record {
            yhat1: row.yhat1,
            yhat2: row.yhat2,
            group: row.group,
        };
        Ok(match self {
            Metric::Fpr => keep(false)?.then_some(rec),
            Metric::Fnr => keep(true)?.then_some(Record {
                yhat1: !rec.yhat1,
                yhat2: !rec.yhat2,
                group: rec.group,
            }),
            Metric::Accept => Some(rec),
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fpr" => Ok(Metric::Fpr),
            "fnr" => Ok(Metric::Fnr),
            "accept" | "acceptance" => Ok(Metric::Accept),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sensitive group membership within an audit pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A1,
    A2,
}

impl Group {
    pub fn index(self) -> usize {
        match self {
            Group::A1 => 0,
            Group::A2 => 1,
        }
    }

    pub fn swapped(self) -> Group {
        match self {
            Group::A1 => Group::A2,
            Group::A2 => Group::A1,
        }
    }
}

/// A row before metric conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledRecord {
    pub outcome: Option<bool>,
    pub yhat1: bool,
    pub yhat2: bool,
    pub group: Group,
}

/// A row after metric conditioning; the math downstream is metric-agnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Record {
    pub yhat1: bool,
    pub yhat2: bool,
    pub group: Group,
}

/// The three coarsened events of the multinomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    /// `yhat1 = 0, yhat2 = 1`
    D01,
    /// `yhat1 = 1, yhat2 = 0`
    D10,
    Agree,
}

impl Record {
    pub fn cell(&self) -> Cell {
        match (self.yhat1, self.yhat2) {
            (false, true) => Cell::D01,
            (true, false) => Cell::D10,
            _ => Cell::Agree,
        }
    }
}

/// Records retained after metric conditioning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionedSample {
    pub records: Vec<Record>,
}

impl ConditionedSample {
    pub fn new(records: Vec<Record>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn counts(&self) -> CellCounts {
        count_cells(&self.records)
    }
}

/// Keeps the rows passing the metric's conditioning predicate.
///
/// An empty result is reported as [`Error::Degenerate`].
pub fn condition_sample<'a, I>(rows: I, metric: Metric) -> Result<ConditionedSample>
where
    I: IntoIterator<Item = &'a LabeledRecord>,
{
    let mut records = Vec::new();
    for row in rows {
        if let Some(rec) = metric.condition(row)? {
            records.push(rec);
        }
    }
    if records.is_empty() {
        return Err(Error::Degenerate("empty conditioned sample".into()));
    }
    Ok(ConditionedSample { records })
}

/// Disagreement and agreement tallies for one sensitive group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub n01: u64,
    pub n10: u64,
    /// `n00 + n11`
    pub ndot: u64,
}

impl GroupCounts {
    pub fn total(&self) -> u64 {
        self.n01 + self.n10 + self.ndot
    }

    pub fn disagreements(&self) -> u64 {
        self.n01 + self.n10
    }

    fn add(&mut self, cell: Cell) {
        match cell {
            Cell::D01 => self.n01 += 1,
            Cell::D10 => self.n10 += 1,
            Cell::Agree => self.ndot += 1,
        }
    }
}

/// Per-group cell counts of a conditioned sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub a1: GroupCounts,
    pub a2: GroupCounts,
}

impl CellCounts {
    pub fn group(&self, g: Group) -> &GroupCounts {
        match g {
            Group::A1 => &self.a1,
            Group::A2 => &self.a2,
        }
    }

    pub fn group_mut(&mut self, g: Group) -> &mut GroupCounts {
        match g {
            Group::A1 => &mut self.a1,
            Group::A2 => &mut self.a2,
        }
    }

    pub fn n(&self) -> u64 {
        self.a1.total() + self.a2.total()
    }

    pub fn disagreements(&self) -> u64 {
        self.a1.disagreements() + self.a2.disagreements()
    }

    pub fn add(&mut self, rec: &Record) {
        self.group_mut(rec.group).add(rec.cell());
    }

    pub fn merge(&mut self, other: &CellCounts) {
        for g in [Group::A1, Group::A2] {
            let o = *other.group(g);
            let s = self.group_mut(g);
            s.n01 += o.n01;
            s.n10 += o.n10;
            s.ndot += o.ndot;
        }
    }
}

pub fn count_cells(records: &[Record]) -> CellCounts {
    let mut counts = CellCounts::default();
    for r in records {
        counts.add(r);
    }
    counts
}

/// Disagreement probabilities of one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupProbs {
    pub p01: f64,
    pub p10: f64,
}

impl GroupProbs {
    pub fn pdot(&self) -> f64 {
        1.0 - self.p01 - self.p10
    }

    fn prob(&self, cell: Cell) -> f64 {
        match cell {
            Cell::D01 => self.p01,
            Cell::D10 => self.p10,
            Cell::Agree => self.pdot(),
        }
    }
}

/// The four free parameters of the coarsened multinomial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaHat {
    pub a1: GroupProbs,
    pub a2: GroupProbs,
}

impl ThetaHat {
    pub fn new(p01_a1: f64, p10_a1: f64, p01_a2: f64, p10_a2: f64) -> Self {
        Self {
            a1: GroupProbs { p01: p01_a1, p10: p10_a1 },
            a2: GroupProbs { p01: p01_a2, p10: p10_a2 },
        }
    }

    pub fn group(&self, g: Group) -> &GroupProbs {
        match g {
            Group::A1 => &self.a1,
            Group::A2 => &self.a2,
        }
    }

    pub fn prob(&self, rec: &Record) -> f64 {
        self.group(rec.group).prob(rec.cell())
    }

    /// Checks every probability lies in `[-tol, 1 + tol]`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (name, g) in [("a1", &self.a1), ("a2", &self.a2)] {
            for (cell, p) in [("p01", g.p01), ("p10", g.p10), ("pdot", g.pdot())] {
                if !p.is_finite() || p < -tol || p > 1.0 + tol {
                    return Err(Error::InvalidParameter(format!(
                        "{cell}[{name}] = {p} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        delta_hat(self)
    }

    pub fn reparameterize(&self) -> ReparamTheta {
        let eta_plus = self.a1.p01 + self.a1.p10;
        let eta_minus = self.a1.p01 - self.a1.p10;
        ReparamTheta {
            eta_plus,
            eta_minus,
            delta_small: self.a2.p01 + self.a2.p10 - eta_plus,
            delta_big: self.a2.p01 - self.a2.p10 - eta_minus,
        }
    }
}

/// `(eta+, eta-, d, delta)`; the last coordinate is the disparity parameter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReparamTheta {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub delta_small: f64,
    pub delta_big: f64,
}

impl ReparamTheta {
    pub fn as_array(&self) -> [f64; 4] {
        [self.eta_plus, self.eta_minus, self.delta_small, self.delta_big]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            eta_plus: v[0],
            eta_minus: v[1],
            delta_small: v[2],
            delta_big: v[3],
        }
    }

    /// Inverse map, without feasibility checks.
    pub fn to_theta_unchecked(&self) -> ThetaHat {
        let Self { eta_plus, eta_minus, delta_small, delta_big } = *self;
        ThetaHat::new(
            (eta_plus + eta_minus) / 2.0,
            (eta_plus - eta_minus) / 2.0,
            (eta_plus + delta_small + eta_minus + delta_big) / 2.0,
            (eta_plus + delta_small - eta_minus - delta_big) / 2.0,
        )
    }

    /// Inverse map. Fails if any implied probability leaves `[0, 1]` by more
    /// than `1e-12`.
    pub fn to_theta(&self) -> Result<ThetaHat> {
        let theta = self.to_theta_unchecked();
        theta.validate(1e-12)?;
        Ok(theta)
    }
}

/// Closed-form null MLE: per-group empirical frequencies.
pub fn mle(counts: &CellCounts) -> Result<ThetaHat> {
    let fit = |g: &GroupCounts, name: &str| -> Result<GroupProbs> {
        let n = g.total();
        if n == 0 {
            return Err(Error::Degenerate(format!("group {name} has no observations")));
        }
        let n = n as f64;
        Ok(GroupProbs {
            p01: g.n01 as f64 / n,
            p10: g.n10 as f64 / n,
        })
    };
    Ok(ThetaHat {
        a1: fit(&counts.a1, "a1")?,
        a2: fit(&counts.a2, "a2")?,
    })
}

/// Plug-in difference-in-differences.
pub fn delta_hat(theta: &ThetaHat) -> f64 {
    theta.a2.p01 - theta.a1.p01 - theta.a2.p10 + theta.a1.p10
}

fn xlogy(n: u64, p: f64) -> f64 {
    if n == 0 {
        0.0
    } else if p <= 0.0 {
        f64::NEG_INFINITY
    } else {
        n as f64 * p.ln()
    }
}

/// Multinomial log-likelihood with the `0 log 0 = 0` convention.
///
/// A positive count on a zero-probability cell yields `-inf`.
pub fn log_likelihood(counts: &CellCounts, theta: &ThetaHat) -> f64 {
    [Group::A1, Group::A2]
        .iter()
        .map(|&g| {
            let c = counts.group(g);
            let p = theta.group(g);
            xlogy(c.n01, p.p01) + xlogy(c.n10, p.p10) + xlogy(c.ndot, p.pdot())
        })
        .sum()
}

/// Log-likelihood maximised over the saturated model (deviance = -2 x this).
pub fn max_log_likelihood(counts: &CellCounts) -> Result<f64> {
    Ok(log_likelihood(counts, &mle(counts)?))
}

/// Per-observation score in `(eta+, eta-, d, delta)` order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector(pub [f64; 4]);

impl ScoreVector {
    pub fn delta_component(&self) -> f64 {
        self.0[3]
    }

    pub fn dot(&self, w: &[f64; 4]) -> f64 {
        self.0.iter().zip(w).map(|(a, b)| a * b).sum()
    }
}

/// Score of a single record with respect to `(eta+, eta-, d, delta)`.
pub fn score_contribution(rec: &Record, theta: &ThetaHat) -> Result<ScoreVector> {
    let p = theta.prob(rec);
    if !(p > 0.0) {
        return Err(Error::Degenerate(format!(
            "record {:?} falls on a zero-probability cell",
            rec.cell()
        )));
    }
    let half = 1.0 / (2.0 * p);
    let s = match (rec.group, rec.cell()) {
        (Group::A1, Cell::D01) => [half, half, 0.0, 0.0],
        (Group::A1, Cell::D10) => [half, -half, 0.0, 0.0],
        (Group::A1, Cell::Agree) => [-1.0 / p, 0.0, 0.0, 0.0],
        (Group::A2, Cell::D01) => [half, half, half, half],
        (Group::A2, Cell::D10) => [half, -half, half, -half],
        (Group::A2, Cell::Agree) => [-1.0 / p, 0.0, -1.0 / p, 0.0],
    };
    Ok(ScoreVector(s))
}

/// Target rate of each model within each group, computed from raw counts of
/// positive classifications on the conditioned sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub m1_a1: f64,
    pub m1_a2: f64,
    pub m2_a1: f64,
    pub m2_a2: f64,
}

impl GroupRates {
    pub fn disparity_m1(&self) -> f64 {
        self.m1_a2 - self.m1_a1
    }

    pub fn disparity_m2(&self) -> f64 {
        self.m2_a2 - self.m2_a1
    }

    pub fn delta(&self) -> f64 {
        self.disparity_m2() - self.disparity_m1()
    }
}

/// Rates `P(yhat_m = 1 | group)` on a conditioned sample. Groups without
/// observations get NaN.
pub fn group_rates(records: &[Record]) -> GroupRates {
    let mut pos = [[0u64; 2]; 2];
    let mut n = [0u64; 2];
    for r in records {
        let g = r.group.index();
        n[g] += 1;
        pos[0][g] += r.yhat1 as u64;
        pos[1][g] += r.yhat2 as u64;
    }
    let rate = |m: usize, g: usize| {
        if n[g] == 0 {
            f64::NAN
        } else {
            pos[m][g] as f64 / n[g] as f64
        }
    };
    GroupRates {
        m1_a1: rate(0, 0),
        m1_a2: rate(0, 1),
        m2_a1: rate(1, 0),
        m2_a2: rate(1, 1),
    }
}
