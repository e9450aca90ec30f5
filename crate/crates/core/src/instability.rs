//! Per-covariate tests of whether the disparity parameter is constant across
//! the levels of a splitting variable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, count_cells, CellCounts, Record, ThetaHat};
use crate::numerics::{self, chisq_sf};

/// How a splitting covariate's levels relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Categorical,
    Ordinal,
    Numeric,
}

impl std::str::FromStr for CovariateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "categorical" | "cat" | "factor" => Ok(Self::Categorical),
            "ordinal" | "ord" | "ordered" => Ok(Self::Ordinal),
            "numeric" | "num" | "continuous" => Ok(Self::Numeric),
            other => Err(Error::Config(format!("unknown covariate kind `{other}`"))),
        }
    }
}

/// What one level of a [`SplitCandidate`] stands for.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelKey {
    /// Dictionary code of a categorical or ordinal value. For ordinal
    /// covariates the code is also the rank.
    Code(u32),
    /// Numeric bin `(lower, upper]`; `upper = None` for the last bin.
    Bin { upper: Option<f64> },
    /// Missing numeric or ordinal value.
    Missing,
}

/// A covariate restricted to one node's conditioned sample.
#[derive(Debug, Clone)]
pub struct SplitCandidate {
    /// Declaration index of the covariate.
    pub covariate: usize,
    pub name: String,
    pub kind: CovariateKind,
    /// Level index in `0..k` for each record of the sample.
    pub assignment: Vec<usize>,
    /// Nonempty levels; for ordinal and numeric covariates the ordered
    /// levels come first and [`LevelKey::Missing`], if present, last.
    pub levels: Vec<LevelKey>,
}

impl SplitCandidate {
    pub fn k(&self) -> usize {
        self.levels.len()
    }

    /// Builds a candidate from per-record dictionary codes, dropping empty
    /// levels. Ordinal codes must be ranks.
    pub fn from_codes(
        covariate: usize,
        name: impl Into<String>,
        kind: CovariateKind,
        codes: &[Option<u32>],
    ) -> Self {
        let mut present: Vec<u32> = codes.iter().flatten().copied().collect();
        present.sort_unstable();
        present.dedup();
        let has_missing = codes.iter().any(Option::is_none);
        let mut levels: Vec<LevelKey> = present.iter().map(|&c| LevelKey::Code(c)).collect();
        if has_missing {
            levels.push(LevelKey::Missing);
        }
        let missing_idx = present.len();
        let assignment = codes
            .iter()
            .map(|c| match c {
                Some(c) => present.binary_search(c).expect("present level"),
                None => missing_idx,
            })
            .collect();
        Self {
            covariate,
            name: name.into(),
            kind,
            assignment,
            levels,
        }
    }

    /// Numeric candidate: quantile bins on the non-missing values, missing
    /// values as an extra level.
    pub fn from_numeric(
        covariate: usize,
        name: impl Into<String>,
        values: &[Option<f64>],
        max_bins: usize,
    ) -> Self {
        let observed: Vec<f64> = values.iter().flatten().copied().collect();
        let binning = bin_numeric(&observed, max_bins);
        let mut levels: Vec<LevelKey> = (0..binning.n_bins())
            .map(|b| LevelKey::Bin { upper: binning.boundaries.get(b).copied() })
            .collect();
        let has_missing = observed.len() < values.len();
        let missing_idx = levels.len();
        if has_missing {
            levels.push(LevelKey::Missing);
        }
        let assignment = values
            .iter()
            .map(|v| match v {
                Some(x) => binning.bin_of(*x),
                None => missing_idx,
            })
            .collect();
        Self {
            covariate,
            name: name.into(),
            kind: CovariateKind::Numeric,
            assignment,
            levels,
        }
    }

    /// Number of levels that carry an order (everything except `Missing`).
    pub fn ordered_levels(&self) -> usize {
        self.levels.iter().filter(|l| !matches!(l, LevelKey::Missing)).count()
    }

    pub fn missing_level(&self) -> Option<usize> {
        self.levels.iter().position(|l| matches!(l, LevelKey::Missing))
    }

    /// Per-level cell counts over `sample`.
    pub fn level_counts(&self, sample: &[Record]) -> Vec<CellCounts> {
        let mut out = vec![CellCounts::default(); self.k()];
        for (r, &lvl) in sample.iter().zip(&self.assignment) {
            out[lvl].add(r);
        }
        out
    }
}

/// Quantile binning of a numeric covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    /// Strictly increasing upper boundaries; bin `b` holds
    /// `boundaries[b-1] < x <= boundaries[b]`, the last bin everything above.
    pub boundaries: Vec<f64>,
}

impl Binning {
    pub fn n_bins(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn bin_of(&self, x: f64) -> usize {
        self.boundaries.partition_point(|&b| b < x)
    }
}

/// Inverted-CDF quantiles at `j / max_bins`, duplicates merged. Values on a
/// boundary fall in the lower bin. A constant input yields a single bin.
pub fn bin_numeric(values: &[f64], max_bins: usize) -> Binning {
    let max_bins = max_bins.max(2);
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return Binning { boundaries: Vec::new() };
    }
    let top = sorted[n - 1];
    let mut boundaries: Vec<f64> = Vec::with_capacity(max_bins - 1);
    for j in 1..max_bins {
        let idx = (j * n).div_ceil(max_bins).max(1) - 1;
        let q = sorted[idx];
        if q >= top {
            break;
        }
        if boundaries.last().is_none_or(|&last| q > last) {
            boundaries.push(q);
        }
    }
    Binning { boundaries }
}

/// Result of one covariate's instability test at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTest {
    pub covariate: usize,
    pub name: String,
    pub statistic: f64,
    pub df: u32,
    pub p_raw: f64,
    pub p_bonferroni: f64,
    /// Whether the test entered the Bonferroni family.
    pub testable: bool,
    /// Plug-in disparity difference-in-differences per level; `None` when a
    /// level lacks one of the groups.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub level_deltas: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl SplitTest {
    pub fn untestable(cand: &SplitCandidate, note: impl Into<String>) -> Self {
        Self {
            covariate: cand.covariate,
            name: cand.name.clone(),
            statistic: 0.0,
            df: cand.k().saturating_sub(1) as u32,
            p_raw: 1.0,
            p_bonferroni: 1.0,
            testable: false,
            level_deltas: Vec::new(),
            note: Some(note.into()),
        }
    }
}

/// A test of disparity homogeneity across a covariate's levels.
///
/// Implementations see every candidate of a node at once so node-level work
/// (the null fit) is shared.
pub trait InstabilityTest: Sync {
    fn name(&self) -> &'static str;

    fn test_node(&self, sample: &[Record], candidates: &[SplitCandidate]) -> Result<Vec<SplitTest>>;
}

/// How each record's score is reduced to the scalar `s_i` summed per level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decorrelation {
    /// `s_i = score_i' I^{-1/2} e_4` with the symmetric inverse square root.
    #[default]
    Symmetric,
    /// `s_i = score_i' I^{-1} e_4 / sqrt(e_4' I^{-1} e_4)`: the standardised
    /// efficient score for the disparity coordinate. Unlike the symmetric
    /// form it does not depend on which group is labelled `a1`.
    Efficient,
}

impl std::str::FromStr for Decorrelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "symmetric" => Ok(Self::Symmetric),
            "efficient" => Ok(Self::Efficient),
            other => Err(Error::Config(format!("unknown decorrelation `{other}`"))),
        }
    }
}

/// Node-level quantities shared by every candidate: the pooled MLE and the
/// decorrelated disparity component of each record's score.
#[derive(Debug, Clone)]
pub struct NodeScores {
    pub theta: ThetaHat,
    /// Decorrelated disparity component `s_i` per record.
    pub projected: Vec<f64>,
    /// Eigenvalues of the information floored at the ridge.
    pub floored: usize,
}

impl NodeScores {
    pub fn compute(sample: &[Record], ridge: f64, decorrelation: Decorrelation) -> Result<Self> {
        let theta = model::mle(&count_cells(sample))?;
        let scores = sample
            .iter()
            .map(|r| model::score_contribution(r, &theta))
            .collect::<Result<Vec<_>>>()?;
        let info = numerics::empirical_information(&scores);
        let (w, floored) = match decorrelation {
            Decorrelation::Symmetric => {
                let root = numerics::inv_sqrt(&info, ridge)?;
                (root.matrix.column(3), root.floored)
            }
            Decorrelation::Efficient => {
                let inv = numerics::inverse(&info, ridge)?;
                let mut w = inv.matrix.column(3);
                let scale = w[3].sqrt();
                if !(scale > 0.0) {
                    return Err(Error::SingularInformation);
                }
                w.iter_mut().for_each(|x| *x /= scale);
                (w, inv.floored)
            }
        };
        let projected = scores.iter().map(|s| s.dot(&w)).collect();
        Ok(Self { theta, projected, floored })
    }
}

/// The score (Lagrange multiplier) statistic computed from precomputed node
/// scores: `T = sum_k (sum_{i in k} s_i)^2 / n_k`, referred to chi-squared
/// with `K - 1` degrees of freedom.
pub fn score_statistic(scores: &NodeScores, candidate: &SplitCandidate) -> (f64, u32) {
    let k = candidate.k();
    let mut sums = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (&s, &lvl) in scores.projected.iter().zip(&candidate.assignment) {
        sums[lvl] += s;
        sizes[lvl] += 1;
    }
    let mut t = 0.0;
    let mut nonempty = 0u32;
    for (s, n) in sums.iter().zip(&sizes) {
        if *n > 0 {
            t += s * s / *n as f64;
            nonempty += 1;
        }
    }
    (t.max(0.0), nonempty.saturating_sub(1))
}

fn level_deltas(sample: &[Record], candidate: &SplitCandidate) -> Vec<Option<f64>> {
    candidate
        .level_counts(sample)
        .iter()
        .map(|c| model::mle(c).ok().map(|t| t.delta()))
        .collect()
}

/// Runs the score test for one candidate given the node's shared scores.
pub fn score_test_with(
    sample: &[Record],
    scores: &NodeScores,
    candidate: &SplitCandidate,
) -> SplitTest {
    if candidate.k() < 2 {
        let mut t = SplitTest::untestable(candidate, "fewer than two levels");
        t.df = 0;
        return t;
    }
    let (statistic, df) = score_statistic(scores, candidate);
    let p_raw = chisq_sf(statistic, df);
    SplitTest {
        covariate: candidate.covariate,
        name: candidate.name.clone(),
        statistic,
        df,
        p_raw,
        p_bonferroni: p_raw,
        testable: true,
        level_deltas: level_deltas(sample, candidate),
        note: (scores.floored > 0)
            .then(|| format!("information ridge applied to {} eigenvalue(s)", scores.floored)),
    }
}

/// Standalone score test (symmetric decorrelation) of one candidate on a
/// conditioned sample.
///
/// A singular information matrix yields an untestable result (`p = 1`)
/// rather than an error; an estimation failure is propagated as
/// [`Error::Degenerate`].
pub fn score_test(sample: &[Record], candidate: &SplitCandidate) -> Result<SplitTest> {
    ScoreTest::default().test_one(sample, candidate)
}

/// The score-based instability test.
#[derive(Debug, Clone, Copy)]
pub struct ScoreTest {
    pub ridge: f64,
    pub decorrelation: Decorrelation,
}

impl Default for ScoreTest {
    fn default() -> Self {
        Self { ridge: numerics::DEFAULT_RIDGE, decorrelation: Decorrelation::Symmetric }
    }
}

impl ScoreTest {
    /// Unadjusted test of a single candidate.
    pub fn test_one(&self, sample: &[Record], candidate: &SplitCandidate) -> Result<SplitTest> {
        if candidate.k() < 2 {
            return Ok(score_test_with(
                sample,
                &NodeScores { theta: ThetaHat::default(), projected: Vec::new(), floored: 0 },
                candidate,
            ));
        }
        match NodeScores::compute(sample, self.ridge, self.decorrelation) {
            Ok(scores) => Ok(score_test_with(sample, &scores, candidate)),
            Err(Error::SingularInformation) => Ok(SplitTest::untestable(candidate, "singular information")),
            Err(e) => Err(e),
        }
    }
}

impl InstabilityTest for ScoreTest {
    fn name(&self) -> &'static str {
        match self.decorrelation {
            Decorrelation::Symmetric => "score",
            Decorrelation::Efficient => "score (efficient)",
        }
    }

    fn test_node(&self, sample: &[Record], candidates: &[SplitCandidate]) -> Result<Vec<SplitTest>> {
        let scores = match NodeScores::compute(sample, self.ridge, self.decorrelation) {
            Ok(s) => s,
            Err(Error::SingularInformation) => {
                return Ok(candidates
                    .iter()
                    .map(|c| SplitTest::untestable(c, "singular information"))
                    .collect())
            }
            Err(e) => return Err(e),
        };
        let mut tests: Vec<SplitTest> = candidates
            .iter()
            .map(|c| score_test_with(sample, &scores, c))
            .collect();
        apply_bonferroni(&mut tests);
        Ok(tests)
    }
}

/// Multiplies each testable p-value by the number of testable candidates.
pub fn apply_bonferroni(tests: &mut [SplitTest]) {
    let m = tests.iter().filter(|t| t.testable && t.df >= 1).count();
    for t in tests.iter_mut() {
        t.p_bonferroni = if t.testable && t.df >= 1 {
            (t.p_raw * m as f64).min(1.0)
        } else {
            1.0
        };
    }
}

/// Index into `tests` of the variable to split on, if any clears `alpha`
/// after adjustment. Ties: smaller raw p, then larger statistic, then
/// declaration order.
pub fn select_split_variable(tests: &[SplitTest], alpha: f64) -> Option<usize> {
    tests
        .iter()
        .enumerate()
        .filter(|(_, t)| t.testable && t.df >= 1 && t.p_bonferroni < alpha)
        .min_by(|(_, a), (_, b)| {
            a.p_raw
                .total_cmp(&b.p_raw)
                .then(b.statistic.total_cmp(&a.statistic))
                .then(a.covariate.cmp(&b.covariate))
        })
        .map(|(i, _)| i)
}
