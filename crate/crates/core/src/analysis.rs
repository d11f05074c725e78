//! Writer-group comparisons: PoV distributions, per-cell aggregates with
//! significance tests, and prompt-level score differences.
//!
//! Differences are always signed human minus machine.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::attributes::AttributeSource;
use crate::corpus::WriterGroup;
use crate::lexicons::Dimension;
use crate::pov::PovLabel;
use crate::scoring::{Method, ScoreRow};
use crate::{seed, Error, Result, Scalar};

/// Which score column an analysis reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    #[default]
    Z,
    Raw,
}

impl ValueKind {
    pub fn pick<T: Scalar>(self, row: &ScoreRow<T>) -> Option<T> {
        match self {
            ValueKind::Z => row.score.z,
            ValueKind::Raw => row.score.raw,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Z => "z",
            ValueKind::Raw => "raw",
        }
    }
}

impl FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z" => Ok(ValueKind::Z),
            "raw" => Ok(ValueKind::Raw),
            _ => Err(Error::Config(format!("unknown value kind `{s}` (z or raw)"))),
        }
    }
}

pub type ScoreKey = (Dimension, Method, AttributeSource);

fn key_of<T>(row: &ScoreRow<T>) -> ScoreKey {
    (row.score.dimension, row.score.method, row.score.source)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PovShare {
    pub writer: WriterGroup,
    pub label: PovLabel,
    pub count: usize,
    pub fraction: f64,
}

/// Share of each PoV label within each writer group. Every label appears
/// for every group that has at least one item, with zero counts included.
pub fn pov_distribution(
    items: impl IntoIterator<Item = (WriterGroup, PovLabel)>,
) -> Vec<PovShare> {
    let mut counts: BTreeMap<WriterGroup, BTreeMap<PovLabel, usize>> = BTreeMap::new();
    for (writer, label) in items {
        *counts.entry(writer).or_default().entry(label).or_default() += 1;
    }
    let mut out = Vec::new();
    for (writer, by_label) in counts {
        let total: usize = by_label.values().sum();
        for label in PovLabel::ALL {
            let count = by_label.get(&label).copied().unwrap_or(0);
            out.push(PovShare {
                writer,
                label,
                count,
                fraction: count as f64 / total as f64,
            });
        }
    }
    out
}

/// Mean and population standard deviation of one (writer, PoV, dimension,
/// method, source) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats<T> {
    pub writer: WriterGroup,
    pub pov: PovLabel,
    pub dimension: Dimension,
    pub method: Method,
    pub source: AttributeSource,
    pub mean: T,
    pub std: T,
    pub n: usize,
}

fn mean_std<T: Scalar>(values: &[T]) -> (T, T) {
    let n = T::of_usize(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Aggregate present values per cell. Cells without any present value are
/// omitted.
pub fn group_aggregate<T: Scalar>(rows: &[ScoreRow<T>], value: ValueKind) -> Vec<GroupStats<T>> {
    let mut cells: BTreeMap<(ScoreKey, WriterGroup, PovLabel), Vec<T>> = BTreeMap::new();
    for row in rows {
        if let Some(v) = value.pick(row) {
            cells
                .entry((key_of(row), row.writer, row.pov))
                .or_default()
                .push(v);
        }
    }
    cells
        .into_iter()
        .map(|(((dimension, method, source), writer, pov), values)| {
            let (mean, std) = mean_std(&values);
            GroupStats {
                writer,
                pov,
                dimension,
                method,
                source,
                mean,
                std,
                n: values.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// First sample has the larger mean.
    Greater,
    Less,
    None,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Greater => "greater",
            Direction::Less => "less",
            Direction::None => "none",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Significance {
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub direction: Direction,
    /// Welch t statistic and two-sided p-value; absent when both samples
    /// have zero variance.
    pub welch_t: Option<f64>,
    pub welch_p: Option<f64>,
    /// Mann-Whitney U of the first sample, two-sided normal approximation
    /// with tie and continuity correction.
    pub mwu_u: f64,
    pub mwu_p: f64,
}

impl Significance {
    /// Welch p-value, or the rank-test p-value when Welch is undefined.
    pub fn p_value(&self) -> f64 {
        self.welch_p.unwrap_or(self.mwu_p)
    }
}

fn welch(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (na - 1.0);
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (nb - 1.0);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((t, (2.0 * dist.sf(t.abs())).min(1.0)))
}

fn mann_whitney(a: &[f64], b: &[f64]) -> (f64, f64) {
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = crate::evaluation::average_ranks(&all);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let u = ranks[..a.len()].iter().sum::<f64>() - na * (na + 1.0) / 2.0;

    let mut sorted = all;
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite values"));
    let mut tie_term = 0.0;
    for run in sorted.chunk_by(|x, y| x == y) {
        let t = run.len() as f64;
        tie_term += t * t * t - t;
    }
    let sigma = (na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))).sqrt();
    if !(sigma > 0.0) {
        return (u, 1.0);
    }
    let z = ((u - na * nb / 2.0).abs() - 0.5).max(0.0) / sigma;
    let normal = Normal::standard();
    (u, (2.0 * normal.sf(z)).min(1.0))
}

/// Two-sided Welch t-test with a Mann-Whitney U test alongside.
pub fn significance_test<T: Scalar>(a: &[T], b: &[T]) -> Result<Significance> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "significance test needs two values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let to_f64 = |v: &[T]| -> Vec<f64> { v.iter().map(|x| x.to_f64().expect("finite")).collect() };
    let (a, b) = (to_f64(a), to_f64(b));
    let mean_a = a.iter().sum::<f64>() / a.len() as f64;
    let mean_b = b.iter().sum::<f64>() / b.len() as f64;
    let direction = if mean_a > mean_b {
        Direction::Greater
    } else if mean_a < mean_b {
        Direction::Less
    } else {
        Direction::None
    };
    let welch = welch(&a, &b);
    let (mwu_u, mwu_p) = mann_whitney(&a, &b);
    Ok(Significance {
        n_a: a.len(),
        n_b: b.len(),
        mean_a,
        mean_b,
        direction,
        welch_t: welch.map(|w| w.0),
        welch_p: welch.map(|w| w.1),
        mwu_u,
        mwu_p,
    })
}

/// Human versus machine test for one (PoV, dimension, method, source) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellTest {
    pub pov: PovLabel,
    pub dimension: Dimension,
    pub method: Method,
    pub source: AttributeSource,
    pub test: Significance,
}

/// Compare human and machine values in every cell where both sides have at
/// least two present values.
pub fn group_tests<T: Scalar>(rows: &[ScoreRow<T>], value: ValueKind) -> Vec<CellTest> {
    let mut cells: BTreeMap<(ScoreKey, PovLabel), [Vec<T>; 2]> = BTreeMap::new();
    for row in rows {
        if let Some(v) = value.pick(row) {
            let side = usize::from(row.writer == WriterGroup::Machine);
            cells.entry((key_of(row), row.pov)).or_default()[side].push(v);
        }
    }
    cells
        .into_iter()
        .filter_map(|(((dimension, method, source), pov), [human, machine])| {
            let test = significance_test(&human, &machine).ok()?;
            Some(CellTest {
                pov,
                dimension,
                method,
                source,
                test,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    HumanVsMachine,
    HumanControl,
}

impl Comparison {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparison::HumanVsMachine => "human_vs_machine",
            Comparison::HumanControl => "human_control",
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Comparison {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human_vs_machine" => Ok(Comparison::HumanVsMachine),
            "human_control" => Ok(Comparison::HumanControl),
            _ => Err(Error::Config(format!("unknown comparison `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffOptions {
    /// Stories sampled per side in each run.
    pub k: usize,
    pub runs: usize,
    pub seed: u64,
    pub value: ValueKind,
}

impl Default for DiffOptions {
    fn default() -> Self {
        Self {
            k: 2,
            runs: 5,
            seed: 0,
            value: ValueKind::Z,
        }
    }
}

/// Mean difference between two sides of one prompt, averaged over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptDiff<T> {
    pub prompt_id: String,
    pub dimension: Dimension,
    pub method: Method,
    pub source: AttributeSource,
    pub comparison: Comparison,
    pub diff: T,
    pub n_a: usize,
    pub n_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffOutcome<T> {
    pub diffs: Vec<PromptDiff<T>>,
    /// Prompts without enough present scores, per score key.
    pub skipped: BTreeMap<ScoreKey, usize>,
}

type PromptValues<T> = BTreeMap<(ScoreKey, String), [Vec<T>; 2]>;

fn collect_values<T: Scalar>(
    rows: &[ScoreRow<T>],
    value: ValueKind,
    sides: [WriterGroup; 2],
) -> PromptValues<T> {
    let mut out: PromptValues<T> = BTreeMap::new();
    for row in rows {
        let Some(side) = sides.iter().position(|&w| w == row.writer) else {
            continue;
        };
        let entry = out.entry((key_of(row), row.prompt_id.clone())).or_default();
        if let Some(v) = value.pick(row) {
            entry[side].push(v);
        }
    }
    out
}

fn sample_mean<T: Scalar>(values: &[T], k: usize, rng: &mut impl Rng) -> T {
    let picked: T = values.choose_multiple(rng, k).copied().sum();
    picked / T::of_usize(k)
}

fn stream_salt(key: &ScoreKey, prompt: &str, tag: &str) -> String {
    format!("{}/{}/{}/{prompt}/{tag}", key.0, key.1, key.2)
}

/// Per-prompt `a - b` differences. Each side draws from its own random
/// stream, keyed by the writer group, so swapping the sides negates every
/// difference exactly.
pub fn prompt_level_diff_between<T: Scalar>(
    rows: &[ScoreRow<T>],
    a: WriterGroup,
    b: WriterGroup,
    options: &DiffOptions,
) -> Result<DiffOutcome<T>> {
    check_options(options)?;
    let values = collect_values(rows, options.value, [a, b]);
    let results: Vec<(ScoreKey, Option<PromptDiff<T>>)> = values
        .par_iter()
        .map(|((key, prompt), [va, vb])| {
            if va.len() < options.k || vb.len() < options.k {
                return (*key, None);
            }
            let mut rng_a = seed::salted_rng(options.seed, &stream_salt(key, prompt, a.as_str()));
            let mut rng_b = seed::salted_rng(options.seed, &stream_salt(key, prompt, b.as_str()));
            let mut total = T::zero();
            for _ in 0..options.runs {
                let ma = sample_mean(va, options.k, &mut rng_a);
                let mb = sample_mean(vb, options.k, &mut rng_b);
                total = total + (ma - mb);
            }
            let diff = PromptDiff {
                prompt_id: prompt.clone(),
                dimension: key.0,
                method: key.1,
                source: key.2,
                comparison: Comparison::HumanVsMachine,
                diff: total / T::of_usize(options.runs),
                n_a: va.len(),
                n_b: vb.len(),
            };
            (*key, Some(diff))
        })
        .collect();
    Ok(gather(results))
}

fn check_options(options: &DiffOptions) -> Result<()> {
    if options.k == 0 || options.runs == 0 {
        return Err(Error::Config("k and runs must both be at least 1".into()));
    }
    Ok(())
}

fn gather<T>(results: Vec<(ScoreKey, Option<PromptDiff<T>>)>) -> DiffOutcome<T> {
    let mut outcome = DiffOutcome {
        diffs: Vec::new(),
        skipped: BTreeMap::new(),
    };
    for (key, diff) in results {
        match diff {
            Some(d) => outcome.diffs.push(d),
            None => *outcome.skipped.entry(key).or_default() += 1,
        }
    }
    outcome
}

/// Human minus machine per prompt, or for the control, the difference
/// between two disjoint `k`-subsets of the prompt's human stories.
pub fn prompt_level_diff<T: Scalar>(
    rows: &[ScoreRow<T>],
    comparison: Comparison,
    options: &DiffOptions,
) -> Result<DiffOutcome<T>> {
    match comparison {
        Comparison::HumanVsMachine => {
            prompt_level_diff_between(rows, WriterGroup::Human, WriterGroup::Machine, options)
        }
        Comparison::HumanControl => human_control(rows, options),
    }
}

fn human_control<T: Scalar>(rows: &[ScoreRow<T>], options: &DiffOptions) -> Result<DiffOutcome<T>> {
    check_options(options)?;
    let k = options.k;
    let values = collect_values(rows, options.value, [WriterGroup::Human, WriterGroup::Human]);
    let results = values
        .par_iter()
        .map(|((key, prompt), [human, _])| {
            if human.len() < 2 * k {
                return (*key, None);
            }
            let mut rng = seed::salted_rng(options.seed, &stream_salt(key, prompt, "control"));
            let mut total = T::zero();
            for _ in 0..options.runs {
                let picked: Vec<T> = human.choose_multiple(&mut rng, 2 * k).copied().collect();
                let (first, second) = picked.split_at(k);
                let mean = |s: &[T]| s.iter().copied().sum::<T>() / T::of_usize(k);
                total = total + (mean(first) - mean(second));
            }
            let diff = PromptDiff {
                prompt_id: prompt.clone(),
                dimension: key.0,
                method: key.1,
                source: key.2,
                comparison: Comparison::HumanControl,
                diff: total / T::of_usize(options.runs),
                n_a: human.len(),
                n_b: human.len(),
            };
            (*key, Some(diff))
        })
        .collect();
    Ok(gather(results))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `[lo, hi)` edges per bin; the last bin also includes its upper edge.
    pub fn edges(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.counts.len()).map(|i| {
            let lo = self.lo + self.width * i as f64;
            (lo, lo + self.width)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffSummary {
    pub dimension: Dimension,
    pub method: Method,
    pub source: AttributeSource,
    pub comparison: Comparison,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub histogram: Histogram,
}

fn histogram(sorted: &[f64], bins: usize) -> Histogram {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        return Histogram {
            lo,
            width: 0.0,
            counts: vec![sorted.len()],
        };
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0; bins];
    for &v in sorted {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Histogram { lo, width, counts }
}

/// Mean, median, population std and a fixed-width histogram spanning the
/// observed range, per (dimension, method, source, comparison).
pub fn summarize_diffs<T: Scalar>(diffs: &[PromptDiff<T>], bins: usize) -> Result<Vec<DiffSummary>> {
    if diffs.is_empty() {
        return Err(Error::InsufficientData("no prompt differences to summarize".into()));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let mut groups: BTreeMap<(ScoreKey, Comparison), Vec<f64>> = BTreeMap::new();
    for d in diffs {
        groups
            .entry(((d.dimension, d.method, d.source), d.comparison))
            .or_default()
            .push(d.diff.to_f64().expect("finite"));
    }
    Ok(groups
        .into_iter()
        .map(|(((dimension, method, source), comparison), mut values)| {
            values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let n = values.len();
            let (mean, std) = mean_std(&values);
            let median = if n % 2 == 1 {
                values[n / 2]
            } else {
                (values[n / 2 - 1] + values[n / 2]) / 2.0
            };
            DiffSummary {
                dimension,
                method,
                source,
                comparison,
                n,
                mean,
                median,
                std,
                histogram: histogram(&values, bins),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::StoryScore;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal as NormalDist};

    fn row(prompt: &str, writer: WriterGroup, pov: PovLabel, z: Option<f64>) -> ScoreRow<f64> {
        ScoreRow {
            prompt_id: prompt.into(),
            writer,
            pov,
            score: StoryScore {
                story_id: format!("{prompt}-{writer}-{}", z.unwrap_or(f64::NAN)),
                dimension: Dimension::Valence,
                method: Method::AxisEmb,
                source: AttributeSource::Inference,
                raw: z,
                z,
                n_scored_tokens: 1,
            },
        }
    }

    #[test]
    fn aggregate_two_stories() {
        let rows = [
            row("p", WriterGroup::Human, PovLabel::FirstPerson, Some(-1.0)),
            row("p", WriterGroup::Human, PovLabel::FirstPerson, Some(1.0)),
            row("p", WriterGroup::Human, PovLabel::FirstPerson, None),
            row("p", WriterGroup::Machine, PovLabel::Other, Some(0.5)),
        ];
        let stats = group_aggregate(&rows, ValueKind::Z);
        assert_eq!(stats.len(), 2);
        assert_eq!((stats[0].mean, stats[0].std, stats[0].n), (0.0, 1.0, 2));
        assert_eq!((stats[1].mean, stats[1].std, stats[1].n), (0.5, 0.0, 1));
    }

    #[test]
    fn pov_shares_include_zero_labels() {
        let shares = pov_distribution([
            (WriterGroup::Human, PovLabel::FirstPerson),
            (WriterGroup::Human, PovLabel::FirstPerson),
            (WriterGroup::Human, PovLabel::ThirdMale),
            (WriterGroup::Human, PovLabel::Other),
        ]);
        assert_eq!(shares.len(), 5);
        assert_eq!(shares[0].fraction, 0.5);
        assert_eq!(shares[1].count, 0);
    }

    #[test]
    fn significance_matches_scipy() {
        // frozen from scipy.stats.ttest_ind(equal_var=False) and
        // mannwhitneyu(alternative="two-sided", method="asymptotic")
        let a = [0.1, 0.5, 0.9, 1.3, -0.2, 0.4];
        let b = [1.1, 1.4, 0.7, 2.0, 1.6, 1.9, 1.2];
        let s = significance_test(&a, &b).unwrap();
        assert_abs_diff_eq!(s.welch_t.unwrap(), -3.255_546_878_059_939_7, epsilon = 1e-10);
        assert_abs_diff_eq!(s.welch_p.unwrap(), 0.008_704_574_273_675_464, epsilon = 1e-10);
        assert_eq!(s.mwu_u, 4.0);
        assert_abs_diff_eq!(s.mwu_p, 0.018_416_160_576_303_96, epsilon = 1e-10);
        assert_eq!(s.direction, Direction::Less);

        let a = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0];
        let b = [2.0, 3.0, 4.0, 4.0, 5.0];
        let s = significance_test(&a, &b).unwrap();
        assert_abs_diff_eq!(s.welch_t.unwrap(), -2.079_267_489_625_414, epsilon = 1e-10);
        assert_abs_diff_eq!(s.welch_p.unwrap(), 0.075_548_662_055_396_45, epsilon = 1e-10);
        assert_eq!(s.mwu_u, 5.5);
        assert_abs_diff_eq!(s.mwu_p, 0.088_713_691_996_776_16, epsilon = 1e-10);
    }

    #[test]
    fn significance_edge_cases() {
        let a = [0.3, -0.1, 0.8, 0.2];
        let same = significance_test(&a, &a).unwrap();
        assert_eq!((same.welch_p, same.mwu_p, same.direction), (Some(1.0), 1.0, Direction::None));

        let flat = significance_test(&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(flat.welch_p, None);
        assert_eq!(flat.p_value(), flat.mwu_p);

        assert!(significance_test(&[1.0], &[1.0, 2.0]).is_err());

        let mut rng = seed::rng(11);
        let normal = NormalDist::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..200).map(|_| normal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..200).map(|_| normal.sample(&mut rng) + 3.0).collect();
        let shifted = significance_test(&x, &y).unwrap();
        assert!(shifted.welch_p.unwrap() < 1e-3 && shifted.mwu_p < 1e-3);
    }

    #[test]
    fn degenerate_prompt_diff() {
        let rows = [
            row("p", WriterGroup::Human, PovLabel::Other, Some(0.2)),
            row("p", WriterGroup::Human, PovLabel::Other, Some(0.4)),
            row("p", WriterGroup::Machine, PovLabel::Other, Some(0.1)),
            row("p", WriterGroup::Machine, PovLabel::Other, Some(0.3)),
            row("q", WriterGroup::Human, PovLabel::Other, Some(0.2)),
            row("q", WriterGroup::Machine, PovLabel::Other, Some(0.3)),
        ];
        let out = prompt_level_diff(&rows, Comparison::HumanVsMachine, &DiffOptions::default()).unwrap();
        assert_eq!(out.diffs.len(), 1);
        assert_abs_diff_eq!(out.diffs[0].diff, 0.1, epsilon = 1e-12);
        assert_eq!(out.skipped.values().sum::<usize>(), 1);
        let control = prompt_level_diff(&rows, Comparison::HumanControl, &DiffOptions::default()).unwrap();
        assert!(control.diffs.is_empty());
        assert_eq!(control.skipped.values().sum::<usize>(), 2);
    }

    fn synthetic(prompts: usize, delta: f64, seed_value: u64) -> Vec<ScoreRow<f64>> {
        let mut rng = seed::rng(seed_value);
        let base = NormalDist::new(0.0, 1.0).unwrap();
        let noise = NormalDist::new(0.0, 0.2).unwrap();
        let mut rows = Vec::new();
        for p in 0..prompts {
            let prompt = format!("p{p}");
            let centre = base.sample(&mut rng);
            for _ in 0..4 {
                let h = centre + noise.sample(&mut rng);
                rows.push(row(&prompt, WriterGroup::Human, PovLabel::Other, Some(h)));
                rows.push(row(&prompt, WriterGroup::Machine, PovLabel::Other, Some(h + delta)));
            }
        }
        rows
    }

    #[test]
    fn shifted_machine_scores_give_negative_diffs() {
        let rows = synthetic(300, 0.5, 3);
        let opts = DiffOptions { seed: 9, ..DiffOptions::default() };
        let hvm = prompt_level_diff(&rows, Comparison::HumanVsMachine, &opts).unwrap();
        let mean = hvm.diffs.iter().map(|d| d.diff).sum::<f64>() / hvm.diffs.len() as f64;
        assert!((mean + 0.5).abs() < 0.03, "{mean}");
        let control = prompt_level_diff(&rows, Comparison::HumanControl, &opts).unwrap();
        let cmean = control.diffs.iter().map(|d| d.diff).sum::<f64>() / control.diffs.len() as f64;
        assert!(cmean.abs() < 0.03, "{cmean}");
        let again = prompt_level_diff(&rows, Comparison::HumanControl, &opts).unwrap();
        assert_eq!(again, control);
    }

    proptest! {
        #[test]
        fn swapping_sides_negates(values in prop::collection::vec(-3.0f64..3.0, 8..40), seed_value: u64) {
            let rows: Vec<ScoreRow<f64>> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let writer = if i % 2 == 0 { WriterGroup::Human } else { WriterGroup::Machine };
                    row(&format!("p{}", i % 3), writer, PovLabel::Other, Some(v))
                })
                .collect();
            let opts = DiffOptions { seed: seed_value, ..DiffOptions::default() };
            let hm = prompt_level_diff_between(&rows, WriterGroup::Human, WriterGroup::Machine, &opts).unwrap();
            let mh = prompt_level_diff_between(&rows, WriterGroup::Machine, WriterGroup::Human, &opts).unwrap();
            prop_assert_eq!(hm.diffs.len(), mh.diffs.len());
            for (x, y) in hm.diffs.iter().zip(&mh.diffs) {
                prop_assert_eq!(x.diff, -y.diff);
            }
        }

        #[test]
        fn aggregate_partitions_present_scores(
            cells in prop::collection::vec((0usize..2, 0usize..5, prop::option::of(-2.0f64..2.0)), 1..60)
        ) {
            let rows: Vec<ScoreRow<f64>> = cells
                .iter()
                .map(|&(w, p, z)| row("p", WriterGroup::ALL[w], PovLabel::ALL[p], z))
                .collect();
            let stats = group_aggregate(&rows, ValueKind::Z);
            let present = cells.iter().filter(|c| c.2.is_some()).count();
            prop_assert_eq!(stats.iter().map(|s| s.n).sum::<usize>(), present);
            prop_assert!(stats.iter().all(|s| s.n >= 1 && s.std >= 0.0));
        }
    }

    fn diffs_of(values: &[f64]) -> Vec<PromptDiff<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &diff)| PromptDiff {
                prompt_id: format!("p{i}"),
                dimension: Dimension::Power,
                method: Method::AxisEmb,
                source: AttributeSource::Dependency,
                comparison: Comparison::HumanVsMachine,
                diff,
                n_a: 2,
                n_b: 2,
            })
            .collect()
    }

    #[test]
    fn summary_examples() {
        let s = &summarize_diffs(&diffs_of(&[-1.0, 0.0, 1.0]), 10).unwrap()[0];
        assert_eq!((s.mean, s.median, s.n), (0.0, 0.0, 3));
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), 3);

        let flat = &summarize_diffs(&diffs_of(&[0.25; 5]), 10).unwrap()[0];
        assert_eq!(flat.std, 0.0);
        assert_eq!(flat.histogram.counts, [5]);

        assert!(summarize_diffs::<f64>(&[], 10).is_err());
    }

    #[test]
    fn normal_diffs_concentrate_within_three_sigma() {
        let mut rng = seed::rng(21);
        let normal = NormalDist::new(0.0, 1.0).unwrap();
        let values: Vec<f64> = (0..5000).map(|_| normal.sample(&mut rng)).collect();
        let s = &summarize_diffs(&diffs_of(&values), 40).unwrap()[0];
        let (lo, hi) = (s.mean - 3.0 * s.std, s.mean + 3.0 * s.std);
        let inside: usize = s
            .histogram
            .edges()
            .zip(&s.histogram.counts)
            .filter(|((a, b), _)| *a >= lo - s.histogram.width && *b <= hi + s.histogram.width)
            .map(|(_, &c)| c)
            .sum();
        assert!(inside as f64 / values.len() as f64 >= 0.99);
    }
}
