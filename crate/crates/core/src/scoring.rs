//! Attribute-to-score algorithms and score-table assembly.
//!
//! Three scorers turn a protagonist's attribute tokens into a number per
//! dimension:
//!
//! - `lex_avg`: mean lexicon score over tokens found in the lexicon;
//! - `emb_sim`: mean cosine similarity between a token and prototype terms;
//! - `axis_emb`: cosine between a token and the axis running from the
//!   low-pole centroid to the high-pole centroid.
//!
//! A story's score is the occurrence-weighted mean of its scoreable tokens.
//! Tokens that cannot be scored are skipped; a story with none gets an absent
//! score rather than zero.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeSet, AttributeSource};
use crate::corpus::WriterGroup;
use crate::embeddings::{cosine, norm, EmbeddingStore};
use crate::lexicons::{
    percentile_split, BipolarCategoryLexicon, CategoryLexicon, Dimension, PoleSplit,
    ScoredLexicon, VadLexicon,
};
use crate::pov::PovLabel;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LexAvg,
    EmbSim,
    AxisEmb,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::LexAvg, Method::EmbSim, Method::AxisEmb];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::LexAvg => "lex_avg",
            Method::EmbSim => "emb_sim",
            Method::AxisEmb => "axis_emb",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        self != Method::LexAvg
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scoring method `{s}`")))
    }
}

/// Anything that assigns a score to a term.
pub trait TermScores<T> {
    fn term_score(&self, term: &str) -> Option<T>;
}

impl<T: Scalar> TermScores<T> for ScoredLexicon<T> {
    fn term_score(&self, term: &str) -> Option<T> {
        self.get(term)
    }
}

impl<T: Scalar> TermScores<T> for CategoryLexicon {
    fn term_score(&self, term: &str) -> Option<T> {
        self.contains(term).then(T::one)
    }
}

impl<T: Scalar> TermScores<T> for BipolarCategoryLexicon {
    fn term_score(&self, term: &str) -> Option<T> {
        self.score(term)
    }
}

impl<T: Scalar> TermScores<T> for HashMap<String, T> {
    fn term_score(&self, term: &str) -> Option<T> {
        self.get(term).copied()
    }
}

/// Occurrence-weighted mean of `score` over the tokens it accepts, with the
/// total weight scored. `None` when no token is scoreable.
fn weighted_mean<T: Scalar>(
    attrs: &AttributeSet,
    mut score: impl FnMut(&str) -> Option<T>,
) -> (Option<T>, u64) {
    let (mut sum, mut weight) = (T::zero(), 0u64);
    for (token, w) in attrs.weighted() {
        if let Some(s) = score(token) {
            sum = sum + s * T::of(f64::from(w));
            weight += u64::from(w);
        }
    }
    if weight == 0 {
        (None, 0)
    } else {
        (Some(sum / T::of(weight as f64)), weight)
    }
}

/// Weighted mean lexicon score of the attribute tokens present in the
/// lexicon. Category lexicons score members 1.0, so the value is the
/// in-lexicon hit average.
pub fn lex_avg<T: Scalar>(attrs: &AttributeSet, lexicon: &impl TermScores<T>) -> Option<T> {
    weighted_mean(attrs, |t| lexicon.term_score(t)).0
}

fn unit<T: Scalar>(v: &[T]) -> Option<Vec<T>> {
    let n = norm(v);
    (n > T::zero()).then(|| v.iter().map(|&x| x / n).collect())
}

/// Mean of the unit vectors of the in-vocabulary prototypes, with the terms
/// that contributed. Zero vectors have no direction and are skipped.
fn prototype_centroid<T: Scalar>(
    prototypes: &BTreeSet<String>,
    store: &EmbeddingStore<T>,
) -> Result<(Vec<T>, Vec<String>)> {
    let mut sum = vec![T::zero(); store.dim()];
    let mut used = Vec::new();
    for term in prototypes {
        if let Some(u) = store.get(term).and_then(unit) {
            for (s, x) in sum.iter_mut().zip(u) {
                *s = *s + x;
            }
            used.push(term.clone());
        }
    }
    if used.is_empty() {
        return Err(Error::EmptyPrototypes);
    }
    let n = T::of_usize(used.len());
    Ok((sum.into_iter().map(|s| s / n).collect(), used))
}

/// Average cosine similarity between `token` and each in-vocabulary
/// prototype. `Ok(None)` when the token itself is out of vocabulary.
pub fn emb_sim<T: Scalar>(
    token: &str,
    prototypes: &BTreeSet<String>,
    store: &EmbeddingStore<T>,
) -> Result<Option<T>> {
    let (centroid, _) = prototype_centroid(prototypes, store)?;
    Ok(store.get(token).and_then(|v| project_on_unit_mean(v, &centroid)))
}

// mean_l cos(t, l) = (t / |t|) . mean_l (l / |l|)
fn project_on_unit_mean<T: Scalar>(v: &[T], centroid: &[T]) -> Option<T> {
    let n = norm(v);
    if n == T::zero() {
        return None;
    }
    let dot: T = v.iter().zip(centroid).map(|(&a, &b)| a * b).sum();
    Some((dot / n).max(-T::one()).min(T::one()))
}

fn centroid<T: Scalar>(terms: &BTreeSet<String>, store: &EmbeddingStore<T>) -> Option<Vec<T>> {
    let mut sum = vec![T::zero(); store.dim()];
    let mut count = 0usize;
    for v in terms.iter().filter_map(|t| store.get(t)) {
        for (s, &x) in sum.iter_mut().zip(v) {
            *s = *s + x;
        }
        count += 1;
    }
    (count > 0).then(|| {
        let n = T::of_usize(count);
        sum.into_iter().map(|s| s / n).collect()
    })
}

/// Semantic axis: mean high-pole vector minus mean low-pole vector, over
/// in-vocabulary terms of each pole.
pub fn build_axis<T: Scalar>(split: &PoleSplit, store: &EmbeddingStore<T>) -> Result<Vec<T>> {
    let high = centroid(&split.high, store).ok_or(Error::EmptyPole { pole: "high" })?;
    let low = centroid(&split.low, store).ok_or(Error::EmptyPole { pole: "low" })?;
    Ok(high.into_iter().zip(low).map(|(h, l)| h - l).collect())
}

/// Cosine between the token vector and the axis. `Ok(None)` for an
/// out-of-vocabulary (or zero-vector) token.
pub fn axis_project<T: Scalar>(
    token: &str,
    axis: &[T],
    store: &EmbeddingStore<T>,
) -> Result<Option<T>> {
    if norm(axis) == T::zero() {
        return Err(Error::ZeroAxis);
    }
    Ok(store.get(token).and_then(|v| cosine(v, axis)))
}

#[derive(Debug, Clone, PartialEq)]
enum ScorerKind<T> {
    Lexicon(HashMap<String, T>),
    Similarity { centroid: Vec<T> },
    Axis { axis: Vec<T> },
}

/// A configured scorer for one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionScorer<T> {
    pub dimension: Dimension,
    pub method: Method,
    kind: ScorerKind<T>,
    /// Lexicon terms the scorer was built from (prototypes, or both poles).
    reference_terms: BTreeSet<String>,
}

impl<T: Scalar> DimensionScorer<T> {
    pub fn lex_avg(dimension: Dimension, lexicon: &impl LexiconTerms<T>) -> Self {
        let table: HashMap<String, T> = lexicon.scored_terms().collect();
        Self {
            dimension,
            method: Method::LexAvg,
            reference_terms: table.keys().cloned().collect(),
            kind: ScorerKind::Lexicon(table),
        }
    }

    /// `emb_sim` against the given prototype terms; out-of-vocabulary
    /// prototypes are dropped, and at least one must remain.
    pub fn emb_sim(
        dimension: Dimension,
        prototypes: &BTreeSet<String>,
        store: &EmbeddingStore<T>,
    ) -> Result<Self> {
        let (centroid, used) = prototype_centroid(prototypes, store)?;
        Ok(Self {
            dimension,
            method: Method::EmbSim,
            kind: ScorerKind::Similarity { centroid },
            reference_terms: used.into_iter().collect(),
        })
    }

    /// `axis_emb` for a bipolar dimension.
    pub fn axis_emb(dimension: Dimension, split: &PoleSplit, store: &EmbeddingStore<T>) -> Result<Self> {
        if !dimension.is_bipolar() {
            return Err(Error::InvalidScorer(format!(
                "axis_emb needs a bipolar dimension, {dimension} is unipolar"
            )));
        }
        let axis = build_axis(split, store)?;
        if norm(&axis) == T::zero() {
            return Err(Error::ZeroAxis);
        }
        let reference_terms = split
            .high
            .iter()
            .chain(&split.low)
            .filter(|t| store.contains(t))
            .cloned()
            .collect();
        Ok(Self {
            dimension,
            method: Method::AxisEmb,
            kind: ScorerKind::Axis { axis },
            reference_terms,
        })
    }

    /// Build the scorer for `(dimension, method)` from the loaded lexicons.
    ///
    /// Prototypes for `emb_sim`: the terms above the high percentile (VAD),
    /// the powerful list (power), or the whole list (appearance, intellect).
    /// Poles for `axis_emb`: the percentile split (VAD) or the two power lists.
    pub fn build(
        dimension: Dimension,
        method: Method,
        lexicons: &LexiconSet<T>,
        store: Option<&EmbeddingStore<T>>,
        percentiles: (f64, f64),
    ) -> Result<Self> {
        let missing = || Error::Config(format!("no lexicon configured for {dimension}"));
        let need_store = || {
            store.ok_or_else(|| Error::Config(format!("{method} needs word embeddings")))
        };
        match dimension {
            Dimension::Valence | Dimension::Arousal | Dimension::Dominance => {
                let lexicon = lexicons
                    .vad
                    .as_ref()
                    .and_then(|v| v.get(dimension))
                    .ok_or_else(missing)?;
                match method {
                    Method::LexAvg => Ok(Self::lex_avg(dimension, lexicon)),
                    Method::EmbSim => {
                        let split = percentile_split(lexicon, percentiles.0, percentiles.1)?;
                        Self::emb_sim(dimension, &split.high, need_store()?)
                    }
                    Method::AxisEmb => {
                        let split = percentile_split(lexicon, percentiles.0, percentiles.1)?;
                        Self::axis_emb(dimension, &split, need_store()?)
                    }
                }
            }
            Dimension::Power => {
                let power = lexicons.power.as_ref().ok_or_else(missing)?;
                match method {
                    Method::LexAvg => Ok(Self::lex_avg(dimension, power)),
                    Method::EmbSim => Self::emb_sim(dimension, &power.high_terms, need_store()?),
                    Method::AxisEmb => Self::axis_emb(dimension, &power.as_split(), need_store()?),
                }
            }
            Dimension::Appearance | Dimension::Intellect => {
                let lexicon = if dimension == Dimension::Appearance {
                    lexicons.appearance.as_ref()
                } else {
                    lexicons.intellect.as_ref()
                }
                .ok_or_else(missing)?;
                match method {
                    Method::LexAvg => Ok(Self::lex_avg(dimension, lexicon)),
                    Method::EmbSim => {
                        let terms = lexicon.terms().map(str::to_string).collect();
                        Self::emb_sim(dimension, &terms, need_store()?)
                    }
                    Method::AxisEmb => Err(Error::InvalidScorer(format!(
                        "axis_emb needs a bipolar dimension, {dimension} is unipolar"
                    ))),
                }
            }
        }
    }

    pub fn reference_terms(&self) -> &BTreeSet<String> {
        &self.reference_terms
    }

    /// The axis vector, for `axis_emb` scorers.
    pub fn axis(&self) -> Option<&[T]> {
        match &self.kind {
            ScorerKind::Axis { axis } => Some(axis),
            _ => None,
        }
    }

    /// Score of one token; `None` when it is not in the lexicon (`lex_avg`)
    /// or not in the vocabulary (embedding scorers).
    pub fn score_token(&self, token: &str, store: Option<&EmbeddingStore<T>>) -> Option<T> {
        match &self.kind {
            ScorerKind::Lexicon(table) => table.get(token).copied(),
            ScorerKind::Similarity { centroid } => {
                store?.get(token).and_then(|v| project_on_unit_mean(v, centroid))
            }
            ScorerKind::Axis { axis } => store?.get(token).and_then(|v| cosine(v, axis)),
        }
    }
}

/// Lexicons that can back a `lex_avg` scorer.
pub trait LexiconTerms<T> {
    fn scored_terms(&self) -> Box<dyn Iterator<Item = (String, T)> + '_>;
}

impl<T: Scalar> LexiconTerms<T> for ScoredLexicon<T> {
    fn scored_terms(&self) -> Box<dyn Iterator<Item = (String, T)> + '_> {
        Box::new(self.iter().map(|(t, s)| (t.to_string(), s)))
    }
}

impl<T: Scalar> LexiconTerms<T> for CategoryLexicon {
    fn scored_terms(&self) -> Box<dyn Iterator<Item = (String, T)> + '_> {
        Box::new(self.terms().map(|t| (t.to_string(), T::one())))
    }
}

impl<T: Scalar> LexiconTerms<T> for BipolarCategoryLexicon {
    fn scored_terms(&self) -> Box<dyn Iterator<Item = (String, T)> + '_> {
        Box::new(
            self.low_terms
                .iter()
                .map(|t| (t.clone(), T::zero()))
                .chain(self.high_terms.iter().map(|t| (t.clone(), T::one()))),
        )
    }
}

/// The lexicons available to [`DimensionScorer::build`].
#[derive(Debug, Clone, Default)]
pub struct LexiconSet<T> {
    pub vad: Option<VadLexicon<T>>,
    pub appearance: Option<CategoryLexicon>,
    pub intellect: Option<CategoryLexicon>,
    pub power: Option<BipolarCategoryLexicon>,
}

impl<T: Scalar> LexiconSet<T> {
    pub fn has(&self, dimension: Dimension) -> bool {
        match dimension {
            Dimension::Valence | Dimension::Arousal | Dimension::Dominance => self.vad.is_some(),
            Dimension::Power => self.power.is_some(),
            Dimension::Appearance => self.appearance.is_some(),
            Dimension::Intellect => self.intellect.is_some(),
        }
    }

    /// Every single-word term of every loaded lexicon.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Some(vad) = &self.vad {
            out.extend(vad.valence.terms().map(str::to_string));
        }
        for lexicon in [&self.appearance, &self.intellect].into_iter().flatten() {
            out.extend(lexicon.terms().map(str::to_string));
        }
        if let Some(power) = &self.power {
            out.extend(power.low_terms.iter().cloned());
            out.extend(power.high_terms.iter().cloned());
        }
        out
    }
}

/// The default pairing: `axis_emb` for bipolar dimensions, `emb_sim` for
/// appearance and intellect.
pub fn default_plan() -> Vec<(Dimension, Method)> {
    Dimension::ALL
        .into_iter()
        .map(|d| (d, if d.is_bipolar() { Method::AxisEmb } else { Method::EmbSim }))
        .collect()
}

/// Every valid `(dimension, method)` pair.
pub fn full_plan() -> Vec<(Dimension, Method)> {
    Dimension::ALL
        .into_iter()
        .flat_map(|d| Method::ALL.into_iter().map(move |m| (d, m)))
        .filter(|&(d, m)| m != Method::AxisEmb || d.is_bipolar())
        .collect()
}

/// One story's score on one dimension.
///
/// `raw` is absent exactly when no token was scoreable (`n_scored_tokens ==
/// 0`). `z` is absent when `raw` is, and also when the z-scoring group has
/// fewer than two present scores or zero variance.
#[derive(Debug, Clone, PartialEq)]
pub struct StoryScore<T> {
    pub story_id: String,
    pub dimension: Dimension,
    pub method: Method,
    pub source: AttributeSource,
    pub raw: Option<T>,
    pub z: Option<T>,
    pub n_scored_tokens: u64,
}

pub fn score_story<T: Scalar>(
    attrs: &AttributeSet,
    scorer: &DimensionScorer<T>,
    store: Option<&EmbeddingStore<T>>,
) -> StoryScore<T> {
    let (raw, n_scored_tokens) = weighted_mean(attrs, |t| scorer.score_token(t, store));
    StoryScore {
        story_id: attrs.story_id.clone(),
        dimension: scorer.dimension,
        method: scorer.method,
        source: attrs.source,
        raw,
        z: None,
        n_scored_tokens,
    }
}

/// Score every attribute set with every scorer, in parallel. Output order is
/// attribute-set order, then scorer order.
pub fn score_all<T: Scalar>(
    sets: &[AttributeSet],
    scorers: &[DimensionScorer<T>],
    store: Option<&EmbeddingStore<T>>,
) -> Vec<StoryScore<T>> {
    sets.par_iter()
        .flat_map_iter(|attrs| scorers.iter().map(move |s| score_story(attrs, s, store)))
        .collect()
}

pub trait HasScore<T> {
    fn score(&self) -> &StoryScore<T>;
    fn score_mut(&mut self) -> &mut StoryScore<T>;
}

impl<T> HasScore<T> for StoryScore<T> {
    fn score(&self) -> &StoryScore<T> {
        self
    }
    fn score_mut(&mut self) -> &mut StoryScore<T> {
        self
    }
}

/// A z-scoring group that could not be normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZscoreWarning {
    pub dimension: Dimension,
    pub method: Method,
    pub source: AttributeSource,
    pub present: usize,
    pub reason: &'static str,
}

/// Fill `z = (raw - mean) / std` per `(dimension, method, source)` group,
/// pooling both writer groups. `std` is the population standard deviation.
pub fn zscore<T: Scalar, S: HasScore<T>>(scores: &mut [S]) -> Vec<ZscoreWarning> {
    let mut groups: BTreeMap<(Dimension, Method, AttributeSource), Vec<usize>> = BTreeMap::new();
    for (i, s) in scores.iter().enumerate() {
        let s = s.score();
        groups
            .entry((s.dimension, s.method, s.source))
            .or_default()
            .push(i);
    }
    let mut warnings = Vec::new();
    for ((dimension, method, source), members) in groups {
        let present: Vec<(usize, T)> = members
            .iter()
            .filter_map(|&i| scores[i].score().raw.map(|r| (i, r)))
            .collect();
        for &i in &members {
            scores[i].score_mut().z = None;
        }
        let warn = |reason| ZscoreWarning {
            dimension,
            method,
            source,
            present: present.len(),
            reason,
        };
        if present.len() < 2 {
            log::warn!("{dimension}/{method}/{source}: fewer than two scores, z left absent");
            warnings.push(warn("fewer than two present scores"));
            continue;
        }
        let n = T::of_usize(present.len());
        let mean = present.iter().map(|&(_, r)| r).sum::<T>() / n;
        let var = present
            .iter()
            .map(|&(_, r)| (r - mean) * (r - mean))
            .sum::<T>()
            / n;
        let std = var.sqrt();
        if !(std > T::zero()) {
            log::warn!("{dimension}/{method}/{source}: zero variance, z left absent");
            warnings.push(warn("zero variance"));
            continue;
        }
        for (i, r) in present {
            scores[i].score_mut().z = Some((r - mean) / std);
        }
    }
    warnings
}

/// One line of the score table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow<T> {
    pub prompt_id: String,
    pub writer: WriterGroup,
    pub pov: PovLabel,
    pub score: StoryScore<T>,
}

impl<T> HasScore<T> for ScoreRow<T> {
    fn score(&self) -> &StoryScore<T> {
        &self.score
    }
    fn score_mut(&mut self) -> &mut StoryScore<T> {
        &mut self.score
    }
}

pub const SCORE_COLUMNS: [&str; 10] = [
    "story_id",
    "prompt_id",
    "writer",
    "pov",
    "dimension",
    "method",
    "source",
    "raw",
    "z",
    "n_scored_tokens",
];

fn fmt_opt<T: Scalar>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_score_csv<T: Scalar, W: Write>(rows: &[ScoreRow<T>], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(SCORE_COLUMNS)?;
    for row in rows {
        let s = &row.score;
        writer.write_record([
            s.story_id.as_str(),
            row.prompt_id.as_str(),
            row.writer.as_str(),
            row.pov.as_str(),
            s.dimension.as_str(),
            s.method.as_str(),
            s.source.as_str(),
            &fmt_opt(s.raw),
            &fmt_opt(s.z),
            &s.n_scored_tokens.to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io("<score table>", e))?;
    Ok(())
}

pub fn read_score_csv<T: Scalar, R: Read>(input: R) -> Result<Vec<ScoreRow<T>>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(SCORE_COLUMNS) {
        return Err(Error::parse("<score table>", 1, "unexpected score table header"));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let bad = |what: &str| Error::parse("<score table>", line, format!("bad {what}"));
        let opt = |field: &str| -> Result<Option<T>> {
            if field.is_empty() {
                Ok(None)
            } else {
                field.parse().map(Some).map_err(|_| bad("number"))
            }
        };
        rows.push(ScoreRow {
            prompt_id: record[1].to_string(),
            writer: record[2].parse()?,
            pov: record[3].parse()?,
            score: StoryScore {
                story_id: record[0].to_string(),
                dimension: record[4].parse()?,
                method: record[5].parse()?,
                source: record[6].parse()?,
                raw: opt(&record[7])?,
                z: opt(&record[8])?,
                n_scored_tokens: record[9].parse().map_err(|_| bad("token count"))?,
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn store(rows: &[(&str, &[f64])]) -> EmbeddingStore<f64> {
        let mut s = EmbeddingStore::new(rows[0].1.len());
        for (t, v) in rows {
            s.insert(*t, v);
        }
        s
    }

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn attrs(tokens: &[(&str, u32)]) -> AttributeSet {
        let mut a = AttributeSet::new("s1", AttributeSource::Inference);
        for &(t, w) in tokens {
            a.add(t, w);
        }
        a
    }

    fn dominance() -> ScoredLexicon<f64> {
        ScoredLexicon::new(
            Dimension::Dominance,
            [
                ("nervous".to_string(), 0.179),
                ("puny".to_string(), 0.135),
                ("rich".to_string(), 0.905),
                ("relentless".to_string(), 0.904),
            ],
        )
        .unwrap()
    }

    #[test]
    fn lex_avg_examples() {
        let lex = dominance();
        assert_abs_diff_eq!(
            lex_avg(&attrs(&[("nervous", 1), ("rich", 1)]), &lex).unwrap(),
            0.542,
            epsilon = 1e-12
        );
        assert_eq!(lex_avg(&attrs(&[("table", 3)]), &lex), None);
        assert_abs_diff_eq!(
            lex_avg(&attrs(&[("nervous", 2), ("rich", 1), ("table", 5)]), &lex).unwrap(),
            (2.0 * 0.179 + 0.905) / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn emb_sim_examples() {
        let s = store(&[("a", &[1.0, 0.0]), ("b", &[0.0, 2.0]), ("c", &[0.0, -1.0])]);
        assert_abs_diff_eq!(emb_sim("a", &set(&["a"]), &s).unwrap().unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(emb_sim("a", &set(&["b", "c"]), &s).unwrap().unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(emb_sim("zzz", &set(&["a"]), &s).unwrap(), None);
        assert!(matches!(emb_sim("a", &set(&["nope"]), &s), Err(Error::EmptyPrototypes)));
    }

    #[test]
    fn axis_examples() {
        let s = store(&[("w", &[1.0, 0.0]), ("v", &[0.0, 1.0]), ("o", &[1.0, 1.0])]);
        let split = PoleSplit {
            high: set(&["w"]),
            low: set(&["v"]),
            low_pct: None,
            high_pct: None,
        };
        let axis = build_axis(&split, &s).unwrap();
        assert_eq!(axis, [1.0, -1.0]);
        assert_eq!(build_axis(&split.swapped(), &s).unwrap(), [-1.0, 1.0]);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(axis_project("w", &axis, &s).unwrap().unwrap(), half, epsilon = 1e-12);
        assert_abs_diff_eq!(axis_project("v", &axis, &s).unwrap().unwrap(), -half, epsilon = 1e-12);
        assert_abs_diff_eq!(axis_project("o", &axis, &s).unwrap().unwrap(), 0.0, epsilon = 1e-12);
        assert!(matches!(axis_project("w", &[0.0, 0.0], &s), Err(Error::ZeroAxis)));
        let empty = PoleSplit { low: set(&["zzz"]), ..split };
        assert!(matches!(build_axis(&empty, &s), Err(Error::EmptyPole { pole: "low" })));
    }

    #[test]
    fn axis_scorer_rejects_unipolar() {
        let s = store(&[("w", &[1.0, 0.0]), ("v", &[0.0, 1.0])]);
        let split = PoleSplit {
            high: set(&["w"]),
            low: set(&["v"]),
            low_pct: None,
            high_pct: None,
        };
        assert!(DimensionScorer::axis_emb(Dimension::Appearance, &split, &s).is_err());
        assert!(DimensionScorer::axis_emb(Dimension::Power, &split, &s).is_ok());
    }

    #[test]
    fn story_score_examples() {
        let lex = dominance();
        let scorer = DimensionScorer::lex_avg(Dimension::Dominance, &lex);
        let one = score_story(&attrs(&[("rich", 1)]), &scorer, None);
        assert_eq!(one.raw, Some(0.905));
        assert_eq!(one.n_scored_tokens, 1);

        let table: HashMap<String, f64> =
            [("x".to_string(), 0.2), ("y".to_string(), 0.4)].into();
        let two = DimensionScorer::lex_avg(Dimension::Valence, &table_lexicon(&table));
        assert_abs_diff_eq!(
            score_story(&attrs(&[("x", 1), ("y", 1)]), &two, None).raw.unwrap(),
            0.3,
            epsilon = 1e-12
        );

        let s = store(&[("w", &[1.0, 0.0])]);
        let sim = DimensionScorer::emb_sim(Dimension::Intellect, &set(&["w"]), &s).unwrap();
        let none = score_story(&attrs(&[("oov", 2)]), &sim, Some(&s));
        assert_eq!((none.raw, none.n_scored_tokens), (None, 0));
    }

    fn table_lexicon(table: &HashMap<String, f64>) -> ScoredLexicon<f64> {
        ScoredLexicon::new(Dimension::Valence, table.clone()).unwrap()
    }

    fn raw_scores(values: &[Option<f64>]) -> Vec<StoryScore<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &raw)| StoryScore {
                story_id: format!("s{i}"),
                dimension: Dimension::Valence,
                method: Method::AxisEmb,
                source: AttributeSource::Inference,
                raw,
                z: None,
                n_scored_tokens: u64::from(raw.is_some()),
            })
            .collect()
    }

    #[test]
    fn zscore_examples() {
        let mut s = raw_scores(&[Some(1.0), Some(2.0), Some(3.0), None]);
        assert!(zscore(&mut s).is_empty());
        let z: Vec<_> = s.iter().map(|x| x.z).collect();
        assert_abs_diff_eq!(z[0].unwrap(), -1.224_744_871_391_589, epsilon = 1e-12);
        assert_abs_diff_eq!(z[1].unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z[2].unwrap(), 1.224_744_871_391_589, epsilon = 1e-12);
        assert_eq!(z[3], None);

        let mut single = raw_scores(&[Some(1.0), None]);
        assert_eq!(zscore(&mut single).len(), 1);
        assert_eq!(single[0].z, None);

        let mut flat = raw_scores(&[Some(0.5); 4]);
        assert_eq!(zscore(&mut flat)[0].reason, "zero variance");
        assert!(flat.iter().all(|s| s.z.is_none()));
    }

    #[test]
    fn plans_cover_valid_pairs() {
        assert_eq!(default_plan().len(), 6);
        assert_eq!(full_plan().len(), 6 + 6 + 4);
    }

    #[test]
    fn score_csv_round_trip() {
        let mut scores = raw_scores(&[Some(0.25), None, Some(-1.5)]);
        zscore(&mut scores);
        let rows: Vec<ScoreRow<f64>> = scores
            .into_iter()
            .map(|score| ScoreRow {
                prompt_id: "p,1".into(),
                writer: WriterGroup::Machine,
                pov: PovLabel::ThirdFemale,
                score,
            })
            .collect();
        let mut buf = Vec::new();
        write_score_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("story_id,prompt_id,writer,pov,dimension,method,source,raw,z,n_scored_tokens\n"));
        assert!(text.contains("s1,\"p,1\",machine,TP-F,valence,axis_emb,inference,,,0\n"));
        assert_eq!(read_score_csv::<f64, _>(&buf[..]).unwrap(), rows);
    }
}
