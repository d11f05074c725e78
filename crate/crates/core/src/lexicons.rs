//! Dimension lexicons: real-valued valence/arousal/dominance scores and the
//! boolean term lists for appearance, intellect and power.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seed, Diagnostic, Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Valence,
    Arousal,
    Dominance,
    Power,
    Appearance,
    Intellect,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::Valence,
        Dimension::Arousal,
        Dimension::Dominance,
        Dimension::Power,
        Dimension::Appearance,
        Dimension::Intellect,
    ];

    pub const VAD: [Dimension; 3] = [Dimension::Valence, Dimension::Arousal, Dimension::Dominance];

    /// Dimensions with a low and a high pole.
    pub fn is_bipolar(self) -> bool {
        !matches!(self, Dimension::Appearance | Dimension::Intellect)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Valence => "valence",
            Dimension::Arousal => "arousal",
            Dimension::Dominance => "dominance",
            Dimension::Power => "power",
            Dimension::Appearance => "appearance",
            Dimension::Intellect => "intellect",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown dimension `{s}`")))
    }
}

/// Term scores in `[0, 1]` along one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLexicon<T> {
    pub dimension: Dimension,
    entries: BTreeMap<String, T>,
}

impl<T: Scalar> ScoredLexicon<T> {
    pub fn new(
        dimension: Dimension,
        entries: impl IntoIterator<Item = (String, T)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (term, score) in entries {
            if !(score >= T::zero() && score <= T::one()) {
                return Err(Error::Config(format!(
                    "score {score} for `{term}` outside [0, 1]"
                )));
            }
            let term = term.to_lowercase();
            if map.insert(term.clone(), score).is_some() {
                return Err(Error::Config(format!("duplicate lexicon term `{term}`")));
            }
        }
        Ok(Self {
            dimension,
            entries: map,
        })
    }

    pub fn get(&self, term: &str) -> Option<T> {
        self.entries.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, T)> + '_ {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.keys().map(String::as_str)
    }

    fn subset<'a>(&self, terms: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            dimension: self.dimension,
            entries: terms
                .into_iter()
                .map(|t| (t.to_string(), self.entries[t]))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VadLexicon<T> {
    pub valence: ScoredLexicon<T>,
    pub arousal: ScoredLexicon<T>,
    pub dominance: ScoredLexicon<T>,
}

impl<T: Scalar> VadLexicon<T> {
    pub fn get(&self, dimension: Dimension) -> Option<&ScoredLexicon<T>> {
        match dimension {
            Dimension::Valence => Some(&self.valence),
            Dimension::Arousal => Some(&self.arousal),
            Dimension::Dominance => Some(&self.dominance),
            _ => None,
        }
    }
}

/// A loaded resource plus the lines that were skipped.
#[derive(Debug, Clone)]
pub struct Loaded<L> {
    pub value: L,
    pub diagnostics: Vec<Diagnostic>,
    /// Multi-word entries dropped (attribute tokens are single words).
    pub dropped_multiword: usize,
}

/// Read a tab-separated VAD table with a header naming the columns
/// (`term`/`word`, `valence`, `arousal`, `dominance`, any order, any case).
///
/// Lines with non-numeric or out-of-range scores are rejected with a
/// diagnostic; the rest of the file still loads.
pub fn load_scored_lexicon<T: Scalar>(path: &Path) -> Result<Loaded<VadLexicon<T>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::parse(path, 1, "missing header line")),
        }
    };
    let names: Vec<String> = header.split('\t').map(|c| c.trim().to_lowercase()).collect();
    let column = |wanted: &[&str]| names.iter().position(|n| wanted.contains(&n.as_str()));
    let (Some(term_col), Some(v_col), Some(a_col), Some(d_col)) = (
        column(&["term", "word"]),
        column(&["valence"]),
        column(&["arousal"]),
        column(&["dominance"]),
    ) else {
        return Err(Error::parse(
            path,
            1,
            "header must name term, valence, arousal and dominance columns",
        ));
    };

    let mut diagnostics = Vec::new();
    let mut dropped_multiword = 0;
    let mut seen = BTreeSet::new();
    let (mut v, mut a, mut d) = (Vec::new(), Vec::new(), Vec::new());
    for (index, line) in lines {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < names.len() {
            diagnostics.push(Diagnostic::new(
                line_no,
                format!("expected {} columns, found {}", names.len(), cols.len()),
            ));
            continue;
        }
        let term = cols[term_col].trim().to_lowercase();
        if term.is_empty() {
            diagnostics.push(Diagnostic::new(line_no, "empty term"));
            continue;
        }
        if term.contains(char::is_whitespace) {
            dropped_multiword += 1;
            continue;
        }
        let parse = |col: usize| -> std::result::Result<T, String> {
            let raw = cols[col].trim();
            let score: T = raw
                .parse()
                .map_err(|_| format!("non-numeric score `{raw}` for `{term}`"))?;
            if score >= T::zero() && score <= T::one() {
                Ok(score)
            } else {
                Err(format!("score {raw} for `{term}` outside [0, 1]"))
            }
        };
        match (parse(v_col), parse(a_col), parse(d_col)) {
            (Ok(sv), Ok(sa), Ok(sd)) => {
                if !seen.insert(term.clone()) {
                    diagnostics.push(Diagnostic::new(line_no, format!("duplicate term `{term}`")));
                    continue;
                }
                v.push((term.clone(), sv));
                a.push((term.clone(), sa));
                d.push((term, sd));
            }
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
                diagnostics.push(Diagnostic::new(line_no, e));
            }
        }
    }
    if dropped_multiword > 0 {
        log::warn!("{}: dropped {dropped_multiword} multi-word entries", path.display());
    }
    Ok(Loaded {
        value: VadLexicon {
            valence: ScoredLexicon::new(Dimension::Valence, v)?,
            arousal: ScoredLexicon::new(Dimension::Arousal, a)?,
            dominance: ScoredLexicon::new(Dimension::Dominance, d)?,
        },
        diagnostics,
        dropped_multiword,
    })
}

/// A named list of terms, read from a one-term-per-line file whose first
/// line is `# concept: <name>`. Later `#` lines are comments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermList {
    pub concept: String,
    pub terms: BTreeSet<String>,
}

pub fn load_term_list(path: &Path) -> Result<Loaded<TermList>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut concept = None;
    let mut terms = BTreeSet::new();
    let mut diagnostics = Vec::new();
    let mut dropped_multiword = 0;
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if concept.is_none() {
                let name = comment
                    .trim()
                    .strip_prefix("concept:")
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| Error::parse(path, line_no, "expected `# concept: <name>` header"))?;
                concept = Some(name.to_string());
            }
            continue;
        }
        if concept.is_none() {
            return Err(Error::parse(path, line_no, "expected `# concept: <name>` header"));
        }
        if line.contains(char::is_whitespace) {
            dropped_multiword += 1;
            continue;
        }
        if !terms.insert(line.to_lowercase()) {
            diagnostics.push(Diagnostic::new(line_no, format!("duplicate term `{line}`")));
        }
    }
    let concept = concept.ok_or_else(|| Error::parse(path, 1, "empty term list"))?;
    Ok(Loaded {
        value: TermList { concept, terms },
        diagnostics,
        dropped_multiword,
    })
}

/// Unipolar boolean lexicon; each term remembers which concept lists
/// contributed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryLexicon {
    pub dimension: Dimension,
    terms: BTreeMap<String, BTreeSet<String>>,
}

impl CategoryLexicon {
    /// Union of the given concept lists.
    pub fn from_lists(dimension: Dimension, lists: &[TermList]) -> Result<Self> {
        if dimension.is_bipolar() {
            return Err(Error::Config(format!("{dimension} is not a unipolar dimension")));
        }
        let mut terms: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for list in lists {
            for term in &list.terms {
                terms
                    .entry(term.clone())
                    .or_default()
                    .insert(list.concept.clone());
            }
        }
        if terms.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        Ok(Self { dimension, terms })
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains_key(term)
    }

    pub fn concepts(&self, term: &str) -> Option<&BTreeSet<String>> {
        self.terms.get(term)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> + '_ {
        self.terms.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Power: a weak (low) and a powerful (high) term list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipolarCategoryLexicon {
    pub dimension: Dimension,
    pub low_terms: BTreeSet<String>,
    pub high_terms: BTreeSet<String>,
}

impl BipolarCategoryLexicon {
    pub fn new(low_terms: BTreeSet<String>, high_terms: BTreeSet<String>) -> Result<Self> {
        if let Some(term) = low_terms.intersection(&high_terms).next() {
            return Err(Error::Config(format!("`{term}` is listed at both power poles")));
        }
        if low_terms.is_empty() || high_terms.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        Ok(Self {
            dimension: Dimension::Power,
            low_terms,
            high_terms,
        })
    }

    /// 0 for weak terms, 1 for powerful terms.
    pub fn score<T: Scalar>(&self, term: &str) -> Option<T> {
        if self.high_terms.contains(term) {
            Some(T::one())
        } else if self.low_terms.contains(term) {
            Some(T::zero())
        } else {
            None
        }
    }

    pub fn as_split(&self) -> PoleSplit {
        PoleSplit {
            low: self.low_terms.clone(),
            high: self.high_terms.clone(),
            low_pct: None,
            high_pct: None,
        }
    }
}

/// Extreme terms of a dimension. Percentiles are `None` when the poles come
/// from term lists rather than from a score cut.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleSplit {
    pub low: BTreeSet<String>,
    pub high: BTreeSet<String>,
    pub low_pct: Option<f64>,
    pub high_pct: Option<f64>,
}

impl PoleSplit {
    /// Same split with the poles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            low: self.high.clone(),
            high: self.low.clone(),
            low_pct: self.high_pct,
            high_pct: self.low_pct,
        }
    }
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(pct / 100 * n)`, with rank clamped to at least 1.
pub fn nearest_rank<T: Scalar>(sorted: &[T], pct: f64) -> T {
    assert!(!sorted.is_empty(), "nearest_rank of an empty slice");
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Terms strictly below the `low_pct` and strictly above the `high_pct`
/// nearest-rank percentile of the lexicon's scores.
pub fn percentile_split<T: Scalar>(
    lexicon: &ScoredLexicon<T>,
    low_pct: f64,
    high_pct: f64,
) -> Result<PoleSplit> {
    if !(0.0..=100.0).contains(&low_pct) || !(0.0..=100.0).contains(&high_pct) || low_pct >= high_pct
    {
        return Err(Error::InvalidPercentiles {
            low: low_pct,
            high: high_pct,
        });
    }
    if lexicon.is_empty() {
        return Err(Error::EmptyLexicon);
    }
    let mut scores: Vec<T> = lexicon.iter().map(|(_, s)| s).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).expect("lexicon scores are finite"));
    let low_cut = nearest_rank(&scores, low_pct);
    let high_cut = nearest_rank(&scores, high_pct);
    let pick = |keep: &dyn Fn(T) -> bool| {
        lexicon
            .iter()
            .filter(|&(_, s)| keep(s))
            .map(|(t, _)| t.to_string())
            .collect()
    };
    Ok(PoleSplit {
        low: pick(&|s| s < low_cut),
        high: pick(&|s| s > high_cut),
        low_pct: Some(low_pct),
        high_pct: Some(high_pct),
    })
}

/// Seeded random partition of the lexicon terms; the train side receives
/// `round(ratio * n)` terms.
pub fn split_train_test<T: Scalar>(
    lexicon: &ScoredLexicon<T>,
    ratio: f64,
    seed: u64,
) -> Result<(ScoredLexicon<T>, ScoredLexicon<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("train ratio {ratio} must lie in (0, 1)")));
    }
    let mut terms: Vec<&str> = lexicon.terms().collect();
    terms.shuffle(&mut seed::rng(seed));
    let n_train = (ratio * terms.len() as f64).round() as usize;
    let (train, test) = terms.split_at(n_train);
    Ok((
        lexicon.subset(train.iter().copied()),
        lexicon.subset(test.iter().copied()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn lex(scores: &[f64]) -> ScoredLexicon<f64> {
        ScoredLexicon::new(
            Dimension::Valence,
            scores.iter().enumerate().map(|(i, &s)| (format!("t{i:02}"), s)),
        )
        .unwrap()
    }

    fn scores_of(lexicon: &ScoredLexicon<f64>, terms: &BTreeSet<String>) -> Vec<f64> {
        let mut v: Vec<f64> = terms.iter().map(|t| lexicon.get(t).unwrap()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn nearest_rank_quartiles_of_ten() {
        let l = lex(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        let split = percentile_split(&l, 25.0, 75.0).unwrap();
        assert_eq!(scores_of(&l, &split.low), [0.1, 0.2]);
        assert_eq!(scores_of(&l, &split.high), [0.9, 1.0]);
    }

    #[test]
    fn degenerate_splits_are_empty() {
        let single = percentile_split(&lex(&[0.4]), 25.0, 75.0).unwrap();
        assert!(single.low.is_empty() && single.high.is_empty());
        let flat = percentile_split(&lex(&[0.5; 8]), 25.0, 75.0).unwrap();
        assert!(flat.low.is_empty() && flat.high.is_empty());
        assert!(matches!(
            percentile_split(&lex(&[]), 25.0, 75.0),
            Err(Error::EmptyLexicon)
        ));
        assert!(percentile_split(&lex(&[0.1]), 75.0, 25.0).is_err());
    }

    #[test]
    fn out_of_range_scores_rejected() {
        assert!(ScoredLexicon::new(Dimension::Arousal, [("x".to_string(), 1.3)]).is_err());
    }

    #[test]
    fn loads_vad_tsv_with_diagnostics() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(
            file,
            "Word\tValence\tArousal\tDominance\nadorable\t0.969\t0.615\t0.491\nnervous\t0.167\t0.837\t0.179\n\
             bad line\t0.1\t0.1\t0.1\ntoo\t1.3\t0.2\t0.2\nodd\tx\t0.2\t0.2\n"
        )
        .unwrap();
        let loaded = load_scored_lexicon::<f64>(file.path()).unwrap();
        let vad = loaded.value;
        assert_eq!(vad.valence.get("adorable"), Some(0.969));
        assert_eq!(vad.dominance.get("nervous"), Some(0.179));
        assert_eq!(vad.valence.len(), 2);
        assert_eq!(loaded.dropped_multiword, 1);
        let lines: Vec<usize> = loaded.diagnostics.iter().map(|d| d.line).collect();
        assert_eq!(lines, [5, 6]);
        assert!(loaded.diagnostics[0].message.contains("1.3"));

        let again = load_scored_lexicon::<f64>(file.path()).unwrap();
        assert_eq!(again.value, vad);
    }

    #[test]
    fn term_lists_and_category_lexicons() {
        let mut beautiful = tempfile::NamedTempFile::new().unwrap();
        write!(beautiful, "# concept: beautiful\ncharming\ndashing\n# comment\nsexy\n").unwrap();
        let mut sexual = tempfile::NamedTempFile::new().unwrap();
        write!(sexual, "# concept: sexual\nsexy\nsultry\nred hot\n").unwrap();
        let a = load_term_list(beautiful.path()).unwrap();
        let b = load_term_list(sexual.path()).unwrap();
        assert_eq!(b.dropped_multiword, 1);
        let appearance =
            CategoryLexicon::from_lists(Dimension::Appearance, &[a.value, b.value]).unwrap();
        assert_eq!(appearance.len(), 4);
        assert_eq!(appearance.concepts("sexy").unwrap().len(), 2);

        let mut headerless = tempfile::NamedTempFile::new().unwrap();
        writeln!(headerless, "charming").unwrap();
        assert!(load_term_list(headerless.path()).is_err());
    }

    #[test]
    fn power_poles_must_be_disjoint() {
        let set = |w: &[&str]| w.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let power = BipolarCategoryLexicon::new(set(&["meek", "delicate"]), set(&["aggression"]))
            .unwrap();
        assert_eq!(power.score::<f64>("meek"), Some(0.0));
        assert_eq!(power.score::<f64>("aggression"), Some(1.0));
        assert_eq!(power.score::<f64>("table"), None);
        assert!(BipolarCategoryLexicon::new(set(&["a"]), set(&["a"])).is_err());
    }

    #[test]
    fn train_test_partition() {
        let scores: Vec<f64> = (0..20_000).map(|i| (i % 1000) as f64 / 1000.0).collect();
        let l = lex(&scores);
        let (train, test) = split_train_test(&l, 0.8, 42).unwrap();
        assert_eq!((train.len(), test.len()), (16_000, 4_000));
        let (train2, _) = split_train_test(&l, 0.8, 42).unwrap();
        assert_eq!(train, train2);
        let mut union: BTreeSet<&str> = train.terms().collect();
        for t in test.terms() {
            assert!(union.insert(t), "train and test overlap at {t}");
        }
        assert_eq!(union.len(), l.len());
        assert!(split_train_test(&l, 1.0, 1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn tightening_thresholds_never_grows_poles(
            scores in proptest::collection::vec(0.0f64..=1.0, 1..60),
            low in 1.0f64..40.0,
            high in 60.0f64..99.0,
            tighten in 0.0f64..1.0,
        ) {
            let l = lex(&scores);
            let base = percentile_split(&l, low, high).unwrap();
            let tight = percentile_split(&l, low * tighten, high + (100.0 - high) * tighten).unwrap();
            proptest::prop_assert!(tight.high.is_subset(&base.high));
            proptest::prop_assert!(tight.low.is_subset(&base.low));
            proptest::prop_assert!(base.low.is_disjoint(&base.high));
        }
    }
}
