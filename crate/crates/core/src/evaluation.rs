//! Scorer evaluation against held-out lexicon terms.
//!
//! The lexicon is split into train and test terms. Prototypes and poles come
//! from the train terms only; each in-vocabulary test term is scored as if it
//! were an attribute token, and the predictions are rank-correlated with the
//! lexicon's own scores.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingStore;
use crate::lexicons::{percentile_split, split_train_test, Dimension, ScoredLexicon};
use crate::scoring::{DimensionScorer, Method};
use crate::{Error, Result, Scalar};

/// Ranks starting at 1; tied values share the mean of the ranks they span.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of the average ranks.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InsufficientData(format!(
            "spearman needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData("spearman needs at least two pairs".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::InsufficientData("spearman of a constant sequence".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dimension: Dimension,
    pub method: Method,
    pub spearman: f64,
    /// Test terms that received a prediction.
    pub n_test: usize,
    /// Fraction of test terms found in the embedding vocabulary.
    pub coverage: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub train_ratio: f64,
    pub low_pct: f64,
    pub high_pct: f64,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            train_ratio: 0.8,
            low_pct: 25.0,
            high_pct: 75.0,
            seed: 13,
        }
    }
}

/// Everything an evaluation run used, for auditing.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub report: EvalReport,
    pub train: ScoredLexicon<T>,
    pub test: ScoredLexicon<T>,
    pub scorer: DimensionScorer<T>,
}

pub fn evaluate_scorer<T: Scalar>(
    lexicon: &ScoredLexicon<T>,
    method: Method,
    store: &EmbeddingStore<T>,
    settings: EvalSettings,
) -> Result<Evaluation<T>> {
    let dimension = lexicon.dimension;
    let (train, test) = split_train_test(lexicon, settings.train_ratio, settings.seed)?;
    let split = percentile_split(&train, settings.low_pct, settings.high_pct)?;
    let scorer = match method {
        Method::EmbSim => DimensionScorer::emb_sim(dimension, &split.high, store)?,
        Method::AxisEmb => DimensionScorer::axis_emb(dimension, &split, store)?,
        Method::LexAvg => {
            return Err(Error::InvalidScorer(
                "lex_avg cannot score terms outside its own lexicon".into(),
            ))
        }
    };

    let test_terms: Vec<(&str, T)> = test.iter().collect();
    let predicted: Vec<(T, T)> = test_terms
        .par_iter()
        .filter_map(|&(term, gold)| scorer.score_token(term, Some(store)).map(|p| (p, gold)))
        .collect();
    let in_vocab = test_terms.iter().filter(|(t, _)| store.contains(t)).count();
    if predicted.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} test terms could be scored",
            predicted.len()
        )));
    }
    let (pred, gold): (Vec<T>, Vec<T>) = predicted.into_iter().unzip();
    let report = EvalReport {
        dimension,
        method,
        spearman: spearman(&pred, &gold)?,
        n_test: pred.len(),
        coverage: in_vocab as f64 / test_terms.len() as f64,
        seed: settings.seed,
    };
    Ok(Evaluation {
        report,
        train,
        test,
        scorer,
    })
}

/// Terms the scorer was built from that are not in the train split. Empty
/// for a leak-free evaluation.
pub fn leaked_terms<T: Scalar>(evaluation: &Evaluation<T>) -> BTreeSet<String> {
    evaluation
        .scorer
        .reference_terms()
        .iter()
        .filter(|t| evaluation.train.get(t).is_none())
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    // Spearman straight from the definition: rank by counting smaller and
    // equal elements, then the covariance formula over those ranks.
    fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|&a| {
                    let less = v.iter().filter(|&&b| b < a).count() as f64;
                    let equal = v.iter().filter(|&&b| b == a).count() as f64;
                    less + (equal + 1.0) / 2.0
                })
                .collect()
        };
        let (rx, ry) = (rank(x), rank(y));
        let n = x.len() as f64;
        let mean = (n + 1.0) / 2.0;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mean).powi(2)).sum();
        let vy: f64 = ry.iter().map(|b| (b - mean).powi(2)).sum();
        cov / (vx.sqrt() * vy.sqrt())
    }

    #[test]
    fn spearman_exact_cases() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman(&x, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap(), 1.0);
        assert_eq!(spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_abs_diff_eq!(
            spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap(),
            0.6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn spearman_ties_match_scipy() {
        // frozen from scipy.stats.spearmanr
        let cases: [(&[f64], &[f64], f64); 3] = [
            (&[1., 2., 2., 3., 4.], &[1., 3., 2., 2., 5.], 0.763_157_894_736_842_1),
            (&[1., 1., 1., 2., 2., 3.], &[6., 5., 5., 4., 4., 1.], -0.953_462_589_245_592_2),
            (
                &[0.5, 0.1, 0.9, 0.3, 0.7, 0.2, 0.8],
                &[3., 1., 7., 2., 5., 4., 6.],
                0.892_857_142_857_142_9,
            ),
        ];
        for (x, y, expected) in cases {
            assert_abs_diff_eq!(spearman(x, y).unwrap(), expected, epsilon = 1e-12);
            assert_abs_diff_eq!(brute_spearman(x, y), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn spearman_rejects_degenerate_input() {
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn spearman_invariants(pairs in prop::collection::vec((0u8..20, 0u8..20), 3..30)) {
            let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
            let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
            prop_assume!(x.iter().any(|&v| v != x[0]) && y.iter().any(|&v| v != y[0]));
            let r = spearman(&x, &y).unwrap();
            prop_assert!((r - brute_spearman(&x, &y)).abs() < 1e-12);
            prop_assert_eq!(spearman(&x, &x).unwrap(), 1.0);
            let cubed: Vec<f64> = x.iter().map(|v| v.powi(3) - 7.0).collect();
            prop_assert_eq!(spearman(&cubed, &y).unwrap(), r);
            let neg: Vec<f64> = y.iter().map(|v| -v.exp()).collect();
            prop_assert!((spearman(&x, &neg).unwrap() + r).abs() < 1e-12);
        }
    }

    fn toy() -> (ScoredLexicon<f64>, EmbeddingStore<f64>) {
        // Scores rise with the first coordinate; the second is noise.
        let mut store = EmbeddingStore::new(2);
        let mut entries = Vec::new();
        for i in 0..60 {
            let s = f64::from(i) / 59.0;
            let term = format!("w{i:02}");
            store.insert(term.clone(), &[s - 0.5, ((i * 7) % 11) as f64 / 40.0 + 0.3]);
            entries.push((term, s));
        }
        entries.push(("unseen".into(), 0.5));
        (ScoredLexicon::new(Dimension::Valence, entries).unwrap(), store)
    }

    #[test]
    fn evaluation_is_leak_free_and_reproducible() {
        let (lex, store) = toy();
        let settings = EvalSettings::default();
        for method in [Method::EmbSim, Method::AxisEmb] {
            let a = evaluate_scorer(&lex, method, &store, settings).unwrap();
            assert!(leaked_terms(&a).is_empty());
            assert!(a.scorer.reference_terms().iter().all(|t| a.test.get(t).is_none()));
            let b = evaluate_scorer(&lex, method, &store, settings).unwrap();
            assert_eq!(a.report.spearman.to_bits(), b.report.spearman.to_bits());
            assert_eq!(a.train.len() + a.test.len(), lex.len());
        }
        let axis = evaluate_scorer(&lex, Method::AxisEmb, &store, settings).unwrap();
        assert!(axis.report.spearman > 0.8, "{:?}", axis.report);
        assert!(evaluate_scorer(&lex, Method::LexAvg, &store, settings).is_err());
    }

    #[test]
    fn coverage_counts_out_of_vocabulary_terms() {
        let (lex, store) = toy();
        let e = evaluate_scorer(&lex, Method::AxisEmb, &store, EvalSettings::default()).unwrap();
        let expected_in_vocab = e.test.terms().filter(|t| store.contains(t)).count();
        assert_eq!(e.report.n_test, expected_in_vocab);
        assert_abs_diff_eq!(
            e.report.coverage,
            expected_in_vocab as f64 / e.test.len() as f64,
            epsilon = 1e-15
        );
    }
}
