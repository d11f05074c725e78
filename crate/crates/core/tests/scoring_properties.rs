use std::collections::BTreeSet;

use proptest::prelude::*;
use storylens::attributes::{AttributeSet, AttributeSource};
use storylens::embeddings::EmbeddingStore;
use storylens::lexicons::{Dimension, PoleSplit};
use storylens::scoring::{
    axis_project, build_axis, score_story, zscore, DimensionScorer, Method, StoryScore,
};

const DIM: usize = 6;

fn vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, DIM)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
}

fn store_of(vectors: &[Vec<f64>], prefix: &str, store: &mut EmbeddingStore<f64>) -> Vec<String> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let term = format!("{prefix}{i}");
            store.insert(term.clone(), v);
            term
        })
        .collect()
}

// Reference cosine with no shared code.
fn naive_cos(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    dot / (nu * nv)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emb_sim_matches_double_loop(
        protos in prop::collection::vec(vector(), 1..=10),
        attrs in prop::collection::vec((vector(), 1u32..4), 1..=10),
    ) {
        let mut store = EmbeddingStore::new(DIM);
        let proto_terms = store_of(&protos, "p", &mut store);
        let attr_vectors: Vec<Vec<f64>> = attrs.iter().map(|a| a.0.clone()).collect();
        let attr_terms = store_of(&attr_vectors, "a", &mut store);
        let mut set = AttributeSet::new("s", AttributeSource::Inference);
        for (term, (_, w)) in attr_terms.iter().zip(&attrs) {
            set.add(term, *w);
        }
        let prototypes: BTreeSet<String> = proto_terms.into_iter().collect();
        let scorer = DimensionScorer::emb_sim(Dimension::Appearance, &prototypes, &store).unwrap();
        let got = score_story(&set, &scorer, Some(&store)).raw.unwrap();

        let (mut num, mut den) = (0.0, 0.0);
        for (a, w) in &attrs {
            let mut s = 0.0;
            for p in &protos {
                s += naive_cos(a, p);
            }
            num += f64::from(*w) * s / protos.len() as f64;
            den += f64::from(*w);
        }
        prop_assert!((got - num / den).abs() < 1e-9, "{got} vs {}", num / den);
    }

    #[test]
    fn axis_antisymmetry_and_scale_invariance(
        high in prop::collection::vec(vector(), 1..5),
        low in prop::collection::vec(vector(), 1..5),
        token in vector(),
        factor in 0.01f64..100.0,
    ) {
        let mut store = EmbeddingStore::new(DIM);
        let split = PoleSplit {
            high: store_of(&high, "h", &mut store).into_iter().collect(),
            low: store_of(&low, "l", &mut store).into_iter().collect(),
            low_pct: None,
            high_pct: None,
        };
        store.insert("t", &token);
        let axis = build_axis(&split, &store).unwrap();
        prop_assume!(axis.iter().map(|x| x * x).sum::<f64>() > 1e-6);
        let forward = axis_project("t", &axis, &store).unwrap().unwrap();
        let swapped = axis_project("t", &build_axis(&split.swapped(), &store).unwrap(), &store)
            .unwrap()
            .unwrap();
        prop_assert!((forward + swapped).abs() < 1e-9);

        let scaled = store.scaled(factor);
        let scaled_axis = build_axis(&split, &scaled).unwrap();
        let rescaled = axis_project("t", &scaled_axis, &scaled).unwrap().unwrap();
        prop_assert!((forward - rescaled).abs() < 1e-9);
    }

    #[test]
    fn zscore_contract(raws in prop::collection::vec(prop::option::of(-5.0f64..5.0), 2..80)) {
        let present: Vec<f64> = raws.iter().flatten().copied().collect();
        prop_assume!(present.len() >= 2 && present.iter().any(|&r| r != present[0]));
        let mut scores: Vec<StoryScore<f64>> = raws
            .iter()
            .enumerate()
            .map(|(i, &raw)| StoryScore {
                story_id: format!("s{i}"),
                dimension: Dimension::Arousal,
                method: Method::AxisEmb,
                source: AttributeSource::Dependency,
                raw,
                z: None,
                n_scored_tokens: u64::from(raw.is_some()),
            })
            .collect();
        prop_assert!(zscore(&mut scores).is_empty());
        let z: Vec<f64> = scores.iter().filter_map(|s| s.z).collect();
        prop_assert_eq!(z.len(), present.len());
        prop_assert!(scores.iter().all(|s| s.z.is_some() == s.raw.is_some()));
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() <= 1e-9);
        prop_assert!((std - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn orthonormal_poles_project_to_inverse_sqrt_two() {
    let mut store = EmbeddingStore::new(3);
    store.insert("w", &[1.0, 0.0, 0.0]);
    store.insert("v", &[0.0, 1.0, 0.0]);
    let split = PoleSplit {
        high: ["w".to_string()].into(),
        low: ["v".to_string()].into(),
        low_pct: None,
        high_pct: None,
    };
    let scorer = DimensionScorer::axis_emb(Dimension::Valence, &split, &store).unwrap();
    let w = scorer.score_token("w", Some(&store)).unwrap();
    let v = scorer.score_token("v", Some(&store)).unwrap();
    assert!((w - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-12);
    assert!((v + std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-12);
}

#[test]
fn f32_store_agrees_with_f64() {
    let rows: [(&str, [f64; 3]); 4] = [
        ("good", [0.9, 0.1, 0.2]),
        ("bad", [-0.8, 0.2, 0.1]),
        ("fine", [0.4, 0.3, -0.2]),
        ("odd", [0.1, -0.7, 0.5]),
    ];
    let mut s64 = EmbeddingStore::<f64>::new(3);
    let mut s32 = EmbeddingStore::<f32>::new(3);
    for (t, v) in rows {
        s64.insert(t, &v);
        s32.insert(t, &v.map(|x| x as f32));
    }
    let split = PoleSplit {
        high: ["good".to_string()].into(),
        low: ["bad".to_string()].into(),
        low_pct: None,
        high_pct: None,
    };
    let a64 = DimensionScorer::axis_emb(Dimension::Valence, &split, &s64).unwrap();
    let a32 = DimensionScorer::axis_emb(Dimension::Valence, &split, &s32).unwrap();
    for t in ["fine", "odd"] {
        let x = a64.score_token(t, Some(&s64)).unwrap();
        let y = f64::from(a32.score_token(t, Some(&s32)).unwrap());
        assert!((x - y).abs() < 1e-5);
    }
}
