//! End-to-end SGNS behaviour on small corpora.

use isoalign::dictionary::BilingualDictionary;
use isoalign::embeddings::EmbeddingSpace;
use isoalign::isometry::{rsim, RsimParams};
use isoalign::sgns::{train_text, SnapshotPlan, Subwords, TrainConfig};
use isoalign::similarity::cosine;
use isoalign::synth::{SynthCorpus, SynthParams};

fn cos(space: &EmbeddingSpace, a: &str, b: &str) -> f64 {
    cosine(space.row(space.index_of(a).unwrap()), space.row(space.index_of(b).unwrap()))
}

#[test]
fn co_occurring_words_end_up_closer() {
    let text = "a b\n".repeat(500) + &"c d\n".repeat(500);
    let (mut within, mut across) = (0.0, 0.0);
    for seed in 1..=5 {
        let cfg = TrainConfig {
            dim: 10,
            epochs: 5,
            negatives: 2,
            min_count: 1,
            // four words of equal frequency: keep every token
            subsample_t: 1.0,
            subwords: Subwords::Off,
            seed,
            ..Default::default()
        };
        let s = train_text(&text, &cfg, &SnapshotPlan::default()).unwrap().final_space;
        within += cos(&s, "a", "b") + cos(&s, "c", "d");
        across += cos(&s, "a", "c") + cos(&s, "b", "d");
    }
    assert!(within / 10.0 > across / 10.0, "within {within} across {across}");
}

#[test]
fn vectors_stay_finite_and_bounded() {
    let text = SynthCorpus::new(SynthParams { vocab: 400, topics: 10, words_per_topic: 40, ..Default::default() })
        .unwrap()
        .generate(30_000);
    let cfg = TrainConfig { dim: 16, epochs: 2, negatives: 5, seed: 3, ..Default::default() };
    let s = train_text(&text, &cfg, &SnapshotPlan::default()).unwrap().final_space;
    assert!(s.as_slice().iter().all(|v| v.is_finite()));
    let mean_norm = (0..s.len()).map(|i| s.norm(i)).sum::<f64>() / s.len() as f64;
    assert!(mean_norm > 0.01 && mean_norm < 100.0, "mean norm {mean_norm}");
}

#[test]
fn snapshots_approach_the_final_space() {
    let text = SynthCorpus::new(SynthParams { vocab: 500, topics: 10, words_per_topic: 50, ..Default::default() })
        .unwrap()
        .generate(40_000);
    let budgets = vec![10_000, 30_000, 60_000, 100_000];
    let plan = SnapshotPlan::new(budgets.clone()).unwrap();
    let mut mean = vec![0.0; budgets.len()];
    let seeds = 5;
    for seed in 1..=seeds {
        let cfg = TrainConfig {
            dim: 16,
            epochs: 3,
            negatives: 5,
            subwords: Subwords::Off,
            seed,
            ..Default::default()
        };
        let out = train_text(&text, &cfg, &plan).unwrap();
        let id = BilingualDictionary::identity(&out.final_space);
        let params = RsimParams { m_pairs: 200, ..Default::default() };
        for (m, snap) in mean.iter_mut().zip(&out.snapshots) {
            *m += rsim(&snap.space, &out.final_space, &id, &params).unwrap() / seeds as f64;
        }
    }
    assert!(mean.windows(2).all(|w| w[1] >= w[0]), "{mean:?}");
}
