//! Trains the desk-scale model on synthetic clusters and reports held-out
//! triplet accuracy, per-dimension Spearman and funnel recall.
//!
//! `cargo run --release -p nestemb-core --example desk_experiment`

use nestemb_core::dataset::{
    make_synthetic_triplets, synthetic_corpus, synthetic_scored_pairs, synthetic_triplets_from,
    SyntheticLanguage, SyntheticVocab,
};
use nestemb_core::encoder::{train, triplet_accuracy};
use nestemb_core::evaluator::evaluate;
use nestemb_core::retrieval::{exact_knn, funnel_search, recall_at_k, Corpus, FunnelConfig};
use nestemb_core::{
    DimensionLadder, EncoderModel, FeaturizerConfig, SimilarityMetric, TrainConfig,
};

fn main() {
    let seed = 7;
    let triplets = make_synthetic_triplets(8, 250, seed).unwrap();
    let lang = SyntheticLanguage::new(8, SyntheticVocab::default(), seed).unwrap();
    let heldout = synthetic_triplets_from(&lang, 100, seed + 100).unwrap();
    let ladder = DimensionLadder::desk_default();
    let init = EncoderModel::init(ladder.clone(), FeaturizerConfig::default(), seed).unwrap();
    for m in ladder.iter() {
        println!(
            "untrained acc@{m}: {:.3}",
            triplet_accuracy(&init, &heldout, m).unwrap()
        );
    }
    let t0 = std::time::Instant::now();
    let (model, report) = train(init, &triplets, &TrainConfig::default()).unwrap();
    println!(
        "train {:?}, losses first {:.3} mean {:.3} last {:.3}",
        t0.elapsed(),
        report.batch_losses[0],
        report.epoch_mean_losses[0],
        report.batch_losses.last().unwrap()
    );
    for m in ladder.iter() {
        println!(
            "heldout acc@{m}: {:.3}",
            triplet_accuracy(&model, &heldout, m).unwrap()
        );
    }
    let pairs = synthetic_scored_pairs(&lang, 400, seed + 200);
    let rep = evaluate(&model, &pairs, &ladder).unwrap();
    for row in &rep.rows {
        println!(
            "dim {} spearman cos {:.4} pearson max {:.4}",
            row.dim,
            row.get(SimilarityMetric::Cosine).unwrap().spearman,
            row.pearson_max
        );
    }
    let t1 = std::time::Instant::now();
    let (docs, queries) = synthetic_corpus(&lang, 10_000, 200, seed + 300);
    let rows = docs
        .into_iter()
        .map(|(id, t)| (id, model.encode(&t, 256).unwrap()))
        .collect();
    let corpus = Corpus::from_rows(rows, [0; 16]).unwrap();
    let cfg = FunnelConfig {
        shortlist_dim: 32,
        shortlist_size: 200,
        final_dim: 256,
        k: 10,
    };
    let mut total = 0.0;
    for q in &queries {
        let qv = model.encode(q, 256).unwrap();
        let exact = exact_knn(&qv, &corpus, 256, SimilarityMetric::Cosine, 10).unwrap();
        let fun = funnel_search(&qv, &corpus, &cfg, SimilarityMetric::Cosine).unwrap();
        total += recall_at_k(&fun, &exact, 10).unwrap();
    }
    println!(
        "recall@10 {:.4} ({:?})",
        total / queries.len() as f64,
        t1.elapsed()
    );
}
