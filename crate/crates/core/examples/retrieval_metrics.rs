//! CMC rank-k and mAP on a hand-built gallery, then on a trained model.

use hardmine::eval::{evaluate_model, mean_average_precision, rank_k_accuracy, RetrievalResult, Similarity};
use hardmine::ingest::{generate_synthetic, SyntheticSpec};
use hardmine::model::train;
use hardmine::{partition_dataset, ModelConfig, RngStream, SampleId};

fn result(query: &str, relevant: &[bool]) -> RetrievalResult {
    RetrievalResult {
        query: SampleId(query.into()),
        ranking: (0..relevant.len()).map(|i| SampleId(format!("g{i}"))).collect(),
        relevant: relevant.to_vec(),
    }
}

fn main() -> hardmine::Result<()> {
    let results = vec![
        result("q1", &[true, false, false, true]),
        result("q2", &[false, true, false, false]),
        result("q3", &[false, false, false, true]),
        result("q4", &[false, false, false, false]),
    ];
    for k in [1, 2, 4] {
        println!("rank-{k}: {:.4}", rank_k_accuracy(&results, k)?);
    }
    println!("mAP: {:.4} (q4 has no match and is excluded)", mean_average_precision(&results)?);

    let data = generate_synthetic(&SyntheticSpec {
        identities: 20,
        samples_per_identity: 20,
        ..SyntheticSpec::default()
    })?
    .dataset;
    let rng = RngStream::new(2);
    let pool = partition_dataset(&data, 0.5, &rng)?;
    let (model, _) = train(&pool, &data, &ModelConfig::default(), &rng, None)?;
    for sim in [Similarity::NegativeEuclidean, Similarity::Cosine] {
        let m = evaluate_model(&model, &data, sim)?;
        println!(
            "{sim:?}: rank-1 {:.3} rank-5 {:.3} rank-10 {:.3} mAP {:.3} over {} queries",
            m.rank1, m.rank5, m.rank10, m.map, m.queries
        );
    }
    Ok(())
}
