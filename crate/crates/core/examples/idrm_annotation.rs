//! Annotates one query batch through ranked identity recommendations with a
//! simulated annotator and compares the cost with one-by-one comparison.

use hardmine::annotation::{annotate_batch, recommend_candidates, CostLedger, SimulatedAnnotator};
use hardmine::ingest::{generate_synthetic, SyntheticSpec};
use hardmine::model::train;
use hardmine::selection::select_batch;
use hardmine::{partition_dataset, ExperimentConfig, RngStream, Strategy};

fn main() -> hardmine::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        identities: 30,
        samples_per_identity: 10,
        ..SyntheticSpec::default()
    })?
    .dataset;
    let config = ExperimentConfig::default();
    let rng = RngStream::new(3);
    let mut pool = partition_dataset(&data, 0.5, &rng)?;
    let (model, _) = train(&pool, &data, &config.model, &rng, None)?;
    let sel = select_batch(Strategy::Ahsm, &model, &pool, &data, &config, &rng)?;
    pool.begin_query(&sel.query)?;

    let rec = recommend_candidates(&model, &pool, &data, &sel.query[0], 1, &config)?;
    println!("round 1 for {}:", rec.sample_id);
    for (i, c) in rec.candidates.iter().enumerate() {
        let reps: Vec<&str> = c.representatives.iter().map(|r| r.as_str()).collect();
        println!("  {:>2}. {} p={:.3} [{}]", i + 1, c.identity_id, c.probability, reps.join(", "));
    }

    for error_rate in [0.0, 0.2] {
        let mut p = pool.clone();
        let mut annotator = SimulatedAnnotator::new(error_rate, 0.0, rng.substream("annotate"));
        let mut ledger = CostLedger::default();
        let (delta, outcomes) = annotate_batch(&model, &mut p, &data, &sel.query, &mut annotator, &config, &mut ledger)?;
        let rounds: usize = outcomes.iter().map(|o| o.rounds).sum();
        println!(
            "\nerror rate {error_rate}: {} labels, {} comparisons vs {} naive (ratio {:.3}), {} rounds, {} new identities, {} wrong",
            delta.labels_assigned,
            delta.comparisons,
            delta.naive_comparisons_baseline,
            delta.effort_ratio(),
            rounds,
            delta.new_identities_created,
            delta.wrong_labels
        );
    }
    Ok(())
}
