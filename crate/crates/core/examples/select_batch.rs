//! Scores one unlabeled pool with every strategy and shows the AHSM stages:
//! the uncertainty-ranked hard list and the diversity-filtered batch.

use hardmine::ingest::{generate_synthetic, SyntheticSpec};
use hardmine::model::train;
use hardmine::selection::{class_centers, reduce_redundancy, select_batch, select_hard_samples};
use hardmine::{partition_dataset, ExperimentConfig, RngStream, SampleId, Strategy};

fn main() -> hardmine::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        identities: 20,
        samples_per_identity: 20,
        ..SyntheticSpec::default()
    })?
    .dataset;
    let config = ExperimentConfig::default();
    let rng = RngStream::new(7);
    let pool = partition_dataset(&data, 0.1, &rng)?;
    let (model, _) = train(&pool, &data, &config.model, &rng, None)?;
    println!("{} labeled, {} unlabeled, {} classes", pool.labeled_count(), pool.unlabeled().len(), model.class_count());

    for strategy in Strategy::ALL {
        let sel = select_batch(strategy, &model, &pool, &data, &config, &rng)?;
        let ids: Vec<&str> = sel.query.iter().map(SampleId::as_str).collect();
        println!("{strategy:>16}: {}", ids.join(" "));
    }

    let centers = class_centers(&model, &pool, &data)?;
    let batch = 20;
    let hard = select_hard_samples(&model, &pool, &data, &centers, 3 * batch)?;
    let contradictory = hard.iter().filter(|h| h.contradictory).count();
    println!("\nhard list: {} samples, {contradictory} contradictory", hard.len());
    for h in hard.iter().take(5) {
        println!("  {} uncertainty {:.3}", h.sample_id, h.uncertainty);
    }
    let ids: Vec<SampleId> = hard.iter().map(|h| h.sample_id.clone()).collect();
    let kept = reduce_redundancy(&model, &data, &ids, &centers, batch)?;
    println!("kept by intra-diversity:");
    for s in kept.iter().take(5) {
        println!("  {} divergence {:.3}", s.sample_id, s.score);
    }
    Ok(())
}
