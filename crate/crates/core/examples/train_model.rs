//! Trains the linear identification + verification model on a labeled
//! subset and evaluates retrieval on held-out identities.

use hardmine::eval::{evaluate_model, Similarity};
use hardmine::ingest::{generate_synthetic, split_by_identity, SyntheticSpec};
use hardmine::model::train;
use hardmine::{partition_dataset, ModelConfig, RngStream};

fn main() -> hardmine::Result<()> {
    let data = generate_synthetic(&SyntheticSpec::default())?.dataset;
    let rng = RngStream::new(1);
    let (train_split, eval_split) = split_by_identity(&data, 0.5, &rng)?;
    let eval_split = eval_split.expect("eval split");
    let config = ModelConfig::default();

    for fraction in [0.05, 0.2, 0.5, 1.0] {
        let pool = partition_dataset(&train_split, fraction, &rng)?;
        let (model, summary) = train(&pool, &train_split, &config, &rng.derive("train"), None)?;
        let m = evaluate_model(&model, &eval_split, Similarity::default())?;
        println!(
            "labeled {:>4} ({:>3.0}%): {} classes, loss {:.3}, rank-1 {:.3}, rank-5 {:.3}, mAP {:.3}",
            pool.labeled_count(),
            fraction * 100.0,
            model.class_count(),
            summary.final_loss,
            m.rank1,
            m.rank5,
            m.map
        );
    }
    Ok(())
}
