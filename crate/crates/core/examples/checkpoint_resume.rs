//! Stops a run part-way, saves a checkpoint, resumes it and checks that the
//! final report matches an uninterrupted run byte for byte.

use hardmine::annotation::SimulatedAnnotator;
use hardmine::experiment::{run_experiment, Experiment};
use hardmine::ingest::{checkpoint_load, checkpoint_save, generate_synthetic, SyntheticSpec};
use hardmine::{ExperimentConfig, RngStream, Strategy};

fn main() -> hardmine::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        identities: 20,
        samples_per_identity: 20,
        ..SyntheticSpec::default()
    })?
    .dataset;
    let config = ExperimentConfig {
        seed: 11,
        budget_fraction: 0.5,
        ..ExperimentConfig::default()
    };
    let straight = run_experiment(&data, &config, Strategy::Ahsm)?;

    let annotator = || SimulatedAnnotator::from_config(&config, RngStream::new(config.seed).substream("annotate"));
    let mut exp = Experiment::new(&data, config.clone(), Strategy::Ahsm)?;
    let mut ann = annotator();
    for _ in 0..3 {
        exp.step(&mut ann)?;
    }
    let path = std::env::temp_dir().join("hardmine-checkpoint.json");
    checkpoint_save(exp.state(), &path)?;
    println!("saved after {} iterations to {}", exp.state().records().len(), path.display());

    let mut resumed = Experiment::resume(&data, checkpoint_load(&path)?)?;
    let report = resumed.run(&mut annotator())?;
    let same = serde_json::to_vec(&report)? == serde_json::to_vec(&straight)?;
    println!("{} iterations, identical to the uninterrupted run: {same}", report.records.len());
    assert!(same);
    Ok(())
}
