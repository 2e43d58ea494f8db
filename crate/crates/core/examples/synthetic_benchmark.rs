//! Generates the standard synthetic benchmark, writes it as JSON Lines and
//! reads it back through the validating loader.

use hardmine::ingest::{generate_synthetic, ingest_dataset, write_dataset, SyntheticSpec};

fn main() -> hardmine::Result<()> {
    let spec = SyntheticSpec::default();
    let synth = generate_synthetic(&spec)?;
    println!("spec: {}", serde_json::to_string(&spec)?);

    let path = std::env::temp_dir().join("hardmine-benchmark.jsonl");
    write_dataset(&synth.dataset, &path)?;
    let (reloaded, report) = ingest_dataset(&path)?;
    assert_eq!(reloaded, synth.dataset);
    println!("wrote {}", path.display());
    println!("{}", serde_json::to_string_pretty(&report)?);

    let first = &reloaded.samples()[0];
    println!(
        "first sample: {} camera {:?}, |x| = {:.2}",
        first.sample_id,
        first.camera_id,
        first.features.iter().map(|v| v * v).sum::<f64>().sqrt()
    );
    Ok(())
}
