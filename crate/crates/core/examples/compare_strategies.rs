//! Learning curves of AHSM against the baselines over a few seeds.

use hardmine::experiment::compare_strategies;
use hardmine::ingest::{generate_synthetic, SyntheticSpec};
use hardmine::{ExperimentConfig, Strategy};

fn main() -> hardmine::Result<()> {
    let data = generate_synthetic(&SyntheticSpec::default())?.dataset;
    let config = ExperimentConfig {
        budget_fraction: 0.3,
        ..ExperimentConfig::default()
    };
    let table = compare_strategies(&data, &config, &Strategy::ALL, &[1, 2, 3])?;
    println!("{:>16} {:>4} {:>9} {:>15} {:>10}", "strategy", "iter", "labeled", "rank-1", "effort");
    for row in &table.rows {
        let r1 = row.rank1.map_or("n/a".to_string(), |m| format!("{:.3} ± {:.3}", m.mean, m.std));
        println!(
            "{:>16} {:>4} {:>9.3} {:>15} {:>10.4}",
            row.strategy.name(),
            row.iteration,
            row.labeled_fraction.mean,
            r1,
            row.comparisons.mean / row.naive_comparisons.mean.max(1.0)
        );
    }
    Ok(())
}
