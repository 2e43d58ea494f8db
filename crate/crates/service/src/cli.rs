//! Command-line front end.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};

use hardmine::annotation::{Annotator, SimulatedAnnotator};
use hardmine::experiment::{compare_strategies, CycleStart, Experiment, ExperimentReport};
use hardmine::ingest::{checkpoint_load, checkpoint_save, generate_synthetic, ingest_dataset, write_dataset, SyntheticSpec};
use hardmine::{Dataset, ExperimentConfig, RngStream, Strategy};

use crate::state::{ServiceOptions, ServiceState, DEFAULT_ASSIGNMENT_TIMEOUT};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hardmine::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "hardmine", version, about = "Active learning with hard-sample mining and identity recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment with the simulated annotator.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "ahsm", value_parser = parse_strategy)]
        strategy: Strategy,
        /// Experiment config JSON; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from `<out>/checkpoint.json` when it exists.
        #[arg(long)]
        resume: bool,
    },
    /// Run several strategies over several seeds and aggregate the curves.
    Compare {
        /// Defaults to the standard synthetic benchmark.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "ahsm,random", value_parser = parse_strategy)]
        strategies: Vec<Strategy>,
        /// `a..b` (inclusive) or a comma-separated list.
        #[arg(long, default_value = "1..10")]
        seeds: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; the CSV table goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic identity dataset as JSON Lines.
    GenSynth {
        /// Generator parameters; the standard benchmark when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a JSON Lines dataset and summarize it.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Serve the human annotation API.
    Serve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "ahsm", value_parser = parse_strategy)]
        strategy: Strategy,
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, default_value_t = DEFAULT_ASSIGNMENT_TIMEOUT.as_secs())]
        assignment_timeout_secs: u64,
        /// Saved after every retrain.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.trim().parse().map_err(|e: hardmine::Error| e.to_string())
}

/// Parses `a..b`, `a..=b` (both inclusive) or `a,b,c`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || CliError::Usage(format!("bad seed list `{s}`"));
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
    if let Some((a, b)) = s.split_once("..") {
        let (lo, hi) = (num(a)?, num(b.trim_start_matches('='))?);
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    let seeds = s.split(',').map(num).collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let config = match path {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let (dataset, _) = ingest_dataset(path).map_err(|e| match e {
        hardmine::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    })?;
    Ok(dataset)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            dataset,
            strategy,
            config,
            out,
            resume,
        } => {
            let ds = load_dataset(&dataset)?;
            let cfg = load_config(config.as_deref())?;
            let report = run_to_dir(&ds, &cfg, strategy, &out, resume)?;
            let last = report.records.last();
            println!(
                "{} iterations, terminated by {:?}; labeled fraction {:.3}, rank-1 {}; effort ratio {:.4}",
                report.records.len(),
                report.termination,
                last.map_or(0.0, |r| r.labeled_fraction),
                last.and_then(|r| r.metrics).map_or("n/a".into(), |m| format!("{:.4}", m.rank1)),
                report.final_ledger().effort_ratio(),
            );
            Ok(())
        }
        Command::Compare {
            dataset,
            strategies,
            seeds,
            config,
            out,
        } => {
            let ds = match dataset {
                Some(p) => load_dataset(&p)?,
                None => generate_synthetic(&SyntheticSpec::default())?.dataset,
            };
            let cfg = load_config(config.as_deref())?;
            let seeds = parse_seeds(&seeds)?;
            let table = compare_strategies(&ds, &cfg, &strategies, &seeds)?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                    write_json(&dir.join("comparison.json"), &table)?;
                    let csv = dir.join("comparison.csv");
                    fs::write(&csv, table.to_csv()).map_err(io_err(&csv))?;
                    println!("{} runs, {} rows written to {}", table.runs.len(), table.rows.len(), dir.display());
                }
                None => print!("{}", table.to_csv()),
            }
            Ok(())
        }
        Command::GenSynth { spec, out } => {
            let spec: SyntheticSpec = match spec {
                Some(p) => read_json(&p)?,
                None => SyntheticSpec::default(),
            };
            let synth = generate_synthetic(&spec)?;
            write_dataset(&synth.dataset, &out).map_err(|e| match e {
                hardmine::Error::Io(source) => CliError::Io { path: out.clone(), source },
                other => other.into(),
            })?;
            println!(
                "wrote {} samples ({} identities, dimension {}) to {}",
                synth.dataset.len(),
                spec.identities,
                spec.dimension,
                out.display()
            );
            Ok(())
        }
        Command::Validate { dataset } => match ingest_dataset(&dataset) {
            Ok((_, report)) => {
                println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
                Ok(())
            }
            Err(hardmine::Error::InvalidDataset(errors)) => {
                for e in &errors {
                    eprintln!("{}: {e}", dataset.display());
                }
                Err(CliError::Usage(format!("{} invalid line(s)", errors.len())))
            }
            Err(hardmine::Error::Io(source)) => Err(CliError::Io { path: dataset, source }),
            Err(e) => Err(e.into()),
        },
        Command::Serve {
            dataset,
            config,
            strategy,
            assets,
            bind,
            assignment_timeout_secs,
            checkpoint,
        } => {
            let ds = load_dataset(&dataset)?;
            let cfg = load_config(config.as_deref())?;
            let options = ServiceOptions {
                assignment_timeout: Duration::from_secs(assignment_timeout_secs),
                assets,
                checkpoint,
            };
            let state = ServiceState::new(&ds, cfg, strategy, options)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Usage(e.to_string()))?;
            runtime
                .block_on(crate::api::serve(state, bind))
                .map_err(|e| CliError::Usage(format!("serve on {bind}: {e}")))
        }
    }
}

/// Runs one experiment, writing into `out`:
///
/// - `report.json` and `curve.csv` once finished,
/// - `audit/iteration_NNN.json` with the selection audit of each batch,
/// - `timings.csv` with wall-clock seconds per iteration,
/// - `checkpoint.json` after every completed iteration.
pub fn run_to_dir(
    dataset: &Dataset,
    config: &ExperimentConfig,
    strategy: Strategy,
    out: &Path,
    resume: bool,
) -> Result<ExperimentReport> {
    let audit_dir = out.join("audit");
    fs::create_dir_all(&audit_dir).map_err(io_err(&audit_dir))?;
    let ckpt = out.join("checkpoint.json");
    let mut exp = if resume && ckpt.exists() {
        let state = checkpoint_load(&ckpt)?;
        if state.config() != config || state.strategy() != strategy {
            return Err(CliError::Usage(format!(
                "{} was written for a different config or strategy",
                ckpt.display()
            )));
        }
        Experiment::resume(dataset, state)?
    } else {
        Experiment::new(dataset, config.clone(), strategy)?
    };
    let timings_path = out.join("timings.csv");
    let fresh = !resume || !timings_path.exists();
    let mut timings = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&timings_path)
        .map_err(io_err(&timings_path))?;
    if fresh {
        writeln!(timings, "iteration,seconds").map_err(io_err(&timings_path))?;
    }
    let mut annotator = SimulatedAnnotator::from_config(config, RngStream::new(config.seed).substream("annotate"));
    loop {
        let started = Instant::now();
        let iteration = exp.state().records().len();
        let finished = match exp.begin_cycle()? {
            CycleStart::Finished(_) => true,
            CycleStart::Query(_) => {
                let open = exp.state().open_cycle().expect("open cycle after query");
                write_json(&audit_dir.join(format!("iteration_{iteration:03}.json")), &open.audit)?;
                annotator.begin_iteration(exp.state().rng(), iteration);
                exp.annotate_open_cycle(&mut annotator)?;
                exp.finish_cycle()?;
                checkpoint_save(exp.state(), &ckpt)?;
                false
            }
        };
        writeln!(timings, "{iteration},{:.6}", started.elapsed().as_secs_f64()).map_err(io_err(&timings_path))?;
        if finished {
            break;
        }
    }
    let report = exp.report()?;
    write_json(&out.join("report.json"), &report)?;
    let csv = out.join("curve.csv");
    let mut f = File::create(&csv).map_err(io_err(&csv))?;
    f.write_all(report.to_csv().as_bytes()).map_err(io_err(&csv))?;
    Ok(report)
}
