//! Drives the human-annotation service state the way two console clients
//! would: pull recommendations, post labels, and watch the model retrain once
//! the batch is drained. Pass `--serve` to expose the same state over HTTP on
//! 127.0.0.1:8080 instead.

use std::sync::Mutex;
use std::time::Instant;

use hardmine::ingest::{generate_synthetic, SyntheticSpec};
use hardmine::{ExperimentConfig, Strategy};
use hardmine_service::state::{retrain, LabelRequest, LabelTarget};
use hardmine_service::{ServiceOptions, ServiceState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_synthetic(&SyntheticSpec {
        identities: 30,
        samples_per_identity: 10,
        ..SyntheticSpec::default()
    })?
    .dataset;
    let state = ServiceState::new(&data, ExperimentConfig::default(), Strategy::Ahsm, ServiceOptions::default())?;

    if std::env::args().any(|a| a == "--serve") {
        let runtime = tokio::runtime::Runtime::new()?;
        runtime.block_on(hardmine_service::serve(state, "127.0.0.1:8080".parse()?))?;
        return Ok(());
    }

    let shared = Mutex::new(state);
    let status = shared.lock().unwrap().status();
    println!("{}", serde_json::to_string(&status)?);
    let sessions = {
        let mut st = shared.lock().unwrap();
        [st.open_session().session_id, st.open_session().session_id]
    };
    'outer: loop {
        for sid in &sessions {
            let next = shared.lock().unwrap().next(sid, None, Instant::now())?;
            let Some(rec) = next.recommendation else {
                break 'outer;
            };
            // Always accept the top candidate, or open a new identity.
            let req = LabelRequest {
                sample_id: rec.sample.sample_id.clone(),
                identity_id: rec
                    .candidates
                    .first()
                    .map_or(LabelTarget::New, |c| LabelTarget::Identity(c.identity_id.clone())),
                round: 1,
                position: Some(1),
                model_version: Some(next.model_version),
                action_id: None,
            };
            let ack = shared.lock().unwrap().label(sid, &req, Instant::now())?;
            println!(
                "{sid} labeled {} as {} after {} comparison(s)",
                ack.sample_id, ack.identity_id, ack.comparisons
            );
            if ack.batch_complete {
                retrain(&shared)?;
                break 'outer;
            }
        }
    }
    let st = shared.lock().unwrap();
    println!("{}", serde_json::to_string(&st.status())?);
    println!("{}", serde_json::to_string(&st.ledger())?);
    Ok(())
}
