//! HTTP annotation service and command-line front end for `hardmine`.
//!
//! The service drives one experiment with human annotators: sessions pull
//! queued samples with ranked identity recommendations, post labels, and the
//! model retrains once the batch is drained.

pub mod api;
pub mod cli;
pub mod error;
pub mod state;

pub use api::{router, serve};
pub use error::ApiError;
pub use state::{ServiceOptions, ServiceState};
