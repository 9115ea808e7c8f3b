//! HTTP service and command-line front end over the custom-token library.
//!
//! State lives in a file store under one root directory (see [`store`]);
//! long training runs are jobs on worker threads, everything else answers
//! synchronously.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod plot;
pub mod schema;
pub mod service;
pub mod store;
pub mod types;

pub use config::StudioConfig;
pub use error::{ApiError, ApiResult};
pub use service::Studio;
