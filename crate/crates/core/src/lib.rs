pub mod analysis;
pub mod error;
pub mod http;
pub mod index;
pub mod ingest;
pub mod preprocess;
pub mod registry;
pub mod scaffold;
pub mod search;
pub mod service;

pub use error::{Error, Result};
