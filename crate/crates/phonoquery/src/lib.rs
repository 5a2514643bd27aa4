//! File formats, the hyperparameter grid runner and the elicitation service
//! built on [`phonoquery_core`].

pub mod error;
pub mod grid;
pub mod io;
pub mod server;
pub mod session;

pub use error::{Error, Result};
