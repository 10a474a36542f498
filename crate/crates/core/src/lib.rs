pub mod cli;
pub mod corpus;
pub mod dp;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod topics;

pub use error::{Error, Result};
