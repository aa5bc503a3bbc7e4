pub mod bio;
pub mod candidates;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod kb;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod synthetic;
pub mod text;
pub mod type_selection;

pub use config::Config;
pub use error::{Error, Result};
