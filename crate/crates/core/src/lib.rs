pub mod alias;
pub mod auxiliary;
pub mod cheb;
pub mod continuous;
pub mod diagnostics;
pub mod discrete;
pub mod error;
pub mod experiment;
pub mod factor_graph;
pub mod mh;
pub mod models;
pub mod poisson;
pub mod rng;
pub mod sampler;
pub mod step;

pub use error::{Error, Result};
