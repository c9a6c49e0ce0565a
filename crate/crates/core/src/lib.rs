pub mod cca;
pub mod distances;
pub mod error;
pub mod fcg;
pub mod inference;
pub mod linalg;
pub mod matrixio;
pub mod rng;
pub mod selection;
pub mod stats;
pub mod subcluster;
pub mod synth;

pub use error::{Error, Result};
