pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod graph;
pub mod model;
pub mod optim;
pub mod params;
pub mod sentiment;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Activation, Graph, Var};
pub use params::{Gradients, ModelParams};
pub use tensor::{Precision, Tensor};
pub mod data;
