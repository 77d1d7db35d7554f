pub mod autograd;
pub mod basis;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod seed;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
