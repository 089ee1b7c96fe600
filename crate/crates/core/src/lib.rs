pub mod algebra;
pub mod cli;
pub mod error;
pub mod jordan;
pub mod probspec;
pub mod reduction;
pub mod solvers;

pub use error::{Error, Result};
