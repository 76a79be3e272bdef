pub mod basis;
pub mod conforming;
pub mod dg;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod solve;
pub mod subspaces;

pub use error::{Error, Result};
