pub mod bregman;
pub mod error;
pub mod experiment;
pub mod lanczos;
pub mod linop;
pub mod pcg;
pub mod precond;
pub mod rng;
pub mod sketch;
pub mod testgen;

pub use error::{Error, Result};
