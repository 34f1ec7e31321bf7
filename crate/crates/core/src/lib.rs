//! Knowledge tracing with learned sparse binary auxiliary concepts.

pub mod bkt;
pub mod cli;
pub mod data;
pub mod dkt;
pub mod error;
pub mod eval;
pub mod recommend;
pub mod sbrkt;
pub mod seed;
pub mod simenv;
pub mod tensor;

pub use error::{Error, Result};
