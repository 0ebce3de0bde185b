pub mod baseline;
pub mod bench;
pub mod codec;
pub mod error;
pub mod l1solver;
pub mod matgen;
pub mod phy;
pub mod prng;

pub use error::{Error, Result};
