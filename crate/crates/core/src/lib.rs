pub mod bench;
pub mod bnb;
pub mod conic;
pub mod dc;
pub mod distflow;
pub mod error;
pub mod scenario;
pub mod trust_region;
pub mod v2g;

pub use error::{Error, Result};
