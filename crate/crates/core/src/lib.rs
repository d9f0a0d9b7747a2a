pub mod active;
pub mod bench;
pub mod bounds;
pub mod cluster;
pub mod design;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod par;
pub mod posterior;
pub mod region;
pub mod rng;
pub mod tree;

pub use error::{Error, Result};
