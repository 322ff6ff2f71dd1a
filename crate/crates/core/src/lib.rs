//! Match-timing laboratory for ride-hailing and ride-pooling.

pub mod baselines;
pub mod domain;
pub mod env;
pub mod error;
pub mod matching;
pub mod metrics;
pub mod policy;
pub mod ppo;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
