pub mod bench;
pub mod chains;
pub mod config;
pub mod deconv;
pub mod error;
pub mod estimator;
pub mod noise;
pub mod special;
pub mod wavelet;

pub use error::{Error, Result};
