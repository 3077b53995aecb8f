// Parameter checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beam;
pub mod config;
pub mod data_io;
pub mod detection;
pub mod error;
pub mod estimation;
pub mod gp;
pub mod kernels;
pub mod rng;
pub mod tuning;

pub use error::{Error, Result};
