//! Cascading-failure simulation on DC power networks and interaction-model
//! prediction of link failures and load shedding.

pub mod cascade;
pub mod error;
pub mod grid;
pub mod influence;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod powerflow;

pub use error::{Error, ErrorBody, Result};
pub use matrix::Matrix;
