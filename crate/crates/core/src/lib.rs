//! Zero-sum Dynkin games on one-dimensional diffusions.

pub mod error;
pub mod expr;
pub mod model;
pub mod sets;
pub mod associated;
pub mod fd;
pub mod solver;
pub mod config;
pub mod corpus;
pub mod strategy;
pub mod calibration;
pub mod sim;
pub mod verifier;
pub mod io;

pub use error::{Error, Result};
