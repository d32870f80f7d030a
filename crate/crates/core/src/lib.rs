//! Worst-case performance certificates for decentralized optimization
//! algorithms through performance estimation problems.

pub mod agent;
pub mod algorithm;
pub mod compact;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod function_class;
pub mod matrix_class;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod solver;

pub use error::{PepError, Result};
