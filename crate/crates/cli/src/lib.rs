//! Command-line experiment harness over the tail-probability estimators:
//! config schemas, experiment drivers, and CSV artifact writing.

pub mod config;
pub mod csvout;
pub mod experiments;
