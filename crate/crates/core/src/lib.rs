//! Cellular mobility simulation and recurrent sequence prediction of
//! handover cells, dwell-times and serving beams.
//!
//! The pipeline runs [`radio`] deployments through the [`mobility`]
//! simulator, cuts the resulting traces into supervised windows with
//! [`dataset`], and fits the recurrent predictor in [`seq2seq`]. [`harness`]
//! wires these into experiment suites and the `mobseq` command.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mobility;
pub mod radio;
pub mod seq2seq;

pub use error::{Error, Result};
