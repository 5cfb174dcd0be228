//! Character-level recurrent language models, back-prediction probes over
//! their frozen states, and the memory signatures compiled from those probes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod ngram;
pub mod params;
pub mod probe;
pub mod rnn;
pub mod signature;
pub mod symbols;
pub mod synthetic;
pub mod tensor;
pub mod trace;
pub mod train;

pub use error::{Error, ErrorCategory, Result};
