//! Character-level recurrent language models.

mod eval;
pub mod factorized;
pub mod gru;
pub mod lstm;
mod model;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Scalar};

pub use eval::{extract_state_trace, perplexity};
pub use factorized::{effective_kernel, EffectiveKernel, FactorizedKernel};
pub use gru::{gru_step, GruKernel};
pub use lstm::{lstm_step, LstmKernel};
pub use model::{CharLM, Dropout, ForwardOptions, ForwardPass, Layer, RecurrentState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
    /// LSTM whose kernel is a base matrix plus λ-weighted rank-one bases.
    Factorized,
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
            CellKind::Factorized => "factorized",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            "factorized" => Ok(CellKind::Factorized),
            other => Err(Error::Usage(format!("unknown cell kind {other:?}"))),
        }
    }
}

/// Which recurrent vector a trace records.
///
/// GRUs have a single state, so both choices yield `h` for them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateChoice {
    /// LSTM `c_t`.
    Cell,
    /// `h_t`.
    Output,
}

impl StateChoice {
    pub fn default_for(cell: CellKind) -> Self {
        match cell {
            CellKind::Gru => StateChoice::Output,
            _ => StateChoice::Cell,
        }
    }
}

impl fmt::Display for StateChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateChoice::Cell => "cell",
            StateChoice::Output => "output",
        })
    }
}

impl FromStr for StateChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cell" => Ok(StateChoice::Cell),
            "output" => Ok(StateChoice::Output),
            other => Err(Error::Usage(format!("unknown state choice {other:?}"))),
        }
    }
}

/// Model shape. Displays in the `cell[layers,state]` notation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub cell: CellKind,
    pub layers: usize,
    pub state: usize,
    pub embed: usize,
    pub vocab: usize,
    /// Number of rank-one bases; zero unless `cell` is factorized.
    #[serde(default)]
    pub bases: usize,
}

impl Architecture {
    /// Embedding width equals the state size; factorized kernels get
    /// one basis per bigram.
    pub fn new(cell: CellKind, layers: usize, state: usize, vocab: usize) -> Self {
        Architecture {
            cell,
            layers,
            state,
            embed: state,
            vocab,
            bases: if cell == CellKind::Factorized { vocab * vocab } else { 0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.state == 0 || self.embed == 0 || self.vocab == 0 {
            return Err(Error::Usage(format!("degenerate architecture {self}")));
        }
        if (self.cell == CellKind::Factorized) != (self.bases > 0) {
            return Err(Error::Usage(format!("{} bases is inconsistent with a {} kernel", self.bases, self.cell)));
        }
        Ok(())
    }

    pub fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed
        } else {
            self.state
        }
    }

    /// `[layers,state]`.
    pub fn shape_label(&self) -> String {
        format!("[{},{}]", self.layers, self.state)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.cell, self.shape_label())
    }
}

/// Parses the `layers,state` shape notation, e.g. `4,320` or `[4,320]`.
pub fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    let mut parts = inner.split(',').map(str::trim);
    let parse = |p: Option<&str>| -> Result<usize> {
        p.and_then(|v| v.parse().ok())
            .filter(|&v: &usize| v > 0)
            .ok_or_else(|| Error::Usage(format!("shape must look like LAYERS,STATE, got {s:?}")))
    };
    let layers = parse(parts.next())?;
    let state = parse(parts.next())?;
    if parts.next().is_some() {
        return Err(Error::Usage(format!("shape must look like LAYERS,STATE, got {s:?}")));
    }
    Ok((layers, state))
}

pub(crate) fn uniform_matrix<T: Scalar>(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| T::from_f64(if scale > 0.0 { rng.random_range(-scale..scale) } else { 0.0 }))
}

/// `[a | b]` for matrices with the same row count.
pub(crate) fn concat_columns<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows() != b.rows() {
        return Err(Error::Shape(format!("cannot concatenate {:?} and {:?}", a.shape(), b.shape())));
    }
    let mut out = Matrix::zeros(a.rows(), a.cols() + b.cols());
    for r in 0..a.rows() {
        let row = out.row_mut(r);
        row[..a.cols()].copy_from_slice(a.row(r));
        row[a.cols()..].copy_from_slice(b.row(r));
    }
    Ok(out)
}
