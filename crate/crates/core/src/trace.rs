use std::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Recurrent state vectors aligned with the symbols that produced them.
///
/// Row `t` of every layer matrix belongs to `inputs[t]`. For language models
/// it is the state after consuming that symbol; for n-gram traces it is the
/// context from which that symbol is predicted. Segment `i` occupies rows
/// `offsets[i]..offsets[i + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrace {
    pub layers: Vec<Matrix<f32>>,
    pub inputs: Vec<usize>,
    pub offsets: Vec<usize>,
    /// Free-form description of what produced the trace.
    pub source: String,
}

impl StateTrace {
    pub fn new(
        layers: Vec<Matrix<f32>>,
        inputs: Vec<usize>,
        offsets: Vec<usize>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let trace = StateTrace { layers, inputs, offsets, source: source.into() };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("trace has no layers".into()));
        }
        let n = self.inputs.len();
        if self.offsets.first() != Some(&0)
            || self.offsets.last() != Some(&n)
            || self.offsets.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::Shape(format!("segment offsets do not cover {n} steps")));
        }
        for (l, m) in self.layers.iter().enumerate() {
            if m.rows() != n {
                return Err(Error::Shape(format!("layer {l} has {} rows for {n} steps", m.rows())));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self, layer: usize) -> usize {
        self.layers[layer].cols()
    }

    pub fn segment_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn segment(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn max_segment_len(&self) -> usize {
        self.offsets.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_must_cover_inputs() {
        let layer = Matrix::zeros(3, 2);
        assert!(StateTrace::new(vec![layer.clone()], vec![0, 1, 2], vec![0, 1, 3], "t").is_ok());
        assert!(StateTrace::new(vec![layer.clone()], vec![0, 1, 2], vec![0, 2], "t").is_err());
        assert!(StateTrace::new(vec![layer], vec![0, 1], vec![0, 2], "t").is_err());
    }
}
