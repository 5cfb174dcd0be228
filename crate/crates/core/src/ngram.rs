//! Count-based character n-gram model with add-k smoothing.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbols::{EncodedSegment, SymbolSet};
use crate::tensor::Matrix;
use crate::trace::StateTrace;

pub const DEFAULT_ADD_K: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ContextCounts {
    context: Vec<usize>,
    counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NgramRepr {
    order: usize,
    symbols: SymbolSet,
    add_k: f64,
    contexts: Vec<ContextCounts>,
}

/// Contexts are the previous `order - 1` ids, oldest first; positions before
/// the segment start hold the padding id `|V|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NgramRepr", try_from = "NgramRepr")]
pub struct NgramModel {
    order: usize,
    symbols: SymbolSet,
    add_k: f64,
    table: BTreeMap<Vec<usize>, (Vec<u64>, u64)>,
}

impl From<NgramModel> for NgramRepr {
    fn from(m: NgramModel) -> Self {
        NgramRepr {
            order: m.order,
            symbols: m.symbols,
            add_k: m.add_k,
            contexts: m.table.into_iter().map(|(context, (counts, _))| ContextCounts { context, counts }).collect(),
        }
    }
}

impl TryFrom<NgramRepr> for NgramModel {
    type Error = Error;

    fn try_from(r: NgramRepr) -> Result<Self> {
        let v = r.symbols.len();
        if r.order == 0 || !(r.add_k > 0.0) {
            return Err(Error::Parse(format!("n-gram order {} / add-k {} out of range", r.order, r.add_k)));
        }
        let mut table = BTreeMap::new();
        for c in r.contexts {
            if c.context.len() != r.order - 1 || c.context.iter().any(|&id| id > v) || c.counts.len() != v {
                return Err(Error::Parse("malformed n-gram context entry".into()));
            }
            let total = c.counts.iter().sum();
            table.insert(c.context, (c.counts, total));
        }
        Ok(NgramModel { order: r.order, symbols: r.symbols, add_k: r.add_k, table })
    }
}

impl NgramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn symbols(&self) -> &SymbolSet {
        &self.symbols
    }

    pub fn add_k(&self) -> f64 {
        self.add_k
    }

    pub fn pad_id(&self) -> usize {
        self.symbols.len()
    }

    pub fn context_count(&self) -> usize {
        self.table.len()
    }

    /// Context preceding position `t` of `ids`.
    pub fn context_at(&self, ids: &[usize], t: usize) -> Vec<usize> {
        let width = self.order - 1;
        (0..width)
            .map(|j| {
                let back = width - j;
                if t >= back {
                    ids[t - back]
                } else {
                    self.pad_id()
                }
            })
            .collect()
    }

    /// Smoothed `P(next | context)`; unseen contexts fall back to uniform.
    pub fn prob(&self, context: &[usize], next: usize) -> f64 {
        let v = self.symbols.len() as f64;
        match self.table.get(context) {
            Some((counts, total)) => (counts[next] as f64 + self.add_k) / (*total as f64 + self.add_k * v),
            None => 1.0 / v,
        }
    }

    /// Raw next-symbol counts for a context.
    pub fn counts(&self, context: &[usize]) -> Option<&[u64]> {
        self.table.get(context).map(|(c, _)| c.as_slice())
    }

    /// `exp(mean NLL)` over every symbol after the first of each segment.
    pub fn perplexity(&self, segments: &[EncodedSegment]) -> Result<f64> {
        let mut nll = 0.0;
        let mut count = 0usize;
        for seg in segments {
            let ids = seg.ids();
            for t in 1..ids.len() {
                nll -= self.prob(&self.context_at(ids, t), ids[t]).ln();
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptyData("perplexity needs a segment with at least two symbols".into()));
        }
        Ok((nll / count as f64).exp())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// Counts every in-segment prediction of a symbol from its `order - 1`
/// predecessors (padded at the segment start).
pub fn train_ngram(segments: &[EncodedSegment], symbols: &SymbolSet, order: usize, add_k: f64) -> Result<NgramModel> {
    if order == 0 {
        return Err(Error::Usage("n-gram order must be at least 1".into()));
    }
    if !(add_k > 0.0) {
        return Err(Error::Usage(format!("add-k must be positive, got {add_k}")));
    }
    let mut model = NgramModel { order, symbols: symbols.clone(), add_k, table: BTreeMap::new() };
    let v = symbols.len();
    let mut seen = 0usize;
    for seg in segments {
        let ids = seg.ids();
        for t in 1..ids.len() {
            let context = model.context_at(ids, t);
            let entry = model.table.entry(context).or_insert_with(|| (vec![0; v], 0));
            entry.0[ids[t]] += 1;
            entry.1 += 1;
            seen += 1;
        }
    }
    if seen == 0 {
        return Err(Error::EmptyData("no n-grams in the training split".into()));
    }
    Ok(model)
}

/// The context a model conditions on at every position, as concatenated
/// one-hot blocks (oldest first, padding all-zero).
///
/// Row `t` is the context used to predict `g_t`, so it contains
/// `g_{t-1} .. g_{t-order+1}`.
pub fn ngram_state_trace(model: &NgramModel, segments: &[EncodedSegment]) -> Result<StateTrace> {
    if model.order < 2 {
        return Err(Error::Usage("a unigram model has no state to trace".into()));
    }
    if segments.is_empty() {
        return Err(Error::EmptyData("no segments to trace".into()));
    }
    let v = model.symbols.len();
    let width = (model.order - 1) * v;
    let total: usize = segments.iter().map(EncodedSegment::len).sum();
    let mut states = Matrix::<f32>::zeros(total, width);
    let mut inputs = Vec::with_capacity(total);
    let mut offsets = vec![0];
    let mut row = 0;
    for seg in segments {
        let ids = seg.ids();
        for t in 0..ids.len() {
            let dst = states.row_mut(row);
            for (j, &id) in model.context_at(ids, t).iter().enumerate() {
                if id < v {
                    dst[j * v + id] = 1.0;
                }
            }
            inputs.push(ids[t]);
            row += 1;
        }
        offsets.push(row);
    }
    StateTrace::new(vec![states], inputs, offsets, format!("{}-gram context", model.order))
}
