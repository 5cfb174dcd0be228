//! Checkpoint container.
//!
//! ```text
//! "MSIG" | u32 LE version | u64 LE header length | JSON header | f32 LE payload
//! ```
//! The header lists every tensor with its shape and element offset into the
//! payload. Tensors are written in model order, then the Adam moments, then
//! λ for factorized models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::rnn::{Architecture, CharLM};
use crate::symbols::SymbolSet;
use crate::tensor::Matrix;
use crate::train::{Adam, AdamConfig, EpochRecord};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MSIG";
const PREFIX_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub symbols: SymbolSet,
    pub model: CharLM<f32>,
    pub optimizer: Adam<CharLM<f32>>,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizerHeader {
    config: AdamConfig,
    step: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    symbols: SymbolSet,
    architecture: Architecture,
    tensors: Vec<TensorEntry>,
    optimizer: OptimizerHeader,
    history: Vec<EpochRecord>,
}

fn manifest(model: &CharLM<f32>) -> Vec<TensorEntry> {
    let mut out = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, shape: (usize, usize)| {
        out.push(TensorEntry { name, shape: [shape.0, shape.1], offset });
        offset += shape.0 * shape.1;
    };
    let tensors = model.tensors();
    for prefix in ["", "adam.m.", "adam.v."] {
        for (name, m) in &tensors {
            push(format!("{prefix}{name}"), m.shape());
        }
    }
    if !model.lambda.is_empty() {
        push("lambda".into(), (1, model.lambda.len()));
    }
    out
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            symbols: self.symbols.clone(),
            architecture: self.model.arch().clone(),
            tensors: manifest(&self.model),
            optimizer: OptimizerHeader { config: self.optimizer.config, step: self.optimizer.step },
            history: self.history.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(format!("cannot encode header: {e}")))?;
        let mut out = Vec::with_capacity(PREFIX_LEN + json.len() + 4 * 3 * self.model.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for source in [&self.model, &self.optimizer.m, &self.optimizer.v] {
            for (_, m) in source.tensors() {
                for x in m.data() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        for x in &self.model.lambda {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREFIX_LEN {
            return Err(Error::Checkpoint(format!("file is {} bytes, too short for a checkpoint", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("missing MSIG magic bytes".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let payload_start = PREFIX_LEN
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[PREFIX_LEN..payload_start])
            .map_err(|e| Error::Checkpoint(format!("malformed header: {e}")))?;
        if header.symbols.len() != header.architecture.vocab {
            return Err(Error::Checkpoint(format!(
                "{} symbols for a {}-symbol model",
                header.symbols.len(),
                header.architecture.vocab
            )));
        }
        let mut model = CharLM::<f32>::zeros(header.architecture.clone())
            .map_err(|e| Error::Checkpoint(format!("bad architecture: {e}")))?;
        let expected = manifest(&model);
        if header.tensors != expected {
            return Err(Error::Checkpoint(format!("tensor manifest does not match a {} model", header.architecture)));
        }
        let total: usize = expected.iter().map(|t| t.shape[0] * t.shape[1]).sum();
        let payload = &bytes[payload_start..];
        if payload.len() != 4 * total {
            return Err(Error::Checkpoint(format!(
                "payload is {} bytes, expected {} (truncated or corrupt)",
                payload.len(),
                4 * total
            )));
        }
        let mut values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let mut fill = |m: &mut Matrix<f32>| {
            for x in m.data_mut() {
                *x = values.next().expect("length checked");
            }
        };
        let mut m = model.clone();
        let mut v = model.clone();
        for target in [&mut model, &mut m, &mut v] {
            for t in target.tensors_mut() {
                fill(t);
            }
        }
        let mut lambda = Matrix::zeros(1, model.lambda.len());
        fill(&mut lambda);
        model.lambda = lambda.into_vec();
        m.lambda = model.lambda.clone();
        v.lambda = model.lambda.clone();
        if !model.all_finite() || model.lambda.iter().any(|x| !x.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter values".into()));
        }
        Ok(Checkpoint {
            symbols: header.symbols,
            model,
            optimizer: Adam { config: header.optimizer.config, step: header.optimizer.step, m, v },
            history: header.history,
        })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = checkpoint.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::{perplexity, CellKind};

    fn sample(cell: CellKind) -> Checkpoint {
        let symbols = SymbolSet::default();
        let mut model = CharLM::<f32>::new(Architecture::new(cell, 2, 5, symbols.len()), 8).unwrap();
        if cell == CellKind::Factorized {
            let b = model.arch().bases;
            model.set_lambda((0..b).map(|i| i as f32 / b as f32).collect()).unwrap();
        }
        let mut optimizer = Adam::new(AdamConfig::default(), &model);
        optimizer.step = 7;
        optimizer.m.embedding.set(0, 0, 0.25);
        Checkpoint {
            symbols,
            model,
            optimizer,
            history: vec![EpochRecord { epoch: 0, train_loss: None, dev_perplexity: 31.0, stage: 0 }],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for cell in [CellKind::Lstm, CellKind::Gru, CellKind::Factorized] {
            let ckpt = sample(cell);
            let back = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
            assert_eq!(back, ckpt);
            let data = vec![ckpt.symbols.encode_text("round trip text").unwrap()];
            assert_eq!(
                perplexity(&ckpt.model, &data).unwrap().to_bits(),
                perplexity(&back.model, &data).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = sample(CellKind::Lstm).to_bytes().unwrap();
        for cut in [3, 15, 40, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Checkpoint(_))));
        }
    }

    #[test]
    fn wrong_version_names_both_versions() {
        let mut bytes = sample(CellKind::Gru).to_bytes().unwrap();
        bytes[4] = 9;
        match Checkpoint::from_bytes(&bytes) {
            Err(Error::Checkpoint(msg)) => {
                assert!(msg.contains('9') && msg.contains('1'), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ckpt = sample(CellKind::Lstm);
        save_checkpoint(&ckpt, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
        assert!(matches!(load_checkpoint(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
