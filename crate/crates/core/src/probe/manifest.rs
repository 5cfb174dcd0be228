//! Probe job manifest: `key = value` lines, `#` comments.
//!
//! ```text
//! checkpoint = runs/lstm-1-160.ckpt
//! corpus = data/shakespeare-1mb.txt
//! max_delta = 8
//! layers = all
//! state_choice = cell
//! depth = 2
//! grid = 0.5,0.6,0.7,0.8,0.9,1.0
//! seed = 1
//! ```
//! Exactly one of `checkpoint` and `ngram` names the probed model.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::probe::KEEP_GRID;
use crate::rnn::StateChoice;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeManifest {
    pub checkpoint: Option<PathBuf>,
    pub ngram: Option<PathBuf>,
    pub corpus: PathBuf,
    pub max_delta: usize,
    /// Numbered from 1; `None` probes every layer.
    pub layers: Option<Vec<usize>>,
    /// `None` uses the default for the cell type.
    pub state_choice: Option<StateChoice>,
    pub depth: usize,
    pub grid: Vec<f64>,
    pub seed: u64,
}

impl ProbeManifest {
    pub fn new(corpus: PathBuf) -> Self {
        ProbeManifest {
            checkpoint: None,
            ngram: None,
            corpus,
            max_delta: 8,
            layers: None,
            state_choice: None,
            depth: 2,
            grid: KEEP_GRID.to_vec(),
            seed: 1,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = ProbeManifest::new(PathBuf::new());
        let mut corpus = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", n + 1)))?;
            let bad = |what: &str| Error::Parse(format!("line {}: invalid {what} {value:?}", n + 1));
            match key {
                "checkpoint" => m.checkpoint = Some(PathBuf::from(value)),
                "ngram" => m.ngram = Some(PathBuf::from(value)),
                "corpus" => corpus = Some(PathBuf::from(value)),
                "max_delta" => m.max_delta = value.parse().map_err(|_| bad("max_delta"))?,
                "layers" => {
                    m.layers = if value == "all" {
                        None
                    } else {
                        Some(
                            value
                                .split(',')
                                .map(|v| v.trim().parse())
                                .collect::<std::result::Result<_, _>>()
                                .map_err(|_| bad("layer list"))?,
                        )
                    }
                }
                "state_choice" => m.state_choice = Some(value.parse().map_err(|_| bad("state choice"))?),
                "depth" => m.depth = value.parse().map_err(|_| bad("depth"))?,
                "grid" => {
                    m.grid = value
                        .split(',')
                        .map(|v| v.trim().parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("grid"))?
                }
                "seed" => m.seed = value.parse().map_err(|_| bad("seed"))?,
                other => return Err(Error::Parse(format!("line {}: unknown key {other:?}", n + 1))),
            }
        }
        m.corpus = corpus.ok_or_else(|| Error::Parse("manifest has no corpus".into()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.checkpoint.is_some() == self.ngram.is_some() {
            return Err(Error::Usage("exactly one of checkpoint and ngram is required".into()));
        }
        if self.max_delta == 0 || self.depth == 0 {
            return Err(Error::Usage("max_delta and depth must be at least 1".into()));
        }
        if self.layers.as_ref().is_some_and(|ls| ls.is_empty() || ls.contains(&0)) {
            return Err(Error::Usage("layers are numbered from 1".into()));
        }
        if self.grid.is_empty() || self.grid.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Usage(format!("keep grid {:?} must lie in (0, 1]", self.grid)));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.checkpoint {
            writeln!(out, "checkpoint = {}", p.display()).unwrap();
        }
        if let Some(p) = &self.ngram {
            writeln!(out, "ngram = {}", p.display()).unwrap();
        }
        writeln!(out, "corpus = {}", self.corpus.display()).unwrap();
        writeln!(out, "max_delta = {}", self.max_delta).unwrap();
        match &self.layers {
            None => writeln!(out, "layers = all").unwrap(),
            Some(ls) => {
                let list: Vec<String> = ls.iter().map(ToString::to_string).collect();
                writeln!(out, "layers = {}", list.join(",")).unwrap();
            }
        }
        if let Some(c) = self.state_choice {
            writeln!(out, "state_choice = {c}").unwrap();
        }
        writeln!(out, "depth = {}", self.depth).unwrap();
        let grid: Vec<String> = self.grid.iter().map(|g| format!("{g:?}")).collect();
        writeln!(out, "grid = {}", grid.join(",")).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        out
    }
}
