//! Back-prediction probes: from a frozen state at time `t`, recover the
//! input symbol `g_{t-δ}`.

mod decoder;
mod manifest;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::tensor::Matrix;
use crate::trace::StateTrace;

pub use decoder::{
    decoder_param_count, evaluate_decoder, select_best, size_decoder, sweep_dropout, train_decoder, Decoder,
    DecoderConfig, DecoderEval, DecoderTrainConfig, SweepResult, SweepRow, TrainedDecoder, KEEP_GRID,
};
pub use manifest::ProbeManifest;

/// Pairs drawn from one trace: the state at row `rows[i]` is labelled with
/// `targets[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSplit<'a> {
    pub states: &'a Matrix<f32>,
    pub rows: Vec<usize>,
    pub targets: Vec<usize>,
}

impl<'a> ProbeSplit<'a> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// State vectors of the listed pairs.
    pub fn gather(&self, pairs: &[usize]) -> Matrix<f32> {
        let w = self.states.cols();
        let mut out = Matrix::zeros(pairs.len(), w);
        for (dst, &p) in pairs.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.states.row(self.rows[p]));
        }
        out
    }

    /// Keeps at most `max` pairs, chosen with `seed`, in their original order.
    pub fn subsample(&self, max: usize, seed: u64) -> ProbeSplit<'a> {
        if self.len() <= max {
            return self.clone();
        }
        let mut keep = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), self.len(), max).into_vec();
        keep.sort_unstable();
        ProbeSplit {
            states: self.states,
            rows: keep.iter().map(|&i| self.rows[i]).collect(),
            targets: keep.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}

/// One (δ, layer) probing problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset<'a> {
    pub delta: usize,
    pub layer: usize,
    pub vocab: usize,
    pub train: ProbeSplit<'a>,
    pub eval: ProbeSplit<'a>,
}

impl ProbeDataset<'_> {
    pub fn width(&self) -> usize {
        self.train.states.cols()
    }
}

/// Every in-segment pair `(state_t, g_{t-δ})` of one trace layer.
pub fn probe_pairs(trace: &StateTrace, delta: usize, layer: usize) -> Result<ProbeSplit<'_>> {
    if delta == 0 {
        return Err(Error::Usage("delta must be at least 1".into()));
    }
    if layer >= trace.layer_count() {
        return Err(Error::Usage(format!("layer {layer} requested from a {}-layer trace", trace.layer_count())));
    }
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for s in 0..trace.segment_count() {
        let seg = trace.segment(s);
        for t in seg.start + delta..seg.end {
            rows.push(t);
            targets.push(trace.inputs[t - delta]);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset { delta, max_len: trace.max_segment_len() });
    }
    Ok(ProbeSplit { states: &trace.layers[layer], rows, targets })
}

pub fn build_probe_dataset<'a>(
    train: &'a StateTrace,
    eval: &'a StateTrace,
    delta: usize,
    layer: usize,
    vocab: usize,
) -> Result<ProbeDataset<'a>> {
    let train_split = probe_pairs(train, delta, layer)?;
    let eval_split = probe_pairs(eval, delta, layer)?;
    if train.width(layer) != eval.width(layer) {
        return Err(Error::Shape("train and eval traces have different widths".into()));
    }
    if let Some(&bad) = train_split.targets.iter().chain(&eval_split.targets).find(|&&t| t >= vocab) {
        return Err(Error::Shape(format!("symbol id {bad} outside a {vocab}-symbol set")));
    }
    Ok(ProbeDataset { delta, layer, vocab, train: train_split, eval: eval_split })
}

/// Which decoders a probe run trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePlan {
    pub max_delta: usize,
    pub layers: Vec<usize>,
    pub depth: usize,
    /// Decoder parameter floor per probed layer.
    pub floors: Vec<usize>,
    pub min_width: usize,
    pub grid: Vec<f64>,
    pub train: DecoderTrainConfig,
}

/// Outcome of the sweep for one (δ, layer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub delta: usize,
    pub layer: usize,
    pub width: usize,
    pub depth: usize,
    pub param_count: usize,
    pub floor: usize,
    pub best_keep: f64,
    pub table: Vec<SweepRow>,
    pub eval: DecoderEval,
}

/// Trains every (δ, layer, keep) decoder as an independent job and merges
/// the sweeps by (δ, layer).
pub fn run_probe(train: &StateTrace, eval: &StateTrace, vocab: usize, plan: &ProbePlan) -> Result<Vec<ProbeResult>> {
    if plan.max_delta == 0 || plan.layers.is_empty() {
        return Err(Error::Usage("probe needs max delta ≥ 1 and at least one layer".into()));
    }
    if plan.floors.len() != plan.layers.len() {
        return Err(Error::Usage("one parameter floor per probed layer".into()));
    }
    let mut datasets = Vec::new();
    for (li, &layer) in plan.layers.iter().enumerate() {
        for delta in 1..=plan.max_delta {
            let full = build_probe_dataset(train, eval, delta, layer, vocab)?;
            let seed = plan.train.seed.wrapping_add((delta * 1000 + layer) as u64);
            let ds = ProbeDataset {
                train: full.train.subsample(plan.train.max_train_pairs, seed),
                eval: full.eval.subsample(plan.train.max_eval_pairs, seed ^ 1),
                ..full
            };
            let mut config =
                DecoderConfig::sized(ds.width(), vocab, plan.floors[li], plan.depth, plan.min_width, plan.train);
            config.grid = plan.grid.clone();
            config.validate()?;
            datasets.push((ds, config));
        }
    }
    let jobs: Vec<(usize, f64)> = (0..datasets.len()).flat_map(|d| plan.grid.iter().map(move |&k| (d, k))).collect();
    let trained = exec::map(jobs, |(d, keep)| {
        let (ds, config) = &datasets[d];
        train_decoder(ds, config, keep)
    });
    let mut trained = trained.into_iter();
    let mut results = Vec::with_capacity(datasets.len());
    for (ds, config) in &datasets {
        let candidates = trained.by_ref().take(plan.grid.len()).collect::<Result<Vec<_>>>()?;
        let sweep = select_best(candidates)?;
        results.push(ProbeResult {
            delta: ds.delta,
            layer: ds.layer,
            width: config.width,
            depth: config.depth,
            param_count: decoder_param_count(ds.width(), config.width, config.depth, vocab),
            floor: config.floor,
            best_keep: sweep.best.keep,
            table: sweep.table,
            eval: sweep.best.eval,
        });
    }
    Ok(results)
}
