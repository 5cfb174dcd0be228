//! Feed-forward back-prediction decoders.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::probe::{ProbeDataset, ProbeSplit};
use crate::rnn::uniform_matrix;
use crate::tensor::{cross_entropy, gemm, Matrix, Op, Scalar};
use crate::train::{Adam, AdamConfig};

/// The keep-probability grid swept for every decoder.
pub const KEEP_GRID: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Parameters of a decoder with `depth` hidden layers of `width` units.
pub fn decoder_param_count(input: usize, width: usize, depth: usize, vocab: usize) -> usize {
    if depth == 0 {
        return input * vocab + vocab;
    }
    input * width + width + (depth - 1) * (width * width + width) + width * vocab + vocab
}

/// Smallest hidden width whose decoder has at least `floor` parameters.
pub fn size_decoder(input: usize, vocab: usize, floor: usize, depth: usize) -> usize {
    assert!(depth >= 1, "decoders have at least one hidden layer");
    if decoder_param_count(input, 1, depth, vocab) >= floor {
        return 1;
    }
    let mut hi = 2;
    while decoder_param_count(input, hi, depth, vocab) < floor {
        hi *= 2;
    }
    let mut lo = hi / 2;
    // count(lo) < floor <= count(hi)
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if decoder_param_count(input, mid, depth, vocab) >= floor {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderTrainConfig {
    pub adam: AdamConfig,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Training pairs kept per dataset (deterministic subsample).
    pub max_train_pairs: usize,
    pub max_eval_pairs: usize,
}

impl Default for DecoderTrainConfig {
    fn default() -> Self {
        DecoderTrainConfig {
            adam: AdamConfig::default(),
            batch: 64,
            max_epochs: 30,
            patience: 3,
            seed: 1,
            max_train_pairs: 20_000,
            max_eval_pairs: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub depth: usize,
    pub width: usize,
    /// Parameter count the decoder had to reach.
    pub floor: usize,
    pub grid: Vec<f64>,
    pub train: DecoderTrainConfig,
}

impl DecoderConfig {
    /// Sizes the hidden layers against `floor`, never narrower than `min_width`.
    pub fn sized(
        input: usize,
        vocab: usize,
        floor: usize,
        depth: usize,
        min_width: usize,
        train: DecoderTrainConfig,
    ) -> Self {
        DecoderConfig {
            depth,
            width: size_decoder(input, vocab, floor, depth).max(min_width),
            floor,
            grid: KEEP_GRID.to_vec(),
            train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 {
            return Err(Error::Usage("decoder depth and width must be positive".into()));
        }
        if self.grid.is_empty() || self.grid.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Usage(format!("keep grid {:?} must lie in (0, 1]", self.grid)));
        }
        let t = &self.train;
        if t.batch == 0 || t.patience == 0 || t.max_train_pairs == 0 || t.max_eval_pairs == 0 {
            return Err(Error::Usage("decoder batch, patience and pair caps must be positive".into()));
        }
        Ok(())
    }
}

/// Fully-connected ReLU network. Inputs are standardized with statistics
/// fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T> {
    /// `[in × out]` per layer; the last layer produces logits.
    pub weights: Vec<Matrix<T>>,
    pub biases: Vec<Matrix<T>>,
    pub shift: Vec<T>,
    pub scale: Vec<T>,
}

struct DecoderCache<T> {
    /// Input of every layer (post-activation, post-dropout).
    inputs: Vec<Matrix<T>>,
    /// Dropout multipliers applied to each layer input.
    masks: Vec<Option<Matrix<T>>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Matrix<T>>,
}

impl<T: Scalar> Decoder<T> {
    pub fn new(input: usize, width: usize, depth: usize, vocab: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(width, depth));
        dims.push(vocab);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let limit = (6.0 / w[0] as f64).sqrt();
            weights.push(uniform_matrix(w[0], w[1], limit, &mut rng));
            biases.push(Matrix::zeros(1, w[1]));
        }
        Decoder { weights, biases, shift: vec![T::ZERO; input], scale: vec![T::ONE; input] }
    }

    pub fn input_width(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn vocab(&self) -> usize {
        self.weights.last().expect("at least one layer").cols()
    }

    /// Sets the standardization to the mean and spread of `x`'s columns.
    pub fn fit_standardization(&mut self, x: &Matrix<f32>) {
        let n = x.rows().max(1) as f64;
        for c in 0..x.cols() {
            let mean = (0..x.rows()).map(|r| x.get(r, c) as f64).sum::<f64>() / n;
            let var = (0..x.rows()).map(|r| (x.get(r, c) as f64 - mean).powi(2)).sum::<f64>() / n;
            self.shift[c] = T::from_f64(mean);
            self.scale[c] = T::from_f64(if var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 });
        }
    }

    fn standardize(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, &s), &k) in out.row_mut(r).iter_mut().zip(&self.shift).zip(&self.scale) {
                *v = (*v - s) * k;
            }
        }
        out
    }

    fn run(&self, x: &Matrix<T>, keep: f64, rng: Option<&mut ChaCha8Rng>) -> Result<(Matrix<T>, DecoderCache<T>)> {
        if x.cols() != self.input_width() {
            return Err(Error::Shape(format!("decoder expects {} inputs, got {}", self.input_width(), x.cols())));
        }
        let mut rng = rng;
        let n_layers = self.weights.len();
        let mut cache = DecoderCache {
            inputs: Vec::with_capacity(n_layers),
            masks: Vec::with_capacity(n_layers),
            pre: Vec::with_capacity(n_layers),
        };
        let mut h = self.standardize(x);
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mask =
                match rng.as_deref_mut() {
                    Some(rng) if keep < 1.0 => {
                        let scale = T::from_f64(1.0 / keep);
                        let m = Matrix::from_fn(h.rows(), h.cols(), |_, _| {
                            if rng.random::<f64>() < keep {
                                scale
                            } else {
                                T::ZERO
                            }
                        });
                        for (v, &k) in h.data_mut().iter_mut().zip(m.data()) {
                            *v *= k;
                        }
                        Some(m)
                    }
                    _ => None,
                };
            let mut z = Matrix::zeros(h.rows(), w.cols());
            gemm(T::ONE, &h, Op::N, w, Op::N, T::ZERO, &mut z)?;
            z.add_row_bias(b)?;
            cache.inputs.push(h);
            cache.masks.push(mask);
            if l + 1 < n_layers {
                let act = z.map(|v| if v > T::ZERO { v } else { T::ZERO });
                cache.pre.push(z);
                h = act;
            } else {
                h = z;
            }
        }
        Ok((h, cache))
    }

    /// Logits with dropout off.
    pub fn logits(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.run(x, 1.0, None)?.0)
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }

    /// Mean cross-entropy of one minibatch and its gradient.
    pub fn loss_and_grad(
        &self,
        x: &Matrix<T>,
        targets: &[usize],
        keep: f64,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Decoder<T>)> {
        let (logits, cache) = self.run(x, keep, rng)?;
        let mask = vec![true; targets.len()];
        let (loss, mut d) = cross_entropy(&logits, targets, &mask)?;
        let mut grad = self.clone();
        grad.zero_all();
        for l in (0..self.weights.len()).rev() {
            gemm(T::ONE, &cache.inputs[l], Op::T, &d, Op::N, T::ZERO, &mut grad.weights[l])?;
            grad.biases[l].fill(T::ZERO);
            d.accumulate_column_sums(&mut grad.biases[l]);
            if l == 0 {
                break;
            }
            let mut dh = Matrix::zeros(d.rows(), self.weights[l].rows());
            gemm(T::ONE, &d, Op::N, &self.weights[l], Op::T, T::ZERO, &mut dh)?;
            if let Some(m) = &cache.masks[l] {
                for (g, &k) in dh.data_mut().iter_mut().zip(m.data()) {
                    *g *= k;
                }
            }
            for (g, &z) in dh.data_mut().iter_mut().zip(cache.pre[l - 1].data()) {
                if z <= T::ZERO {
                    *g = T::ZERO;
                }
            }
            d = dh;
        }
        Ok((loss, grad))
    }
}

impl<T: Scalar> Parameters<T> for Decoder<T> {
    fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = Vec::new();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("dense{l}.w"), w));
            out.push((format!("dense{l}.b"), b));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-symbol recall of one decoder on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderEval {
    /// `None` where the symbol never occurs as a target.
    pub accuracy: Vec<Option<f64>>,
    pub support: Vec<u64>,
    pub correct: Vec<u64>,
    /// `confusion[target][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

impl DecoderEval {
    pub fn from_predictions(vocab: usize, targets: &[usize], predicted: &[usize]) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::EmptyData("no evaluation pairs".into()));
        }
        let mut confusion = vec![vec![0u64; vocab]; vocab];
        for (&t, &p) in targets.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let support: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        let correct: Vec<u64> = (0..vocab).map(|v| confusion[v][v]).collect();
        let accuracy = support.iter().zip(&correct).map(|(&s, &c)| (s > 0).then(|| c as f64 / s as f64)).collect();
        Ok(DecoderEval { accuracy, support, correct, confusion })
    }

    /// Pooled accuracy over all pairs.
    pub fn overall(&self) -> f64 {
        let total: u64 = self.support.iter().sum();
        self.correct.iter().sum::<u64>() as f64 / total.max(1) as f64
    }
}

pub fn evaluate_decoder(decoder: &Decoder<f32>, split: &ProbeSplit<'_>) -> Result<DecoderEval> {
    if split.is_empty() {
        return Err(Error::EmptyData("no evaluation pairs".into()));
    }
    let mut predicted = Vec::with_capacity(split.len());
    let idx: Vec<usize> = (0..split.len()).collect();
    for chunk in idx.chunks(1024) {
        predicted.extend(decoder.predict(&split.gather(chunk))?);
    }
    DecoderEval::from_predictions(decoder.vocab(), &split.targets, &predicted)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedDecoder {
    pub decoder: Decoder<f32>,
    pub keep: f64,
    pub eval: DecoderEval,
    pub epochs: usize,
}

/// Trains one decoder with dropout `keep` and early stopping on eval accuracy.
pub fn train_decoder(dataset: &ProbeDataset<'_>, config: &DecoderConfig, keep: f64) -> Result<TrainedDecoder> {
    config.validate()?;
    if dataset.train.is_empty() || dataset.eval.is_empty() {
        return Err(Error::EmptyData(format!(
            "probe dataset for delta {} layer {} has an empty partition",
            dataset.delta, dataset.layer
        )));
    }
    let t = &config.train;
    let mut decoder = Decoder::<f32>::new(dataset.width(), config.width, config.depth, dataset.vocab, t.seed);
    let sample: Vec<usize> = (0..dataset.train.len().min(4096)).collect();
    decoder.fit_standardization(&dataset.train.gather(&sample));
    let mut adam = Adam::new(t.adam, &decoder);
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed ^ 0xdec0_de00);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();

    let mut best =
        TrainedDecoder { eval: evaluate_decoder(&decoder, &dataset.eval)?, decoder: decoder.clone(), keep, epochs: 0 };
    let mut stale = 0;
    for epoch in 1..=t.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(t.batch) {
            let x = dataset.train.gather(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| dataset.train.targets[i]).collect();
            let (loss, grad) = decoder.loss_and_grad(&x, &y, keep, Some(&mut rng))?;
            if !loss.is_finite() || !grad.all_finite() {
                return Err(Error::Diverged { epoch, last_good: None });
            }
            adam.update(&mut decoder, &grad);
        }
        let eval = evaluate_decoder(&decoder, &dataset.eval)?;
        if eval.overall() > best.eval.overall() {
            best = TrainedDecoder { decoder: decoder.clone(), keep, eval, epochs: epoch };
            stale = 0;
        } else {
            stale += 1;
            if stale >= t.patience {
                break;
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub keep: f64,
    pub accuracy: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best: TrainedDecoder,
    pub table: Vec<SweepRow>,
}

/// Picks the best of several trained decoders; ties go to the higher keep
/// probability.
pub fn select_best(candidates: Vec<TrainedDecoder>) -> Result<SweepResult> {
    let table: Vec<SweepRow> =
        candidates.iter().map(|c| SweepRow { keep: c.keep, accuracy: c.eval.overall(), epochs: c.epochs }).collect();
    let best = candidates
        .into_iter()
        .reduce(|a, b| {
            let (aa, ba) = (a.eval.overall(), b.eval.overall());
            if ba > aa || (ba == aa && b.keep > a.keep) {
                b
            } else {
                a
            }
        })
        .ok_or_else(|| Error::Usage("empty keep-probability grid".into()))?;
    Ok(SweepResult { best, table })
}

/// Trains one decoder per grid point, all from the same seed.
pub fn sweep_dropout(dataset: &ProbeDataset<'_>, config: &DecoderConfig) -> Result<SweepResult> {
    let trained = crate::exec::map(config.grid.clone(), |keep| train_decoder(dataset, config, keep));
    select_best(trained.into_iter().collect::<Result<Vec<_>>>()?)
}
