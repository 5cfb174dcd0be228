use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::rnn::factorized::FactorizedKernel;
use crate::rnn::gru::{self, GruKernel, GruStep};
use crate::rnn::lstm::{self, LstmKernel, LstmStep};
use crate::rnn::{uniform_matrix, Architecture, CellKind, StateChoice};
use crate::tensor::{gemm, Matrix, Op, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Lstm(LstmKernel<T>),
    Gru(GruKernel<T>),
    Factorized(FactorizedKernel<T>),
}

impl<T: Scalar> Layer<T> {
    fn zeros(arch: &Architecture, layer: usize) -> Self {
        let input = arch.layer_input(layer);
        match arch.cell {
            CellKind::Lstm => Layer::Lstm(LstmKernel::zeros(input, arch.state)),
            CellKind::Gru => Layer::Gru(GruKernel::zeros(input, arch.state)),
            CellKind::Factorized => Layer::Factorized(FactorizedKernel::zeros(input, arch.state, arch.bases)),
        }
    }

    fn random(arch: &Architecture, layer: usize, rng: &mut ChaCha8Rng) -> Self {
        let input = arch.layer_input(layer);
        let scale = 1.0 / (arch.state as f64).sqrt();
        match arch.cell {
            CellKind::Lstm => Layer::Lstm(LstmKernel::random(input, arch.state, scale, rng)),
            CellKind::Gru => Layer::Gru(GruKernel::random(input, arch.state, scale, rng)),
            CellKind::Factorized => {
                Layer::Factorized(FactorizedKernel::random(input, arch.state, arch.bases, scale, rng))
            }
        }
    }

    /// Kernel weights and biases; for factorized layers only the base kernel.
    pub fn kernel_param_count(&self) -> usize {
        match self {
            Layer::Lstm(k) => k.param_count(),
            Layer::Gru(k) => k.param_count(),
            Layer::Factorized(k) => k.base.param_count(),
        }
    }

    fn push_tensors<'a>(&'a self, l: usize, out: &mut Vec<(String, &'a Matrix<T>)>) {
        match self {
            Layer::Lstm(k) => {
                out.push((format!("layer{l}.w"), &k.w));
                out.push((format!("layer{l}.b"), &k.b));
            }
            Layer::Gru(k) => {
                out.push((format!("layer{l}.w_zr"), &k.w_zr));
                out.push((format!("layer{l}.b_zr"), &k.b_zr));
                out.push((format!("layer{l}.w_c"), &k.w_c));
                out.push((format!("layer{l}.b_c"), &k.b_c));
            }
            Layer::Factorized(k) => {
                out.push((format!("layer{l}.w0"), &k.base.w));
                out.push((format!("layer{l}.b"), &k.base.b));
                out.push((format!("layer{l}.u"), &k.u));
                out.push((format!("layer{l}.v"), &k.v));
            }
        }
    }

    fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix<T>>) {
        match self {
            Layer::Lstm(k) => out.extend([&mut k.w, &mut k.b]),
            Layer::Gru(k) => out.extend([&mut k.w_zr, &mut k.b_zr, &mut k.w_c, &mut k.b_c]),
            Layer::Factorized(k) => out.extend([&mut k.base.w, &mut k.base.b, &mut k.u, &mut k.v]),
        }
    }

    fn cast<U: Scalar>(&self) -> Layer<U> {
        match self {
            Layer::Lstm(k) => Layer::Lstm(LstmKernel { w: k.w.cast(), b: k.b.cast() }),
            Layer::Gru(k) => {
                Layer::Gru(GruKernel { w_zr: k.w_zr.cast(), b_zr: k.b_zr.cast(), w_c: k.w_c.cast(), b_c: k.b_c.cast() })
            }
            Layer::Factorized(k) => Layer::Factorized(FactorizedKernel {
                base: LstmKernel { w: k.base.w.cast(), b: k.base.b.cast() },
                u: k.u.cast(),
                v: k.v.cast(),
            }),
        }
    }
}

/// Embedding, a homogeneous stack of recurrent layers and a projection onto
/// the symbol set: `logits_t = W_P · RNN(W_C · onehot(g_t)) + b_P`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharLM<T> {
    arch: Architecture,
    /// `[|V| × embed]`.
    pub embedding: Matrix<T>,
    pub layers: Vec<Layer<T>>,
    /// `[state × |V|]`.
    pub projection: Matrix<T>,
    /// `[1 × |V|]`.
    pub proj_bias: Matrix<T>,
    /// Basis weights for factorized kernels (`arch.bases` entries, shared by
    /// every layer). Not trained.
    pub lambda: Vec<T>,
}

/// Per-layer recurrent state for a batch of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState<T> {
    pub h: Vec<Matrix<T>>,
    /// LSTM cell states; kept at zero for GRUs.
    pub c: Vec<Matrix<T>>,
}

impl<T: Scalar> RecurrentState<T> {
    pub fn zeros(arch: &Architecture, rows: usize) -> Self {
        RecurrentState {
            h: (0..arch.layers).map(|_| Matrix::zeros(rows, arch.state)).collect(),
            c: (0..arch.layers).map(|_| Matrix::zeros(rows, arch.state)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.h.first().map_or(0, Matrix::rows)
    }
}

/// Dropout on the outputs a layer passes upward (never on the recurrent path).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Dropout {
    #[default]
    Off,
    Keep {
        prob: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForwardOptions {
    pub dropout: Dropout,
    /// Record this state for every layer and step.
    pub capture: Option<StateChoice>,
    /// Keep what `lm_backward` needs.
    pub keep_cache: bool,
}

impl ForwardOptions {
    pub fn training(dropout: Dropout) -> Self {
        ForwardOptions { dropout, capture: None, keep_cache: true }
    }
}

#[derive(Debug, Clone)]
enum StepCache<T> {
    Lstm(LstmStep<T>),
    Gru(GruStep<T>),
}

#[derive(Debug, Clone)]
struct ForwardCache<T> {
    ids: Vec<usize>,
    effective: Vec<Option<Matrix<T>>>,
    steps: Vec<Vec<StepCache<T>>>,
    masks: Vec<Vec<Option<Matrix<T>>>>,
    top: Matrix<T>,
}

/// Output of [`CharLM::lm_forward`]. Row `t * rows + r` of `logits` (and of
/// each captured state matrix) belongs to batch row `r` at step `t`.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub rows: usize,
    pub steps: usize,
    pub logits: Matrix<T>,
    pub states: Option<Vec<Matrix<T>>>,
    pub final_state: RecurrentState<T>,
    cache: Option<ForwardCache<T>>,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }
}

fn check_arch_len(name: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Shape(format!("{name}: expected {expected}, got {got}")));
    }
    Ok(())
}

impl<T: Scalar> CharLM<T> {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(CharLM {
            embedding: Matrix::zeros(arch.vocab, arch.embed),
            layers: (0..arch.layers).map(|l| Layer::zeros(&arch, l)).collect(),
            projection: Matrix::zeros(arch.state, arch.vocab),
            proj_bias: Matrix::zeros(1, arch.vocab),
            lambda: vec![T::ZERO; arch.bases],
            arch,
        })
    }

    /// Uniform `±1/√n` kernels and projection, `±1` embeddings.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding = uniform_matrix(arch.vocab, arch.embed, 1.0, &mut rng);
        let layers = (0..arch.layers).map(|l| Layer::random(&arch, l, &mut rng)).collect();
        let scale = 1.0 / (arch.state as f64).sqrt();
        let projection = uniform_matrix(arch.state, arch.vocab, scale, &mut rng);
        Ok(CharLM {
            embedding,
            layers,
            projection,
            proj_bias: Matrix::zeros(1, arch.vocab),
            lambda: vec![T::ZERO; arch.bases],
            arch,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn vocab(&self) -> usize {
        self.arch.vocab
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.zero_all();
        out
    }

    pub fn cast<U: Scalar>(&self) -> CharLM<U> {
        CharLM {
            arch: self.arch.clone(),
            embedding: self.embedding.cast(),
            layers: self.layers.iter().map(Layer::cast).collect(),
            projection: self.projection.cast(),
            proj_bias: self.proj_bias.cast(),
            lambda: self.lambda.iter().map(|x| U::from_f64(x.to_f64())).collect(),
        }
    }

    pub fn set_lambda(&mut self, lambda: Vec<T>) -> Result<()> {
        check_arch_len("λ length", lambda.len(), self.arch.bases)?;
        self.lambda = lambda;
        Ok(())
    }

    /// A copy running with a different λ (e.g. masked to a single basis).
    pub fn with_lambda(&self, lambda: Vec<T>) -> Result<Self> {
        let mut out = self.clone();
        out.set_lambda(lambda)?;
        Ok(out)
    }

    /// Kernel parameters of `layer` plus the embedding, the reference size
    /// for probe decoders.
    pub fn probe_param_floor(&self, layer: usize) -> usize {
        self.layers[layer].kernel_param_count() + self.embedding.len()
    }

    /// Checks tensor shapes against the architecture.
    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        a.validate()?;
        let reference = CharLM::<T>::zeros(a.clone())?;
        let mine = self.tensors();
        let theirs = reference.tensors();
        check_arch_len("tensor count", mine.len(), theirs.len())?;
        for ((name, m), (_, r)) in mine.iter().zip(&theirs) {
            if m.shape() != r.shape() {
                return Err(Error::Shape(format!("{name}: expected {:?}, got {:?}", r.shape(), m.shape())));
            }
        }
        check_arch_len("λ length", self.lambda.len(), a.bases)
    }

    fn gather_embeddings(&self, ids: &[usize], rows: usize, steps: usize, t: usize) -> Matrix<T> {
        let mut x = Matrix::zeros(rows, self.arch.embed);
        for r in 0..rows {
            x.row_mut(r).copy_from_slice(self.embedding.row(ids[r * steps + t]));
        }
        x
    }

    /// Runs `rows` sequences of `steps` symbols (`ids` row-major).
    pub fn lm_forward(
        &self,
        ids: &[usize],
        rows: usize,
        steps: usize,
        init: Option<&RecurrentState<T>>,
        opts: ForwardOptions,
    ) -> Result<ForwardPass<T>> {
        let arch = &self.arch;
        if ids.len() != rows * steps {
            return Err(Error::Shape(format!("{} ids for a {rows}x{steps} batch", ids.len())));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= arch.vocab) {
            return Err(Error::Usage(format!("symbol id {bad} out of range for {} symbols", arch.vocab)));
        }
        let mut state = match init {
            Some(s) => {
                if s.h.len() != arch.layers || s.rows() != rows {
                    return Err(Error::Shape("initial state does not match batch".into()));
                }
                s.clone()
            }
            None => RecurrentState::zeros(arch, rows),
        };
        let effective: Vec<Option<Matrix<T>>> = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Factorized(k) => k.materialize(&self.lambda).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<_>>()?;

        let (keep, mut rng) = match opts.dropout {
            Dropout::Keep { prob, seed } if prob < 1.0 => {
                if !(prob > 0.0) {
                    return Err(Error::Usage(format!("keep probability {prob} not in (0, 1]")));
                }
                (Some(prob), Some(ChaCha8Rng::seed_from_u64(seed)))
            }
            _ => (None, None),
        };

        let n = arch.state;
        let mut top = Matrix::zeros(rows * steps, n);
        let mut captured: Option<Vec<Matrix<T>>> =
            opts.capture.map(|_| (0..arch.layers).map(|_| Matrix::zeros(rows * steps, n)).collect());
        let mut caches: Vec<Vec<StepCache<T>>> = Vec::new();
        let mut masks: Vec<Vec<Option<Matrix<T>>>> = Vec::new();
        if opts.keep_cache {
            caches = (0..arch.layers).map(|_| Vec::with_capacity(steps)).collect();
            masks = (0..arch.layers).map(|_| Vec::with_capacity(steps)).collect();
        }

        for t in 0..steps {
            let mut x = self.gather_embeddings(ids, rows, steps, t);
            for (l, layer) in self.layers.iter().enumerate() {
                let (h, cache) = match layer {
                    Layer::Lstm(k) => {
                        let s = lstm::forward_batch(&k.w, &k.b, &x, &state.h[l], &state.c[l])?;
                        state.c[l] = s.c.clone();
                        (s.h.clone(), StepCache::Lstm(s))
                    }
                    Layer::Factorized(k) => {
                        let w = effective[l].as_ref().expect("materialized above");
                        let s = lstm::forward_batch(w, &k.base.b, &x, &state.h[l], &state.c[l])?;
                        state.c[l] = s.c.clone();
                        (s.h.clone(), StepCache::Lstm(s))
                    }
                    Layer::Gru(k) => {
                        let s = gru::forward_batch(k, &x, &state.h[l])?;
                        (s.h.clone(), StepCache::Gru(s))
                    }
                };
                if let (Some(cap), Some(choice)) = (captured.as_mut(), opts.capture) {
                    let src = match (&cache, choice) {
                        (StepCache::Lstm(s), StateChoice::Cell) => s.cell(),
                        _ => &h,
                    };
                    for r in 0..rows {
                        cap[l].row_mut(t * rows + r).copy_from_slice(src.row(r));
                    }
                }
                state.h[l] = h.clone();

                let mut out = h;
                let mask = match (keep, rng.as_mut()) {
                    (Some(p), Some(rng)) => {
                        let scale = T::from_f64(1.0 / p);
                        let m = Matrix::from_fn(rows, n, |_, _| if rng.random::<f64>() < p { scale } else { T::ZERO });
                        for (o, &mk) in out.data_mut().iter_mut().zip(m.data()) {
                            *o *= mk;
                        }
                        Some(m)
                    }
                    _ => None,
                };
                if opts.keep_cache {
                    caches[l].push(cache);
                    masks[l].push(mask);
                }
                x = out;
            }
            for r in 0..rows {
                top.row_mut(t * rows + r).copy_from_slice(x.row(r));
            }
        }

        let mut logits = Matrix::zeros(rows * steps, arch.vocab);
        gemm(T::ONE, &top, Op::N, &self.projection, Op::N, T::ZERO, &mut logits)?;
        logits.add_row_bias(&self.proj_bias)?;
        if !logits.is_finite() {
            return Err(Error::Numerical("language model logits".into()));
        }
        Ok(ForwardPass {
            rows,
            steps,
            logits,
            states: captured,
            final_state: state,
            cache: opts.keep_cache.then(|| ForwardCache { ids: ids.to_vec(), effective, steps: caches, masks, top }),
        })
    }

    /// Truncated BPTT through a cached forward pass. Returns gradients in a
    /// model-shaped container. Gradients w.r.t. the initial state are dropped.
    pub fn lm_backward(&self, pass: &ForwardPass<T>, dlogits: &Matrix<T>) -> Result<CharLM<T>> {
        let cache =
            pass.cache.as_ref().ok_or_else(|| Error::Usage("forward pass was run without keep_cache".into()))?;
        let (rows, steps) = (pass.rows, pass.steps);
        if dlogits.shape() != pass.logits.shape() {
            return Err(Error::Shape(format!("dlogits {:?} vs logits {:?}", dlogits.shape(), pass.logits.shape())));
        }
        let arch = &self.arch;
        let n = arch.state;
        let mut grad = self.zeros_like();

        gemm(T::ONE, &cache.top, Op::T, dlogits, Op::N, T::ONE, &mut grad.projection)?;
        dlogits.accumulate_column_sums(&mut grad.proj_bias);
        let mut d_above = Matrix::zeros(rows * steps, n);
        gemm(T::ONE, dlogits, Op::N, &self.projection, Op::T, T::ZERO, &mut d_above)?;

        for l in (0..arch.layers).rev() {
            let input = arch.layer_input(l);
            let mut d_below = Matrix::zeros(rows * steps, input);
            let mut dh_next = Matrix::zeros(rows, n);
            let mut dc_next = Matrix::zeros(rows, n);
            let mut dense_grad = match &self.layers[l] {
                Layer::Factorized(k) => Some(Matrix::zeros(k.base.w.rows(), k.base.w.cols())),
                _ => None,
            };
            for t in (0..steps).rev() {
                let mut dh = Matrix::zeros(rows, n);
                for r in 0..rows {
                    dh.row_mut(r).copy_from_slice(d_above.row(t * rows + r));
                }
                if let Some(mask) = &cache.masks[l][t] {
                    for (d, &m) in dh.data_mut().iter_mut().zip(mask.data()) {
                        *d *= m;
                    }
                }
                dh.axpy(T::ONE, &dh_next)?;
                let dx = match (&cache.steps[l][t], &self.layers[l], &mut grad.layers[l]) {
                    (StepCache::Lstm(s), Layer::Lstm(k), Layer::Lstm(g)) => {
                        let (dx, dhp, dcp) = lstm::backward_batch(&k.w, s, &dh, &dc_next, &mut g.w, &mut g.b)?;
                        dh_next = dhp;
                        dc_next = dcp;
                        dx
                    }
                    (StepCache::Lstm(s), Layer::Factorized(_), Layer::Factorized(g)) => {
                        let w = cache.effective[l].as_ref().expect("factorized layer");
                        let dw = dense_grad.as_mut().expect("factorized layer");
                        let (dx, dhp, dcp) = lstm::backward_batch(w, s, &dh, &dc_next, dw, &mut g.base.b)?;
                        dh_next = dhp;
                        dc_next = dcp;
                        dx
                    }
                    (StepCache::Gru(s), Layer::Gru(k), Layer::Gru(g)) => {
                        let (dx, dhp) = gru::backward_batch(k, s, &dh, g)?;
                        dh_next = dhp;
                        dx
                    }
                    _ => return Err(Error::Usage("cache does not match model".into())),
                };
                for r in 0..rows {
                    d_below.row_mut(t * rows + r).copy_from_slice(dx.row(r));
                }
            }
            if let (Layer::Factorized(k), Layer::Factorized(g), Some(dw)) =
                (&self.layers[l], &mut grad.layers[l], dense_grad.as_ref())
            {
                k.backprop_dense(&self.lambda, dw, g)?;
            }
            d_above = d_below;
        }

        for t in 0..steps {
            for r in 0..rows {
                let id = cache.ids[r * steps + t];
                let src = d_above.row(t * rows + r);
                for (g, &d) in grad.embedding.row_mut(id).iter_mut().zip(src) {
                    *g += d;
                }
            }
        }
        Ok(grad)
    }
}

impl<T: Scalar> Parameters<T> for CharLM<T> {
    fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (l, layer) in self.layers.iter().enumerate() {
            layer.push_tensors(l, &mut out);
        }
        out.push(("projection".into(), &self.projection));
        out.push(("projection_bias".into(), &self.proj_bias));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = vec![&mut self.embedding];
        for layer in self.layers.iter_mut() {
            layer.push_tensors_mut(&mut out);
        }
        out.push(&mut self.projection);
        out.push(&mut self.proj_bias);
        out
    }
}
