use crate::error::{Error, Result};
use crate::exec;
use crate::rnn::{CharLM, ForwardOptions, ForwardPass, RecurrentState, StateChoice};
use crate::symbols::EncodedSegment;
use crate::tensor::{log_softmax_nll, Matrix, Scalar};
use crate::trace::StateTrace;

/// Segments evaluated together as one batch.
pub(crate) const EVAL_ROWS: usize = 32;
/// Steps per forward call; state is carried across calls.
pub(crate) const EVAL_WINDOW: usize = 256;

/// Groups of segment indices, longest segments first so padding stays small.
fn length_groups(segments: &[EncodedSegment]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(segments[i].len()));
    order.chunks(EVAL_ROWS).map(<[usize]>::to_vec).collect()
}

/// Runs one group of segments window by window from a zero state, calling
/// `visit(t0, steps, pass)` for each window.
fn run_group<T: Scalar>(
    model: &CharLM<T>,
    segments: &[&EncodedSegment],
    capture: Option<StateChoice>,
    mut visit: impl FnMut(usize, usize, &ForwardPass<T>),
) -> Result<()> {
    let rows = segments.len();
    let total = segments.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut state = RecurrentState::zeros(model.arch(), rows);
    let opts = ForwardOptions { capture, ..ForwardOptions::default() };
    let mut t0 = 0;
    while t0 < total {
        let steps = EVAL_WINDOW.min(total - t0);
        let mut ids = vec![0usize; rows * steps];
        for (r, seg) in segments.iter().enumerate() {
            for s in 0..steps {
                if let Some(&id) = seg.ids().get(t0 + s) {
                    ids[r * steps + s] = id;
                }
            }
        }
        let pass = model.lm_forward(&ids, rows, steps, Some(&state), opts)?;
        visit(t0, steps, &pass);
        state = pass.final_state;
        t0 += steps;
    }
    Ok(())
}

/// Character perplexity `exp(mean NLL)` over every in-segment next-symbol
/// prediction, dropout off.
pub fn perplexity<T: Scalar>(model: &CharLM<T>, segments: &[EncodedSegment]) -> Result<f64> {
    let groups = length_groups(segments);
    let partial = exec::map(groups, |group| -> Result<(f64, usize)> {
        let segs: Vec<&EncodedSegment> = group.iter().map(|&i| &segments[i]).collect();
        let mut nll = 0.0;
        let mut count = 0;
        run_group(model, &segs, None, |t0, steps, pass| {
            let rows = segs.len();
            for s in 0..steps {
                for (r, seg) in segs.iter().enumerate() {
                    // the logits at position t predict g_{t+1}
                    let t = t0 + s;
                    if t + 1 < seg.len() {
                        let target = seg.ids()[t + 1];
                        nll += log_softmax_nll(pass.logits.row(s * rows + r), target);
                        count += 1;
                    }
                }
            }
        })?;
        Ok((nll, count))
    });
    let mut nll = 0.0;
    let mut count = 0;
    for p in partial {
        let (n, c) = p?;
        nll += n;
        count += c;
    }
    if count == 0 {
        return Err(Error::EmptyData("perplexity needs a segment with at least two symbols".into()));
    }
    let ppl = (nll / count as f64).exp();
    if !ppl.is_finite() {
        return Err(Error::Numerical("perplexity overflowed".into()));
    }
    Ok(ppl)
}

/// Per-layer states for every symbol of every segment, each segment starting
/// from a zero state, dropout off.
pub fn extract_state_trace<T: Scalar>(
    model: &CharLM<T>,
    segments: &[EncodedSegment],
    choice: StateChoice,
) -> Result<StateTrace> {
    if segments.is_empty() {
        return Err(Error::EmptyData("no segments to trace".into()));
    }
    let layers = model.arch().layers;
    let n = model.arch().state;
    let mut offsets = Vec::with_capacity(segments.len() + 1);
    offsets.push(0);
    for s in segments {
        offsets.push(offsets.last().unwrap() + s.len());
    }
    let total = *offsets.last().unwrap();

    let groups = length_groups(segments);
    let per_group = exec::map(groups, |group| -> Result<Vec<(usize, Vec<Matrix<f32>>)>> {
        let segs: Vec<&EncodedSegment> = group.iter().map(|&i| &segments[i]).collect();
        let mut out: Vec<(usize, Vec<Matrix<f32>>)> = group
            .iter()
            .map(|&i| {
                let len = segments[i].len();
                (i, (0..layers).map(|_| Matrix::zeros(len, n)).collect())
            })
            .collect();
        run_group(model, &segs, Some(choice), |t0, steps, pass| {
            let rows = segs.len();
            let states = pass.states.as_ref().expect("capture requested");
            for (r, (_, mats)) in out.iter_mut().enumerate() {
                let len = segs[r].len();
                for s in 0..steps.min(len.saturating_sub(t0)) {
                    for (l, m) in mats.iter_mut().enumerate() {
                        let src = states[l].row(s * rows + r);
                        for (d, &v) in m.row_mut(t0 + s).iter_mut().zip(src) {
                            *d = v.to_f64() as f32;
                        }
                    }
                }
            }
        })?;
        Ok(out)
    });

    let mut layer_mats: Vec<Matrix<f32>> = (0..layers).map(|_| Matrix::zeros(total, n)).collect();
    for group in per_group {
        for (i, mats) in group? {
            let start = offsets[i];
            for (dst, src) in layer_mats.iter_mut().zip(&mats) {
                let w = src.cols();
                dst.data_mut()[start * w..(start + src.rows()) * w].copy_from_slice(src.data());
            }
        }
    }
    let inputs = segments.iter().flat_map(|s| s.ids().iter().copied()).collect();
    StateTrace::new(layer_mats, inputs, offsets, format!("{} {}", model.arch(), choice))
}
