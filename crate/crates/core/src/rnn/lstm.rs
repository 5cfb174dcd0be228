//! LSTM cell.
//!
//! The kernel `w` is `[4n × (input + n)]` and multiplies the concatenation
//! `[x; h_prev]`. Row blocks of `w` (and of `b`) are ordered `(f, i, o, I)`:
//! forget gate, input gate, output gate, projected input.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rnn::{concat_columns, uniform_matrix};
use crate::tensor::{gemm, sigmoid_scalar, Matrix, Op, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmKernel<T> {
    pub w: Matrix<T>,
    pub b: Matrix<T>,
}

impl<T: Scalar> LstmKernel<T> {
    pub fn zeros(input: usize, n: usize) -> Self {
        LstmKernel { w: Matrix::zeros(4 * n, input + n), b: Matrix::zeros(1, 4 * n) }
    }

    pub fn random(input: usize, n: usize, scale: f64, rng: &mut impl Rng) -> Self {
        LstmKernel { w: uniform_matrix(4 * n, input + n, scale, rng), b: uniform_matrix(1, 4 * n, scale, rng) }
    }

    pub fn state_size(&self) -> usize {
        self.w.rows() / 4
    }

    pub fn input_size(&self) -> usize {
        self.w.cols() - self.state_size()
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Everything one batched step needs to run backwards.
#[derive(Debug, Clone)]
pub struct LstmStep<T> {
    pub(crate) zin: Matrix<T>,
    /// Post-activation `(f, i, o, I)` blocks, `[B × 4n]`.
    pub(crate) gates: Matrix<T>,
    pub(crate) c_prev: Matrix<T>,
    pub(crate) c: Matrix<T>,
    pub(crate) tc: Matrix<T>,
    pub h: Matrix<T>,
}

impl<T: Scalar> LstmStep<T> {
    pub fn cell(&self) -> &Matrix<T> {
        &self.c
    }
}

/// One step for a batch of rows. `w` may be a materialized factorized kernel.
pub(crate) fn forward_batch<T: Scalar>(
    w: &Matrix<T>,
    b: &Matrix<T>,
    x: &Matrix<T>,
    h_prev: &Matrix<T>,
    c_prev: &Matrix<T>,
) -> Result<LstmStep<T>> {
    let n = w.rows() / 4;
    let rows = x.rows();
    let zin = concat_columns(x, h_prev)?;
    let mut gates = Matrix::zeros(rows, 4 * n);
    gemm(T::ONE, &zin, Op::N, w, Op::T, T::ZERO, &mut gates)?;
    gates.add_row_bias(b)?;

    let mut c = Matrix::zeros(rows, n);
    let mut tc = Matrix::zeros(rows, n);
    let mut h = Matrix::zeros(rows, n);
    for r in 0..rows {
        let g = gates.row_mut(r);
        for v in &mut g[..3 * n] {
            *v = sigmoid_scalar(*v);
        }
        for v in &mut g[3 * n..] {
            *v = v.tanh();
        }
        let (f, i, o, inp) = (&g[..n], &g[n..2 * n], &g[2 * n..3 * n], &g[3 * n..]);
        let cp = c_prev.row(r);
        let c_row = c.row_mut(r);
        for k in 0..n {
            c_row[k] = f[k] * cp[k] + i[k] * inp[k];
        }
        let tc_row = tc.row_mut(r);
        for k in 0..n {
            tc_row[k] = c_row[k].tanh();
        }
        let h_row = h.row_mut(r);
        for k in 0..n {
            h_row[k] = o[k] * tc_row[k];
        }
    }
    Ok(LstmStep { zin, gates, c_prev: c_prev.clone(), c, tc, h })
}

/// Backward through one step. Accumulates into `dw`/`db` and returns
/// `(dx, dh_prev, dc_prev)`.
pub(crate) fn backward_batch<T: Scalar>(
    w: &Matrix<T>,
    step: &LstmStep<T>,
    dh: &Matrix<T>,
    dc_next: &Matrix<T>,
    dw: &mut Matrix<T>,
    db: &mut Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    let n = w.rows() / 4;
    let rows = dh.rows();
    let input = w.cols() - n;
    let mut da = Matrix::zeros(rows, 4 * n);
    let mut dc_prev = Matrix::zeros(rows, n);
    for r in 0..rows {
        let g = step.gates.row(r);
        let (f, i, o, inp) = (&g[..n], &g[n..2 * n], &g[2 * n..3 * n], &g[3 * n..]);
        let tc = step.tc.row(r);
        let cp = step.c_prev.row(r);
        let dh_r = dh.row(r);
        let dcn = dc_next.row(r);
        let dcp = dc_prev.row_mut(r);
        let tmp = da.row_mut(r);
        for k in 0..n {
            let d_o = dh_r[k] * tc[k];
            let dc = dcn[k] + dh_r[k] * o[k] * (T::ONE - tc[k] * tc[k]);
            let df = dc * cp[k];
            let di = dc * inp[k];
            let dg = dc * i[k];
            dcp[k] = dc * f[k];
            tmp[k] = df * f[k] * (T::ONE - f[k]);
            tmp[n + k] = di * i[k] * (T::ONE - i[k]);
            tmp[2 * n + k] = d_o * o[k] * (T::ONE - o[k]);
            tmp[3 * n + k] = dg * (T::ONE - inp[k] * inp[k]);
        }
    }
    gemm(T::ONE, &da, Op::T, &step.zin, Op::N, T::ONE, dw)?;
    da.accumulate_column_sums(db);
    let mut dzin = Matrix::zeros(rows, input + n);
    gemm(T::ONE, &da, Op::N, w, Op::N, T::ZERO, &mut dzin)?;
    Ok((dzin.columns(0, input), dzin.columns(input, n), dc_prev))
}

/// Single-vector LSTM update: returns `(h, c)`.
pub fn lstm_step<T: Scalar>(kernel: &LstmKernel<T>, x: &[T], h_prev: &[T], c_prev: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let n = kernel.state_size();
    if x.len() != kernel.input_size() || h_prev.len() != n || c_prev.len() != n {
        return Err(Error::Shape(format!(
            "lstm_step expects x[{}], h[{n}], c[{n}]; got x[{}], h[{}], c[{}]",
            kernel.input_size(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    if !x.iter().chain(h_prev).chain(c_prev).all(|v| v.is_finite()) {
        return Err(Error::Numerical("lstm_step input".into()));
    }
    let step = forward_batch(
        &kernel.w,
        &kernel.b,
        &Matrix::row_vector(x),
        &Matrix::row_vector(h_prev),
        &Matrix::row_vector(c_prev),
    )?;
    if !step.h.is_finite() || !step.c.is_finite() {
        return Err(Error::Numerical("lstm_step output".into()));
    }
    Ok((step.h.into_vec(), step.c.into_vec()))
}
