//! GRU cell.
//!
//! ```text
//! z  = σ(W_z [x; h_prev] + b_z)          update gate
//! r  = σ(W_r [x; h_prev] + b_r)          reset gate
//! h~ = tanh(W_c [x; r ⊙ h_prev] + b_c)   candidate
//! h  = z ⊙ h_prev + (1 - z) ⊙ h~
//! ```
//! `w_zr` stacks the update rows above the reset rows.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rnn::{concat_columns, uniform_matrix};
use crate::tensor::{gemm, sigmoid_scalar, Matrix, Op, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct GruKernel<T> {
    pub w_zr: Matrix<T>,
    pub b_zr: Matrix<T>,
    pub w_c: Matrix<T>,
    pub b_c: Matrix<T>,
}

impl<T: Scalar> GruKernel<T> {
    pub fn zeros(input: usize, n: usize) -> Self {
        GruKernel {
            w_zr: Matrix::zeros(2 * n, input + n),
            b_zr: Matrix::zeros(1, 2 * n),
            w_c: Matrix::zeros(n, input + n),
            b_c: Matrix::zeros(1, n),
        }
    }

    pub fn random(input: usize, n: usize, scale: f64, rng: &mut impl Rng) -> Self {
        GruKernel {
            w_zr: uniform_matrix(2 * n, input + n, scale, rng),
            b_zr: uniform_matrix(1, 2 * n, scale, rng),
            w_c: uniform_matrix(n, input + n, scale, rng),
            b_c: uniform_matrix(1, n, scale, rng),
        }
    }

    pub fn state_size(&self) -> usize {
        self.w_c.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_c.cols() - self.state_size()
    }

    pub fn param_count(&self) -> usize {
        self.w_zr.len() + self.b_zr.len() + self.w_c.len() + self.b_c.len()
    }
}

#[derive(Debug, Clone)]
pub struct GruStep<T> {
    pub(crate) zin: Matrix<T>,
    pub(crate) zin_c: Matrix<T>,
    /// Post-activation `(z, r)`, `[B × 2n]`.
    pub(crate) zr: Matrix<T>,
    pub(crate) cand: Matrix<T>,
    pub(crate) h_prev: Matrix<T>,
    pub h: Matrix<T>,
}

pub(crate) fn forward_batch<T: Scalar>(k: &GruKernel<T>, x: &Matrix<T>, h_prev: &Matrix<T>) -> Result<GruStep<T>> {
    let n = k.state_size();
    let input = x.cols();
    let rows = x.rows();
    let zin = concat_columns(x, h_prev)?;
    let mut zr = Matrix::zeros(rows, 2 * n);
    gemm(T::ONE, &zin, Op::N, &k.w_zr, Op::T, T::ZERO, &mut zr)?;
    zr.add_row_bias(&k.b_zr)?;
    zr.data_mut().iter_mut().for_each(|v| *v = sigmoid_scalar(*v));

    let mut zin_c = zin.clone();
    for r in 0..rows {
        let reset = &zr.row(r)[n..];
        let hp = h_prev.row(r);
        let dst = &mut zin_c.row_mut(r)[input..];
        for j in 0..n {
            dst[j] = reset[j] * hp[j];
        }
    }
    let mut cand = Matrix::zeros(rows, n);
    gemm(T::ONE, &zin_c, Op::N, &k.w_c, Op::T, T::ZERO, &mut cand)?;
    cand.add_row_bias(&k.b_c)?;
    cand.data_mut().iter_mut().for_each(|v| *v = v.tanh());

    let mut h = Matrix::zeros(rows, n);
    for r in 0..rows {
        let z = &zr.row(r)[..n];
        let (hp, c) = (h_prev.row(r), cand.row(r));
        let out = h.row_mut(r);
        for j in 0..n {
            out[j] = z[j] * hp[j] + (T::ONE - z[j]) * c[j];
        }
    }
    Ok(GruStep { zin, zin_c, zr, cand, h_prev: h_prev.clone(), h })
}

/// Backward through one step; gradients accumulate into `grad`.
/// Returns `(dx, dh_prev)`.
pub(crate) fn backward_batch<T: Scalar>(
    k: &GruKernel<T>,
    step: &GruStep<T>,
    dh: &Matrix<T>,
    grad: &mut GruKernel<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let n = k.state_size();
    let input = k.input_size();
    let rows = dh.rows();

    let mut da_c = Matrix::zeros(rows, n);
    let mut dh_prev = Matrix::zeros(rows, n);
    let mut da_zr = Matrix::zeros(rows, 2 * n);
    for r in 0..rows {
        let z = &step.zr.row(r)[..n];
        let (hp, c, d) = (step.h_prev.row(r), step.cand.row(r), dh.row(r));
        let dac = da_c.row_mut(r);
        let dhp = dh_prev.row_mut(r);
        let dz = &mut da_zr.row_mut(r)[..n];
        for j in 0..n {
            dz[j] = d[j] * (hp[j] - c[j]) * z[j] * (T::ONE - z[j]);
            dac[j] = d[j] * (T::ONE - z[j]) * (T::ONE - c[j] * c[j]);
            dhp[j] = d[j] * z[j];
        }
    }
    gemm(T::ONE, &da_c, Op::T, &step.zin_c, Op::N, T::ONE, &mut grad.w_c)?;
    da_c.accumulate_column_sums(&mut grad.b_c);
    let mut dzin_c = Matrix::zeros(rows, input + n);
    gemm(T::ONE, &da_c, Op::N, &k.w_c, Op::N, T::ZERO, &mut dzin_c)?;

    for r in 0..rows {
        let reset = &step.zr.row(r)[n..];
        let hp = step.h_prev.row(r);
        let drh = &dzin_c.row(r)[input..];
        let dhp = dh_prev.row_mut(r);
        for j in 0..n {
            dhp[j] += drh[j] * reset[j];
        }
        let dr = &mut da_zr.row_mut(r)[n..];
        for j in 0..n {
            dr[j] = drh[j] * hp[j] * reset[j] * (T::ONE - reset[j]);
        }
    }
    gemm(T::ONE, &da_zr, Op::T, &step.zin, Op::N, T::ONE, &mut grad.w_zr)?;
    da_zr.accumulate_column_sums(&mut grad.b_zr);
    let mut dzin = Matrix::zeros(rows, input + n);
    gemm(T::ONE, &da_zr, Op::N, &k.w_zr, Op::N, T::ZERO, &mut dzin)?;

    let mut dx = dzin.columns(0, input);
    dx.axpy(T::ONE, &dzin_c.columns(0, input))?;
    dh_prev.axpy(T::ONE, &dzin.columns(input, n))?;
    Ok((dx, dh_prev))
}

/// Single-vector GRU update.
pub fn gru_step<T: Scalar>(kernel: &GruKernel<T>, x: &[T], h_prev: &[T]) -> Result<Vec<T>> {
    let n = kernel.state_size();
    if x.len() != kernel.input_size() || h_prev.len() != n {
        return Err(Error::Shape(format!(
            "gru_step expects x[{}], h[{n}]; got x[{}], h[{}]",
            kernel.input_size(),
            x.len(),
            h_prev.len()
        )));
    }
    if !x.iter().chain(h_prev).all(|v| v.is_finite()) {
        return Err(Error::Numerical("gru_step input".into()));
    }
    let step = forward_batch(kernel, &Matrix::row_vector(x), &Matrix::row_vector(h_prev))?;
    if !step.h.is_finite() {
        return Err(Error::Numerical("gru_step output".into()));
    }
    Ok(step.h.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, sample_coords};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_kernel_interpolates_halfway_to_zero() {
        let k = GruKernel::<f64>::zeros(1, 1);
        assert_eq!(gru_step(&k, &[0.0], &[1.0]).unwrap(), vec![0.5]);
        assert_eq!(gru_step(&k, &[0.0], &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let k = GruKernel::<f64>::zeros(2, 1);
        assert!(matches!(gru_step(&k, &[0.0], &[1.0]), Err(Error::Shape(_))));
        assert!(matches!(gru_step(&k, &[0.0, f64::INFINITY], &[1.0]), Err(Error::Numerical(_))));
    }

    #[test]
    fn reset_gate_applies_before_candidate_transform() {
        // Candidate weights only read h_prev; a strongly closed reset gate
        // must hide h_prev from the candidate.
        let mut k = GruKernel::<f64>::zeros(1, 1);
        k.w_c.set(0, 1, 5.0);
        k.b_zr.set(0, 1, -40.0); // reset ≈ 0
        k.b_zr.set(0, 0, -40.0); // update ≈ 0, so h ≈ candidate
        let h = gru_step(&k, &[0.0], &[1.0]).unwrap();
        assert!(h[0].abs() < 1e-12, "{h:?}");
    }

    #[test]
    fn one_step_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (input, n, rows) = (3, 4, 3);
        let k = GruKernel::<f64>::random(input, n, 0.8, &mut rng);
        let x = uniform_matrix::<f64>(rows, input, 1.0, &mut rng);
        let h0 = uniform_matrix::<f64>(rows, n, 1.0, &mut rng);
        let weights = uniform_matrix::<f64>(rows, n, 1.0, &mut rng);

        let flat = |k: &GruKernel<f64>| -> Vec<f64> {
            [&k.w_zr, &k.b_zr, &k.w_c, &k.b_c].iter().flat_map(|m| m.data().to_vec()).collect()
        };
        let unflat = |p: &[f64]| -> GruKernel<f64> {
            let mut out = GruKernel::zeros(input, n);
            let mut off = 0;
            for m in [&mut out.w_zr, &mut out.b_zr, &mut out.w_c, &mut out.b_c] {
                let len = m.len();
                m.data_mut().copy_from_slice(&p[off..off + len]);
                off += len;
            }
            out
        };
        let loss = |p: &[f64]| {
            let s = forward_batch(&unflat(p), &x, &h0).unwrap();
            s.h.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum::<f64>()
        };

        let step = forward_batch(&k, &x, &h0).unwrap();
        let mut grad = GruKernel::zeros(input, n);
        let (dx, dh0) = backward_batch(&k, &step, &weights, &mut grad).unwrap();
        let sizes = [k.w_zr.len(), k.b_zr.len(), k.w_c.len(), k.b_c.len()];
        let report = grad_check(loss, &flat(&k), &flat(&grad), &sample_coords(&sizes, 64, 3), 1e-5, 1e-4);
        assert!(report.passed(), "{report:?}");

        // input and state gradients
        let loss_xh = |p: &[f64]| {
            let xm = Matrix::from_vec(rows, input, p[..rows * input].to_vec()).unwrap();
            let hm = Matrix::from_vec(rows, n, p[rows * input..].to_vec()).unwrap();
            let s = forward_batch(&k, &xm, &hm).unwrap();
            s.h.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let params: Vec<f64> = x.data().iter().chain(h0.data()).copied().collect();
        let analytic: Vec<f64> = dx.data().iter().chain(dh0.data()).copied().collect();
        let coords: Vec<usize> = (0..params.len()).collect();
        let report = grad_check(loss_xh, &params, &analytic, &coords, 1e-5, 1e-4);
        assert!(report.passed(), "{report:?}");
    }
}
