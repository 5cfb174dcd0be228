//! LSTM kernel expressed as a base matrix plus λ-weighted rank-one bases:
//! `W = W₀ + Σᵢ λᵢ uᵢ vᵢᵀ`.
//!
//! `u` holds the `uᵢ` as columns (`[4n × B]`) and `v` holds the `vᵢ` as rows
//! (`[B × (input + n)]`), so the correction is `U · diag(λ) · V`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rnn::lstm::LstmKernel;
use crate::rnn::uniform_matrix;
use crate::tensor::{gemm, Matrix, Op, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedKernel<T> {
    pub base: LstmKernel<T>,
    pub u: Matrix<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> FactorizedKernel<T> {
    pub fn zeros(input: usize, n: usize, bases: usize) -> Self {
        FactorizedKernel {
            base: LstmKernel::zeros(input, n),
            u: Matrix::zeros(4 * n, bases),
            v: Matrix::zeros(bases, input + n),
        }
    }

    pub fn random(input: usize, n: usize, bases: usize, scale: f64, rng: &mut impl Rng) -> Self {
        FactorizedKernel {
            base: LstmKernel::random(input, n, scale, rng),
            u: uniform_matrix(4 * n, bases, scale, rng),
            v: uniform_matrix(bases, input + n, scale, rng),
        }
    }

    pub fn bases(&self) -> usize {
        self.u.cols()
    }

    pub fn state_size(&self) -> usize {
        self.base.state_size()
    }

    pub fn input_size(&self) -> usize {
        self.base.input_size()
    }

    fn check_lambda(&self, lambda: &[T]) -> Result<()> {
        if lambda.len() != self.bases() {
            return Err(Error::Shape(format!(
                "λ has {} entries but the kernel has {} bases",
                lambda.len(),
                self.bases()
            )));
        }
        Ok(())
    }

    /// Dense `W₀ + U diag(λ) V`.
    pub fn materialize(&self, lambda: &[T]) -> Result<Matrix<T>> {
        self.check_lambda(lambda)?;
        let mut w = self.base.w.clone();
        if lambda.iter().all(|&l| l == T::ZERO) {
            return Ok(w);
        }
        let mut scaled_v = self.v.clone();
        for (i, &l) in lambda.iter().enumerate() {
            scaled_v.row_mut(i).iter_mut().for_each(|x| *x *= l);
        }
        gemm(T::ONE, &self.u, Op::N, &scaled_v, Op::N, T::ONE, &mut w)?;
        Ok(w)
    }

    /// Converts a gradient w.r.t. the materialized kernel into gradients for
    /// `W₀`, `U` and `V`, accumulating into `grad`.
    pub(crate) fn backprop_dense(&self, lambda: &[T], dw: &Matrix<T>, grad: &mut FactorizedKernel<T>) -> Result<()> {
        grad.base.w.axpy(T::ONE, dw)?;
        // dU = dW Vᵀ diag(λ)
        let mut du = Matrix::zeros(self.u.rows(), self.u.cols());
        gemm(T::ONE, dw, Op::N, &self.v, Op::T, T::ZERO, &mut du)?;
        for r in 0..du.rows() {
            for (x, &l) in du.row_mut(r).iter_mut().zip(lambda) {
                *x *= l;
            }
        }
        grad.u.axpy(T::ONE, &du)?;
        // dV = diag(λ) Uᵀ dW
        let mut dv = Matrix::zeros(self.v.rows(), self.v.cols());
        gemm(T::ONE, &self.u, Op::T, dw, Op::N, T::ZERO, &mut dv)?;
        for (i, &l) in lambda.iter().enumerate() {
            dv.row_mut(i).iter_mut().for_each(|x| *x *= l);
        }
        grad.v.axpy(T::ONE, &dv)
    }
}

/// The kernel a factorized layer applies for a particular λ.
#[derive(Debug, Clone, Copy)]
pub struct EffectiveKernel<'a, T> {
    kernel: &'a FactorizedKernel<T>,
    lambda: &'a [T],
}

/// Binds `λ` to a factorized kernel.
pub fn effective_kernel<'a, T: Scalar>(
    kernel: &'a FactorizedKernel<T>,
    lambda: &'a [T],
) -> Result<EffectiveKernel<'a, T>> {
    kernel.check_lambda(lambda)?;
    Ok(EffectiveKernel { kernel, lambda })
}

impl<T: Scalar> EffectiveKernel<'_, T> {
    /// `W₀x + U(λ ⊙ Vx)` without forming the dense matrix. Bias excluded.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let k = self.kernel;
        if x.len() != k.base.w.cols() {
            return Err(Error::Shape(format!("kernel expects {} inputs, got {}", k.base.w.cols(), x.len())));
        }
        let col = Matrix::from_vec(x.len(), 1, x.to_vec())?;
        let mut out = Matrix::zeros(k.base.w.rows(), 1);
        gemm(T::ONE, &k.base.w, Op::N, &col, Op::N, T::ZERO, &mut out)?;
        if self.lambda.iter().any(|&l| l != T::ZERO) {
            let mut proj = Matrix::zeros(k.bases(), 1);
            gemm(T::ONE, &k.v, Op::N, &col, Op::N, T::ZERO, &mut proj)?;
            for (p, &l) in proj.data_mut().iter_mut().zip(self.lambda) {
                *p *= l;
            }
            gemm(T::ONE, &k.u, Op::N, &proj, Op::N, T::ONE, &mut out)?;
        }
        Ok(out.into_vec())
    }

    pub fn materialize(&self) -> Result<Matrix<T>> {
        self.kernel.materialize(self.lambda)
    }
}
