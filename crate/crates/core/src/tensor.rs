//! Dense row-major matrices and the handful of operations the models need.
//!
//! Everything is generic over [`Scalar`] so the same code runs in 32-bit for
//! training and in 64-bit for finite-difference gradient checks.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

pub trait Scalar:
    Copy
    + Default
    + Debug
    + Display
    + PartialOrd
    + Send
    + Sync
    + Sum
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;

    fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// `c = alpha * a * b + beta * c` on raw strided buffers.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-overlapping views
    /// of shapes `m×k`, `k×n` and `m×n`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            #[inline]
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }

            unsafe fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                rsa: isize,
                csa: isize,
                b: *const Self,
                rsb: isize,
                csb: isize,
                beta: Self,
                c: *mut Self,
                rsc: isize,
                csc: isize,
            ) {
                $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Debug> Debug for Matrix<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Matrix[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::ZERO; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values cannot fill a {rows}x{cols} matrix", data.len())));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { T::ONE } else { T::ZERO })
    }

    /// A single-row matrix.
    pub fn row_vector(values: &[T]) -> Self {
        Matrix { rows: 1, cols: values.len(), data: values.to_vec() }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| U::from_f64(x.to_f64())).collect() }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Copies the columns `start..start+width` into a new matrix.
    pub fn columns(&self, start: usize, width: usize) -> Self {
        Self::from_fn(self.rows, width, |r, c| self.get(r, start + c))
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x.to_f64() * x.to_f64()).sum()
    }

    /// Adds `scale * other` in place.
    pub fn axpy(&mut self, scale: T, other: &Matrix<T>) -> Result<()> {
        check_same(self, other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Adds a `1 × cols` bias to every row.
    pub fn add_row_bias(&mut self, bias: &Matrix<T>) -> Result<()> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(Error::Shape(format!("bias {:?} does not broadcast over {:?}", bias.shape(), self.shape())));
        }
        for r in 0..self.rows {
            for (x, &b) in self.row_mut(r).iter_mut().zip(&bias.data) {
                *x += b;
            }
        }
        Ok(())
    }

    /// Column sums accumulated into a `1 × cols` matrix.
    pub fn accumulate_column_sums(&self, into: &mut Matrix<T>) {
        debug_assert_eq!(into.len(), self.cols);
        for r in 0..self.rows {
            for (acc, &x) in into.data.iter_mut().zip(self.row(r)) {
                *acc += x;
            }
        }
    }
}

fn check_same<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{op}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Whether an operand of [`gemm`] is used as stored or transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

impl Op {
    fn dims<T>(self, m: &Matrix<T>) -> (usize, usize) {
        match self {
            Op::N => (m.rows, m.cols),
            Op::T => (m.cols, m.rows),
        }
    }

    fn strides<T>(self, m: &Matrix<T>) -> (isize, isize) {
        match self {
            Op::N => (m.cols as isize, 1),
            Op::T => (1, m.cols as isize),
        }
    }
}

/// `c = alpha * op(a) * op(b) + beta * c`.
pub fn gemm<T: Scalar>(
    alpha: T,
    a: &Matrix<T>,
    op_a: Op,
    b: &Matrix<T>,
    op_b: Op,
    beta: T,
    c: &mut Matrix<T>,
) -> Result<()> {
    let (m, k) = op_a.dims(a);
    let (k2, n) = op_b.dims(b);
    if k != k2 || c.rows != m || c.cols != n {
        return Err(Error::Shape(format!("gemm: op(a) {m}x{k}, op(b) {k2}x{n}, c {:?}", c.shape())));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    if k == 0 {
        for x in c.data.iter_mut() {
            *x *= beta;
        }
        return Ok(());
    }
    let (rsa, csa) = op_a.strides(a);
    let (rsb, csb) = op_b.strides(b);
    // SAFETY: shapes were checked above and `c` is uniquely borrowed.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
    Ok(())
}

pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let mut c = Matrix::zeros(a.rows, b.cols);
    gemm(T::ONE, a, Op::N, b, Op::N, T::ZERO, &mut c)?;
    Ok(c)
}

pub fn add<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    check_same(a, b, "add")?;
    Ok(Matrix { rows: a.rows, cols: a.cols, data: a.data.iter().zip(&b.data).map(|(&x, &y)| x + y).collect() })
}

pub fn hadamard<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    check_same(a, b, "hadamard")?;
    Ok(Matrix { rows: a.rows, cols: a.cols, data: a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).collect() })
}

pub fn sigmoid<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    a.map(sigmoid_scalar)
}

pub fn tanh<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    a.map(T::tanh)
}

pub fn relu<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    a.map(|x| if x > T::ZERO { x } else { T::ZERO })
}

pub fn softmax_rows<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    let mut out = a.clone();
    for r in 0..out.rows {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(row[0], T::max);
    let mut total = T::ZERO;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x = *x / total;
    }
}

/// Negative log-likelihood of `target` under `softmax(row)`, computed stably.
pub(crate) fn log_softmax_nll<T: Scalar>(row: &[T], target: usize) -> f64 {
    let max = row.iter().copied().fold(row[0], T::max).to_f64();
    let total: f64 = row.iter().map(|x| (x.to_f64() - max).exp()).sum();
    max + total.ln() - row[target].to_f64()
}

/// Mean cross-entropy over unmasked rows and its gradient w.r.t. the logits.
///
/// `mask[r] == false` marks a padded row; it contributes neither loss nor
/// gradient.
pub fn cross_entropy<T: Scalar>(logits: &Matrix<T>, targets: &[usize], mask: &[bool]) -> Result<(f64, Matrix<T>)> {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    let (total, grad) = cross_entropy_scaled(logits, targets, mask, 1.0 / count as f64)?;
    Ok((total / count as f64, grad))
}

/// Summed cross-entropy with the gradient multiplied by `scale`.
pub(crate) fn cross_entropy_scaled<T: Scalar>(
    logits: &Matrix<T>,
    targets: &[usize],
    mask: &[bool],
    scale: f64,
) -> Result<(f64, Matrix<T>)> {
    if targets.len() != logits.rows || mask.len() != logits.rows {
        return Err(Error::Shape(format!(
            "cross_entropy: {} logit rows, {} targets, {} mask entries",
            logits.rows,
            targets.len(),
            mask.len()
        )));
    }
    let mut grad = Matrix::zeros(logits.rows, logits.cols);
    let scale_t = T::from_f64(scale);
    let mut total = 0.0;
    for r in 0..logits.rows {
        if !mask[r] {
            continue;
        }
        let target = targets[r];
        if target >= logits.cols {
            return Err(Error::Shape(format!("target id {target} out of range for {} classes", logits.cols)));
        }
        let row = logits.row(r);
        total += log_softmax_nll(row, target);
        let g = grad.row_mut(r);
        g.copy_from_slice(row);
        softmax_in_place(g);
        g[target] -= T::ONE;
        for x in g.iter_mut() {
            *x *= scale_t;
        }
    }
    if !total.is_finite() {
        return Err(Error::Numerical("cross-entropy loss".into()));
    }
    Ok((total, grad))
}
