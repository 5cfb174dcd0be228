use crate::tensor::{Matrix, Scalar};

/// A model whose trainable state is a fixed, ordered list of named tensors.
///
/// Gradients are represented by a second instance of the same type, so the
/// two lists line up tensor for tensor.
pub trait Parameters<T: Scalar> {
    fn tensors(&self) -> Vec<(String, &Matrix<T>)>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    fn tensor_sizes(&self) -> Vec<usize> {
        self.tensors().iter().map(|(_, m)| m.len()).collect()
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, m)| m.data().iter().map(|x| x.to_f64())).collect()
    }

    fn assign_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        for m in self.tensors_mut() {
            let len = m.len();
            for (dst, &src) in m.data_mut().iter_mut().zip(&values[offset..offset + len]) {
                *dst = T::from_f64(src);
            }
            offset += len;
        }
        assert_eq!(offset, values.len(), "flat parameter length mismatch");
    }

    fn zero_all(&mut self) {
        for m in self.tensors_mut() {
            m.fill(T::ZERO);
        }
    }

    fn global_norm(&self) -> f64 {
        self.tensors().iter().map(|(_, m)| m.sum_squares()).sum::<f64>().sqrt()
    }

    fn scale_all(&mut self, factor: T) {
        for m in self.tensors_mut() {
            m.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let src = other.tensors();
        for (dst, (_, s)) in self.tensors_mut().into_iter().zip(src) {
            for (a, &b) in dst.data_mut().iter_mut().zip(s.data()) {
                *a += b;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }
}
