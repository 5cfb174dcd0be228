use serde::{Deserialize, Serialize};

use crate::params::Parameters;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moment estimates live in two instances of the
/// parameter container.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<P> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: P,
    pub v: P,
}

impl<P> Adam<P> {
    pub fn new<T: Scalar>(config: AdamConfig, params: &P) -> Self
    where
        P: Parameters<T> + Clone,
    {
        let mut m = params.clone();
        m.zero_all();
        Adam { config, step: 0, v: m.clone(), m }
    }

    pub fn update<T: Scalar>(&mut self, params: &mut P, grads: &P)
    where
        P: Parameters<T>,
    {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let step_size = T::from_f64(c.lr * bc2.sqrt() / bc1);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let eps = T::from_f64(c.eps * bc2.sqrt());
        let g_list = grads.tensors();
        let m_list = self.m.tensors_mut();
        let v_list = self.v.tensors_mut();
        for (((p, (_, g)), m), v) in params.tensors_mut().into_iter().zip(g_list).zip(m_list).zip(v_list) {
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *p -= step_size * *m / (v.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    #[derive(Debug, Clone)]
    struct Quad(Matrix<f64>);

    impl Parameters<f64> for Quad {
        fn tensors(&self) -> Vec<(String, &Matrix<f64>)> {
            vec![("x".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Matrix<f64>> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Quad(Matrix::from_vec(1, 2, vec![1.0, -2.0]).unwrap());
        let g = Quad(Matrix::from_vec(1, 2, vec![0.5, -3.0]).unwrap());
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.update(&mut p, &g);
        assert!((p.0.get(0, 0) - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p.0.get(0, 1) - (-2.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Quad(Matrix::from_vec(1, 1, vec![3.0]).unwrap());
        let mut adam = Adam::new(AdamConfig { lr: 0.1, ..AdamConfig::default() }, &p);
        for _ in 0..500 {
            let g = Quad(p.0.map(|x| 2.0 * x));
            adam.update(&mut p, &g);
        }
        assert!(p.0.get(0, 0).abs() < 1e-2);
    }
}
