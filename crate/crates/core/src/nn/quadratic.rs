//! Separable quadratic loss `E(θ) = ½ Σ a_i θ_i²`, independent of the batch.
//!
//! Its Hessian is exactly `diag(a)`, so the second-order saliency of any
//! pruned set is exact. Used to validate saliency and pruning code paths.

use super::{Batch, DifferentiableModel};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSurrogate {
    curvature: Vec<f64>,
    params: Vec<f64>,
}

impl QuadraticSurrogate {
    pub fn new(curvature: Vec<f64>, params: Vec<f64>) -> Result<Self> {
        check_len("quadratic surrogate", curvature.len(), params.len())?;
        if curvature.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return Err(Error::config("quadratic curvature must be finite and non-negative"));
        }
        Ok(Self { curvature, params })
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn value(&self) -> f64 {
        0.5 * self
            .curvature
            .iter()
            .zip(&self.params)
            .map(|(a, t)| a * t * t)
            .sum::<f64>()
    }
}

impl DifferentiableModel for QuadraticSurrogate {
    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss(&self, _batch: &Batch) -> Result<f64> {
        Ok(self.value())
    }

    fn gradient(&self, _batch: &Batch) -> Result<Vec<f64>> {
        Ok(self.curvature.iter().zip(&self.params).map(|(a, t)| a * t).collect())
    }

    fn hessian_diag(&self, _batch: &Batch) -> Result<Vec<f64>> {
        Ok(self.curvature.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hessian_is_the_curvature_vector() {
        let q = QuadraticSurrogate::new(vec![1.0, 3.5, 0.0], vec![2.0, 1.0, -1.0]).unwrap();
        let b = Batch::new(1, vec![0.0], vec![0], vec![0]).unwrap();
        assert_eq!(q.hessian_diag(&b).unwrap(), vec![1.0, 3.5, 0.0]);
        assert_eq!(q.gradient(&b).unwrap(), vec![2.0, 3.5, 0.0]);
        assert_eq!(q.loss(&b).unwrap(), 0.5 * (4.0 + 3.5));
    }

    #[test]
    fn negative_curvature_rejected() {
        assert!(QuadraticSurrogate::new(vec![-1.0], vec![0.0]).is_err());
        assert!(QuadraticSurrogate::new(vec![1.0, 2.0], vec![0.0]).is_err());
    }
}
