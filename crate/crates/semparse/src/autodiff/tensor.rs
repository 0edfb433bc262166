//! Dense row-major tensors with an optional gradient buffer.

use serde::{Deserialize, Serialize};

use crate::error::AutodiffError;
use crate::scalar::Scalar;

/// A dense tensor. Values are stored row-major; `grad`, when present, has
/// the same shape and accumulates `∂loss/∂value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    values: Vec<S>,
    #[serde(skip)]
    grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, values: Vec<S>) -> Result<Self, AutodiffError> {
        let expect: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || expect != values.len() {
            return Err(AutodiffError::BadShape {
                shape,
                len: values.len(),
            });
        }
        Ok(Tensor {
            shape,
            values,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            values: vec![S::zero(); n],
            grad: None,
        }
    }

    pub fn scalar(v: S) -> Self {
        Tensor {
            shape: vec![1, 1],
            values: vec![v],
            grad: None,
        }
    }

    /// A `[1, n]` row vector.
    pub fn row(values: Vec<S>) -> Self {
        Tensor {
            shape: vec![1, values.len()],
            values,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of rows / columns when viewed as a matrix. A `[n]` vector is a
    /// single row; higher ranks flatten all leading dimensions into rows.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1
    }

    pub fn item(&self) -> S {
        debug_assert!(self.is_scalar());
        self.values[0]
    }

    /// Copy of shape and values with no gradient buffer.
    pub fn clone_values(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.clone(),
            grad: None,
        }
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated to zeros on first use.
    pub fn grad_mut(&mut self) -> &mut [S] {
        let n = self.values.len();
        self.grad.get_or_insert_with(|| vec![S::zero(); n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = S::zero());
        }
    }

    pub fn add_to_grad(&mut self, delta: &[S]) {
        debug_assert_eq!(delta.len(), self.values.len());
        let g = self.grad_mut();
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += *di;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_value_count() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn grad_buffer_matches_shape_and_accumulates() {
        let mut t = Tensor::<f64>::row(vec![1.0, 2.0]);
        assert!(t.grad().is_none());
        t.add_to_grad(&[0.5, 0.25]);
        t.add_to_grad(&[0.5, 0.25]);
        assert_eq!(t.grad().unwrap(), &[1.0, 0.5]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0]);
    }
}
