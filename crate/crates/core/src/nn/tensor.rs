use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major `f64` tensor with one to four dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::ShapeError(format!("tensors have 1 to 4 dimensions, got {}", shape.len())));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::ShapeError(format!("shape {shape:?} overflows")))
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = check_shape(shape).expect("valid tensor shape");
        Self { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::ShapeError(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same data under a new shape of equal size.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn all_finite(&self) -> bool {
        crate::math::all_finite(&self.data)
    }

    /// Fails with a `ShapeError` unless the tensor has `rank` dimensions.
    pub fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.shape.len() == rank {
            Ok(())
        } else {
            Err(Error::ShapeError(format!(
                "{what} expects a rank-{rank} tensor, got shape {:?}",
                self.shape
            )))
        }
    }
}
