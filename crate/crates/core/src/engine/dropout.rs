use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` at train time,
/// inference is the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Self { rate, mask: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward<R: Rng + ?Sized>(&mut self, x: &Matrix, mode: Mode, rng: &mut R) -> Matrix {
        if mode == Mode::Infer || self.rate == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.data().len())
            .map(|_| if rng.gen::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        let mut y = x.clone();
        for (v, m) in y.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        y
    }

    /// Applies the cached mask to the upstream gradient. An identity forward
    /// leaves no mask and the gradient passes through unchanged.
    pub fn backward(&mut self, upstream: &Matrix) -> Result<Matrix> {
        match self.mask.take() {
            None => Ok(upstream.clone()),
            Some(mask) => {
                if mask.len() != upstream.data().len() {
                    return Err(Error::shape("dropout backward", mask.len(), upstream.data().len()));
                }
                let mut g = upstream.clone();
                for (v, m) in g.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                Ok(g)
            }
        }
    }
}
