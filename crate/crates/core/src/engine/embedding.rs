use rand::Rng;

use super::matrix::Matrix;
use super::param::{Param, Parameterized};
use crate::error::{Error, Result};

/// Lookup table mapping a dense id to a learned `dim`-vector.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub weights: Param,
    cached: Option<Vec<usize>>,
}

impl EmbeddingTable {
    pub fn new<R: Rng + ?Sized>(name: &str, num_entries: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            weights: Param::glorot(name, num_entries, dim, num_entries, dim, rng),
            cached: None,
        }
    }

    pub fn from_weights(name: &str, weights: Matrix) -> Self {
        Self {
            weights: Param::new(name, weights),
            cached: None,
        }
    }

    pub fn num_entries(&self) -> usize {
        self.weights.value.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.value.cols()
    }

    /// Pure row gather.
    pub fn lookup(&self, indices: &[usize]) -> Result<Matrix> {
        let dim = self.dim();
        let mut out = Matrix::zeros(indices.len(), dim);
        for (r, &idx) in indices.iter().enumerate() {
            if idx >= self.num_entries() {
                return Err(Error::IndexOutOfRange {
                    what: "embedding table",
                    index: idx,
                    len: self.num_entries(),
                });
            }
            out.row_mut(r).copy_from_slice(self.weights.value.row(idx));
        }
        Ok(out)
    }

    /// Lookup that remembers `indices` for [`EmbeddingTable::backward`].
    pub fn forward(&mut self, indices: &[usize]) -> Result<Matrix> {
        let out = self.lookup(indices)?;
        self.cached = Some(indices.to_vec());
        Ok(out)
    }

    /// Scatter-adds upstream rows into the rows addressed by the last forward.
    pub fn backward(&mut self, upstream: &Matrix) -> Result<()> {
        let indices = self
            .cached
            .take()
            .ok_or(Error::BackwardBeforeForward("embedding"))?;
        if upstream.shape() != (indices.len(), self.dim()) {
            return Err(Error::shape(
                "embedding backward",
                format!("{}x{}", indices.len(), self.dim()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        for (r, &idx) in indices.iter().enumerate() {
            for (g, u) in self.weights.grad.row_mut(idx).iter_mut().zip(upstream.row(r)) {
                *g += u;
            }
        }
        Ok(())
    }
}

impl Parameterized for EmbeddingTable {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weights]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weights]
    }
}
