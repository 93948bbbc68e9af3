use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::param::{Param, Parameterized};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: &Matrix) -> Matrix {
        let mut y = z.clone();
        match self {
            Activation::Linear => {}
            Activation::Relu => y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => y.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => {
                for r in 0..y.rows() {
                    softmax_in_place(y.row_mut(r));
                }
            }
        }
        y
    }

    /// Maps an upstream gradient w.r.t. the output to one w.r.t. the
    /// pre-activation `z`, given the output `y`.
    fn backprop(self, z: &Matrix, y: &Matrix, upstream: &Matrix) -> Matrix {
        let mut delta = upstream.clone();
        match self {
            Activation::Linear => {}
            Activation::Relu => {
                for (d, &zv) in delta.data_mut().iter_mut().zip(z.data()) {
                    if zv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for (d, &yv) in delta.data_mut().iter_mut().zip(y.data()) {
                    *d *= yv * (1.0 - yv);
                }
            }
            Activation::Softmax => {
                for r in 0..delta.rows() {
                    let yr = y.row(r);
                    let inner: f64 = upstream.row(r).iter().zip(yr).map(|(g, p)| g * p).sum();
                    for (d, &p) in delta.row_mut(r).iter_mut().zip(yr) {
                        *d = p * (*d - inner);
                    }
                }
            }
        }
        delta
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Batch of sparse input rows, `(column, value)` pairs per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBatch {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseBatch {
    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows.len(), self.cols);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m.set(r, c, v);
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
enum CachedInput {
    Dense(Matrix),
    Sparse(SparseBatch),
}

#[derive(Debug, Clone)]
struct Cache {
    input: CachedInput,
    pre: Matrix,
    out: Matrix,
}

/// Fully connected layer `activation(x · W + b)` with `W: in x out`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weight: Param,
    pub bias: Param,
    pub activation: Activation,
    cache: Option<Cache>,
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Param::glorot(format!("{name}.weight"), in_dim, out_dim, in_dim, out_dim, rng),
            bias: Param::zeros(format!("{name}.bias"), 1, out_dim),
            activation,
            cache: None,
        }
    }

    pub fn from_parts(name: &str, weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::shape("DenseLayer::from_parts", weight.cols(), bias.len()));
        }
        let n = bias.len();
        Ok(Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), Matrix::from_vec(1, n, bias)?),
            activation,
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    fn add_bias(&self, z: &mut Matrix) {
        let b = self.bias.value.row(0);
        for r in 0..z.rows() {
            for (v, bv) in z.row_mut(r).iter_mut().zip(b) {
                *v += bv;
            }
        }
    }

    fn preactivation(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape("dense forward", self.in_dim(), x.cols()));
        }
        let mut z = x.matmul(&self.weight.value)?;
        self.add_bias(&mut z);
        Ok(z)
    }

    fn preactivation_sparse(&self, x: &SparseBatch) -> Result<Matrix> {
        if x.cols != self.in_dim() {
            return Err(Error::shape("dense forward (sparse)", self.in_dim(), x.cols));
        }
        let mut z = Matrix::zeros(x.rows.len(), self.out_dim());
        for (r, row) in x.rows.iter().enumerate() {
            let out = z.row_mut(r);
            for &(c, v) in row {
                if c >= self.in_dim() {
                    return Err(Error::IndexOutOfRange {
                        what: "sparse input column",
                        index: c,
                        len: self.in_dim(),
                    });
                }
                for (o, w) in out.iter_mut().zip(self.weight.value.row(c)) {
                    *o += v * w;
                }
            }
        }
        self.add_bias(&mut z);
        Ok(z)
    }

    fn finish(&self, z: &Matrix) -> Result<Matrix> {
        z.ensure_finite("dense pre-activation")?;
        let y = self.activation.apply(z);
        y.ensure_finite("dense activation")?;
        Ok(y)
    }

    /// Forward pass without caching; safe on a shared layer.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.finish(&self.preactivation(x)?)
    }

    pub fn infer_sparse(&self, x: &SparseBatch) -> Result<Matrix> {
        self.finish(&self.preactivation_sparse(x)?)
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let pre = self.preactivation(x)?;
        let out = self.finish(&pre)?;
        self.cache = Some(Cache {
            input: CachedInput::Dense(x.clone()),
            pre,
            out: out.clone(),
        });
        Ok(out)
    }

    pub fn forward_sparse(&mut self, x: SparseBatch) -> Result<Matrix> {
        let pre = self.preactivation_sparse(&x)?;
        let out = self.finish(&pre)?;
        self.cache = Some(Cache {
            input: CachedInput::Sparse(x),
            pre,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Cached pre-activations of the last training forward.
    pub fn last_preactivation(&self) -> Option<&Matrix> {
        self.cache.as_ref().map(|c| &c.pre)
    }

    /// Backward from a gradient w.r.t. this layer's output. Returns the
    /// gradient w.r.t. the input.
    pub fn backward(&mut self, upstream: &Matrix) -> Result<Matrix> {
        let cache = self.take_cache(upstream)?;
        let delta = self.activation.backprop(&cache.pre, &cache.out, upstream);
        self.accumulate(&cache.input, &delta)
    }

    /// Backward from a gradient w.r.t. the pre-activation, as produced by a
    /// fused softmax/sigmoid + cross-entropy loss.
    pub fn backward_preactivation(&mut self, delta: &Matrix) -> Result<Matrix> {
        let cache = self.take_cache(delta)?;
        self.accumulate(&cache.input, delta)
    }

    fn take_cache(&mut self, upstream: &Matrix) -> Result<Cache> {
        let cache = self.cache.take().ok_or(Error::BackwardBeforeForward("dense"))?;
        if upstream.shape() != cache.out.shape() {
            return Err(Error::shape(
                "dense backward",
                format!("{:?}", cache.out.shape()),
                format!("{:?}", upstream.shape()),
            ));
        }
        Ok(cache)
    }

    /// dW += xᵀδ, db += Σδ; returns δ·Wᵀ (empty-width for sparse inputs,
    /// which never need an input gradient).
    fn accumulate(&mut self, input: &CachedInput, delta: &Matrix) -> Result<Matrix> {
        match input {
            CachedInput::Dense(x) => {
                let dw = x.t_matmul(delta)?;
                self.weight.grad.add_assign(&dw)?;
            }
            CachedInput::Sparse(x) => {
                for (r, row) in x.rows.iter().enumerate() {
                    let d = delta.row(r);
                    for &(c, v) in row {
                        for (g, dv) in self.weight.grad.row_mut(c).iter_mut().zip(d) {
                            *g += v * dv;
                        }
                    }
                }
            }
        }
        for (g, s) in self.bias.grad.row_mut(0).iter_mut().zip(delta.column_sums()) {
            *g += s;
        }
        match input {
            CachedInput::Dense(_) => {
                let dx = delta.matmul_t(&self.weight.value)?;
                dx.ensure_finite("dense backward")?;
                Ok(dx)
            }
            CachedInput::Sparse(_) => Ok(Matrix::zeros(delta.rows(), 0)),
        }
    }
}

impl Parameterized for DenseLayer {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}
