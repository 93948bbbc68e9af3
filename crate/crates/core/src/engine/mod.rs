//! Minimal dense network kernels with exact analytic gradients.
//!
//! Everything is 64-bit. Layers cache what their backward pass needs during a
//! training forward; `infer`-style entry points never mutate and can be used
//! from many threads on a shared model.

pub mod adam;
pub mod dense;
pub mod dropout;
pub mod embedding;
pub mod gradcheck;
pub mod loss;
pub mod matrix;
pub mod merge;
pub mod param;

pub use adam::AdamState;
pub use dense::{Activation, DenseLayer, SparseBatch};
pub use dropout::{Dropout, Mode};
pub use embedding::EmbeddingTable;
pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use matrix::Matrix;
pub use param::{Param, Parameterized};
