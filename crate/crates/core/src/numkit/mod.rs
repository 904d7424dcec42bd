//! Minimal dense-tensor kernel with reverse-mode differentiation.
//!
//! Values are immutable f64 [`Tensor`]s; computations are recorded on a
//! [`Tape`](tape::Tape) whose backward pass accumulates gradients into a
//! [`ParamStore`](optim::ParamStore). The layer helpers in [`tape`] cover
//! everything the counting models need; [`gradcheck`] holds the
//! finite-difference instrument used to certify every layer.

pub mod checkpoint;
pub mod gradcheck;
pub mod linalg;
pub mod optim;
pub mod tape;

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("model dim {dim} not divisible by {heads} heads")]
    BadHeadCount { dim: usize, heads: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("non-finite value entering {0}")]
    NonFinite(&'static str),
    #[error("no gradients present for {0}")]
    MissingGradients(String),
    #[error("variable does not belong to this tape")]
    DetachedGraph,
    #[error("checkpoint io: {0}")]
    CheckpointIo(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),
}

/// Row-major dense tensor. Cheap to clone; the buffer is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NumError::ShapeMismatch {
                op: "Tensor::new",
                details: format!("shape {shape:?} vs {} elements", data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(NumError::NonFinite("Tensor::new"));
        }
        Ok(Tensor { shape, data: Arc::new(data) })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![0.0; numel]) }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![1, 1], vec![v]).expect("finite scalar")
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumError> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows of a 2-d tensor (leading dimension otherwise).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Columns of a 2-d tensor (trailing dimensions collapsed).
    pub fn cols(&self) -> usize {
        self.shape.iter().skip(1).product::<usize>().max(1)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Standard normal entries scaled by `std`.
    pub fn randn(rng: &mut rand_chacha::ChaCha8Rng, shape: Vec<usize>, std: f64) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let numel = shape.iter().product();
        let data: Vec<f64> = (0..numel)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) * std)
            .collect();
        Tensor { shape, data: Arc::new(data) }
    }

    /// Uniform entries in [-a, a].
    pub fn uniform(rng: &mut rand_chacha::ChaCha8Rng, shape: Vec<usize>, a: f64) -> Self {
        use rand::Rng;
        let numel = shape.iter().product();
        let data: Vec<f64> = (0..numel).map(|_| rng.gen_range(-a..=a)).collect();
        Tensor { shape, data: Arc::new(data) }
    }

    /// Xavier-uniform initialization for a [fan_out, fan_in] weight.
    pub fn xavier(rng: &mut rand_chacha::ChaCha8Rng, fan_out: usize, fan_in: usize) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Tensor::uniform(rng, vec![fan_out, fan_in], a)
    }
}
