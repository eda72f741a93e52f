//! Dense row-major tensors of `f64` and the forward kernels shared by the tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// A dense tensor. Vectors have shape `[n]`, matrices `[rows, cols]`.
/// Equality compares shape, values and the trainable flag; the gradient slot
/// is scratch space and is ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    #[serde(default)]
    pub requires_grad: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad: Option<Vec<f64>>,
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data && self.requires_grad == other.requires_grad
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!("shape {shape:?} must be non-empty and positive")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} holds {n} elements but data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data, requires_grad: false, grad: None })
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::matrix(rows.len(), cols, rows.concat())
    }

    pub fn scalar(x: f64) -> Self {
        Self { shape: vec![1], data: vec![x], requires_grad: false, grad: None }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n], requires_grad: false, grad: None }
    }

    /// Identity matrix of size `n`.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Uniform entries in `[-bound, bound]`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let mut t = Self::zeros(shape);
        for x in &mut t.data {
            *x = rng.random_range(-bound..=bound);
        }
        t
    }

    /// Marks this tensor as trainable and allocates a zeroed gradient slot.
    pub fn trainable(mut self) -> Self {
        self.requires_grad = true;
        self.grad = Some(vec![0.0; self.data.len()]);
        self
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

    pub fn rows(&self) -> usize {
        if self.shape.len() == 1 { 1 } else { self.shape[0] }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!("expected a scalar, got shape {:?}", self.shape)));
        }
        Ok(self.data[0])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
            requires_grad: false,
            grad: None,
        }
    }

    /// Matrix product. A vector on the left is treated as a single row and
    /// the result is again a vector.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        if rhs.shape.len() != 2 || self.shape.len() > 2 {
            return Err(dim_err("matmul", &self.shape, &rhs.shape));
        }
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (rhs.shape[0], rhs.shape[1]);
        if k != k2 {
            return Err(dim_err("matmul", &self.shape, &rhs.shape));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &self.data[i * k..(i + 1) * k];
            let dst = &mut out[i * n..(i + 1) * n];
            for (p, &a) in row.iter().enumerate() {
                let src = &rhs.data[p * n..(p + 1) * n];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        let shape = if self.shape.len() == 1 { vec![n] } else { vec![m, n] };
        Tensor::new(shape, out)
    }

    pub fn transpose(&self) -> Tensor {
        let (m, n) = (self.rows(), self.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor { shape: vec![n, m], data: out, requires_grad: false, grad: None }
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "mul", |a, b| a * b)
    }

    fn zip_with(&self, rhs: &Tensor, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != rhs.shape {
            return Err(dim_err(what, &self.shape, &rhs.shape));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
        Tensor::new(self.shape.clone(), data)
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|x| x * k)
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid)
    }

    /// Softmax over the last axis (each row of a matrix independently).
    pub fn softmax(&self) -> Result<Tensor> {
        if self.data.is_empty() {
            return Err(Error::Dimension("softmax of an empty tensor".into()));
        }
        let n = self.cols();
        let mut out = self.data.clone();
        for row in out.chunks_mut(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        Tensor::new(self.shape.clone(), out)
    }

    /// Mean over the first axis: `[rows, cols] -> [cols]`, `[n] -> [1]`.
    pub fn mean_axis0(&self) -> Tensor {
        let (m, n) = if self.shape.len() == 1 { (self.data.len(), 1) } else { (self.rows(), self.cols()) };
        let mut out = vec![0.0; n];
        for row in self.data.chunks(n) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= m as f64;
        }
        Tensor { shape: vec![n], data: out, requires_grad: false, grad: None }
    }

    pub fn dot(&self, rhs: &Tensor) -> Result<f64> {
        if self.data.len() != rhs.data.len() {
            return Err(dim_err("dot", &self.shape, &rhs.shape));
        }
        Ok(dot(&self.data, &rhs.data))
    }

    /// Concatenates vectors end to end.
    pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat of nothing".into()));
        }
        let data: Vec<f64> = parts.iter().flat_map(|t| t.data.iter().copied()).collect();
        Tensor::vector(data)
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(parts: &[&Tensor]) -> Result<Tensor> {
        let n = parts.first().map(|t| t.len()).ok_or_else(|| Error::Dimension("stack of nothing".into()))?;
        if let Some(bad) = parts.iter().find(|t| t.len() != n) {
            return Err(dim_err("stack_rows", &[n], bad.shape()));
        }
        let data: Vec<f64> = parts.iter().flat_map(|t| t.data.iter().copied()).collect();
        Tensor::matrix(parts.len(), n, data)
    }

    /// Contiguous sub-vector `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Tensor> {
        if len == 0 || start + len > self.data.len() {
            return Err(Error::Dimension(format!(
                "slice [{start}, {}) out of range for shape {:?}",
                start + len,
                self.shape
            )));
        }
        Tensor::vector(self.data[start..start + len].to_vec())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
pub fn dropout(x: &Tensor, rate: f64, training: bool, rng: &mut impl Rng) -> Result<Tensor> {
    let mask = dropout_mask(x.len(), rate, training, rng)?;
    match mask {
        None => Ok(x.clone()),
        Some(m) => Tensor::new(x.shape.clone(), x.data.iter().zip(&m).map(|(a, b)| a * b).collect()),
    }
}

pub(crate) fn dropout_mask(n: usize, rate: f64, training: bool, rng: &mut impl Rng) -> Result<Option<Vec<f64>>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Contract(format!("dropout rate {rate} must lie in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(None);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Some((0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()))
}
