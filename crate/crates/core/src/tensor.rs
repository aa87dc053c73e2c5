// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense row-major `f32` tensors and the handful of kernels the model needs.
//!
//! Every kernel is a pure function of its inputs. Matrix products accumulate
//! in `f64` and round once per output element, so results are bit-stable
//! across calls and independent of row count (row `i` of a product only ever
//! reads row `i` of the left operand).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major tensor of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Build a tensor, checking that `data.len()` equals the shape product.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    /// Build a 2-D tensor from equally sized rows.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::Shape(format!(
                "row {i} has {} columns, expected {cols}",
                r.len()
            )));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn expect_2d(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Shape(format!("{what}: expected a 2-D tensor, got shape {s:?}"))),
        }
    }

    /// Copy columns `start..start + width` of a 2-D tensor.
    pub fn column_block(&self, start: usize, width: usize) -> Result<Tensor> {
        let (r, c) = self.expect_2d("column_block")?;
        if start + width > c {
            return Err(Error::Shape(format!(
                "column block {start}..{} out of range for {c} columns",
                start + width
            )));
        }
        let mut data = Vec::with_capacity(r * width);
        for i in 0..r {
            data.extend_from_slice(&self.data[i * c + start..i * c + start + width]);
        }
        Tensor::new(vec![r, width], data)
    }

    /// Elementwise sum of two tensors of identical shape.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        finite(Tensor::new(self.shape.clone(), data)?, "add")
    }
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)
    }
}

fn finite(t: Tensor, kernel: &'static str) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(kernel))
    }
}

/// Standard matrix product `a[m×k] · b[k×n]`, accumulated in `f64`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.expect_2d("matmul lhs")?;
    let (k2, n) = b.expect_2d("matmul rhs")?;
    if k != k2 {
        return Err(Error::Shape(format!(
            "matmul: inner dimensions disagree, {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0f32; m * n];
    let mut acc = vec![0.0f64; n];
    for i in 0..m {
        acc.iter_mut().for_each(|v| *v = 0.0);
        let arow = &a.data[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let av = f64::from(av);
            let brow = &b.data[p * n..(p + 1) * n];
            for (acc_j, &bv) in acc.iter_mut().zip(brow) {
                *acc_j += av * f64::from(bv);
            }
        }
        for (o, &v) in out[i * n..(i + 1) * n].iter_mut().zip(&acc) {
            *o = v as f32;
        }
    }
    finite(Tensor::new(vec![m, n], out)?, "matmul")
}

/// Softmax of one score row restricted to its first `visible` entries.
///
/// Entries at or beyond `visible` are written as exact zeros.
pub fn softmax_prefix(scores: &[f32], visible: usize, out: &mut [f32]) {
    let visible = visible.min(scores.len());
    let max = scores[..visible]
        .iter()
        .copied()
        .fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = scores[..visible]
        .iter()
        .map(|&s| (f64::from(s) - f64::from(max)).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    for (o, e) in out[..visible].iter_mut().zip(&exps) {
        *o = (e / sum) as f32;
    }
    for o in &mut out[visible..] {
        *o = 0.0;
    }
}

/// Row-wise softmax of a square score matrix.
///
/// With `causal`, row `i` is normalised over columns `0..=i` and every
/// column `j > i` is exactly zero.
pub fn masked_softmax_rows(scores: &Tensor, causal: bool) -> Result<Tensor> {
    let (r, c) = scores.expect_2d("masked_softmax_rows")?;
    if r != c {
        return Err(Error::Shape(format!(
            "masked_softmax_rows: expected a square matrix, got {:?}",
            scores.shape
        )));
    }
    if r == 0 {
        return Err(Error::Shape("masked_softmax_rows: empty matrix".into()));
    }
    let mut out = Tensor::zeros(vec![r, c]);
    for i in 0..r {
        let visible = if causal { i + 1 } else { c };
        softmax_prefix(scores.row(i), visible, out.row_mut(i));
    }
    finite(out, "masked_softmax_rows")
}

/// Elementwise nonlinearity used between the two FFN matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Silu,
    /// tanh approximation of GELU.
    Gelu,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f32) -> f32 {
        let x64 = f64::from(x);
        let y = match self {
            Activation::Silu => x64 / (1.0 + (-x64).exp()),
            Activation::Gelu => {
                const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
                0.5 * x64 * (1.0 + (C * (x64 + 0.044_715 * x64 * x64 * x64)).tanh())
            }
            Activation::Relu => x64.max(0.0),
        };
        y as f32
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Silu => "silu",
            Activation::Gelu => "gelu",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "silu" => Ok(Activation::Silu),
            "gelu" => Ok(Activation::Gelu),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!(
                "unknown activation `{other}` (expected silu, gelu or relu)"
            ))),
        }
    }
}

/// Apply `kind` elementwise; the shape is preserved.
pub fn activation(x: &Tensor, kind: Activation) -> Result<Tensor> {
    let data = x.data.iter().map(|&v| kind.apply(v)).collect();
    finite(Tensor::new(x.shape.clone(), data)?, "activation")
}
