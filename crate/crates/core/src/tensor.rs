// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense row-major `f32` tensor with the handful of kernels the encoder
//! forward pass needs.
//!
//! Every kernel is a pure function of its inputs. Reductions run in a fixed
//! left-to-right order so repeated calls are bitwise reproducible.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by tensor kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    DimMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} holds {expected} values but {found} were supplied")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("{op}: expected a rank-{expected} tensor, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("softmax: row {row} is fully masked")]
    DegenerateRow { row: usize },
    #[error("{op}: range {start}..{end} out of bounds for extent {extent}")]
    OutOfRange {
        op: &'static str,
        start: usize,
        end: usize,
        extent: usize,
    },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major array of `f32` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                expected,
                found: data.len(),
            });
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

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(TensorError::DimMismatch {
                    op: "from_rows",
                    left: vec![cols],
                    right: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn vector(data: Vec<f32>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
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

    /// Extent of the last axis; 1 for a scalar.
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Number of vectors along the last axis.
    pub fn rows(&self) -> usize {
        match self.data.len().checked_div(self.cols()) {
            Some(n) => n,
            None => self.shape[..self.shape.len().saturating_sub(1)].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn expect_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[m, n] => Ok((m, n)),
            _ => Err(TensorError::Rank {
                op,
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    /// `self[m×k] · other[k×n]`, accumulated in `t = 0..k` order per cell.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.expect_matrix("matmul")?;
        let (k2, n) = other.expect_matrix("matmul")?;
        if k != k2 {
            return Err(TensorError::DimMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let c_row = &mut out[i * n..(i + 1) * n];
            for (t, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[t * n..(t + 1) * n];
                for (c, &b) in c_row.iter_mut().zip(b_row) {
                    *c += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.expect_matrix("transpose")?;
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data: out,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(TensorError::DimMismatch {
                op: "add",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::DimMismatch {
                op: "add_assign",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Adds `bias[n]` to every row of `self[…×n]`.
    pub fn add_bias_rows(&self, bias: &Tensor) -> Result<Tensor> {
        let n = self.cols();
        if bias.shape != [n] {
            return Err(TensorError::DimMismatch {
                op: "add_bias_rows",
                left: self.shape.clone(),
                right: bias.shape.clone(),
            });
        }
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(n.max(1)) {
            for (v, b) in row.iter_mut().zip(&bias.data) {
                *v += b;
            }
        }
        Ok(out)
    }

    pub fn slice_cols(&self, range: Range<usize>) -> Result<Tensor> {
        let (m, n) = self.expect_matrix("slice_cols")?;
        if range.start > range.end || range.end > n {
            return Err(TensorError::OutOfRange {
                op: "slice_cols",
                start: range.start,
                end: range.end,
                extent: n,
            });
        }
        let w = range.len();
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&self.data[i * n + range.start..i * n + range.end]);
        }
        Ok(Tensor {
            shape: vec![m, w],
            data,
        })
    }

    pub fn slice_rows(&self, range: Range<usize>) -> Result<Tensor> {
        let (m, n) = self.expect_matrix("slice_rows")?;
        if range.start > range.end || range.end > m {
            return Err(TensorError::OutOfRange {
                op: "slice_rows",
                start: range.start,
                end: range.end,
                extent: m,
            });
        }
        Ok(Tensor {
            shape: vec![range.len(), n],
            data: self.data[range.start * n..range.end * n].to_vec(),
        })
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            return Ok(Tensor::zeros(vec![0, 0]));
        };
        let (m, _) = first.expect_matrix("concat_cols")?;
        let mut total = 0;
        for p in parts {
            let (pm, pn) = p.expect_matrix("concat_cols")?;
            if pm != m {
                return Err(TensorError::DimMismatch {
                    op: "concat_cols",
                    left: first.shape.clone(),
                    right: p.shape.clone(),
                });
            }
            total += pn;
        }
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(Tensor {
            shape: vec![m, total],
            data,
        })
    }
}

/// Row-wise softmax over the last axis.
///
/// `keep`, when given, has one flag per element; `false` entries are
/// excluded and come out as exactly `0.0`.
pub fn softmax_rows(x: &Tensor, keep: Option<&[bool]>) -> Result<Tensor> {
    if let Some(mask) = keep {
        if mask.len() != x.len() {
            return Err(TensorError::DimMismatch {
                op: "softmax_rows",
                left: x.shape.clone(),
                right: vec![mask.len()],
            });
        }
    }
    let n = x.cols();
    let mut out = x.clone();
    if n == 0 {
        return Ok(out);
    }
    for (r, row) in out.data.chunks_exact_mut(n).enumerate() {
        let mask = keep.map(|m| &m[r * n..(r + 1) * n]);
        let kept = |j: usize| mask.is_none_or(|m| m[j]);
        let mut max = f32::NEG_INFINITY;
        for (j, &v) in row.iter().enumerate() {
            if kept(j) && v > max {
                max = v;
            }
        }
        if max == f32::NEG_INFINITY {
            return Err(TensorError::DegenerateRow { row: r });
        }
        // f64 normalizer keeps long rows summing to 1 within a few ulp
        let mut sum = 0.0f64;
        for (j, v) in row.iter_mut().enumerate() {
            if kept(j) {
                *v = (*v - max).exp();
                sum += f64::from(*v);
            } else {
                *v = 0.0;
            }
        }
        for v in row.iter_mut() {
            *v = (f64::from(*v) / sum) as f32;
        }
    }
    Ok(out)
}

/// Per-vector layer normalization over the last axis with population
/// variance, followed by the `gamma`/`beta` affine map.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    let d = x.cols();
    if gamma.shape != [d] || beta.shape != [d] {
        return Err(TensorError::DimMismatch {
            op: "layer_norm",
            left: x.shape.clone(),
            right: gamma.shape.clone(),
        });
    }
    let mut out = x.clone();
    if d == 0 {
        return Ok(out);
    }
    for row in out.data.chunks_exact_mut(d) {
        let mean = row.iter().sum::<f32>() / d as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
        let inv = 1.0 / (var + eps).sqrt();
        for ((v, g), b) in row.iter_mut().zip(&gamma.data).zip(&beta.data) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Ok(out)
}

/// Exact GELU, `x · Φ(x)` with `Φ` the standard normal CDF.
pub fn gelu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| gelu_scalar(v)).collect(),
    }
}

pub fn gelu_scalar(v: f32) -> f32 {
    let v64 = f64::from(v);
    (0.5 * v64 * (1.0 + libm::erf(v64 / std::f64::consts::SQRT_2))) as f32
}

/// Dot product accumulated in index order.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).fold(0.0f32, |acc, (x, y)| acc + x * y)
}
