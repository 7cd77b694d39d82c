//! Dense row-major `f32` tensors.
//!
//! The layout is fixed: last axis fastest. Every reshape in the plane
//! machinery is defined relative to it, so a reshape never moves data and
//! a permute always materializes a fresh contiguous buffer.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Extent per axis. Every extent is at least one.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::ShapeMismatch(format!(
                "axis {axis} of {dims:?} has zero extent"
            )));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides, in elements.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for axis in (0..self.0.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.0[axis + 1];
        }
        strides
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Immutable dense tensor. Cloning and reshaping share the buffer.
#[derive(Clone)]
pub struct Tensor {
    shape: Shape,
    data: Arc<[f32]>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl PartialEq for Tensor {
    /// Bitwise equality of shape and payload, so `-0.0 != 0.0`.
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Tensor {
    /// Checked constructor: the buffer length must match the shape and
    /// every value must be finite.
    pub fn new(dims: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Self::from_parts(Shape::new(dims)?, data)
    }

    pub(crate) fn from_parts(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if shape.numel() != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {} elements, buffer has {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data: data.into(),
        })
    }

    /// Internal constructor for buffers produced by kernels in this crate.
    pub(crate) fn from_raw(dims: &[usize], data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor {
            shape: Shape(dims.to_vec()),
            data: data.into(),
        }
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(dims, 0.0)
    }

    pub fn ones(dims: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(dims, 1.0)
    }

    pub fn full(dims: impl Into<Vec<usize>>, value: f32) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = vec![value; shape.numel()];
        Self::from_parts(shape, data)
    }

    /// Builds a tensor from a function of the flat row-major index.
    pub fn from_fn(dims: impl Into<Vec<usize>>, f: impl FnMut(usize) -> f32) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data: Vec<f32> = (0..shape.numel()).map(f).collect();
        Self::new(shape.0, data)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.data.to_vec()
    }

    /// Element at a multi-index.
    pub fn at(&self, index: &[usize]) -> f32 {
        assert_eq!(index.len(), self.rank(), "index rank");
        let mut flat = 0;
        for (axis, (&i, &d)) in index.iter().zip(self.dims()).enumerate() {
            assert!(i < d, "index {i} out of range on axis {axis} (extent {d})");
            flat = flat * d + i;
        }
        self.data[flat]
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f32] {
        let cols = *self.dims().last().expect("rank >= 1");
        &self.data[i * cols..(i + 1) * cols]
    }

    /// Relabels the element sequence with a new shape. The buffer is shared.
    pub fn reshape(&self, dims: impl Into<Vec<usize>>) -> Result<Tensor> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.numel() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape,
                self.numel(),
                shape,
                shape.numel()
            )));
        }
        Ok(Tensor {
            shape,
            data: Arc::clone(&self.data),
        })
    }

    /// Materialized axis permutation: output axis `k` is input axis `axes[k]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        let valid = axes.len() == rank
            && axes.iter().all(|&a| a < rank && !std::mem::replace(&mut seen[a], true));
        if !valid {
            return Err(Error::InvalidPermutation {
                axes: axes.to_vec(),
                rank,
            });
        }

        let in_strides = self.shape.strides();
        let out_dims: Vec<usize> = axes.iter().map(|&a| self.dims()[a]).collect();
        let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();

        let mut out = Vec::with_capacity(self.numel());
        let mut index = vec![0usize; rank];
        let mut offset = 0usize;
        for _ in 0..self.numel() {
            out.push(self.data[offset]);
            // odometer increment over the output index
            for axis in (0..rank).rev() {
                index[axis] += 1;
                offset += src_strides[axis];
                if index[axis] < out_dims[axis] {
                    break;
                }
                offset -= src_strides[axis] * out_dims[axis];
                index[axis] = 0;
            }
        }
        Ok(Tensor::from_raw(&out_dims, out))
    }

    /// `self[m,k] × other[k,n]`, accumulated in ascending `k`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.as_matrix("matmul lhs")?;
        let (k2, n) = other.as_matrix("matmul rhs")?;
        if k != k2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul inner dims {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let a = &self.data;
        let b = &other.data;
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = a[i * k + p];
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += aip * bv;
                }
            }
        }
        Ok(Tensor::from_raw(&[m, n], out))
    }

    /// `self[n,in] × weight[out,in]ᵀ + bias[out]`, the layout used by
    /// pretrained linear layers.
    pub fn linear(&self, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let (n, d_in) = self.as_matrix("linear input")?;
        let (d_out, w_in) = weight.as_matrix("linear weight")?;
        if d_in != w_in {
            return Err(Error::ShapeMismatch(format!(
                "linear input {:?} vs weight {:?}",
                self.shape, weight.shape
            )));
        }
        if let Some(b) = bias {
            if b.dims() != [d_out] {
                return Err(Error::ShapeMismatch(format!(
                    "linear bias {:?}, expected [{d_out}]",
                    b.shape
                )));
            }
        }
        let mut out = Vec::with_capacity(n * d_out);
        for i in 0..n {
            let x = &self.data[i * d_in..(i + 1) * d_in];
            for o in 0..d_out {
                let mut acc = dot(x, &weight.data[o * d_in..(o + 1) * d_in]);
                if let Some(b) = bias {
                    acc += b.data[o];
                }
                out.push(acc);
            }
        }
        Ok(Tensor::from_raw(&[n, d_out], out))
    }

    /// Concatenates rank-2 tensors along rows.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        let cols = match parts.first() {
            Some(t) => t.as_matrix("concat")?.1,
            None => return Err(Error::InvalidLength("concat of zero tensors".into())),
        };
        let mut rows = 0;
        let mut data = Vec::new();
        for t in parts {
            let (r, c) = t.as_matrix("concat")?;
            if c != cols {
                return Err(Error::ShapeMismatch(format!(
                    "concat column mismatch {c} vs {cols}"
                )));
            }
            rows += r;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor::from_raw(&[rows, cols], data))
    }

    /// Rows `[start, end)` of a rank-2 tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor> {
        let (rows, cols) = self.as_matrix("slice_rows")?;
        if start >= end || end > rows {
            return Err(Error::ShapeMismatch(format!(
                "row range {start}..{end} of {rows}"
            )));
        }
        Ok(Tensor::from_raw(
            &[end - start, cols],
            self.data[start * cols..end * cols].to_vec(),
        ))
    }

    pub(crate) fn as_matrix(&self, what: &str) -> Result<(usize, usize)> {
        match *self.dims() {
            [r, c] => Ok((r, c)),
            _ => Err(Error::ShapeMismatch(format!(
                "{what}: expected rank 2, got {:?}",
                self.shape
            ))),
        }
    }

    pub(crate) fn into_vec(self) -> Vec<f32> {
        self.data.to_vec()
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Bin `i` of an adaptive pool from `len` inputs to `out_len` outputs:
/// `[floor(i·len/out_len), ceil((i+1)·len/out_len))`.
pub fn pool_bin(i: usize, len: usize, out_len: usize) -> (usize, usize) {
    let start = i * len / out_len;
    let end = ((i + 1) * len).div_ceil(out_len);
    (start, end)
}

/// Adaptive average pooling over the rows of `t[L, C]` to `out_len` rows.
///
/// Each output row is the mean of its bin, summed in ascending row order
/// starting from the first row of the bin, then divided by the bin size.
pub fn adaptive_avg_pool_1d(t: &Tensor, out_len: usize) -> Result<Tensor> {
    let (len, cols) = t.as_matrix("adaptive_avg_pool_1d")?;
    if out_len == 0 {
        return Err(Error::InvalidLength("pool output length must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(out_len * cols);
    for i in 0..out_len {
        let (start, end) = pool_bin(i, len, out_len);
        let count = (end - start) as f32;
        for c in 0..cols {
            let mut acc = t.data[start * cols + c];
            for r in start + 1..end {
                acc += t.data[r * cols + c];
            }
            out.push(acc / count);
        }
    }
    Ok(Tensor::from_raw(&[out_len, cols], out))
}
