use std::fmt;

use super::{Scalar, TensorError};

/// Dense row-major array. Rank 0 (`shape == []`) is a scalar.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        if numel(&shape) != data.len() {
            return Err(TensorError::ValueCount {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a [rows×cols] matrix from `f64` rows; panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend(row.iter().map(|&v| T::lit(v)));
        }
        Self {
            shape: vec![rows.len(), cols],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T, TensorError> {
        if self.data.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: self.shape.clone(),
            });
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<(usize, usize), TensorError> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(TensorError::Rank {
                op,
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    fn dims1(&self, op: &'static str) -> Result<usize, TensorError> {
        match self.shape[..] {
            [n] => Ok(n),
            _ => Err(TensorError::Rank {
                op,
                expected: 1,
                shape: self.shape.clone(),
            }),
        }
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<(), TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    fn zip(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self, TensorError> {
        self.same_shape(other, op)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// In-place `self += c · other`.
    pub fn axpy(&mut self, c: T, other: &Self) -> Result<(), TensorError> {
        self.same_shape(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + c * b;
        }
        Ok(())
    }

    /// `op(self) · op(other)` where `op` optionally transposes a matrix.
    pub fn matmul_t(&self, ta: bool, other: &Self, tb: bool) -> Result<Self, TensorError> {
        let (ar, ac) = self.dims2("matmul")?;
        let (br, bc) = other.dims2("matmul")?;
        let (m, k, a_strides) = if ta {
            (ac, ar, (1, ac as isize))
        } else {
            (ar, ac, (ac as isize, 1))
        };
        let (k2, n, b_strides) = if tb {
            (bc, br, (1, bc as isize))
        } else {
            (br, bc, (bc as isize, 1))
        };
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        if k > 0 {
            T::gemm(m, k, n, &self.data, a_strides, &other.data, b_strides, &mut out);
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, TensorError> {
        self.matmul_t(false, other, false)
    }

    pub fn transpose(&self) -> Result<Self, TensorError> {
        let (r, c) = self.dims2("transpose")?;
        let mut data = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                data.push(self.data[i * c + j]);
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data,
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self, TensorError> {
        if numel(shape) != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape.clone(),
                right: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Adds `bias` [F] to every row of `self` [P×F].
    pub fn add_row_bias(&self, bias: &Self) -> Result<Self, TensorError> {
        let (_, f) = self.dims2("add_row_bias")?;
        if bias.dims1("add_row_bias")? != f {
            return Err(TensorError::ShapeMismatch {
                op: "add_row_bias",
                left: self.shape.clone(),
                right: bias.shape.clone(),
            });
        }
        let mut data = self.data.clone();
        for row in data.chunks_mut(f.max(1)) {
            for (v, &b) in row.iter_mut().zip(&bias.data) {
                *v = *v + b;
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Column sums: [P×F] → [F].
    pub fn sum_rows(&self) -> Result<Self, TensorError> {
        let (_, f) = self.dims2("sum_rows")?;
        let mut out = vec![T::zero(); f];
        for row in self.data.chunks(f.max(1)) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o = *o + v;
            }
        }
        Ok(Self::vector(out))
    }

    /// Repeats `self` [F] as every row of a [rows×F] matrix.
    pub fn broadcast_rows(&self, rows: usize) -> Result<Self, TensorError> {
        let f = self.dims1("broadcast_rows")?;
        let mut data = Vec::with_capacity(rows * f);
        for _ in 0..rows {
            data.extend_from_slice(&self.data);
        }
        Ok(Self {
            shape: vec![rows, f],
            data,
        })
    }

    /// Row sums: [P×C] → [P].
    pub fn sum_cols(&self) -> Result<Self, TensorError> {
        let (_, c) = self.dims2("sum_cols")?;
        if c == 0 {
            return Ok(Self::zeros(&[self.shape[0]]));
        }
        Ok(Self::vector(
            self.data.chunks(c).map(|row| row.iter().copied().sum()).collect(),
        ))
    }

    /// Repeats each entry of `self` [P] across `cols` columns: [P×cols].
    pub fn broadcast_cols(&self, cols: usize) -> Result<Self, TensorError> {
        let p = self.dims1("broadcast_cols")?;
        let mut data = Vec::with_capacity(p * cols);
        for &v in &self.data {
            data.extend(std::iter::repeat(v).take(cols));
        }
        Ok(Self {
            shape: vec![p, cols],
            data,
        })
    }

    pub fn sum(&self) -> Self {
        Self::scalar(self.data.iter().copied().sum())
    }

    /// Spreads a single-element tensor over `shape`.
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Self, TensorError> {
        let v = self.item()?;
        Ok(Self::full(shape, v))
    }

    pub fn relu(&self) -> Self {
        self.map(|v| if v > T::zero() { v } else { T::zero() })
    }

    /// 1 where `self > 0`, else 0 (the subgradient at 0 is 0).
    pub fn relu_mask(&self) -> Self {
        self.map(|v| if v > T::zero() { T::one() } else { T::zero() })
    }

    pub fn exp(&self) -> Self {
        self.map(|v| v.exp())
    }

    /// Per-column maximum over the rows of a [P×F] matrix, with ties going to
    /// the lowest row index.
    pub fn max_over_points(&self) -> Result<(Self, Vec<usize>), TensorError> {
        let (p, f) = self.dims2("max_over_points")?;
        if p == 0 {
            return Err(TensorError::Empty {
                op: "max_over_points",
            });
        }
        let mut argmax = vec![0usize; f];
        let mut best = self.data[..f].to_vec();
        for i in 1..p {
            let row = &self.data[i * f..(i + 1) * f];
            for j in 0..f {
                if row[j] > best[j] {
                    best[j] = row[j];
                    argmax[j] = i;
                }
            }
        }
        Ok((Self::vector(best), argmax))
    }

    /// Picks `self[idx[j], j]` for each column `j`: [P×F] → [F].
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Self, TensorError> {
        let (p, f) = self.dims2("gather_rows")?;
        if idx.len() != f || idx.iter().any(|&i| i >= p) {
            return Err(TensorError::ShapeMismatch {
                op: "gather_rows",
                left: self.shape.clone(),
                right: vec![idx.len()],
            });
        }
        Ok(Self::vector(
            idx.iter().enumerate().map(|(j, &i)| self.data[i * f + j]).collect(),
        ))
    }

    /// Adjoint of [`Tensor::gather_rows`]: places `self[j]` at `(idx[j], j)`
    /// of a zero [rows×F] matrix.
    pub fn scatter_rows(&self, idx: &[usize], rows: usize) -> Result<Self, TensorError> {
        let f = self.dims1("scatter_rows")?;
        if idx.len() != f || idx.iter().any(|&i| i >= rows) {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_rows",
                left: self.shape.clone(),
                right: vec![rows, idx.len()],
            });
        }
        let mut out = vec![T::zero(); rows * f];
        for (j, &i) in idx.iter().enumerate() {
            out[i * f + j] = self.data[j];
        }
        Ok(Self {
            shape: vec![rows, f],
            data: out,
        })
    }

    pub fn concat_cols(&self, other: &Self) -> Result<Self, TensorError> {
        let (p, fa) = self.dims2("concat_cols")?;
        let (q, fb) = other.dims2("concat_cols")?;
        if p != q {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut data = Vec::with_capacity(p * (fa + fb));
        for i in 0..p {
            data.extend_from_slice(&self.data[i * fa..(i + 1) * fa]);
            data.extend_from_slice(&other.data[i * fb..(i + 1) * fb]);
        }
        Ok(Self {
            shape: vec![p, fa + fb],
            data,
        })
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Self, TensorError> {
        let (p, f) = self.dims2("slice_cols")?;
        if start > end || end > f {
            return Err(TensorError::ShapeMismatch {
                op: "slice_cols",
                left: self.shape.clone(),
                right: vec![start, end],
            });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(p * w);
        for i in 0..p {
            data.extend_from_slice(&self.data[i * f + start..i * f + end]);
        }
        Ok(Self {
            shape: vec![p, w],
            data,
        })
    }

    /// Adjoint of [`Tensor::slice_cols`]: embeds `self` at column `start` of a
    /// zero matrix with `total` columns.
    pub fn pad_cols(&self, start: usize, total: usize) -> Result<Self, TensorError> {
        let (p, w) = self.dims2("pad_cols")?;
        if start + w > total {
            return Err(TensorError::ShapeMismatch {
                op: "pad_cols",
                left: self.shape.clone(),
                right: vec![start, total],
            });
        }
        let mut data = vec![T::zero(); p * total];
        for i in 0..p {
            data[i * total + start..i * total + start + w]
                .copy_from_slice(&self.data[i * w..(i + 1) * w]);
        }
        Ok(Self {
            shape: vec![p, total],
            data,
        })
    }

    /// Row-wise log-softmax of a [P×C] matrix, stabilized by the row maximum.
    pub fn log_softmax_rows(&self) -> Result<Self, TensorError> {
        let (_, c) = self.dims2("log_softmax")?;
        if c == 0 {
            return Err(TensorError::Empty { op: "log_softmax" });
        }
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(c) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            data.extend(row.iter().map(|&v| v - lse));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }
}
