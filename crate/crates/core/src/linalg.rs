//! Minimal dense linear algebra and elementwise nonlinearities.
//!
//! Everything here is deliberately naive: desk-scale sizes, no BLAS, no
//! sparsity. Matrices and vectors validate their contents once at
//! construction so downstream kernels can assume finite entries.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::scalar::Scalar;
use crate::Result;

/// Dense row-major matrix with construction-time finiteness validation.
///
/// Serialized form: `{"rows": r, "cols": c, "data": [row-major numbers]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr<S>", bound(deserialize = "S: Scalar"))]
pub struct RealMatrix<S: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

#[derive(Deserialize)]
struct MatrixRepr<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> TryFrom<MatrixRepr<S>> for RealMatrix<S> {
    type Error = CoreError;

    fn try_from(repr: MatrixRepr<S>) -> Result<Self> {
        RealMatrix::new(repr.rows, repr.cols, repr.data)
    }
}

impl<S: Scalar> RealMatrix<S> {
    /// Build a matrix from row-major data, rejecting length mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::Shape(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(format!(
                "matrix entry at flat index {idx} is {}",
                data[idx]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    /// Build from a closure over (row, col). Entries must come out finite.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> S {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[S] {
        debug_assert!(row < self.rows);
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Standard matrix product; errors on inner-dimension mismatch.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(CoreError::Shape(format!(
                "matmul {}x{} by {}x{}: inner dimensions differ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(CoreError::Shape(format!(
                "add {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| *a + *b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Mean over rows, as a vector of the column dimension.
    pub fn mean_rows(&self) -> Result<RealVector<S>> {
        if self.rows == 0 {
            return Err(CoreError::Shape("mean over zero rows".into()));
        }
        let inv = S::one() / S::of(self.rows as f64);
        let mut acc = vec![S::zero(); self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc[j] += self.data[i * self.cols + j];
            }
        }
        for v in &mut acc {
            *v *= inv;
        }
        RealVector::new(acc)
    }
}

/// Dense vector with construction-time finiteness validation.
///
/// Serialized form: `{"dim": d, "data": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VectorRepr<S>", into = "VectorRepr<S>", bound(deserialize = "S: Scalar"))]
pub struct RealVector<S: Scalar> {
    data: Vec<S>,
}

#[derive(Serialize, Deserialize)]
struct VectorRepr<S> {
    dim: usize,
    data: Vec<S>,
}

impl<S: Scalar> From<RealVector<S>> for VectorRepr<S> {
    fn from(v: RealVector<S>) -> Self {
        VectorRepr {
            dim: v.data.len(),
            data: v.data,
        }
    }
}

impl<S: Scalar> TryFrom<VectorRepr<S>> for RealVector<S> {
    type Error = CoreError;

    fn try_from(repr: VectorRepr<S>) -> Result<Self> {
        if repr.data.len() != repr.dim {
            return Err(CoreError::Shape(format!(
                "vector data length {} does not match dim {}",
                repr.data.len(),
                repr.dim
            )));
        }
        RealVector::new(repr.data)
    }
}

impl<S: Scalar> RealVector<S> {
    pub fn new(data: Vec<S>) -> Result<Self> {
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(format!(
                "vector entry {idx} is {}",
                data[idx]
            )));
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![S::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn get(&self, i: usize) -> S {
        self.data[i]
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(CoreError::Shape(format!(
                "vector add {} by {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a + *b)
                .collect(),
        })
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(CoreError::Shape(format!(
                "hadamard {} by {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a * *b)
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> Result<S> {
        if self.dim() != other.dim() {
            return Err(CoreError::Shape(format!(
                "dot {} by {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| *a * *b)
            .sum())
    }

    pub fn norm(&self) -> S {
        self.data.iter().map(|v| *v * *v).sum::<S>().sqrt()
    }

    /// Row-vector times matrix: `self (1xd) * m (dxc) -> (1xc)`.
    pub fn vec_mat(&self, m: &RealMatrix<S>) -> Result<Self> {
        if self.dim() != m.rows() {
            return Err(CoreError::Shape(format!(
                "vec_mat dim {} by {}x{}",
                self.dim(),
                m.rows(),
                m.cols()
            )));
        }
        let mut out = vec![S::zero(); m.cols()];
        for (k, v) in self.data.iter().enumerate() {
            for j in 0..m.cols() {
                out[j] += *v * m.get(k, j);
            }
        }
        Ok(Self { data: out })
    }
}

/// Numerically stable softmax (max-subtraction).
///
/// Entries land in (0,1) and sum to 1 up to rounding; errors on the empty
/// vector.
pub fn softmax<S: Scalar>(x: &RealVector<S>) -> Result<RealVector<S>> {
    if x.dim() == 0 {
        return Err(CoreError::Shape("softmax of empty vector".into()));
    }
    let max = x
        .data()
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<S> = x.data().iter().map(|v| (*v - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    RealVector::new(exps.into_iter().map(|e| e / sum).collect())
}

/// Elementwise logistic function.
pub fn sigmoid<S: Scalar>(x: &RealVector<S>) -> RealVector<S> {
    x.map(sigmoid_scalar)
}

pub fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Elementwise rectifier.
pub fn relu<S: Scalar>(x: &RealVector<S>) -> RealVector<S> {
    x.map(|v| v.max(S::zero()))
}

/// Cosine similarity of two equal-dimension vectors.
///
/// A zero-norm input is a degenerate-input error rather than a silent 0: the
/// angle is undefined and callers must not mistake it for orthogonality.
pub fn cosine_similarity<S: Scalar>(a: &RealVector<S>, b: &RealVector<S>) -> Result<S> {
    if a.dim() != b.dim() {
        return Err(CoreError::Shape(format!(
            "cosine of dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == S::zero() || nb == S::zero() {
        return Err(CoreError::Degenerate(
            "cosine similarity of zero-norm vector".into(),
        ));
    }
    Ok(a.dot(b)? / (na * nb))
}

/// Default step for [`finite_diff_gradient`]: balances truncation against
/// round-off for f64 arguments of order one.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient of a scalar function.
///
/// Each coordinate is estimated as `(f(x + h e_i) - f(x - h e_i)) / 2h`.
/// Evaluation errors and non-finite function values propagate.
pub fn finite_diff_gradient<S: Scalar>(
    mut f: impl FnMut(&RealVector<S>) -> Result<S>,
    x: &RealVector<S>,
    h: S,
) -> Result<RealVector<S>> {
    if h <= S::zero() {
        return Err(CoreError::Contract("finite-difference step must be > 0".into()));
    }
    let mut grad = Vec::with_capacity(x.dim());
    let mut probe = x.data().to_vec();
    for i in 0..x.dim() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = eval_finite(&mut f, &probe)?;
        probe[i] = orig - h;
        let fm = eval_finite(&mut f, &probe)?;
        probe[i] = orig;
        grad.push((fp - fm) / (S::of(2.0) * h));
    }
    RealVector::new(grad)
}

fn eval_finite<S: Scalar>(
    f: &mut impl FnMut(&RealVector<S>) -> Result<S>,
    data: &[S],
) -> Result<S> {
    let v = RealVector::new(data.to_vec())?;
    let y = f(&v)?;
    if !y.is_finite() {
        return Err(CoreError::NonFinite(format!(
            "objective returned {y} during finite differencing"
        )));
    }
    Ok(y)
}
