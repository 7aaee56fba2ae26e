use crate::error::{CoreError, Result};
use crate::real::{real, Real};
use rand::Rng;

/// Dense row-major tensor of [`Real`] values.
///
/// Invariant: `shape.iter().product() == data.len()` and every extent is
/// positive. Finiteness is the caller's concern at construction; layer code
/// preserves it (see the sigmoid clamp and loss clamping).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<E = f32> {
    shape: Vec<usize>,
    data: Vec<E>,
}

impl<E: Real> Tensor<E> {
    pub fn new(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(CoreError::InvalidArgument(format!(
                "zero extent in shape {shape:?}"
            )));
        }
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(CoreError::ShapeMismatch {
                context: "tensor construction",
                expected: shape,
                got: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![E::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], value: E) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> E) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// He-style fan-in scaled uniform initialization: U(-b, b) with
    /// b = sqrt(6 / fan_in).
    pub fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        Self::from_fn(shape, |_| real(rng.gen_range(-bound..bound)))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(CoreError::ShapeMismatch {
                context: "reshape",
                expected: shape,
                got: self.shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Number of rows of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    /// Number of columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[E] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn at2(&self, r: usize, c: usize) -> E {
        self.data[r * self.shape[1] + c]
    }

    pub fn set2(&mut self, r: usize, c: usize, v: E) {
        self.data[r * self.shape[1] + c] = v;
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(E, E) -> E) -> Result<Self> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch {
                context: "elementwise op",
                expected: self.shape.clone(),
                got: other.shape.clone(),
            });
        }
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

    pub fn scale_in_place(&mut self, s: E) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }

    /// `self += s * other`, shapes must match.
    pub fn axpy_in_place(&mut self, s: E, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch {
                context: "axpy",
                expected: self.shape.clone(),
                got: other.shape.clone(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + s * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<E> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch {
                context: "dot",
                expected: self.shape.clone(),
                got: other.shape.clone(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    /// `(m, k) x (k, n) -> (m, n)`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (rhs.rows(), rhs.cols());
        if k != k2 {
            return Err(CoreError::ShapeMismatch {
                context: "matmul",
                expected: self.shape.clone(),
                got: rhs.shape.clone(),
            });
        }
        let mut out = vec![E::zero(); m * n];
        for i in 0..m {
            for l in 0..k {
                let a = self.data[i * k + l];
                if a == E::zero() {
                    continue;
                }
                let rrow = &rhs.data[l * n..(l + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `(m, k) x (n, k)^T -> (m, n)`; avoids materializing the transpose.
    pub fn matmul_nt(&self, rhs: &Self) -> Result<Self> {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (rhs.rows(), rhs.cols());
        if k != k2 {
            return Err(CoreError::ShapeMismatch {
                context: "matmul_nt",
                expected: self.shape.clone(),
                got: rhs.shape.clone(),
            });
        }
        let mut out = vec![E::zero(); m * n];
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &rhs.data[j * k..(j + 1) * k];
                let mut acc = E::zero();
                for (&a, &b) in arow.iter().zip(brow) {
                    acc = acc + a * b;
                }
                out[i * n + j] = acc;
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `(k, m)^T x (k, n) -> (m, n)`; avoids materializing the transpose.
    pub fn matmul_tn(&self, rhs: &Self) -> Result<Self> {
        let (k, m) = (self.rows(), self.cols());
        let (k2, n) = (rhs.rows(), rhs.cols());
        if k != k2 {
            return Err(CoreError::ShapeMismatch {
                context: "matmul_tn",
                expected: self.shape.clone(),
                got: rhs.shape.clone(),
            });
        }
        let mut out = vec![E::zero(); m * n];
        for l in 0..k {
            let arow = &self.data[l * m..(l + 1) * m];
            let brow = &rhs.data[l * n..(l + 1) * n];
            for (i, &a) in arow.iter().enumerate() {
                if a == E::zero() {
                    continue;
                }
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Add a length-`n` bias vector to every row of an `(m, n)` tensor.
    pub fn add_row_bias(&mut self, bias: &Self) -> Result<()> {
        let n = self.cols();
        if bias.len() != n {
            return Err(CoreError::ShapeMismatch {
                context: "row bias",
                expected: vec![n],
                got: bias.shape.clone(),
            });
        }
        for row in self.data.chunks_mut(n) {
            for (v, &b) in row.iter_mut().zip(&bias.data) {
                *v = *v + b;
            }
        }
        Ok(())
    }

    /// Sum over rows of an `(m, n)` tensor, yielding shape `(n)`.
    pub fn sum_rows(&self) -> Self {
        let n = self.cols();
        let mut out = vec![E::zero(); n];
        for row in self.data.chunks(n) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o = *o + v;
            }
        }
        Self {
            shape: vec![n],
            data: out,
        }
    }
}
