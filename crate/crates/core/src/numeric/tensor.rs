use std::fmt;

use arrayvec::ArrayVec;

use crate::error::{Error, Result};

/// Extents of a tensor of rank 0 through 3.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Shape(ArrayVec<usize, 3>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.len() > 3 {
            return Err(Error::Argument(format!(
                "tensor rank {} exceeds 3",
                dims.len()
            )));
        }
        Ok(Shape(dims.iter().copied().collect()))
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

    /// `(rows, cols)` view of a rank-1 or rank-2 shape. Rank-1 is a single row.
    pub fn matrix(&self) -> Option<(usize, usize)> {
        match self.0.as_slice() {
            [n] => Some((1, *n)),
            [m, n] => Some((*m, *n)),
            _ => None,
        }
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0.as_slice())
    }
}

/// Dense row-major array of `f64`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::Argument(format!(
                "shape {:?} needs {} values, got {}",
                dims,
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let shape = Shape::new(dims).expect("rank <= 3");
        let n = shape.numel();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: Shape::default(),
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor::new(&[n], data).expect("rank 1")
    }

    /// Builds a matrix from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == n), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::new(&[m, n], data).expect("rank 2")
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
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

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(Error::dim("reshape", self.dims(), dims));
        }
        self.shape = shape;
        Ok(self)
    }

    pub(crate) fn rows_cols(&self, op: &'static str) -> Result<(usize, usize)> {
        self.shape
            .matrix()
            .ok_or_else(|| Error::dim(op, self.dims(), &[]))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let (_, n) = self.shape.matrix().expect("matrix");
        &self.data[i * n..(i + 1) * n]
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.rows_cols("matmul")?;
        let (k2, n) = other.rows_cols("matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", self.dims(), other.dims()));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_nn(&self.data, &other.data, &mut out, m, k, n);
        Tensor::new(&[m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.rows_cols("transpose")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(&[n, m], out)
    }

    pub fn softmax_rows(&self) -> Result<Tensor> {
        let (m, n) = self.rows_cols("softmax_rows")?;
        let mut out = self.data.clone();
        for i in 0..m {
            kernels::softmax_in_place(&mut out[i * n..(i + 1) * n]);
        }
        Tensor::new(self.dims(), out)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Raw slice kernels shared by the eager tensor API and the tape.
pub(crate) mod kernels {
    /// `c += a · b` with `a: [m,k]`, `b: [k,n]`. Zero entries of `a` are
    /// skipped, which leaves `c` bit-unchanged for zero-padded inputs.
    pub fn matmul_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
        for i in 0..m {
            let c_row = &mut c[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for (cv, bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
    }

    /// `c += a · bᵀ` with `a: [m,k]`, `b: [n,k]`.
    pub fn matmul_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            for j in 0..n {
                c[i * n + j] += dot(a_row, &b[j * k..(j + 1) * k]);
            }
        }
    }

    /// `c += aᵀ · b` with `a: [k,m]`, `b: [k,n]`.
    pub fn matmul_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            for i in 0..m {
                let av = a[p * m + i];
                if av == 0.0 {
                    continue;
                }
                let c_row = &mut c[i * n..(i + 1) * n];
                for (cv, bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
    }

    /// Four independent partial sums so the loop vectorises.
    fn dot(x: &[f64], y: &[f64]) -> f64 {
        let mut acc = [0.0; 4];
        let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
        let (xr, yr) = (xc.remainder(), yc.remainder());
        for (a, b) in xc.zip(yc) {
            for l in 0..4 {
                acc[l] += a[l] * b[l];
            }
        }
        let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        for (a, b) in xr.iter().zip(yr) {
            s += a * b;
        }
        s
    }

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
}
