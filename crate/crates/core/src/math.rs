//! Dense row-major matrices and the few vector kernels the encoder needs.
//!
//! Every kernel fixes its floating-point summation order. Results must be
//! byte-identical across runs for the same inputs, and several callers rely on
//! two different code paths reducing in exactly the same order, so the
//! four-accumulator layout of [`dot`] is part of the contract, not a detail.

/// Dot product with four independent accumulators over index classes
/// i mod 4, combined as (a0 + a1) + (a2 + a3), then the tail in order.
/// The split breaks the serial dependency chain; keep it in sync with
/// everything that must match `dot` bitwise.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot length mismatch");
    let n4 = a.len() & !3;
    let (mut a0, mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < n4 {
        a0 += a[i] * b[i];
        a1 += a[i + 1] * b[i + 1];
        a2 += a[i + 2] * b[i + 2];
        a3 += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut acc = (a0 + a1) + (a2 + a3);
    for k in n4..a.len() {
        acc += a[k] * b[k];
    }
    acc
}

/// out += s * x, elementwise.
pub fn axpy(s: f64, x: &[f64], out: &mut [f64]) {
    assert_eq!(x.len(), out.len(), "axpy length mismatch");
    for (o, v) in out.iter_mut().zip(x) {
        *o += s * v;
    }
}

/// Euclidean norm, reduced in `dot` order.
pub fn l2_norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from row-major data; `data.len()` must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape/data mismatch");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// out[r] += row(r) . x for every row.
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec input length");
        assert_eq!(out.len(), self.rows, "matvec output length");
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_add(x, &mut out);
        out
    }

    /// out[r] += columns [col0, col0 + x.len()) of row r, dotted with x.
    pub fn matvec_block_add(&self, col0: usize, x: &[f64], out: &mut [f64]) {
        assert!(col0 + x.len() <= self.cols, "column block out of range");
        assert_eq!(out.len(), self.rows, "matvec output length");
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(&self.row(r)[col0..col0 + x.len()], x);
        }
    }

    /// out += A^T x, accumulated row by row as out += x[r] * row(r).
    pub fn matvec_t_add(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.rows, "transpose matvec input length");
        assert_eq!(out.len(), self.cols, "transpose matvec output length");
        for (r, &xr) in x.iter().enumerate() {
            axpy(xr, self.row(r), out);
        }
    }

    /// out += (columns [col0, col0 + out.len()) of A)^T x.
    pub fn matvec_t_block_add(&self, col0: usize, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.rows, "transpose matvec input length");
        assert!(col0 + out.len() <= self.cols, "column block out of range");
        for (r, &xr) in x.iter().enumerate() {
            axpy(xr, &self.row(r)[col0..col0 + out.len()], out);
        }
    }

    /// A += a b^T.
    pub fn outer_add(&mut self, a: &[f64], b: &[f64]) {
        self.outer_add_block(0, a, b);
        debug_assert_eq!(b.len(), self.cols, "outer b length");
    }

    /// Columns [col0, col0 + b.len()) of A += a b^T. Each entry updates
    /// independently, so block decomposition is exact.
    pub fn outer_add_block(&mut self, col0: usize, a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), self.rows, "outer a length");
        assert!(col0 + b.len() <= self.cols, "column block out of range");
        for (r, &ar) in a.iter().enumerate() {
            axpy(ar, b, &mut self.row_mut(r)[col0..col0 + b.len()]);
        }
    }

    /// A += s * B, elementwise.
    pub fn add_scaled(&mut self, s: f64, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        axpy(s, &other.data, &mut self.data);
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// Sum of squared entries, reduced in `dot` order over the flat data.
    pub fn sq_sum(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
