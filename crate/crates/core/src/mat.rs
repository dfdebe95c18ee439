//! Dense row-major matrices and the slice kernels shared by the rest of the
//! crate.
//!
//! Kernels use a fixed accumulation order (4-way unrolled where it matters),
//! so results are bit-reproducible across runs and thread counts.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Dense matrix, 64-bit reals, row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "DenseMat: data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        DenseMat { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DenseMat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `self * v`. Panics on dimension mismatch, naming both shapes.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        matvec_into(&self.data, self.rows, self.cols, v, &mut out);
        out
    }

    /// `self^T * v`. Panics on dimension mismatch, naming both shapes.
    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        matvec_t_into(&self.data, self.rows, self.cols, v, &mut out);
        out
    }

    pub fn transpose(&self) -> DenseMat {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn scaled(&self, k: f64) -> DenseMat {
        let mut out = self.clone();
        for x in &mut out.data {
            *x *= k;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            for (c, &x) in row.iter().enumerate() {
                sq[c] += x * x;
            }
        }
        sq.iter().map(|&s| math::sqrt(s)).collect()
    }

    /// Rescales every column to unit l2 norm. Panics on a zero column.
    pub fn normalize_columns(&mut self) {
        let norms = self.column_norms();
        assert!(
            norms.iter().all(|&n| n > 0.0),
            "normalize_columns: zero column"
        );
        for r in 0..self.rows {
            let base = r * self.cols;
            for c in 0..self.cols {
                self.data[base + c] /= norms[c];
            }
        }
    }
}

/// Dot product with a fixed 4-accumulator order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch {} vs {}", a.len(), b.len());
    let mut acc0 = 0.0;
    let mut acc1 = 0.0;
    let mut acc2 = 0.0;
    let mut acc3 = 0.0;
    let ac = a.chunks_exact(4);
    let bc = b.chunks_exact(4);
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (ca, cb) in ac.zip(bc) {
        acc0 += ca[0] * cb[0];
        acc1 += ca[1] * cb[1];
        acc2 += ca[2] * cb[2];
        acc3 += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for (x, y) in ar.iter().zip(br.iter()) {
        tail += x * y;
    }
    (acc0 + acc1) + (acc2 + acc3) + tail
}

/// `y += a * x`.
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    assert_eq!(y.len(), x.len(), "axpy: length mismatch {} vs {}", y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * xi;
    }
}

pub fn sq_norm(v: &[f64]) -> f64 {
    dot(v, v)
}

/// `sum_i (a_i - b_i)^2` with the same accumulation order as `dot`.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "sq_dist: length mismatch {} vs {}", a.len(), b.len());
    let mut acc0 = 0.0;
    let mut acc1 = 0.0;
    let mut acc2 = 0.0;
    let mut acc3 = 0.0;
    let ac = a.chunks_exact(4);
    let bc = b.chunks_exact(4);
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (ca, cb) in ac.zip(bc) {
        let d0 = ca[0] - cb[0];
        let d1 = ca[1] - cb[1];
        let d2 = ca[2] - cb[2];
        let d3 = ca[3] - cb[3];
        acc0 += d0 * d0;
        acc1 += d1 * d1;
        acc2 += d2 * d2;
        acc3 += d3 * d3;
    }
    let mut tail = 0.0;
    for (x, y) in ar.iter().zip(br.iter()) {
        let d = x - y;
        tail += d * d;
    }
    (acc0 + acc1) + (acc2 + acc3) + tail
}

pub fn l2_norm(v: &[f64]) -> f64 {
    math::sqrt(sq_norm(v))
}

/// Row-major matrix times vector, written into `out`.
pub fn matvec_into(w: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    assert_eq!(
        v.len(),
        cols,
        "matvec: matrix is {rows}x{cols} but vector has length {}",
        v.len()
    );
    assert_eq!(out.len(), rows);
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&w[r * cols..(r + 1) * cols], v);
    }
}

/// Transposed row-major matrix times vector (`w^T v`), written into `out`.
pub fn matvec_t_into(w: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    assert_eq!(
        v.len(),
        rows,
        "matvec_t: matrix is {rows}x{cols} but vector has length {}",
        v.len()
    );
    assert_eq!(out.len(), cols);
    out.fill(0.0);
    for r in 0..rows {
        axpy(out, v[r], &w[r * cols..(r + 1) * cols]);
    }
}

/// Soft threshold `sign(v) * max(|v| - lam, 0)` elementwise.
///
/// Panics on negative `lam`.
pub fn soft_threshold(v: &[f64], lam: f64) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    soft_threshold_into(v, lam, &mut out);
    out
}

pub fn soft_threshold_into(v: &[f64], lam: f64, out: &mut [f64]) {
    assert!(lam >= 0.0, "soft_threshold: negative threshold {lam}");
    assert_eq!(out.len(), v.len());
    for (o, &x) in out.iter_mut().zip(v.iter()) {
        let mag = math::abs(x) - lam;
        *o = if mag > 0.0 { math::sign(x) * mag } else { 0.0 };
    }
}

/// Elementwise logistic function.
pub fn sigmoid_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| math::sigmoid(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    #[test]
    fn matvec_identity() {
        let id = DenseMat::identity(2);
        assert_eq!(id.matvec(&[3.0, -1.0]), vec![3.0, -1.0]);
    }

    #[test]
    fn matvec_2x2() {
        let w = DenseMat::new(2, 2, vec![1.0, 2.0, 0.0, 1.0]);
        assert_eq!(w.matvec(&[1.0, 1.0]), vec![3.0, 1.0]);
    }

    #[test]
    fn matvec_matches_naive_loops() {
        let mut s = StreamKey::root(11).stream();
        let rows = 5;
        let cols = 3;
        let w = DenseMat::from_fn(rows, cols, |_, _| s.normal());
        let v: Vec<f64> = (0..cols).map(|_| s.normal()).collect();
        let fast = w.matvec(&v);
        for r in 0..rows {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += w.get(r, c) * v[c];
            }
            assert!((fast[r] - acc).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "5x3")]
    fn matvec_shape_mismatch_names_shapes() {
        DenseMat::zeros(5, 3).matvec(&[1.0, 2.0]);
    }

    #[test]
    fn matvec_t_matches_transpose() {
        let mut s = StreamKey::root(12).stream();
        let w = DenseMat::from_fn(4, 6, |_, _| s.normal());
        let v: Vec<f64> = (0..4).map(|_| s.normal()).collect();
        let a = w.matvec_t(&v);
        let b = w.transpose().matvec(&v);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_threshold_identity_at_zero() {
        assert_eq!(soft_threshold(&[1.0, -2.0, 0.5], 0.0), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn soft_threshold_definition() {
        let out = soft_threshold(&[1.0, -0.2, 0.6], 0.5);
        assert!((out[0] - 0.5).abs() < 1e-15);
        assert_eq!(out[1], 0.0);
        assert!((out[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn soft_threshold_full_shrinkage() {
        assert_eq!(soft_threshold(&[1.0, -2.0], 3.0), vec![0.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "negative threshold")]
    fn soft_threshold_rejects_negative_lam() {
        soft_threshold(&[1.0], -0.1);
    }

    #[test]
    fn normalize_columns_unit_norm() {
        let mut s = StreamKey::root(13).stream();
        let mut w = DenseMat::from_fn(7, 5, |_, _| s.normal());
        w.normalize_columns();
        for n in w.column_norms() {
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
