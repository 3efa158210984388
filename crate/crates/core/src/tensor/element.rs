use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

/// Scalar type a [`Tensor`](super::Tensor) can hold.
///
/// Only `f32` (training, inference) and `f64` (gradient checks, oracles)
/// implement it.
pub trait Element: Float + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static {
    const DTYPE: DType;

    fn from_f64(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` on strided row/column views.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`. Strides are in elements.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: MatRef<'_, Self>,
        b: MatRef<'_, Self>,
        beta: Self,
        c: MatMut<'_, Self>,
    );
}

/// Read-only strided matrix view.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub row_stride: isize,
    pub col_stride: isize,
}

pub struct MatMut<'a, T> {
    pub data: &'a mut [T],
    pub row_stride: isize,
    pub col_stride: isize,
}

impl<'a, T> MatRef<'a, T> {
    /// Row-major `rows x cols` view.
    pub fn rows(data: &'a [T], cols: usize) -> Self {
        Self {
            data,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [T], cols: usize) -> Self {
        Self {
            data,
            row_stride: 1,
            col_stride: cols as isize,
        }
    }

    fn max_offset(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            return 0;
        }
        (rows as isize - 1) as usize * self.row_stride as usize
            + (cols as isize - 1) as usize * self.col_stride as usize
    }
}

impl<'a, T> MatMut<'a, T> {
    pub fn rows(data: &'a mut [T], cols: usize) -> Self {
        Self {
            data,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    fn max_offset(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            return 0;
        }
        (rows - 1) * self.row_stride as usize + (cols - 1) * self.col_stride as usize
    }
}

fn check_bounds<T>(m: usize, k: usize, n: usize, a: &MatRef<'_, T>, b: &MatRef<'_, T>, c: &MatMut<'_, T>) {
    assert!(a.row_stride >= 0 && a.col_stride >= 0);
    assert!(b.row_stride >= 0 && b.col_stride >= 0);
    assert!(c.row_stride >= 0 && c.col_stride >= 0);
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!(a.max_offset(m, k) < a.data.len(), "gemm: lhs view out of bounds");
        assert!(b.max_offset(k, n) < b.data.len(), "gemm: rhs view out of bounds");
    }
    assert!(c.max_offset(m, n) < c.data.len(), "gemm: output view out of bounds");
}

impl Element for f32 {
    const DTYPE: DType = DType::F32;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: MatRef<'_, f32>,
        b: MatRef<'_, f32>,
        beta: f32,
        c: MatMut<'_, f32>,
    ) {
        check_bounds(m, k, n, &a, &b, &c);
        // SAFETY: every view was bounds-checked above for the m x k, k x n, m x n extents.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
                a.data.as_ptr(),
                a.row_stride,
                a.col_stride,
                b.data.as_ptr(),
                b.row_stride,
                b.col_stride,
                beta,
                c.data.as_mut_ptr(),
                c.row_stride,
                c.col_stride,
            );
        }
    }
}

impl Element for f64 {
    const DTYPE: DType = DType::F64;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: MatRef<'_, f64>,
        b: MatRef<'_, f64>,
        beta: f64,
        c: MatMut<'_, f64>,
    ) {
        check_bounds(m, k, n, &a, &b, &c);
        // SAFETY: see the f32 implementation.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.data.as_ptr(),
                a.row_stride,
                a.col_stride,
                b.data.as_ptr(),
                b.row_stride,
                b.col_stride,
                beta,
                c.data.as_mut_ptr(),
                c.row_stride,
                c.col_stride,
            );
        }
    }
}
