//! Thin safe wrappers over `matrixmultiply::dgemm` for row-major buffers.

/// `out (rows×n) = x (rows×k) · wᵀ` where `w` is `n×k` row-major.
pub fn matmul_xwt(x: &[f64], w: &[f64], rows: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(x.len(), rows * k);
    debug_assert_eq!(w.len(), n * k);
    debug_assert_eq!(out.len(), rows * n);
    if rows == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.fill(0.0);
        return;
    }
    // SAFETY: lengths checked above; strides describe the row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            rows,
            k,
            n,
            1.0,
            x.as_ptr(),
            k as isize,
            1,
            w.as_ptr(),
            1,
            k as isize,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `acc (n×k) += gᵀ (n×rows) · x (rows×k)`.
pub fn matmul_gtx_acc(g: &[f64], x: &[f64], rows: usize, n: usize, k: usize, acc: &mut [f64]) {
    debug_assert_eq!(g.len(), rows * n);
    debug_assert_eq!(x.len(), rows * k);
    debug_assert_eq!(acc.len(), n * k);
    if rows == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: see above.
    unsafe {
        matrixmultiply::dgemm(
            n,
            rows,
            k,
            1.0,
            g.as_ptr(),
            1,
            n as isize,
            x.as_ptr(),
            k as isize,
            1,
            1.0,
            acc.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

/// `out (rows×k) = g (rows×n) · w (n×k)`.
pub fn matmul_gw(g: &[f64], w: &[f64], rows: usize, n: usize, k: usize, out: &mut [f64]) {
    debug_assert_eq!(g.len(), rows * n);
    debug_assert_eq!(w.len(), n * k);
    debug_assert_eq!(out.len(), rows * k);
    if rows == 0 || k == 0 {
        return;
    }
    if n == 0 {
        out.fill(0.0);
        return;
    }
    // SAFETY: see above.
    unsafe {
        matrixmultiply::dgemm(
            rows,
            n,
            k,
            1.0,
            g.as_ptr(),
            n as isize,
            1,
            w.as_ptr(),
            k as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}
