//! Minimal CPU layers with explicit backward passes.
//!
//! Forward calls return a cache; the matching backward call consumes it and
//! accumulates parameter gradients in place.

mod conv;
mod param;
mod resize;

pub use conv::{Conv2d, ConvCache};
pub use param::{Param, ParamSet};
pub use resize::{resize_bilinear, resize_bilinear_backward, ResizePlan};

use crate::tensor::Tensor3;

pub fn relu_in_place(t: &mut Tensor3) {
    for v in &mut t.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Gradient through a ReLU given its output.
pub fn relu_backward(output: &Tensor3, grad: &mut Tensor3) {
    for (g, &o) in grad.data.iter_mut().zip(&output.data) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `C = A · B` (or `C += A · B` when `accumulate`), all row-major.
/// `a_t` / `b_t` read A / B transposed from their stored layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_t: bool,
    b: &[f32],
    b_t: bool,
    c: &mut [f32],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths are checked above against the strides passed in.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
