use crate::tensor::Tensor3;

/// Source taps for one axis of a bilinear resize with half-pixel centers
/// (corner alignment off).
#[derive(Debug, Clone)]
struct AxisTaps {
    lo: Vec<usize>,
    hi: Vec<usize>,
    w_hi: Vec<f32>,
}

impl AxisTaps {
    fn new(src: usize, dst: usize) -> Self {
        let scale = src as f64 / dst as f64;
        let mut taps = AxisTaps {
            lo: Vec::with_capacity(dst),
            hi: Vec::with_capacity(dst),
            w_hi: Vec::with_capacity(dst),
        };
        for i in 0..dst {
            let s = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (s.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            taps.lo.push(lo);
            taps.hi.push(hi);
            taps.w_hi.push((s - lo as f64) as f32);
        }
        taps
    }
}

/// Precomputed taps for resizing `src_h × src_w` planes to `dst_h × dst_w`.
#[derive(Debug, Clone)]
pub struct ResizePlan {
    src: (usize, usize),
    dst: (usize, usize),
    rows: AxisTaps,
    cols: AxisTaps,
}

impl ResizePlan {
    pub fn new(src_h: usize, src_w: usize, dst_h: usize, dst_w: usize) -> Self {
        Self {
            src: (src_h, src_w),
            dst: (dst_h, dst_w),
            rows: AxisTaps::new(src_h, dst_h),
            cols: AxisTaps::new(src_w, dst_w),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.src == self.dst
    }

    pub fn forward(&self, input: &Tensor3) -> Tensor3 {
        assert_eq!((input.height, input.width), self.src);
        if self.is_identity() {
            return input.clone();
        }
        let (dh, dw) = self.dst;
        let mut out = Tensor3::zeros(input.channels, dh, dw);
        for c in 0..input.channels {
            let src = input.plane(c);
            let dst = out.plane_mut(c);
            let sw = self.src.1;
            for y in 0..dh {
                let (r0, r1, wy) = (self.rows.lo[y], self.rows.hi[y], self.rows.w_hi[y]);
                for x in 0..dw {
                    let (c0, c1, wx) = (self.cols.lo[x], self.cols.hi[x], self.cols.w_hi[x]);
                    let top = src[r0 * sw + c0] * (1.0 - wx) + src[r0 * sw + c1] * wx;
                    let bottom = src[r1 * sw + c0] * (1.0 - wx) + src[r1 * sw + c1] * wx;
                    dst[y * dw + x] = top * (1.0 - wy) + bottom * wy;
                }
            }
        }
        out
    }

    /// Adjoint of [`ResizePlan::forward`].
    pub fn backward(&self, grad_out: &Tensor3) -> Tensor3 {
        assert_eq!((grad_out.height, grad_out.width), self.dst);
        if self.is_identity() {
            return grad_out.clone();
        }
        let (sh, sw) = self.src;
        let (dh, dw) = self.dst;
        let mut grad_in = Tensor3::zeros(grad_out.channels, sh, sw);
        for c in 0..grad_out.channels {
            let g = grad_out.plane(c);
            let gi = grad_in.plane_mut(c);
            for y in 0..dh {
                let (r0, r1, wy) = (self.rows.lo[y], self.rows.hi[y], self.rows.w_hi[y]);
                for x in 0..dw {
                    let (c0, c1, wx) = (self.cols.lo[x], self.cols.hi[x], self.cols.w_hi[x]);
                    let v = g[y * dw + x];
                    gi[r0 * sw + c0] += v * (1.0 - wy) * (1.0 - wx);
                    gi[r0 * sw + c1] += v * (1.0 - wy) * wx;
                    gi[r1 * sw + c0] += v * wy * (1.0 - wx);
                    gi[r1 * sw + c1] += v * wy * wx;
                }
            }
        }
        grad_in
    }
}

pub fn resize_bilinear(input: &Tensor3, height: usize, width: usize) -> Tensor3 {
    ResizePlan::new(input.height, input.width, height, width).forward(input)
}

pub fn resize_bilinear_backward(grad_out: &Tensor3, src_height: usize, src_width: usize) -> Tensor3 {
    ResizePlan::new(src_height, src_width, grad_out.height, grad_out.width).backward(grad_out)
}
