use rand::Rng;

use super::gemm;
use super::param::Param;
use crate::tensor::Tensor3;

/// 2-D convolution over a single C × H × W input, lowered to im2col + GEMM.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `out_channels × (in_channels · kernel²)`
    pub weight: Param,
    pub bias: Param,
}

/// What the backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    cols: Vec<f32>,
    in_shape: (usize, usize, usize),
    out_hw: (usize, usize),
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::he_normal(&[out_channels, fan_in], fan_in, rng),
            bias: Param::zeros(&[out_channels]),
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        Self::new(in_channels, out_channels, 1, 1, 0, rng)
    }

    fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &Tensor3, oh: usize, ow: usize) -> Vec<f32> {
        if self.kernel == 1 && self.stride == 1 && self.padding == 0 {
            return x.data.clone();
        }
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        let n = oh * ow;
        let mut cols = vec![0.0f32; self.fan_in() * n];
        for c in 0..x.channels {
            let plane = x.plane(c);
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for oy in 0..oh {
                        let iy = (oy * s) as isize + ky as isize - p;
                        if iy < 0 || iy >= x.height as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * x.width..(iy as usize + 1) * x.width];
                        for ox in 0..ow {
                            let ix = (ox * s) as isize + kx as isize - p;
                            if ix >= 0 && ix < x.width as isize {
                                dst[oy * ow + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f32], shape: (usize, usize, usize), oh: usize, ow: usize) -> Tensor3 {
        let (ch, h, w) = shape;
        if self.kernel == 1 && self.stride == 1 && self.padding == 0 {
            return Tensor3::from_vec(ch, h, w, cols.to_vec()).expect("shape");
        }
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        let n = oh * ow;
        let mut out = Tensor3::zeros(ch, h, w);
        for c in 0..ch {
            let plane = out.plane_mut(c);
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * n..(row + 1) * n];
                    for oy in 0..oh {
                        let iy = (oy * s) as isize + ky as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * s) as isize + kx as isize - p;
                            if ix >= 0 && ix < w as isize {
                                plane[iy as usize * w + ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, x: &Tensor3) -> (Tensor3, ConvCache) {
        assert_eq!(x.channels, self.in_channels, "conv input channels");
        let (oh, ow) = self.output_hw(x.height, x.width);
        let cols = self.im2col(x, oh, ow);
        let n = oh * ow;
        let mut out = Tensor3::zeros(self.out_channels, oh, ow);
        gemm(self.out_channels, self.fan_in(), n, &self.weight.value, false, &cols, false, &mut out.data, false);
        for (o, &b) in self.bias.value.iter().enumerate() {
            out.plane_mut(o).iter_mut().for_each(|v| *v += b);
        }
        (
            out,
            ConvCache {
                cols,
                in_shape: x.shape(),
                out_hw: (oh, ow),
            },
        )
    }

    /// Accumulates weight/bias gradients; returns the input gradient when `need_input_grad`.
    pub fn backward(&mut self, cache: ConvCache, grad_out: &Tensor3, need_input_grad: bool) -> Option<Tensor3> {
        let (oh, ow) = cache.out_hw;
        assert_eq!((grad_out.height, grad_out.width), (oh, ow));
        let n = oh * ow;
        let fan_in = self.fan_in();
        gemm(self.out_channels, n, fan_in, &grad_out.data, false, &cache.cols, true, &mut self.weight.grad, true);
        for o in 0..self.out_channels {
            self.bias.grad[o] += grad_out.plane(o).iter().sum::<f32>();
        }
        if !need_input_grad {
            return None;
        }
        let mut dcols = vec![0.0f32; fan_in * n];
        gemm(fan_in, self.out_channels, n, &self.weight.value, true, &grad_out.data, false, &mut dcols, false);
        Some(self.col2im(&dcols, cache.in_shape, oh, ow))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Direct (loop) convolution used as an independent reference.
    fn reference(conv: &Conv2d, x: &Tensor3) -> Tensor3 {
        let (oh, ow) = conv.output_hw(x.height, x.width);
        let k = conv.kernel;
        let mut out = Tensor3::zeros(conv.out_channels, oh, ow);
        for o in 0..conv.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.bias.value[o] as f64;
                    for c in 0..conv.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * conv.stride + ky) as isize - conv.padding as isize;
                                let ix = (ox * conv.stride + kx) as isize - conv.padding as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < x.height && (ix as usize) < x.width {
                                    let w = conv.weight.value[o * conv.fan_in() + (c * k + ky) * k + kx];
                                    acc += (w * x.at(c, iy as usize, ix as usize)) as f64;
                                }
                            }
                        }
                    }
                    *out.at_mut(o, oy, ox) = acc as f32;
                }
            }
        }
        out
    }

    fn random_tensor(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor3 {
        Tensor3::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, s, p, h, w) in [(3, 1, 1, 7, 6), (3, 2, 1, 9, 8), (1, 1, 0, 4, 5), (3, 2, 1, 4, 4)] {
            let mut conv = Conv2d::new(3, 4, k, s, p, &mut rng);
            conv.bias.value.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
            let x = random_tensor(3, h, w, &mut rng);
            let (y, _) = conv.forward(&x);
            let r = reference(&conv, &x);
            assert_eq!(y.shape(), r.shape());
            for (a, b) in y.data.iter().zip(&r.data) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = Conv2d::new(2, 3, 3, 2, 1, &mut rng);
        let x = random_tensor(2, 5, 6, &mut rng);
        let probe = {
            let (y, _) = conv.forward(&x);
            random_tensor(y.channels, y.height, y.width, &mut rng)
        };
        // L = <conv(x), probe>
        let loss = |conv: &Conv2d, x: &Tensor3| -> f64 {
            conv.forward(x).0.data.iter().zip(&probe.data).map(|(a, b)| (*a as f64) * (*b as f64)).sum()
        };
        let (_, cache) = conv.forward(&x);
        let dx = conv.backward(cache, &probe, true).unwrap();
        let eps = 1e-2f32;
        for i in [0, 7, 19, 35, 53] {
            let mut c2 = conv.clone();
            c2.weight.value[i] += eps;
            let up = loss(&c2, &x);
            c2.weight.value[i] -= 2.0 * eps;
            let down = loss(&c2, &x);
            let fd = (up - down) / (2.0 * eps as f64);
            assert!((fd - conv.weight.grad[i] as f64).abs() < 1e-3 * (1.0 + fd.abs()));
        }
        for i in [0, 11, 33, 59] {
            let mut x2 = x.clone();
            x2.data[i] += eps;
            let up = loss(&conv, &x2);
            x2.data[i] -= 2.0 * eps;
            let down = loss(&conv, &x2);
            let fd = (up - down) / (2.0 * eps as f64);
            assert!((fd - dx.data[i] as f64).abs() < 1e-3 * (1.0 + fd.abs()));
        }
    }
}
