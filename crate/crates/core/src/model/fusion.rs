//! Attention-weighted blending of adjacent-scale score maps.
//!
//! For a lower scale with score map `h_low` and attention `a_low`, and the (already
//! fused) higher-scale map `h_high`:
//!
//! ```text
//! g = a_low ⊙ h_low + (1 − a_low) ⊙ h_high
//! ```
//!
//! Attention is either one plane broadcast over classes or one plane per class.

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

fn check(h_low: &Tensor3, a_low: &Tensor3, h_high: &Tensor3) -> Result<()> {
    h_low.ensure_shape(h_high)?;
    let ok_arity = a_low.channels == 1 || a_low.channels == h_low.channels;
    if !ok_arity || (a_low.height, a_low.width) != (h_low.height, h_low.width) {
        return Err(Error::shape(
            format!("attention 1 or {} x {} x {}", h_low.channels, h_low.height, h_low.width),
            format!("{:?}", a_low.shape()),
        ));
    }
    Ok(())
}

#[inline]
fn attention_index(a: &Tensor3, c: usize, i: usize, plane: usize) -> usize {
    if a.channels == 1 {
        i
    } else {
        c * plane + i
    }
}

pub fn fuse_values(h_low: &Tensor3, a_low: &Tensor3, h_high: &Tensor3) -> Result<Tensor3> {
    check(h_low, a_low, h_high)?;
    let plane = h_low.plane_len();
    let mut out = Tensor3::zeros(h_low.channels, h_low.height, h_low.width);
    for c in 0..h_low.channels {
        for i in 0..plane {
            let a = a_low.data[attention_index(a_low, c, i, plane)];
            let j = c * plane + i;
            out.data[j] = a * h_low.data[j] + (1.0 - a) * h_high.data[j];
        }
    }
    Ok(out)
}

/// Gradients of a scalar loss with respect to the three fusion inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrads {
    pub h_low: Tensor3,
    pub attention: Tensor3,
    pub h_high: Tensor3,
}

pub fn fuse_backward(h_low: &Tensor3, a_low: &Tensor3, h_high: &Tensor3, grad: &Tensor3) -> Result<FusionGrads> {
    check(h_low, a_low, h_high)?;
    h_low.ensure_shape(grad)?;
    let plane = h_low.plane_len();
    let mut g_low = Tensor3::zeros(h_low.channels, h_low.height, h_low.width);
    let mut g_high = g_low.clone();
    let mut g_a = Tensor3::zeros(a_low.channels, a_low.height, a_low.width);
    for c in 0..h_low.channels {
        for i in 0..plane {
            let ai = attention_index(a_low, c, i, plane);
            let a = a_low.data[ai];
            let j = c * plane + i;
            let g = grad.data[j];
            g_low.data[j] = a * g;
            g_high.data[j] = (1.0 - a) * g;
            g_a.data[ai] += (h_low.data[j] - h_high.data[j]) * g;
        }
    }
    Ok(FusionGrads {
        h_low: g_low,
        attention: g_a,
        h_high: g_high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_cell() {
        let h_low = Tensor3::filled(1, 1, 1, 0.8);
        let h_high = Tensor3::filled(1, 1, 1, 0.4);
        let a = Tensor3::filled(1, 1, 1, 0.25);
        let g = fuse_values(&h_low, &a, &h_high).unwrap();
        assert!((g.data[0] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let h = Tensor3::zeros(3, 4, 4);
        assert!(fuse_values(&h, &Tensor3::zeros(1, 4, 4), &Tensor3::zeros(3, 4, 5)).is_err());
        assert!(fuse_values(&h, &Tensor3::zeros(2, 4, 4), &h).is_err());
        assert!(fuse_values(&h, &Tensor3::zeros(3, 4, 4), &h).is_ok());
    }
}
