//! Dense channel-major (C × H × W) f32 storage used throughout the model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(
                format!("{channels}x{height}x{width}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f32 {
        &mut self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Tensor3) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_shape(&self, other: &Tensor3) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ))
        }
    }

    /// Stacks channels of `self` followed by channels of `other`.
    pub fn concat_channels(&self, other: &Tensor3) -> Tensor3 {
        assert_eq!((self.height, self.width), (other.height, other.width));
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Tensor3 {
            channels: self.channels + other.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Splits off the first `channels` channels.
    pub fn split_channels(&self, channels: usize) -> (Tensor3, Tensor3) {
        let n = channels * self.plane_len();
        (
            Tensor3 {
                channels,
                height: self.height,
                width: self.width,
                data: self.data[..n].to_vec(),
            },
            Tensor3 {
                channels: self.channels - channels,
                height: self.height,
                width: self.width,
                data: self.data[n..].to_vec(),
            },
        )
    }

    pub fn channel_means(&self) -> Vec<f32> {
        let n = self.plane_len().max(1) as f64;
        (0..self.channels)
            .map(|c| (self.plane(c).iter().map(|&v| v as f64).sum::<f64>() / n) as f32)
            .collect()
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Tensor3 {
        let mut out = Tensor3::zeros(self.channels, height, width);
        for c in 0..self.channels {
            for y in 0..height {
                let src = (c * self.height + y0 + y) * self.width + x0;
                let dst = (c * height + y) * width;
                out.data[dst..dst + width].copy_from_slice(&self.data[src..src + width]);
            }
        }
        out
    }

    pub fn flip_horizontal(&self) -> Tensor3 {
        let mut out = self.clone();
        for c in 0..self.channels {
            for y in 0..self.height {
                let row = (c * self.height + y) * self.width;
                out.data[row..row + self.width].reverse();
            }
        }
        out
    }
}
