//! RGB images as normalized channel-major tensors, plus 8-bit PNG codec.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// An RGB image with values in `[0, 1]`, stored as a 3 × H × W tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage(Tensor3);

impl RgbImage {
    pub fn new(tensor: Tensor3) -> Result<Self> {
        if tensor.channels != 3 {
            return Err(Error::shape("3 channels", format!("{} channels", tensor.channels)));
        }
        Ok(Self(tensor))
    }

    pub fn black(width: usize, height: usize) -> Self {
        Self(Tensor3::zeros(3, height, width))
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor3 {
        self.0
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        [self.0.at(0, y, x), self.0.at(1, y, x), self.0.at(2, y, x)]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        for (c, v) in rgb.into_iter().enumerate() {
            *self.0.at_mut(c, y, x) = v.clamp(0.0, 1.0);
        }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        let (h, w) = (self.height(), self.width());
        let mut out = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    out.push((self.0.at(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        out
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::shape(format!("{}", width * height * 3), bytes.len()));
        }
        let mut t = Tensor3::zeros(3, height, width);
        for (i, px) in bytes.chunks_exact(3).enumerate() {
            let (y, x) = (i / width, i % width);
            for c in 0..3 {
                *t.at_mut(c, y, x) = px[c] as f32 / 255.0;
            }
        }
        Ok(Self(t))
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.width() as u32, self.height() as u32);
            encoder.set_color(png::ColorType::Rgb);
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder.write_header().map_err(|e| Error::Codec(e.to_string()))?;
            writer
                .write_image_data(&self.to_rgb8())
                .map_err(|e| Error::Codec(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(|e| Error::Codec(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Codec("image too large".into()))?];
        let frame = reader.next_frame(&mut buf).map_err(|e| Error::Codec(e.to_string()))?;
        let (w, h) = (frame.width as usize, frame.height as usize);
        let bytes = &buf[..frame.buffer_size()];
        let rgb: Vec<u8> = match frame.color_type {
            png::ColorType::Rgb => bytes.to_vec(),
            png::ColorType::Rgba => bytes.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => bytes.iter().flat_map(|&g| [g, g, g]).collect(),
            png::ColorType::GrayscaleAlpha => bytes.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
            other => return Err(Error::Codec(format!("unsupported color type {other:?}"))),
        };
        Self::from_rgb8(w, h, &rgb)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_png(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_png()?)
    }
}
