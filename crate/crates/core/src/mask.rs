//! Per-pixel class masks and their indexed-PNG encoding.

use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{ClassId, LabelTaxonomy};

const PROVENANCE_KEY: &str = "provenance";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ModelPrediction,
    HumanRefined,
    Bootstrap,
}

impl Provenance {
    fn as_str(self) -> &'static str {
        match self {
            Provenance::ModelPrediction => "model_prediction",
            Provenance::HumanRefined => "human_refined",
            Provenance::Bootstrap => "bootstrap",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "model_prediction" => Some(Provenance::ModelPrediction),
            "human_refined" => Some(Provenance::HumanRefined),
            "bootstrap" => Some(Provenance::Bootstrap),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    pub provenance: Provenance,
}

impl MaskImage {
    pub fn filled(width: usize, height: usize, class: ClassId, provenance: Provenance) -> Self {
        Self {
            width,
            height,
            pixels: vec![class.0; width * height],
            provenance,
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>, provenance: Provenance) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::shape(format!("{width}x{height}"), format!("{} pixels", pixels.len())));
        }
        Ok(Self {
            width,
            height,
            pixels,
            provenance,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> ClassId {
        ClassId(self.pixels[y * self.width + x])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, class: ClassId) {
        self.pixels[y * self.width + x] = class.0;
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Checks every pixel against the taxonomy.
    pub fn validate(&self, taxonomy: &LabelTaxonomy) -> Result<()> {
        match self.pixels.iter().find(|&&p| p as usize >= taxonomy.len()) {
            Some(&bad) => Err(Error::InvalidClass {
                id: bad as u32,
                num_classes: taxonomy.len(),
            }),
            None => Ok(()),
        }
    }

    /// Pixel count per class id, sized to `num_classes`.
    pub fn histogram(&self, num_classes: usize) -> Vec<u64> {
        let mut counts = vec![0u64; num_classes.max(256)];
        for &p in &self.pixels {
            counts[p as usize] += 1;
        }
        counts.truncate(num_classes);
        counts
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> MaskImage {
        let mut pixels = Vec::with_capacity(height * width);
        for y in y0..y0 + height {
            pixels.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x0 + width]);
        }
        MaskImage {
            width,
            height,
            pixels,
            provenance: self.provenance,
        }
    }

    pub fn flip_horizontal(&self) -> MaskImage {
        let mut out = self.clone();
        for row in out.pixels.chunks_mut(self.width) {
            row.reverse();
        }
        out
    }

    /// Fraction of pixels that differ from `other`.
    pub fn fraction_changed(&self, other: &MaskImage) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::shape(format!("{:?}", self.dims()), format!("{:?}", other.dims())));
        }
        if self.pixels.is_empty() {
            return Ok(0.0);
        }
        let changed = self.pixels.iter().zip(&other.pixels).filter(|(a, b)| a != b).count();
        Ok(changed as f64 / self.pixels.len() as f64)
    }

    /// Encodes as an 8-bit indexed PNG; pixel value = class id. Provenance travels in a text chunk.
    pub fn to_png(&self, taxonomy: Option<&LabelTaxonomy>) -> Result<Vec<u8>> {
        let mut palette = Vec::with_capacity(256 * 3);
        for i in 0..256usize {
            let color = taxonomy
                .and_then(|t| t.get(ClassId(i as u8)))
                .map(|c| c.color)
                .unwrap_or([i as u8; 3]);
            palette.extend_from_slice(&color);
        }
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            encoder.set_color(png::ColorType::Indexed);
            encoder.set_depth(png::BitDepth::Eight);
            encoder.set_palette(palette);
            encoder
                .add_text_chunk(PROVENANCE_KEY.to_string(), self.provenance.as_str().to_string())
                .map_err(|e| Error::Codec(e.to_string()))?;
            let mut writer = encoder.write_header().map_err(|e| Error::Codec(e.to_string()))?;
            writer
                .write_image_data(&self.pixels)
                .map_err(|e| Error::Codec(e.to_string()))?;
        }
        Ok(out)
    }

    /// Decodes an 8-bit indexed or grayscale PNG. Missing provenance defaults to `fallback`.
    pub fn from_png(bytes: &[u8], fallback: Provenance) -> Result<Self> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::IDENTITY);
        let mut reader = decoder.read_info().map_err(|e| Error::Codec(e.to_string()))?;
        let info = reader.info();
        if info.bit_depth != png::BitDepth::Eight
            || !matches!(info.color_type, png::ColorType::Indexed | png::ColorType::Grayscale)
        {
            return Err(Error::Codec(format!(
                "mask must be 8-bit indexed or grayscale, got {:?} {:?}",
                info.color_type, info.bit_depth
            )));
        }
        let provenance = info
            .uncompressed_latin1_text
            .iter()
            .find(|t| t.keyword == PROVENANCE_KEY)
            .and_then(|t| Provenance::parse(&t.text))
            .unwrap_or(fallback);
        let (width, height) = (info.width as usize, info.height as usize);
        let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Codec("image too large".into()))?];
        let frame = reader.next_frame(&mut buf).map_err(|e| Error::Codec(e.to_string()))?;
        buf.truncate(frame.buffer_size());
        Self::from_pixels(width, height, buf, provenance)
    }

    pub fn save_png(&self, path: &Path, taxonomy: Option<&LabelTaxonomy>) -> Result<()> {
        let bytes = self.to_png(taxonomy)?;
        crate::io::write_atomic(path, &bytes)
    }

    pub fn load_png(path: &Path, fallback: Provenance) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_png(&bytes, fallback)
    }
}
