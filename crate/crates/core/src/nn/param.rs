use base64::Engine;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            value: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    /// He-normal initialization for a ReLU layer with `fan_in` inputs.
    pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(shape);
        let normal = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("finite std");
        for v in &mut p.value {
            *v = normal.sample(rng);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Serialized parameters: name, shape and little-endian f32 bytes in base64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet(pub Vec<StoredParam>);

impl ParamSet {
    pub fn capture<'a>(params: impl IntoIterator<Item = (String, &'a Param)>) -> Self {
        let engine = base64::engine::general_purpose::STANDARD;
        ParamSet(
            params
                .into_iter()
                .map(|(name, p)| {
                    let bytes: Vec<u8> = p.value.iter().flat_map(|v| v.to_le_bytes()).collect();
                    StoredParam {
                        name,
                        shape: p.shape.clone(),
                        data: engine.encode(bytes),
                    }
                })
                .collect(),
        )
    }

    /// Copies stored values into `params`, matching by name and shape.
    pub fn restore<'a>(&self, params: impl IntoIterator<Item = (String, &'a mut Param)>) -> Result<()> {
        let engine = base64::engine::general_purpose::STANDARD;
        let mut restored = 0;
        for (name, p) in params {
            let stored = self
                .0
                .iter()
                .find(|s| s.name == name)
                .ok_or_else(|| Error::Integrity(format!("checkpoint lacks parameter {name}")))?;
            if stored.shape != p.shape {
                return Err(Error::shape(format!("{name} {:?}", p.shape), format!("{:?}", stored.shape)));
            }
            let bytes = engine
                .decode(&stored.data)
                .map_err(|e| Error::Integrity(format!("{name}: {e}")))?;
            if bytes.len() != p.len() * 4 {
                return Err(Error::Integrity(format!("{name}: wrong byte count")));
            }
            for (v, chunk) in p.value.iter_mut().zip(bytes.chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().unwrap());
            }
            restored += 1;
        }
        if restored != self.0.len() {
            return Err(Error::Integrity(format!(
                "checkpoint has {} parameters, model has {restored}",
                self.0.len()
            )));
        }
        Ok(())
    }
}
