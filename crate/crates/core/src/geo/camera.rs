use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Street-level camera orientation for one capture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub heading_deg: f64,
    pub pitch_deg: f64,
    pub fov_deg: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            heading_deg: 0.0,
            pitch_deg: 0.0,
            fov_deg: 80.0,
        }
    }
}

impl CameraParams {
    pub fn is_valid(&self) -> bool {
        (0.0..360.0).contains(&self.heading_deg)
            && (-90.0..=90.0).contains(&self.pitch_deg)
            && self.fov_deg > 0.0
            && self.fov_deg <= 120.0
    }
}

/// Pitch/FoV variation applied to a deterministic share of captures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraVariation {
    pub fraction: f64,
    pub pitch_range: (f64, f64),
    pub fov_range: (f64, f64),
}

impl Default for CameraVariation {
    fn default() -> Self {
        Self {
            fraction: 0.35,
            pitch_range: (-20.0, -10.0),
            fov_range: (60.0, 70.0),
        }
    }
}

impl CameraVariation {
    /// Camera for `image_id` looking along `heading_deg`. Whether the capture is varied,
    /// and by how much, depends only on a hash of the id.
    pub fn camera_for(&self, image_id: &str, heading_deg: f64) -> CameraParams {
        let digest = Sha256::digest(image_id.as_bytes());
        let unit = |i: usize| {
            let bytes: [u8; 8] = digest[i * 8..i * 8 + 8].try_into().unwrap();
            (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut camera = CameraParams {
            heading_deg: heading_deg.rem_euclid(360.0),
            ..CameraParams::default()
        };
        if unit(0) < self.fraction {
            let (p0, p1) = self.pitch_range;
            let (f0, f1) = self.fov_range;
            // Round to whole degrees as a capture request would.
            camera.pitch_deg = (p0 + unit(1) * (p1 - p0)).round();
            camera.fov_deg = (f0 + unit(2) * (f1 - f0)).round();
        }
        camera
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variation_hits_about_the_configured_share() {
        let v = CameraVariation::default();
        let cams: Vec<_> = (0..4000).map(|i| v.camera_for(&format!("img-{i}"), 90.0)).collect();
        let varied = cams.iter().filter(|c| c.pitch_deg != 0.0).count() as f64 / cams.len() as f64;
        assert!((varied - 0.35).abs() < 0.03, "{varied}");
        for c in &cams {
            if c.pitch_deg != 0.0 {
                assert!((-20.0..=-10.0).contains(&c.pitch_deg));
                assert!((60.0..=70.0).contains(&c.fov_deg));
            } else {
                assert_eq!(c.fov_deg, 80.0);
            }
        }
        assert_eq!(v.camera_for("img-7", 90.0), cams[7]);
    }
}
