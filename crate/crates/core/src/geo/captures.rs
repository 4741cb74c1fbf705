use serde::{Deserialize, Serialize};

use super::camera::{CameraParams, CameraVariation};
use super::network::StreetSegment;
use super::sampling::{bearing_and_headings, sample_points};
use crate::error::Result;
use crate::pool::CaptureSide;

/// One street-level image to request: a sample point looking at one side of the street.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapturePoint {
    pub image_id: String,
    pub segment_id: String,
    pub lat: f64,
    pub lon: f64,
    pub distance_along: f64,
    pub side: CaptureSide,
    pub camera: CameraParams,
}

/// Two captures (left and right) per sample point of every non-excluded segment.
pub fn plan_captures(segments: &[StreetSegment], interval_m: f64, variation: &CameraVariation) -> Result<Vec<CapturePoint>> {
    let mut out = Vec::new();
    for segment in segments {
        for (k, p) in sample_points(segment, interval_m)?.into_iter().enumerate() {
            let h = bearing_and_headings(segment, p.distance_along)?;
            for (side, heading, tag) in [(CaptureSide::Left, h.heading_left, 'L'), (CaptureSide::Right, h.heading_right, 'R')] {
                let image_id = format!("{}-{k:04}{tag}", segment.segment_id);
                out.push(CapturePoint {
                    camera: variation.camera_for(&image_id, heading),
                    image_id,
                    segment_id: segment.segment_id.clone(),
                    lat: p.lat,
                    lon: p.lon,
                    distance_along: p.distance_along,
                    side,
                });
            }
        }
    }
    Ok(out)
}
