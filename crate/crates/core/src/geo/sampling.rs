use serde::{Deserialize, Serialize};

use super::network::StreetSegment;
use super::sphere::{haversine_m, initial_bearing_deg, intermediate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub lat: f64,
    pub lon: f64,
    pub distance_along: f64,
}

/// Samples at `0, interval, 2·interval, …` by arc length. The final vertex is added
/// when it lies at least `interval / 2` beyond the last regular sample. Segments
/// shorter than one interval yield only their start point.
pub fn sample_points(segment: &StreetSegment, interval_m: f64) -> Result<Vec<SamplePoint>> {
    if !(interval_m > 0.0) || !interval_m.is_finite() {
        return Err(Error::Precondition(format!("sampling interval must be positive, got {interval_m}")));
    }
    if segment.exclude {
        return Ok(Vec::new());
    }
    let cum = segment.cumulative_lengths();
    let length = *cum.last().unwrap();
    let tol = 1e-9 * length.max(1.0);

    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let d = k as f64 * interval_m;
        if d > length + tol {
            break;
        }
        let d = d.min(length);
        let (lat, lon) = point_at(segment, &cum, d);
        out.push(SamplePoint { lat, lon, distance_along: d });
        k += 1;
    }
    if length >= interval_m {
        let last = out.last().unwrap().distance_along;
        if length - last >= interval_m / 2.0 {
            let &(lat, lon) = segment.polyline.last().unwrap();
            out.push(SamplePoint {
                lat,
                lon,
                distance_along: length,
            });
        }
    }
    Ok(out)
}

/// Index of the polyline edge containing arc length `d`, preferring the edge that starts at a vertex.
fn edge_at(cum: &[f64], d: f64) -> usize {
    let n_edges = cum.len() - 1;
    let i = cum.partition_point(|&c| c <= d);
    i.saturating_sub(1).min(n_edges - 1)
}

fn point_at(segment: &StreetSegment, cum: &[f64], d: f64) -> (f64, f64) {
    let i = edge_at(cum, d);
    let edge_len = cum[i + 1] - cum[i];
    if edge_len <= 0.0 {
        return segment.polyline[i];
    }
    let f = ((d - cum[i]) / edge_len).clamp(0.0, 1.0);
    intermediate(segment.polyline[i], segment.polyline[i + 1], f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Headings {
    pub bearing_deg: f64,
    pub heading_left: f64,
    pub heading_right: f64,
}

// Bearings are snapped to multiples of 2^-20 degrees so the ±90° arithmetic below is exact.
const BEARING_GRID: f64 = (1u64 << 20) as f64;

/// Local street bearing at `distance_along` and the two perpendicular camera headings.
pub fn bearing_and_headings(segment: &StreetSegment, distance_along: f64) -> Result<Headings> {
    let cum = segment.cumulative_lengths();
    let length = *cum.last().unwrap();
    let tol = 1e-6;
    if !(-tol..=length + tol).contains(&distance_along) {
        return Err(Error::Precondition(format!(
            "distance_along {distance_along} outside [0, {length}]"
        )));
    }
    let d = distance_along.clamp(0.0, length);
    let i = edge_at(&cum, d);
    let n_edges = cum.len() - 1;
    // Zero-length edges borrow the direction of the nearest non-degenerate neighbor.
    let edge = (i..n_edges)
        .chain((0..i).rev())
        .find(|&j| cum[j + 1] - cum[j] > 0.0)
        .expect("segment has positive length");

    let (a, b) = (segment.polyline[edge], segment.polyline[edge + 1]);
    let here = if edge == i { point_at(segment, &cum, d) } else { a };
    // Within a millimeter of the edge end the forward azimuth is ill-conditioned; use the arrival bearing.
    let raw = if haversine_m(here, b) > 1e-3 {
        initial_bearing_deg(here, b)
    } else {
        (initial_bearing_deg(b, a) + 180.0).rem_euclid(360.0)
    };
    let bearing = ((raw * BEARING_GRID).round() / BEARING_GRID).rem_euclid(360.0);
    Ok(Headings {
        bearing_deg: bearing,
        heading_left: (bearing - 90.0).rem_euclid(360.0),
        heading_right: (bearing + 90.0).rem_euclid(360.0),
    })
}
