use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sphere::haversine_m;
use crate::error::{Error, Result};

/// Road classes skipped during sampling (no sidewalks to photograph).
const EXCLUDED_ROAD_CLASSES: [&str; 4] = ["motorway", "motorway_link", "trunk", "tunnel"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetSegment {
    pub segment_id: String,
    /// Vertices as (lat, lon) degrees.
    pub polyline: Vec<(f64, f64)>,
    pub length_m: f64,
    pub road_class: String,
    pub exclude: bool,
}

impl StreetSegment {
    pub fn new(segment_id: impl Into<String>, polyline: Vec<(f64, f64)>, road_class: impl Into<String>) -> Result<Self> {
        let segment_id = segment_id.into();
        let road_class = road_class.into();
        if polyline.len() < 2 {
            return Err(Error::Precondition(format!("segment {segment_id} needs at least two vertices")));
        }
        let length_m = polyline_length(&polyline);
        if length_m <= 0.0 {
            return Err(Error::Precondition(format!("segment {segment_id} has zero length")));
        }
        let exclude = EXCLUDED_ROAD_CLASSES.contains(&road_class.as_str());
        Ok(Self {
            segment_id,
            polyline,
            length_m,
            road_class,
            exclude,
        })
    }

    /// Cumulative arc length at each vertex.
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        let mut acc = vec![0.0];
        for w in self.polyline.windows(2) {
            acc.push(acc.last().unwrap() + haversine_m(w[0], w[1]));
        }
        acc
    }
}

pub fn polyline_length(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| haversine_m(w[0], w[1])).sum()
}

#[derive(Debug, Deserialize)]
struct Edge {
    id: String,
    polyline: Vec<[f64; 2]>,
    #[serde(default)]
    road_class: String,
    #[serde(default)]
    tunnel: bool,
    #[serde(default)]
    exclude: bool,
}

/// Parses an edge list: `[{"id", "polyline": [[lat, lon], ...], "road_class", "tunnel"?, "exclude"?}]`.
pub fn parse_network(json: &str) -> Result<Vec<StreetSegment>> {
    let edges: Vec<Edge> = serde_json::from_str(json)?;
    edges
        .into_iter()
        .map(|e| {
            let mut seg = StreetSegment::new(e.id, e.polyline.into_iter().map(|[a, b]| (a, b)).collect(), e.road_class)?;
            seg.exclude |= e.tunnel || e.exclude;
            Ok(seg)
        })
        .collect()
}

pub fn load_network(path: &Path) -> Result<Vec<StreetSegment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn highways_and_tunnels_are_excluded() {
        let json = r#"[
            {"id":"a","polyline":[[42.0,-71.0],[42.001,-71.0]],"road_class":"residential"},
            {"id":"b","polyline":[[42.0,-71.0],[42.001,-71.0]],"road_class":"motorway"},
            {"id":"c","polyline":[[42.0,-71.0],[42.001,-71.0]],"road_class":"primary","tunnel":true}
        ]"#;
        let segs = parse_network(json).unwrap();
        assert_eq!(segs.iter().map(|s| s.exclude).collect::<Vec<_>>(), [false, true, true]);
        assert!((segs[0].length_m - 111.195).abs() < 0.01);
    }

    #[test]
    fn degenerate_polylines_are_rejected() {
        assert!(StreetSegment::new("x", vec![(1.0, 1.0)], "residential").is_err());
        assert!(StreetSegment::new("x", vec![(1.0, 1.0), (1.0, 1.0)], "residential").is_err());
    }
}
