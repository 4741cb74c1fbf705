//! Street networks, sampling-point generation, per-segment aggregation and map export.

mod aggregate;
mod camera;
mod captures;
mod export;
mod network;
mod sampling;
pub mod sphere;

pub use aggregate::{aggregate_segments, Aggregation, SegmentSummary};
pub use camera::{CameraParams, CameraVariation};
pub use captures::{plan_captures, CapturePoint};
pub use export::{export_geojson, write_geojson, ExportStyle, GeoJsonExport};
pub use network::{load_network, parse_network, StreetSegment};
pub use sampling::{bearing_and_headings, sample_points, Headings, SamplePoint};
