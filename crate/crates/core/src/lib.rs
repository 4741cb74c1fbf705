//! Sidewalk surface-material mapping from street-level imagery.
//!
//! The crate covers the whole loop:
//!
//! - [`model`]: a multi-scale segmentation network whose per-scale score maps are
//!   blended by learned attention, lowest scale first.
//! - [`training`]: class-uniform crop sampling, cross-entropy loss and staged SGD
//!   with best-epoch selection.
//! - [`active`]: margin-sampling uncertainty, validation failure analysis,
//!   feature-similarity retrieval and the multi-stage campaign driver.
//! - [`review`]: the expert review queue that refined masks flow through.
//! - [`evaluation`], [`geo`], [`imagery`]: metrics, street-network sampling and
//!   map export, and image providers including a deterministic synthetic one.
//! - [`project`]: on-disk campaign layout shared by the command-line tool and examples.

pub mod active;
pub mod error;
pub mod evaluation;
pub mod geo;
pub mod image;
pub mod imagery;
pub mod io;
pub mod manifest;
pub mod mask;
pub mod model;
pub mod nn;
pub mod pool;
pub mod project;
pub mod review;
pub mod taxonomy;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use image::RgbImage;
pub use mask::{MaskImage, Provenance};
pub use pool::{CaptureSide, DatasetPool, ImageRecord, Split};
pub use taxonomy::{ClassId, LabelTaxonomy};
pub use tensor::Tensor3;
