//! Evaluation harness for aerial visual place recognition.
//!
//! A georeferenced raw map is cut into overlapping tiles, each tile gets a
//! global descriptor, and query images are matched against the tile
//! database. The best candidates are reranked by local-feature geometric
//! verification and the winning homography maps the query center to a
//! geographic position. Recall metrics summarize retrieval and
//! georeferencing accuracy.

pub mod alignment;
pub mod bench;
pub mod descstore;
pub mod error;
pub mod extract;
pub mod features;
pub mod geo;
pub mod metrics;
pub mod raster;
pub mod synth;
pub mod tilemap;

pub use error::{Error, Result};
pub use geo::{GeoPoint, MercatorPoint, MercatorRect, PixelPoint};
pub use raster::{Image, ImageSize};
