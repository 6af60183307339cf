use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // geo
    #[error("latitude {0} outside the Mercator band |lat| <= 85.05113")]
    LatitudeOutOfBand(f64),
    #[error("invalid geographic coordinate lat={lat} lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("Mercator point ({x}, {y}) outside the world square [0, {world_size}]")]
    MercatorOutOfRange { x: f64, y: f64, world_size: f64 },
    #[error("degenerate tile rectangle: {0}")]
    DegenerateRect(String),

    // tile construction and metadata
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("raw map is missing grid cell ({row}, {col})")]
    MissingCell { row: u32, col: u32 },
    #[error("raw tile ({row}, {col}) is {found}x{found_h} pixels, expected {expected}x{expected}")]
    ResolutionMismatch {
        row: u32,
        col: u32,
        expected: u32,
        found: u32,
        found_h: u32,
    },
    #[error("map too small for zoom: tile span {span} raw tiles exceeds map extent {extent}")]
    MapTooSmall { span: f64, extent: f64 },
    #[error("invalid tiling parameter: {0}")]
    InvalidTiling(String),
    #[error("tile {tile_id}: image file {} is missing", path.display())]
    MissingTileImage { tile_id: usize, path: PathBuf },
    #[error("tile {tile_id}: {message}")]
    TileInvariant { tile_id: usize, message: String },

    // images
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("image {}: {message}", path.display())]
    ImageIo { path: PathBuf, message: String },

    // descriptor and feature stores
    #[error("descriptor row {row} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("descriptor row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("{}: bad magic {found:?}, expected {expected:?}", path.display())]
    BadMagic {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{}: unsupported format version {found}, expected {expected}", path.display())]
    VersionMismatch {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{}: truncated payload, expected {expected} bytes, found {found}", path.display())]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("{}: {message}", path.display())]
    InvalidFormat { path: PathBuf, message: String },

    // geometry
    #[error("need at least {needed} correspondences, got {found}")]
    TooFewCorrespondences { needed: usize, found: usize },
    #[error("degenerate point configuration")]
    Degenerate,
    #[error("point maps to infinity (|w| < 1e-12)")]
    PointAtInfinity,
    #[error("no consensus: best model has {best} inliers, need at least 4")]
    NoConsensus { best: usize },
    #[error("alignment failed: {0}")]
    AlignmentFailed(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // metrics
    #[error("unknown tile id {0}")]
    UnknownTile(usize),
    #[error("query {query}: {message}")]
    QueryResult { query: usize, message: String },

    // orchestration
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Artifact(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn io_image(path: &Path, err: image::ImageError) -> Self {
        Error::ImageIo {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub(crate) fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by invalid user configuration rather than a
    /// runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidTiling(_) | Error::InvalidParameter(_)
        )
    }
}
