//! Tile databases built from a zero-overlap raw tile grid.
//!
//! A raw map is a `rows x cols` grid of equally sized tiles that are uniform
//! in Web Mercator. From it [`build_tiles`] synthesizes a new lattice of
//! square tiles for any zoom level (linear scale relative to the raw tiles,
//! 100% = raw) and overlap level (fraction of linear extent shared by
//! neighbours). Positions are measured in raw-tile units:
//!
//! ```text
//! span   = 100 / zoom
//! stride = span * (1 - overlap / 100)
//! x_k    = k * stride      while x_k + span <= extent
//! ```
//!
//! Lattice positions whose tile would extend past the map are dropped.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{geo_from_mercator, GeoPoint, MercatorRect, WORLD_SIZE};
use crate::raster::{image_dimensions, to_u8, Image, ImageSize};

/// Header of every tile metadata CSV (raw maps and constructed tilesets).
pub const METADATA_HEADER: [&str; 10] = [
    "tile_id",
    "path",
    "nw_lat",
    "nw_lon",
    "se_lat",
    "se_lon",
    "zoom_percent",
    "overlap_percent",
    "row",
    "col",
];

/// File name of the metadata written by [`write_tileset`].
pub const TILESET_FILE: &str = "tiles.csv";

// Slack for lattice comparisons in raw-tile units.
const LATTICE_EPS: f64 = 1e-9;

/// One database image and its geographic footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct TileRecord {
    pub tile_id: usize,
    pub image_ref: PathBuf,
    pub nw: GeoPoint,
    pub se: GeoPoint,
    pub zoom_percent: f64,
    pub overlap_percent: f64,
    pub row: u32,
    pub col: u32,
}

impl TileRecord {
    pub fn ne(&self) -> GeoPoint {
        GeoPoint {
            lat: self.nw.lat,
            lon: self.se.lon,
        }
    }

    pub fn sw(&self) -> GeoPoint {
        GeoPoint {
            lat: self.se.lat,
            lon: self.nw.lon,
        }
    }

    pub fn mercator_rect(&self) -> Result<MercatorRect> {
        MercatorRect::from_corners(self.nw, self.se)
    }

    pub fn validate(&self) -> Result<()> {
        let invariant = |message: String| Error::TileInvariant {
            tile_id: self.tile_id,
            message,
        };
        self.mercator_rect().map_err(|_| {
            invariant(format!(
                "nw ({}, {}) is not strictly north-west of se ({}, {})",
                self.nw.lat, self.nw.lon, self.se.lat, self.se.lon
            ))
        })?;
        if !(self.zoom_percent > 0.0 && self.zoom_percent.is_finite()) {
            return Err(invariant(format!("zoom {} must be > 0", self.zoom_percent)));
        }
        if !(0.0..100.0).contains(&self.overlap_percent) {
            return Err(invariant(format!(
                "overlap {} outside [0, 100)",
                self.overlap_percent
            )));
        }
        Ok(())
    }
}

/// Zero-overlap grid of downloaded tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMap {
    pub rows: u32,
    pub cols: u32,
    pub tile_px: u32,
    pub geo_bounds: MercatorRect,
    /// Row-major image paths, `tiles[row * cols + col]`.
    pub tiles: Vec<PathBuf>,
}

impl RawMap {
    pub fn tile_path(&self, row: u32, col: u32) -> &Path {
        &self.tiles[(row * self.cols + col) as usize]
    }

    /// Stitches all raw tiles into one canvas.
    pub fn load_mosaic(&self) -> Result<Image> {
        let first = Image::load(self.tile_path(0, 0))?;
        let mut canvas = Image::blank(
            self.cols * self.tile_px,
            self.rows * self.tile_px,
            first.channels(),
        )?;
        for row in 0..self.rows {
            for col in 0..self.cols {
                let path = self.tile_path(row, col);
                let img = if row == 0 && col == 0 {
                    first.clone()
                } else {
                    Image::load(path)?
                };
                if img.channels() != first.channels() {
                    return Err(Error::InvalidImage(format!(
                        "{} has {} channels, expected {}",
                        path.display(),
                        img.channels(),
                        first.channels()
                    )));
                }
                canvas.paste(&img, col * self.tile_px, row * self.tile_px)?;
            }
        }
        Ok(canvas)
    }
}

/// An ordered tile database sharing one zoom, overlap and resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TileSet {
    pub tiles: Vec<TileRecord>,
    pub zoom_percent: f64,
    pub overlap_percent: f64,
    pub out_resolution: u32,
    /// Directory that relative `image_ref`s resolve against.
    pub base_dir: PathBuf,
}

impl TileSet {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn get(&self, tile_id: usize) -> Option<&TileRecord> {
        self.tiles.get(tile_id)
    }

    pub fn image_size(&self) -> ImageSize {
        ImageSize::square(self.out_resolution)
    }

    pub fn image_path(&self, tile_id: usize) -> PathBuf {
        self.base_dir.join(&self.tiles[tile_id].image_ref)
    }

    pub fn load_image(&self, tile_id: usize) -> Result<Image> {
        Image::load(&self.image_path(tile_id))
    }
}

/// A freshly constructed tileset with its rendered images (index = tile_id).
#[derive(Debug, Clone)]
pub struct BuiltTiles {
    pub tileset: TileSet,
    pub images: Vec<Image>,
}

/// Number of lattice positions along one axis.
pub fn lattice_count(extent: f64, span: f64, stride: f64) -> usize {
    if span > extent + LATTICE_EPS {
        return 0;
    }
    ((extent - span) / stride + LATTICE_EPS).floor() as usize + 1
}

/// Tile span and stride in raw-tile units.
pub fn span_and_stride(zoom_percent: f64, overlap_percent: f64) -> Result<(f64, f64)> {
    if !(zoom_percent.is_finite() && zoom_percent > 0.0) {
        return Err(Error::InvalidTiling(format!(
            "zoom {zoom_percent}% must be a positive number"
        )));
    }
    if !(0.0..100.0).contains(&overlap_percent) {
        return Err(Error::InvalidTiling(format!(
            "overlap {overlap_percent}% must lie in [0, 100)"
        )));
    }
    let span = 100.0 / zoom_percent;
    Ok((span, span * (1.0 - overlap_percent / 100.0)))
}

pub fn ingest_raw_map(metadata_path: &Path) -> Result<RawMap> {
    let records = read_metadata(metadata_path)?;
    if records.is_empty() {
        return Err(Error::parse(metadata_path, 1, "metadata lists no tiles"));
    }
    let rows = records.iter().map(|(_, r)| r.row).max().unwrap_or(0) + 1;
    let cols = records.iter().map(|(_, r)| r.col).max().unwrap_or(0) + 1;
    let mut grid: Vec<Option<&TileRecord>> = vec![None; (rows * cols) as usize];
    for (line, rec) in &records {
        if rec.zoom_percent != 100.0 || rec.overlap_percent != 0.0 {
            return Err(Error::parse(
                metadata_path,
                *line,
                format!(
                    "raw tiles must have zoom 100 and overlap 0, found zoom {} overlap {}",
                    rec.zoom_percent, rec.overlap_percent
                ),
            ));
        }
        let cell = &mut grid[(rec.row * cols + rec.col) as usize];
        if cell.is_some() {
            return Err(Error::parse(
                metadata_path,
                *line,
                format!("duplicate grid cell ({}, {})", rec.row, rec.col),
            ));
        }
        *cell = Some(rec);
    }

    let base = metadata_path.parent().unwrap_or(Path::new(""));
    let mut tiles = Vec::with_capacity(grid.len());
    let mut tile_px = None;
    for row in 0..rows {
        for col in 0..cols {
            let rec = grid[(row * cols + col) as usize].ok_or(Error::MissingCell { row, col })?;
            let path = base.join(&rec.image_ref);
            let dims = image_dimensions(&path)?;
            let expected = *tile_px.get_or_insert(dims.width);
            if dims.width != expected || dims.height != expected {
                return Err(Error::ResolutionMismatch {
                    row,
                    col,
                    expected,
                    found: dims.width,
                    found_h: dims.height,
                });
            }
            tiles.push(path);
        }
    }

    let first = grid[0].expect("cell (0, 0) checked above");
    let last = grid[grid.len() - 1].expect("last cell checked above");
    let nw = crate::geo::mercator_from_geo(first.nw, WORLD_SIZE)?;
    let se = crate::geo::mercator_from_geo(last.se, WORLD_SIZE)?;
    let geo_bounds = MercatorRect::new(nw.x, nw.y, se.x, se.y)?;

    Ok(RawMap {
        rows,
        cols,
        tile_px: tile_px.unwrap_or(0),
        geo_bounds,
        tiles,
    })
}

/// Tile geometry without pixels: the records `build_tiles` would produce.
pub fn plan_tiles(raw: &RawMap, zoom_percent: f64, overlap_percent: f64) -> Result<Vec<TileRecord>> {
    let (span, stride) = span_and_stride(zoom_percent, overlap_percent)?;
    for extent in [raw.cols as f64, raw.rows as f64] {
        if span > extent + LATTICE_EPS {
            return Err(Error::MapTooSmall { span, extent });
        }
    }
    let nx = lattice_count(raw.cols as f64, span, stride);
    let ny = lattice_count(raw.rows as f64, span, stride);
    let mut out = Vec::with_capacity(nx * ny);
    for r in 0..ny {
        for c in 0..nx {
            let x0 = c as f64 * stride;
            let y0 = r as f64 * stride;
            let b = &raw.geo_bounds;
            let nw = b.lerp(x0 / raw.cols as f64, y0 / raw.rows as f64);
            let se = b.lerp((x0 + span) / raw.cols as f64, (y0 + span) / raw.rows as f64);
            let tile_id = out.len();
            out.push(TileRecord {
                tile_id,
                image_ref: PathBuf::from(format!("tile_{tile_id:06}.png")),
                nw: geo_from_mercator(nw, WORLD_SIZE)?,
                se: geo_from_mercator(se, WORLD_SIZE)?,
                zoom_percent,
                overlap_percent,
                row: r as u32,
                col: c as u32,
            });
        }
    }
    Ok(out)
}

/// Constructs the tile lattice for one zoom/overlap pair and renders every
/// tile at `out_resolution` (defaults to the raw tile resolution).
pub fn build_tiles(
    raw: &RawMap,
    zoom_percent: f64,
    overlap_percent: f64,
    out_resolution: Option<u32>,
) -> Result<BuiltTiles> {
    let records = plan_tiles(raw, zoom_percent, overlap_percent)?;
    let out_res = out_resolution.unwrap_or(raw.tile_px);
    if out_res == 0 {
        return Err(Error::InvalidTiling("output resolution must be > 0".into()));
    }
    let canvas = raw.load_mosaic()?;
    let (span, stride) = span_and_stride(zoom_percent, overlap_percent)?;
    let px = raw.tile_px as f64;

    let images = records
        .par_iter()
        .map(|rec| {
            let x0 = rec.col as f64 * stride * px;
            let y0 = rec.row as f64 * stride * px;
            resample_region(&canvas, x0, y0, span * px, out_res)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BuiltTiles {
        tileset: TileSet {
            tiles: records,
            zoom_percent,
            overlap_percent,
            out_resolution: out_res,
            base_dir: PathBuf::new(),
        },
        images,
    })
}

/// Bilinear resampling of the square canvas region `[x0, x0+side]^2` to
/// `out x out` pixels, sampling at output pixel centers.
fn resample_region(canvas: &Image, x0: f64, y0: f64, side: f64, out: u32) -> Result<Image> {
    let ch = canvas.channels();
    let scale = side / out as f64;
    let mut data = Vec::with_capacity(out as usize * out as usize * ch as usize);
    for j in 0..out {
        let sy = y0 + (j as f64 + 0.5) * scale;
        for i in 0..out {
            let sx = x0 + (i as f64 + 0.5) * scale;
            for c in 0..ch {
                data.push(to_u8(canvas.sample_bilinear(sx, sy, c)));
            }
        }
    }
    Image::from_raw(out, out, ch, data)
}

pub fn write_tileset(built: &BuiltTiles, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    built
        .tileset
        .tiles
        .par_iter()
        .zip(built.images.par_iter())
        .try_for_each(|(rec, img)| img.save(&dir.join(&rec.image_ref)))?;
    let path = dir.join(TILESET_FILE);
    write_metadata(&path, &built.tileset.tiles)?;
    Ok(path)
}

pub fn load_tileset(metadata_path: &Path) -> Result<TileSet> {
    let records = read_metadata(metadata_path)?;
    let Some((_, first)) = records.first() else {
        return Err(Error::parse(metadata_path, 1, "tileset lists no tiles"));
    };
    let (zoom, overlap) = (first.zoom_percent, first.overlap_percent);
    let base_dir = metadata_path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut resolution = None;
    let mut tiles = Vec::with_capacity(records.len());
    for (i, (line, rec)) in records.into_iter().enumerate() {
        if rec.tile_id != i {
            return Err(Error::parse(
                metadata_path,
                line,
                format!("tile_id {} out of order, expected {i}", rec.tile_id),
            ));
        }
        if rec.zoom_percent != zoom || rec.overlap_percent != overlap {
            return Err(Error::TileInvariant {
                tile_id: i,
                message: "zoom/overlap differ from the rest of the tileset".into(),
            });
        }
        rec.validate()?;
        let path = base_dir.join(&rec.image_ref);
        if !path.is_file() {
            return Err(Error::MissingTileImage { tile_id: i, path });
        }
        let dims = image_dimensions(&path)?;
        let expected = *resolution.get_or_insert(dims.width);
        if dims.width != expected || dims.height != expected {
            return Err(Error::TileInvariant {
                tile_id: i,
                message: format!(
                    "image is {}x{}, expected {expected}x{expected}",
                    dims.width, dims.height
                ),
            });
        }
        tiles.push(rec);
    }
    Ok(TileSet {
        tiles,
        zoom_percent: zoom,
        overlap_percent: overlap,
        out_resolution: resolution.unwrap_or(0),
        base_dir,
    })
}

/// Formats a coordinate with 10 decimals, adding digits only when needed
/// for an exact round trip.
pub(crate) fn format_coord(v: f64) -> String {
    for prec in 10..=17 {
        let s = format!("{v:.prec$}");
        if s.parse::<f64>().ok() == Some(v) {
            return s;
        }
    }
    format!("{v:?}")
}

pub fn write_metadata(path: &Path, records: &[TileRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let to_err = |e| csv_io(path, e);
    w.write_record(METADATA_HEADER).map_err(to_err)?;
    for r in records {
        w.write_record([
            r.tile_id.to_string(),
            r.image_ref.to_string_lossy().into_owned(),
            format_coord(r.nw.lat),
            format_coord(r.nw.lon),
            format_coord(r.se.lat),
            format_coord(r.se.lon),
            r.zoom_percent.to_string(),
            r.overlap_percent.to_string(),
            r.row.to_string(),
            r.col.to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a metadata CSV, returning each record with its 1-based line.
pub fn read_metadata(path: &Path) -> Result<Vec<(u64, TileRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let header = rdr.headers().map_err(|e| csv_io(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != METADATA_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!("expected header {}", METADATA_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let num = |i: usize| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| {
                Error::parse(
                    path,
                    line,
                    format!("{}: cannot parse {:?}", METADATA_HEADER[i], field(i)),
                )
            })
        };
        let int = |i: usize| -> Result<u64> {
            field(i).parse::<u64>().map_err(|_| {
                Error::parse(
                    path,
                    line,
                    format!("{}: cannot parse {:?}", METADATA_HEADER[i], field(i)),
                )
            })
        };
        let point = |lat: f64, lon: f64| {
            GeoPoint::new(lat, lon).map_err(|e| Error::parse(path, line, e.to_string()))
        };
        if field(1).is_empty() {
            return Err(Error::parse(path, line, "empty image path"));
        }
        out.push((
            line,
            TileRecord {
                tile_id: int(0)? as usize,
                image_ref: PathBuf::from(field(1)),
                nw: point(num(2)?, num(3)?)?,
                se: point(num(4)?, num(5)?)?,
                zoom_percent: num(6)?,
                overlap_percent: num(7)?,
                row: int(8)? as u32,
                col: int(9)? as u32,
            },
        ));
    }
    Ok(out)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_counts() {
        assert_eq!(lattice_count(3.0, 1.0, 0.5), 5);
        assert_eq!(lattice_count(4.0, 2.0, 2.0), 2);
        assert_eq!(lattice_count(3.0, 1.0, 1.0), 3);
        assert_eq!(lattice_count(2.0, 10.0, 10.0), 0);
        // 150% zoom: span 2/3, 4 raw tiles -> 6 tiles
        let (span, stride) = span_and_stride(150.0, 0.0).unwrap();
        assert_eq!(lattice_count(4.0, span, stride), 6);
    }

    #[test]
    fn tiling_parameter_validation() {
        assert!(span_and_stride(0.0, 0.0).is_err());
        assert!(span_and_stride(100.0, 100.0).is_err());
        assert!(span_and_stride(100.0, -1.0).is_err());
        assert_eq!(span_and_stride(50.0, 50.0).unwrap(), (2.0, 1.0));
    }

    #[test]
    fn coords_format_with_ten_decimals() {
        assert_eq!(format_coord(47.5), "47.5000000000");
        let v = 47.123456789012345;
        assert_eq!(format_coord(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn record_corner_helpers() {
        let r = TileRecord {
            tile_id: 3,
            image_ref: "a.png".into(),
            nw: GeoPoint::new(10.0, 20.0).unwrap(),
            se: GeoPoint::new(9.0, 21.0).unwrap(),
            zoom_percent: 100.0,
            overlap_percent: 0.0,
            row: 0,
            col: 0,
        };
        assert_eq!(r.ne(), GeoPoint::new(10.0, 21.0).unwrap());
        assert_eq!(r.sw(), GeoPoint::new(9.0, 20.0).unwrap());
        r.validate().unwrap();
        let bad = TileRecord {
            nw: r.se,
            se: r.nw,
            ..r.clone()
        };
        assert!(matches!(bad.validate(), Err(Error::TileInvariant { tile_id: 3, .. })));
    }
}
