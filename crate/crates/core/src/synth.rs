//! Deterministic synthetic maps and queries with exact ground truth.
//!
//! Terrain is seeded multi-octave value noise rendered once over the whole
//! `rows x cols` canvas and then cut into raw tiles, so content is
//! continuous across seams. Lattice values come from an integer hash of
//! `(seed, octave, x, y)`; everything else is fixed-order `f64` arithmetic,
//! which keeps output bit-identical across runs and platforms.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{
    geo_from_mercator, mercator_from_geo, GeoPoint, MercatorRect, EARTH_RADIUS_M, WORLD_SIZE,
};
use crate::metrics::{QueryEntry, QuerySet};
use crate::raster::{to_u8, Image};
use crate::tilemap::{write_metadata, TileRecord};

pub const MAP_METADATA_FILE: &str = "map.csv";
pub const QUERY_METADATA_FILE: &str = "queries.csv";

const QUERY_STREAM_SALT: u64 = 0x51_7C_C1_B7_27_22_0A_95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub max_rotation_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Standard deviation of additive Gaussian noise, in intensity levels.
    pub noise_sigma: f64,
}

impl Perturbation {
    pub const NONE: Perturbation = Perturbation {
        max_rotation_deg: 0.0,
        scale_min: 1.0,
        scale_max: 1.0,
        noise_sigma: 0.0,
    };
}

impl Default for Perturbation {
    fn default() -> Self {
        Self::NONE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub rows: u32,
    pub cols: u32,
    pub tile_px: u32,
    /// Geographic position of the map's north-west corner.
    pub anchor: GeoPoint,
    /// Ground extent of one raw tile side.
    pub meters_per_raw_tile: f64,
    pub query_count: usize,
    pub perturbation: Perturbation,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            rows: 4,
            cols: 4,
            tile_px: 256,
            anchor: GeoPoint {
                lat: 47.3769,
                lon: 8.5417,
            },
            meters_per_raw_tile: 200.0,
            query_count: 50,
            perturbation: Perturbation::NONE,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rows == 0 || self.cols == 0 || self.tile_px == 0 {
            return bad("rows, cols and tile_px must be positive".into());
        }
        if !(self.meters_per_raw_tile > 0.0 && self.meters_per_raw_tile.is_finite()) {
            return bad(format!(
                "meters_per_raw_tile {} must be positive",
                self.meters_per_raw_tile
            ));
        }
        let p = &self.perturbation;
        if !(p.scale_min > 0.0 && p.scale_min <= p.scale_max && p.scale_max.is_finite()) {
            return bad(format!(
                "scale range [{}, {}] must lie in (0, inf)",
                p.scale_min, p.scale_max
            ));
        }
        if !(0.0..=45.0).contains(&p.max_rotation_deg) {
            return bad(format!(
                "max rotation {} must lie in [0, 45] degrees",
                p.max_rotation_deg
            ));
        }
        if !(p.noise_sigma >= 0.0 && p.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be >= 0", p.noise_sigma));
        }
        mercator_from_geo(self.anchor, WORLD_SIZE).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn canvas_width(&self) -> u32 {
        self.cols * self.tile_px
    }

    pub fn canvas_height(&self) -> u32 {
        self.rows * self.tile_px
    }

    /// Mercator rectangle of the whole map, using the ground scale at the
    /// anchor latitude for both axes.
    pub fn map_bounds(&self) -> Result<MercatorRect> {
        let nw = mercator_from_geo(self.anchor, WORLD_SIZE)?;
        let px_per_m =
            WORLD_SIZE / (2.0 * std::f64::consts::PI * EARTH_RADIUS_M * self.anchor.lat.to_radians().cos());
        let w = self.cols as f64 * self.meters_per_raw_tile * px_per_m;
        let h = self.rows as f64 * self.meters_per_raw_tile * px_per_m;
        MercatorRect::new(nw.x, nw.y, nw.x + w, nw.y + h)
    }
}

fn hash64(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice_value(seed: u64, octave: u32, x: i64, y: i64) -> f64 {
    let h = hash64(
        seed ^ hash64((octave as u64) << 48 ^ hash64(x as u64 ^ hash64(y as u64).rotate_left(17))),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn value_noise(seed: u64, octave: u32, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (ix, iy) = (x0 as i64, y0 as i64);
    let (tx, ty) = (fade(x - x0), fade(y - y0));
    let v00 = lattice_value(seed, octave, ix, iy);
    let v10 = lattice_value(seed, octave, ix + 1, iy);
    let v01 = lattice_value(seed, octave, ix, iy + 1);
    let v11 = lattice_value(seed, octave, ix + 1, iy + 1);
    let top = v00 + (v10 - v00) * tx;
    let bottom = v01 + (v11 - v01) * tx;
    top + (bottom - top) * ty
}

/// Wavelengths (pixels) and amplitudes of the terrain octaves. Broad
/// structure dominates so the coarse global descriptor tolerates shifts of
/// half a tile; the two fine octaves supply corners for local features.
const OCTAVES: [(f64, f64); 5] = [
    (512.0, 1.0),
    (256.0, 0.7),
    (128.0, 0.4),
    (16.0, 0.3),
    (4.0, 0.2),
];

/// Terrain intensity at canvas pixel `(x, y)`.
pub fn terrain_value(seed: u64, x: u32, y: u32) -> u8 {
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
    let mut sum = 0.0;
    let mut norm = 0.0;
    for (o, &(wavelength, amp)) in OCTAVES.iter().enumerate() {
        sum += amp * value_noise(seed, o as u32, px / wavelength, py / wavelength);
        norm += amp;
    }
    let v = sum / norm;
    to_u8(128.0 + (v - 0.5) * 400.0)
}

/// Renders the full map canvas.
pub fn render_canvas(cfg: &SynthConfig) -> Result<Image> {
    cfg.validate()?;
    let (w, h) = (cfg.canvas_width(), cfg.canvas_height());
    let rows: Vec<Vec<u8>> = (0..h)
        .into_par_iter()
        .map(|y| (0..w).map(|x| terrain_value(cfg.seed, x, y)).collect())
        .collect();
    Image::gray(w, h, rows.concat())
}

/// A generated map: canvas plus geographic bounds.
#[derive(Debug, Clone)]
pub struct SynthMap {
    pub config: SynthConfig,
    pub canvas: Image,
    pub bounds: MercatorRect,
    pub metadata_path: PathBuf,
}

impl SynthMap {
    /// Geographic position of a continuous canvas coordinate.
    pub fn geo_at(&self, x: f64, y: f64) -> Result<GeoPoint> {
        let m = self.bounds.lerp(
            x / self.canvas.width() as f64,
            y / self.canvas.height() as f64,
        );
        geo_from_mercator(m, WORLD_SIZE)
    }
}

/// Renders the map, writes one PNG per raw tile and the raw-map metadata
/// (`map.csv`) into `dir`.
pub fn generate_map(cfg: &SynthConfig, dir: &Path) -> Result<SynthMap> {
    let canvas = render_canvas(cfg)?;
    let bounds = cfg.map_bounds()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let t = cfg.tile_px;
    let mut records = Vec::with_capacity((cfg.rows * cfg.cols) as usize);
    for row in 0..cfg.rows {
        for col in 0..cfg.cols {
            let name = format!("raw_r{row:03}_c{col:03}.png");
            canvas.crop(col * t, row * t, t, t)?.save(&dir.join(&name))?;
            let nw = bounds.lerp(col as f64 / cfg.cols as f64, row as f64 / cfg.rows as f64);
            let se = bounds.lerp(
                (col + 1) as f64 / cfg.cols as f64,
                (row + 1) as f64 / cfg.rows as f64,
            );
            records.push(TileRecord {
                tile_id: records.len(),
                image_ref: name.into(),
                nw: geo_from_mercator(nw, WORLD_SIZE)?,
                se: geo_from_mercator(se, WORLD_SIZE)?,
                zoom_percent: 100.0,
                overlap_percent: 0.0,
                row,
                col,
            });
        }
    }
    let metadata_path = dir.join(MAP_METADATA_FILE);
    write_metadata(&metadata_path, &records)?;
    Ok(SynthMap {
        config: *cfg,
        canvas,
        bounds,
        metadata_path,
    })
}

/// Samples a `out_px x out_px` window centred at canvas position `center`,
/// rotated by `rotation_deg` and covering `scale * out_px` canvas pixels.
pub fn render_query(
    canvas: &Image,
    center: (f64, f64),
    rotation_deg: f64,
    scale: f64,
    out_px: u32,
) -> Image {
    let (s, c) = rotation_deg.to_radians().sin_cos();
    let half = out_px as f64 / 2.0;
    Image::from_fn(out_px, out_px, |i, j| {
        let dx = i as f64 + 0.5 - half;
        let dy = j as f64 + 0.5 - half;
        let sx = center.0 + scale * (c * dx - s * dy);
        let sy = center.1 + scale * (s * dx + c * dy);
        to_u8(canvas.sample_bilinear(sx, sy, 0))
    })
}

/// Draw parameters of one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryPlan {
    pub center: (f64, f64),
    pub rotation_deg: f64,
    pub scale: f64,
}

fn query_rng(cfg: &SynthConfig, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ QUERY_STREAM_SALT);
    rng.set_stream(index as u64);
    rng
}

/// Distance a query center must keep from the canvas edge.
fn query_margin(cfg: &SynthConfig) -> f64 {
    let p = &cfg.perturbation;
    let (s, c) = p.max_rotation_deg.to_radians().sin_cos();
    let half = cfg.tile_px as f64 / 2.0;
    (p.scale_max * half * (c + s) + 1.0).max(half)
}

fn draw_query(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> QueryPlan {
    let m = query_margin(cfg);
    let (w, h) = (cfg.canvas_width() as f64, cfg.canvas_height() as f64);
    let p = &cfg.perturbation;
    let center = (rng.random_range(m..=w - m), rng.random_range(m..=h - m));
    let rotation_deg = if p.max_rotation_deg > 0.0 {
        rng.random_range(-p.max_rotation_deg..=p.max_rotation_deg)
    } else {
        0.0
    };
    let scale = if p.scale_max > p.scale_min {
        rng.random_range(p.scale_min..=p.scale_max)
    } else {
        p.scale_min
    };
    QueryPlan {
        center,
        rotation_deg,
        scale,
    }
}

/// Renders a query for `plan` and adds the configured noise.
fn render_planned(map: &SynthMap, plan: &QueryPlan, rng: &mut ChaCha8Rng) -> Result<Image> {
    let cfg = &map.config;
    let img = render_query(&map.canvas, plan.center, plan.rotation_deg, plan.scale, cfg.tile_px);
    let sigma = cfg.perturbation.noise_sigma;
    if sigma == 0.0 {
        return Ok(img);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let data = img
        .data()
        .iter()
        .map(|&v| to_u8(v as f64 + normal.sample(rng)))
        .collect();
    Image::gray(img.width(), img.height(), data)
}

/// Query geometry for every index, without rendering.
pub fn plan_queries(cfg: &SynthConfig) -> Result<Vec<QueryPlan>> {
    cfg.validate()?;
    let m = query_margin(cfg);
    if 2.0 * m > cfg.canvas_width() as f64 || 2.0 * m > cfg.canvas_height() as f64 {
        return Err(Error::Config(format!(
            "query window needs {:.1} px of margin but the map is {}x{} px",
            m,
            cfg.canvas_width(),
            cfg.canvas_height()
        )));
    }
    Ok((0..cfg.query_count)
        .map(|i| draw_query(cfg, &mut query_rng(cfg, i)))
        .collect())
}

/// Renders `cfg.query_count` queries into `dir` with a `queries.csv`
/// holding the geographic position of each window center.
pub fn generate_queries(map: &SynthMap, dir: &Path) -> Result<QuerySet> {
    let cfg = &map.config;
    plan_queries(cfg)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries = (0..cfg.query_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = query_rng(cfg, i);
            let plan = draw_query(cfg, &mut rng);
            let img = render_planned(map, &plan, &mut rng)?;
            let name = format!("q_{i:05}.png");
            img.save(&dir.join(&name))?;
            Ok(QueryEntry {
                query_id: i,
                image_ref: name.into(),
                gt: map.geo_at(plan.center.0, plan.center.1)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut qs = QuerySet::new(entries)?;
    qs.save(&dir.join(QUERY_METADATA_FILE))?;
    qs.base_dir = dir.to_path_buf();
    Ok(qs)
}
