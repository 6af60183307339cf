//! Web Mercator projection, pixel/geographic conversion inside tiles and
//! great-circle distance.
//!
//! Mercator coordinates are expressed in "world pixels": the whole projected
//! world is a `world_size x world_size` square with the origin in the
//! north-west corner and `y` growing southwards, the same convention as web
//! map tile pyramids.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::raster::ImageSize;
use crate::tilemap::TileRecord;

/// Latitude limit of the square Web Mercator world, `atan(sinh(pi))`.
pub const MAX_MERCATOR_LAT: f64 = 85.05113;

/// Mean Earth radius used for all distances, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// World size used for internal Mercator computations (zoom-0 pyramid).
pub const WORLD_SIZE: f64 = 256.0;

/// Latitude/longitude in degrees (WGS84).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Validates the bounds and normalizes longitude to `[-180, 180)`.
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite()
            || !lon.is_finite()
            || !(-90.0..=90.0).contains(&lat)
            || !(-180.0..=180.0).contains(&lon)
        {
            return Err(Error::InvalidCoordinate { lat, lon });
        }
        let lon = if lon == 180.0 { -180.0 } else { lon };
        Ok(Self { lat, lon })
    }

    /// Moves the point by a metric offset (north and east, meters) on the
    /// sphere using the local tangent-plane approximation.
    pub fn offset_meters(&self, north_m: f64, east_m: f64) -> Result<Self> {
        let dlat = north_m / EARTH_RADIUS_M * 180.0 / PI;
        let dlon = east_m / (EARTH_RADIUS_M * self.lat.to_radians().cos()) * 180.0 / PI;
        GeoPoint::new(self.lat + dlat, self.lon + dlon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MercatorPoint {
    pub x: f64,
    pub y: f64,
}

/// Pixel position inside an image: `u` rightwards, `v` downwards, origin at
/// the top-left corner of the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

pub fn mercator_from_geo(p: GeoPoint, world_size: f64) -> Result<MercatorPoint> {
    if !(p.lat.abs() <= MAX_MERCATOR_LAT) {
        return Err(Error::LatitudeOutOfBand(p.lat));
    }
    let phi = p.lat.to_radians();
    let x = world_size * (p.lon / 360.0 + 0.5);
    let y = world_size * (0.5 - (PI / 4.0 + phi / 2.0).tan().ln() / (2.0 * PI));
    Ok(MercatorPoint { x, y })
}

pub fn geo_from_mercator(m: MercatorPoint, world_size: f64) -> Result<GeoPoint> {
    if !(0.0..=world_size).contains(&m.x) || !(0.0..=world_size).contains(&m.y) {
        return Err(Error::MercatorOutOfRange {
            x: m.x,
            y: m.y,
            world_size,
        });
    }
    let lon = (m.x / world_size - 0.5) * 360.0;
    let lat = (PI * (1.0 - 2.0 * m.y / world_size)).sinh().atan().to_degrees();
    GeoPoint::new(lat, lon)
}

/// Haversine distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn geodesic_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Axis-aligned rectangle in Mercator world pixels (`north < south`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MercatorRect {
    pub west: f64,
    pub north: f64,
    pub east: f64,
    pub south: f64,
}

impl MercatorRect {
    pub fn new(west: f64, north: f64, east: f64, south: f64) -> Result<Self> {
        let all_finite = [west, north, east, south].iter().all(|v| v.is_finite());
        if !all_finite || west >= east || north >= south {
            return Err(Error::DegenerateRect(format!(
                "west={west} north={north} east={east} south={south}"
            )));
        }
        Ok(Self {
            west,
            north,
            east,
            south,
        })
    }

    pub fn from_corners(nw: GeoPoint, se: GeoPoint) -> Result<Self> {
        let a = mercator_from_geo(nw, WORLD_SIZE)?;
        let b = mercator_from_geo(se, WORLD_SIZE)?;
        Self::new(a.x, a.y, b.x, b.y)
    }

    pub fn width(&self) -> f64 {
        self.east - self.west
    }

    pub fn height(&self) -> f64 {
        self.south - self.north
    }

    /// Point at fractional position `(fx, fy)`, `(0, 0)` being the NW corner.
    pub fn lerp(&self, fx: f64, fy: f64) -> MercatorPoint {
        MercatorPoint {
            x: self.west + fx * (self.east - self.west),
            y: self.north + fy * (self.south - self.north),
        }
    }

    /// Edge-inclusive containment.
    pub fn contains(&self, m: MercatorPoint) -> bool {
        self.west <= m.x && m.x <= self.east && self.north <= m.y && m.y <= self.south
    }

    pub fn nw(&self) -> Result<GeoPoint> {
        geo_from_mercator(
            MercatorPoint {
                x: self.west,
                y: self.north,
            },
            WORLD_SIZE,
        )
    }

    pub fn se(&self) -> Result<GeoPoint> {
        geo_from_mercator(
            MercatorPoint {
                x: self.east,
                y: self.south,
            },
            WORLD_SIZE,
        )
    }
}

/// Maps a pixel of the tile image (of size `size`) to geographic
/// coordinates by linear interpolation in the tile's Mercator rectangle.
/// Pixels outside the image extrapolate linearly.
pub fn pixel_to_geo(tile: &TileRecord, size: ImageSize, px: PixelPoint) -> Result<GeoPoint> {
    if size.width == 0 || size.height == 0 {
        return Err(Error::DegenerateRect(format!(
            "tile {} has a zero-sized image",
            tile.tile_id
        )));
    }
    let rect = tile.mercator_rect()?;
    let m = rect.lerp(px.u / size.width as f64, px.v / size.height as f64);
    geo_from_mercator(m, WORLD_SIZE)
}

/// Edge-inclusive containment of `p` in the tile's Mercator rectangle.
pub fn point_in_tile(tile: &TileRecord, p: GeoPoint) -> bool {
    let (Ok(rect), Ok(m)) = (tile.mercator_rect(), mercator_from_geo(p, WORLD_SIZE)) else {
        return false;
    };
    rect.contains(m)
}
