//! Web Mercator projection, geodesic distance and tile-pixel georeferencing.

use aero_vpr::geo::{
    geo_from_mercator, geodesic_distance, mercator_from_geo, pixel_to_geo, point_in_tile,
    GeoPoint, PixelPoint, WORLD_SIZE,
};
use aero_vpr::tilemap::TileRecord;
use aero_vpr::ImageSize;

fn main() -> aero_vpr::Result<()> {
    let zurich = GeoPoint::new(47.3769, 8.5417)?;
    let m = mercator_from_geo(zurich, WORLD_SIZE)?;
    let back = geo_from_mercator(m, WORLD_SIZE)?;
    println!("{zurich:?} -> ({:.6}, {:.6}) -> {back:?}", m.x, m.y);

    let a = GeoPoint::new(0.0, 0.0)?;
    let b = GeoPoint::new(0.0, 1.0)?;
    println!("1 degree of longitude at the equator: {:.2} m", geodesic_distance(a, b));

    match GeoPoint::new(86.0, 0.0).and_then(|p| mercator_from_geo(p, WORLD_SIZE)) {
        Ok(_) => println!("unexpected"),
        Err(e) => println!("rejected: {e}"),
    }

    let tile = TileRecord {
        tile_id: 0,
        image_ref: "tile.png".into(),
        nw: GeoPoint::new(47.38, 8.54)?,
        se: GeoPoint::new(47.37, 8.55)?,
        zoom_percent: 100.0,
        overlap_percent: 0.0,
        row: 0,
        col: 0,
    };
    let size = ImageSize::square(256);
    let center = pixel_to_geo(&tile, size, PixelPoint::new(128.0, 128.0))?;
    println!("tile center {center:?}, inside: {}", point_in_tile(&tile, center));
    Ok(())
}
