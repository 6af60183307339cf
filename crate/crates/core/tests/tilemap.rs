use std::fs;

use aero_vpr::error::Error;
use aero_vpr::geo::{geo_from_mercator, mercator_from_geo, pixel_to_geo, point_in_tile, GeoPoint, MercatorPoint, WORLD_SIZE};
use aero_vpr::synth::{generate_map, SynthConfig};
use aero_vpr::tilemap::{
    build_tiles, ingest_raw_map, lattice_count, load_tileset, read_metadata, span_and_stride,
    write_metadata, write_tileset,
};
use aero_vpr::ImageSize;
use proptest::prelude::*;

fn small(rows: u32, cols: u32) -> SynthConfig {
    SynthConfig {
        rows,
        cols,
        tile_px: 64,
        query_count: 1,
        ..Default::default()
    }
}

#[test]
fn three_by_three_half_overlap_gives_25_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let map = generate_map(&small(3, 3), dir.path()).unwrap();
    let raw = ingest_raw_map(&map.metadata_path).unwrap();
    assert_eq!((raw.rows, raw.cols), (3, 3));
    let built = build_tiles(&raw, 100.0, 50.0, None).unwrap();
    // positions 0, 0.5, 1, 1.5, 2 along each axis
    let mut brute = 0;
    while brute as f64 * 0.5 + 1.0 <= 3.0 {
        brute += 1;
    }
    assert_eq!(brute, 5);
    assert_eq!(built.tileset.len(), brute * brute);
    assert_eq!(lattice_count(3.0, 1.0, 0.5), 5);
}

#[test]
fn tileset_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let map = generate_map(&small(2, 3), &dir.path().join("raw")).unwrap();
    let raw = ingest_raw_map(&map.metadata_path).unwrap();
    let built = build_tiles(&raw, 150.0, 25.0, Some(48)).unwrap();
    let out = dir.path().join("tiles");
    let meta = write_tileset(&built, &out).unwrap();
    let loaded = load_tileset(&meta).unwrap();
    assert_eq!(loaded.tiles, built.tileset.tiles);
    assert_eq!(loaded.out_resolution, 48);
    assert_eq!(loaded.load_image(0).unwrap().size(), ImageSize::square(48));

    fs::remove_file(out.join(&loaded.tiles[2].image_ref)).unwrap();
    match load_tileset(&meta).unwrap_err() {
        Error::MissingTileImage { tile_id, .. } => assert_eq!(tile_id, 2),
        e => panic!("unexpected {e}"),
    }

    // swap the corners of one record so nw lies south of se
    let mut recs: Vec<_> = read_metadata(&meta).unwrap().into_iter().map(|(_, r)| r).collect();
    let r = &mut recs[0];
    (r.nw.lat, r.se.lat) = (r.se.lat, r.nw.lat);
    write_metadata(&meta, &recs).unwrap();
    fs::copy(out.join(&recs[1].image_ref), out.join(&recs[2].image_ref)).unwrap();
    assert!(matches!(
        load_tileset(&meta).unwrap_err(),
        Error::TileInvariant { tile_id: 0, .. }
    ));
}

#[test]
fn raw_map_errors() {
    let dir = tempfile::tempdir().unwrap();
    let map = generate_map(&small(3, 3), dir.path()).unwrap();
    let raw = ingest_raw_map(&map.metadata_path).unwrap();
    assert!(matches!(
        build_tiles(&raw, 10.0, 0.0, None).unwrap_err(),
        Error::MapTooSmall { .. }
    ));
    assert!(build_tiles(&raw, 100.0, 100.0, None).unwrap_err().is_config());
    assert!(build_tiles(&raw, 0.0, 0.0, None).is_err());

    let recs: Vec<_> = read_metadata(&map.metadata_path).unwrap().into_iter().map(|(_, r)| r).collect();
    let missing: Vec<_> = recs.iter().filter(|r| (r.row, r.col) != (1, 2)).cloned().collect();
    write_metadata(&map.metadata_path, &missing).unwrap();
    let err = ingest_raw_map(&map.metadata_path).unwrap_err();
    assert!(matches!(err, Error::MissingCell { row: 1, col: 2 }), "{err}");
    assert!(err.to_string().contains("(1, 2)"));
}

#[test]
fn resolution_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let map = generate_map(&small(2, 2), dir.path()).unwrap();
    let raw = ingest_raw_map(&map.metadata_path).unwrap();
    aero_vpr::Image::filled(32, 32, 7).save(raw.tile_path(1, 1)).unwrap();
    assert!(matches!(
        ingest_raw_map(&map.metadata_path).unwrap_err(),
        Error::ResolutionMismatch { row: 1, col: 1, .. }
    ));
}

#[test]
fn tile_centers_map_to_rect_midpoints() {
    let dir = tempfile::tempdir().unwrap();
    let map = generate_map(&small(2, 2), dir.path()).unwrap();
    let raw = ingest_raw_map(&map.metadata_path).unwrap();
    let built = build_tiles(&raw, 100.0, 50.0, None).unwrap();
    for t in &built.tileset.tiles {
        let size = built.tileset.image_size();
        let c = pixel_to_geo(t, size, aero_vpr::PixelPoint::new(32.0, 32.0)).unwrap();
        let a = mercator_from_geo(t.nw, WORLD_SIZE).unwrap();
        let b = mercator_from_geo(t.se, WORLD_SIZE).unwrap();
        let mid = geo_from_mercator(
            MercatorPoint { x: (a.x + b.x) / 2.0, y: (a.y + b.y) / 2.0 },
            WORLD_SIZE,
        )
        .unwrap();
        assert!((c.lat - mid.lat).abs() < 1e-12 && (c.lon - mid.lon).abs() < 1e-12);
        assert!(point_in_tile(t, c));
        assert!(point_in_tile(t, t.nw));
    }
}

proptest! {
    #[test]
    fn lattice_matches_enumeration(zoom in 20.0f64..400.0, overlap in 0.0f64..95.0, extent in 1u32..12) {
        let (span, stride) = span_and_stride(zoom, overlap).unwrap();
        let e = extent as f64;
        let mut brute = 0usize;
        while brute as f64 * stride + span <= e + 1e-9 {
            brute += 1;
        }
        prop_assert_eq!(lattice_count(e, span, stride), brute);
    }

    #[test]
    fn projection_round_trip(lat in -85.0f64..85.0, lon in -180.0f64..180.0) {
        let p = GeoPoint::new(lat, lon).unwrap();
        let m = mercator_from_geo(p, WORLD_SIZE).unwrap();
        prop_assert!((0.0..=WORLD_SIZE).contains(&m.x) && (0.0..=WORLD_SIZE).contains(&m.y));
        let q = geo_from_mercator(m, WORLD_SIZE).unwrap();
        prop_assert!((p.lat - q.lat).abs() < 1e-9);
        prop_assert!((p.lon - q.lon).abs() < 1e-9 || (p.lon - q.lon).abs() > 360.0 - 1e-9);
        prop_assert!((-180.0..180.0).contains(&q.lon));
    }
}
