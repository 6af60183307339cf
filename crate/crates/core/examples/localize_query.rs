//! Local features, mutual matching, reranking and georeferencing of one
//! synthetic query against its candidate tiles.

use aero_vpr::alignment::{localize, LocalizeParams};
use aero_vpr::extract::{extract_local, DEFAULT_MAX_KEYPOINTS};
use aero_vpr::features::{match_features, rerank, RerankParams};
use aero_vpr::geo::geodesic_distance;
use aero_vpr::synth::{generate_map, render_query, SynthConfig};
use aero_vpr::tilemap::{build_tiles, ingest_raw_map};

fn main() -> aero_vpr::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = SynthConfig {
        rows: 3,
        cols: 3,
        ..Default::default()
    };
    let map = generate_map(&cfg, dir.path())?;
    let built = build_tiles(&ingest_raw_map(&map.metadata_path)?, 100.0, 50.0, None)?;

    let center = (300.0, 410.0);
    let query = render_query(&map.canvas, center, 3.0, 1.05, cfg.tile_px);
    let truth = map.geo_at(center.0, center.1)?;

    let qf = extract_local(&query, DEFAULT_MAX_KEYPOINTS)?;
    let tiles: Vec<_> = built
        .images
        .iter()
        .map(|img| extract_local(img, DEFAULT_MAX_KEYPOINTS))
        .collect::<aero_vpr::Result<_>>()?;
    let cands: Vec<_> = tiles.iter().enumerate().collect();
    let order: Vec<usize> = (0..tiles.len()).collect();
    let head = rerank(&qf, &cands, &order, 3, &RerankParams::default())?;
    println!("best candidates (tile, inliers): {head:?}");

    let best = head[0].0;
    let matches = match_features(&qf, &tiles[best], 0.8)?;
    println!("{} keypoints, {} mutual matches with tile {best}", qf.len(), matches.len());
    let loc = localize(
        &qf,
        query.size(),
        &tiles[best],
        &built.tileset.tiles[best],
        built.tileset.image_size(),
        &LocalizeParams::default(),
    )?;
    println!(
        "estimated {:?}, error {:.2} m, {} inliers",
        loc.position,
        geodesic_distance(loc.position, truth),
        loc.inliers
    );
    Ok(())
}
