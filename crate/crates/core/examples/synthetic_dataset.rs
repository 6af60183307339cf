//! Generating a synthetic raw map and perturbed queries with ground truth.

use aero_vpr::extract::{detect_corners, DEFAULT_MAX_KEYPOINTS};
use aero_vpr::synth::{generate_map, generate_queries, plan_queries, Perturbation, SynthConfig};
use aero_vpr::tilemap::ingest_raw_map;
use aero_vpr::Image;

fn main() -> aero_vpr::Result<()> {
    let out = tempfile::tempdir().expect("temp dir");
    let cfg = SynthConfig {
        seed: 11,
        rows: 4,
        cols: 4,
        query_count: 8,
        perturbation: Perturbation {
            max_rotation_deg: 5.0,
            scale_min: 0.9,
            scale_max: 1.1,
            noise_sigma: 5.0,
        },
        ..Default::default()
    };
    let map = generate_map(&cfg, &out.path().join("map"))?;
    let raw = ingest_raw_map(&map.metadata_path)?;
    let corners = detect_corners(&Image::load(raw.tile_path(0, 0))?, DEFAULT_MAX_KEYPOINTS)?;
    println!(
        "map {}x{} raw tiles, bounds {:?}; tile (0,0) has {} corners",
        raw.rows,
        raw.cols,
        raw.geo_bounds,
        corners.len()
    );

    let queries = generate_queries(&map, &out.path().join("queries"))?;
    for (plan, q) in plan_queries(&cfg)?.iter().zip(&queries.entries) {
        println!(
            "{:?}: center ({:7.1}, {:7.1}) rot {:+.2} deg scale {:.3} -> gt {:.6}, {:.6}",
            q.image_ref, plan.center.0, plan.center.1, plan.rotation_deg, plan.scale, q.gt.lat, q.gt.lon
        );
    }
    Ok(())
}
