//! VPR recall and georeference recall on a hand-built instance.

use aero_vpr::geo::GeoPoint;
use aero_vpr::metrics::{
    recall_report, AlignmentResult, QueryEntry, QuerySet, RetrievalResult,
};
use aero_vpr::tilemap::{TileRecord, TileSet};

fn main() -> aero_vpr::Result<()> {
    let tile = |id: usize, col: u32| TileRecord {
        tile_id: id,
        image_ref: format!("{id}.png").into(),
        nw: GeoPoint { lat: 47.01, lon: 8.0 + 0.01 * col as f64 },
        se: GeoPoint { lat: 47.0, lon: 8.01 + 0.01 * col as f64 },
        zoom_percent: 100.0,
        overlap_percent: 0.0,
        row: 0,
        col,
    };
    let tiles = TileSet {
        tiles: (0..4).map(|i| tile(i, i as u32)).collect(),
        zoom_percent: 100.0,
        overlap_percent: 0.0,
        out_resolution: 256,
        base_dir: Default::default(),
    };
    let gt = |lon: f64| GeoPoint { lat: 47.005, lon };
    let queries = QuerySet::new(
        [8.005, 8.015, 8.025, 8.035]
            .iter()
            .enumerate()
            .map(|(i, &lon)| QueryEntry {
                query_id: i,
                image_ref: format!("q{i}.png").into(),
                gt: gt(lon),
            })
            .collect(),
    )?;
    // query 0 right at rank 1, query 1 at rank 2, query 2 at rank 3, query 3 missed
    let retrieval = RetrievalResult {
        ranked: vec![vec![0, 1, 2], vec![0, 1, 2], vec![0, 1, 2], vec![0, 1, 2]],
    };
    let offset = |p: GeoPoint, m: f64| p.offset_meters(m, 0.0);
    let alignment = AlignmentResult {
        positions: vec![
            Some(offset(gt(8.005), 3.0)?),
            Some(offset(gt(8.015), 12.0)?),
            Some(offset(gt(8.025), 40.0)?),
            None,
        ],
    };
    let report = recall_report(&queries, &retrieval, &tiles, &alignment, &[1, 2, 3], &[5.0, 25.0, 50.0])?;
    print!("{}", report.to_text());
    print!("{}", report.to_csv());
    Ok(())
}
