//! Cutting a raw map into tilesets at several zoom and overlap levels.

use aero_vpr::synth::{generate_map, SynthConfig};
use aero_vpr::tilemap::{build_tiles, ingest_raw_map, load_tileset, plan_tiles, write_tileset};

fn main() -> aero_vpr::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = SynthConfig {
        rows: 4,
        cols: 4,
        ..Default::default()
    };
    let map = generate_map(&cfg, &dir.path().join("raw"))?;
    let raw = ingest_raw_map(&map.metadata_path)?;
    println!("raw map: {}x{} tiles of {} px", raw.rows, raw.cols, raw.tile_px);

    for zoom in [50.0, 100.0, 200.0] {
        for overlap in [0.0, 25.0, 50.0] {
            let n = plan_tiles(&raw, zoom, overlap)?.len();
            println!("zoom {zoom:>5}%  overlap {overlap:>4}%  -> {n:>3} tiles");
        }
    }

    let built = build_tiles(&raw, 200.0, 50.0, None)?;
    let meta = write_tileset(&built, &dir.path().join("z200_o50"))?;
    let tiles = load_tileset(&meta)?;
    let t = &tiles.tiles[0];
    println!(
        "wrote {} tiles to {}; tile 0 spans {:?} .. {:?}",
        tiles.len(),
        meta.display(),
        t.nw,
        t.se
    );
    Ok(())
}
