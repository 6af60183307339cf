//! Global descriptors, the AVLD database file and exact nearest-neighbour
//! search.

use aero_vpr::descstore::{load_database, save_database, DescriptorDatabase};
use aero_vpr::extract::global_descriptor_grid;
use aero_vpr::synth::{render_canvas, SynthConfig};

fn main() -> aero_vpr::Result<()> {
    let cfg = SynthConfig {
        rows: 3,
        cols: 3,
        ..Default::default()
    };
    let canvas = render_canvas(&cfg)?;
    let mut descs = Vec::new();
    for row in 0..5 {
        for col in 0..5 {
            let tile = canvas.crop(col * 128, row * 128, 256, 256)?;
            descs.push(global_descriptor_grid(&tile)?);
        }
    }
    let db = DescriptorDatabase::build(&descs)?;
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("tiles.avld");
    save_database(&db, &path)?;
    let db = load_database(&path)?;
    println!("database: {} x {} ({} bytes)", db.count(), db.dim(), std::fs::metadata(&path).map_or(0, |m| m.len()));

    // a window between tiles 6, 7, 11 and 12
    let query = global_descriptor_grid(&canvas.crop(170, 150, 256, 256)?)?;
    for hit in db.search(&query, 5)? {
        println!("tile {:>2}  squared distance {:.4}", hit.tile_id, hit.distance);
    }
    Ok(())
}
