//! Full evaluation over a zoom x overlap grid: tile databases, retrieval,
//! reranking, alignment, recall report, stage timing and storage.
//!
//! Pass an output directory to keep the reports; a temporary one is used
//! otherwise.

use std::path::PathBuf;

use aero_vpr::bench::commands::{evaluate_run, synth};
use aero_vpr::bench::config::Settings;
use aero_vpr::synth::SynthConfig;

fn main() -> aero_vpr::Result<()> {
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = std::env::args().nth(1).map_or_else(|| tmp.path().to_path_buf(), PathBuf::from);
    let cfg = SynthConfig {
        rows: 4,
        cols: 4,
        query_count: 20,
        ..Default::default()
    };
    let (map, _) = synth(&cfg, &root.join("data"))?;

    let mut s = Settings::default();
    s.set("map", Some(map.metadata_path.display().to_string()));
    s.set("queries", Some(root.join("data/queries/queries.csv").display().to_string()));
    s.set("out", Some(root.join("eval").display().to_string()));
    s.set("zoom", Some("100,150".into()));
    s.set("overlap", Some("0,50".into()));
    s.set("n", Some("20".into()));
    s.set("k", Some("5".into()));
    let run = s.into_run_config()?;

    for r in evaluate_run(&run)? {
        println!("== zoom {} overlap {}: {} tiles", r.zoom, r.overlap, r.tiles);
        print!("{}", r.evaluation.report.to_text());
        print!("{}", r.evaluation.timing.to_csv());
        print!("{}", r.storage.to_csv());
    }
    println!("reports under {}", run.out.display());
    Ok(())
}
