//! Writing externally computed descriptors in the AVLD/AVLF formats and
//! evaluating with them instead of the builtin extractors.

use aero_vpr::bench::commands::{evaluate_run, feature_file_name, synth};
use aero_vpr::bench::config::Settings;
use aero_vpr::bench::pipeline::{global_descriptors, local_features};
use aero_vpr::descstore::{save_database, DescriptorDatabase};
use aero_vpr::features::save_features;
use aero_vpr::metrics::QuerySet;
use aero_vpr::synth::SynthConfig;
use aero_vpr::tilemap::{build_tiles, ingest_raw_map};
use aero_vpr::Image;

fn main() -> aero_vpr::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let root = root.path();
    let cfg = SynthConfig {
        rows: 3,
        cols: 3,
        query_count: 10,
        ..Default::default()
    };
    let (map, queries) = synth(&cfg, &root.join("data"))?;
    let queries_csv = root.join("data/queries/queries.csv");

    // Stand-in for an external model: any extractor producing the same files works.
    let import = root.join("import");
    let export = |dir: &std::path::Path, images: &[Image]| -> aero_vpr::Result<()> {
        std::fs::create_dir_all(dir.join("global")).expect("mkdir");
        std::fs::create_dir_all(dir.join("local")).expect("mkdir");
        let db = DescriptorDatabase::build(&global_descriptors(images)?)?;
        save_database(&db, &dir.join("global/part0.avld"))?;
        for (i, f) in local_features(images, 200)?.iter().enumerate() {
            save_features(f, &dir.join("local").join(feature_file_name(i)))?;
        }
        Ok(())
    };
    let qs = QuerySet::load(&queries_csv)?;
    let q_images: Vec<Image> = (0..qs.len()).map(|i| Image::load(&qs.image_path(i))).collect::<Result<_, _>>()?;
    export(&import.join("queries"), &q_images)?;
    let built = build_tiles(&ingest_raw_map(&map.metadata_path)?, 100.0, 50.0, None)?;
    export(&import.join("z100_o50"), &built.images)?;

    let mut s = Settings::default();
    s.set("map", Some(map.metadata_path.display().to_string()));
    s.set("queries", Some(queries_csv.display().to_string()));
    s.set("out", Some(root.join("eval").display().to_string()));
    s.set("overlap", Some("50".into()));
    s.set("n", Some("10".into()));
    s.set("k", Some("3".into()));
    s.set("extractor", Some(format!("import:{}", import.display())));
    let results = evaluate_run(&s.into_run_config()?)?;
    println!("{} queries evaluated with imported features", queries.len());
    print!("{}", results[0].evaluation.report.to_text());
    Ok(())
}
