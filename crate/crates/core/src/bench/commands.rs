//! File-level implementations of the harness commands. Each returns data
//! the front end summarizes; all artifacts are written deterministically.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::alignment::{localize, LocalizeParams};
use crate::bench::config::{combination_dir, Extractor, RunConfig};
use crate::bench::pipeline::{
    evaluate, global_descriptors, load_query_images, local_features, Evaluation, QueryInput,
    TileDatabase,
};
use crate::bench::report::StorageReport;
use crate::descstore::{load_database, save_database, DescriptorDatabase};
use crate::error::{Error, Result};
use crate::features::{load_features, rerank, save_features, LocalFeatureSet, RerankParams};
use crate::metrics::{QuerySet, ReportTable};
use crate::raster::{image_dimensions, Image, ImageSize};
use crate::synth::{generate_map, generate_queries, SynthConfig, SynthMap, MAP_METADATA_FILE};
use crate::tilemap::{build_tiles, ingest_raw_map, load_tileset, write_tileset, TileSet, TILESET_FILE};

pub const RETRIEVAL_FILE: &str = "retrieval.csv";
pub const ALIGNMENT_FILE: &str = "alignment.csv";
pub const RECALL_REPORT_CSV: &str = "recall_report.csv";
pub const RECALL_REPORT_TXT: &str = "recall_report.txt";
pub const TIMING_FILE: &str = "timing.csv";
pub const STORAGE_FILE: &str = "storage.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Accepts a metadata CSV or a directory holding `default_name`.
pub fn resolve_metadata(path: &Path, default_name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default_name)
    } else {
        path.to_path_buf()
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Generates a raw map under `out/map` and queries under `out/queries`.
pub fn synth(cfg: &SynthConfig, out: &Path) -> Result<(SynthMap, QuerySet)> {
    cfg.validate()?;
    crate::synth::plan_queries(cfg)?;
    let map = generate_map(cfg, &out.join("map"))?;
    let queries = generate_queries(&map, &out.join("queries"))?;
    Ok((map, queries))
}

/// Builds and writes one tileset; returns it with `base_dir` set to `out`.
pub fn build_map(
    raw_metadata: &Path,
    zoom: f64,
    overlap: f64,
    out_resolution: Option<u32>,
    out: &Path,
) -> Result<TileSet> {
    let raw = ingest_raw_map(&resolve_metadata(raw_metadata, MAP_METADATA_FILE))?;
    let built = build_tiles(&raw, zoom, overlap, out_resolution)?;
    write_tileset(&built, out)?;
    let mut tileset = built.tileset;
    tileset.base_dir = out.to_path_buf();
    Ok(tileset)
}

/// Which images an extraction runs over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSource {
    /// Tileset metadata CSV (or its directory).
    Tiles(PathBuf),
    /// Query CSV.
    Queries(PathBuf),
}

impl ImageSource {
    /// Image paths in database/query order.
    pub fn image_paths(&self) -> Result<Vec<PathBuf>> {
        match self {
            ImageSource::Tiles(p) => {
                let ts = load_tileset(&resolve_metadata(p, TILESET_FILE))?;
                Ok((0..ts.len()).map(|i| ts.image_path(i)).collect())
            }
            ImageSource::Queries(p) => {
                let qs = QuerySet::load(p)?;
                Ok((0..qs.len()).map(|i| qs.image_path(i)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Global,
    Local,
}

pub fn feature_file_name(index: usize) -> String {
    format!("{index:06}.avlf")
}

fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Artifact(format!(
            "missing artifact directory {}",
            dir.display()
        )));
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Writes one AVLF file per set, replacing any `.avlf` files already there.
pub fn write_feature_dir(dir: &Path, sets: &[LocalFeatureSet]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for stale in files_with_extension(dir, "avlf")? {
        fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    sets.par_iter()
        .enumerate()
        .try_for_each(|(i, s)| save_features(s, &dir.join(feature_file_name(i))))
}

/// Loads every `.avlf` file of `dir` in name order, requiring exactly
/// `expected` files with one shared descriptor dimension.
pub fn read_feature_dir(dir: &Path, expected: usize) -> Result<Vec<LocalFeatureSet>> {
    let files = files_with_extension(dir, "avlf")?;
    if files.len() != expected {
        return Err(Error::Artifact(format!(
            "{}: expected {expected} feature files, found {}",
            dir.display(),
            files.len()
        )));
    }
    let sets = files
        .par_iter()
        .map(|f| load_features(f))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = sets.iter().find(|s| !s.is_empty()) {
        let dim = first.dim();
        if let Some((i, s)) = sets
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_empty() && s.dim() != dim)
        {
            return Err(Error::Artifact(format!(
                "{}: descriptor dimension {} differs from {dim}",
                files[i].display(),
                s.dim()
            )));
        }
    }
    Ok(sets)
}

/// Concatenates the `.avld` files of `dir` in name order; the total row
/// count must equal `expected`.
pub fn read_descriptor_dir(dir: &Path, expected: usize) -> Result<DescriptorDatabase> {
    let files = files_with_extension(dir, "avld")?;
    if files.is_empty() {
        return Err(Error::Artifact(format!(
            "{}: no .avld files",
            dir.display()
        )));
    }
    let parts = files
        .iter()
        .map(|f| load_database(f))
        .collect::<Result<Vec<_>>>()?;
    let db = DescriptorDatabase::concat(parts)?;
    if db.count() != expected {
        return Err(Error::Artifact(format!(
            "{}: expected {expected} descriptors, found {}",
            dir.display(),
            db.count()
        )));
    }
    Ok(db)
}

/// Extracts (or imports) descriptors for every image of `source`. Global
/// output is one AVLD file at `out`; local output is a directory of AVLF
/// files. Returns the number of images.
pub fn extract(
    source: &ImageSource,
    kind: FeatureKind,
    import: Option<&Path>,
    max_keypoints: usize,
    out: &Path,
) -> Result<usize> {
    let paths = source.image_paths()?;
    let n = paths.len();
    let load_images = || -> Result<Vec<Image>> { paths.par_iter().map(|p| Image::load(p)).collect() };
    match (kind, import) {
        (FeatureKind::Global, None) => {
            let db = DescriptorDatabase::build(&global_descriptors(&load_images()?)?)?;
            save_database(&db, out)?;
        }
        (FeatureKind::Global, Some(dir)) => save_database(&read_descriptor_dir(dir, n)?, out)?,
        (FeatureKind::Local, None) => {
            write_feature_dir(out, &local_features(&load_images()?, max_keypoints)?)?
        }
        (FeatureKind::Local, Some(dir)) => write_feature_dir(out, &read_feature_dir(dir, n)?)?,
    }
    Ok(n)
}

/// One ranked entry of a retrieval or rerank CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedEntry {
    pub query_index: usize,
    pub rank: usize,
    pub tile_id: usize,
}

pub const RETRIEVAL_HEADER: &str = "query_index,rank,tile_id,distance";
pub const RERANK_HEADER: &str = "query_index,rank,tile_id,inliers";
pub const ALIGNMENT_HEADER: &str = "query_index,tile_id,status,lat,lon,inliers";

/// Reads the first three columns of a ranking CSV into per-query lists
/// ordered by rank.
pub fn read_ranking(path: &Path) -> Result<Vec<Vec<usize>>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))?;
    let mut lists: Vec<Vec<(usize, usize)>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let field = |c: usize| -> Result<usize> {
            rec.get(c)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::parse(path, line, format!("column {c} is not an index")))
        };
        let (q, rank, tile) = (field(0)?, field(1)?, field(2)?);
        if lists.len() <= q {
            lists.resize(q + 1, Vec::new());
        }
        lists[q].push((rank, tile));
    }
    Ok(lists
        .into_iter()
        .map(|mut l| {
            l.sort_by_key(|&(rank, _)| rank);
            l.into_iter().map(|(_, t)| t).collect()
        })
        .collect())
}

/// Top-`n` search of every query descriptor; writes the retrieval CSV.
pub fn retrieve(db_path: &Path, queries_path: &Path, n: usize, out: &Path) -> Result<usize> {
    let db = load_database(db_path)?;
    let queries = load_database(queries_path)?;
    let hits = queries
        .descriptors()
        .par_iter()
        .map(|q| db.search(q, n))
        .collect::<Result<Vec<_>>>()?;
    let mut s = format!("{RETRIEVAL_HEADER}\n");
    for (qi, list) in hits.iter().enumerate() {
        for (rank, h) in list.iter().enumerate() {
            let _ = writeln!(s, "{qi},{},{},{}", rank + 1, h.tile_id, h.distance);
        }
    }
    write_text(out, &s)?;
    Ok(hits.len())
}

/// Reranks each retrieval list by inlier count; writes the full list with
/// the reranked head first (inliers blank for the tail).
pub fn rerank_file(
    ranking: &Path,
    query_features: &Path,
    tile_features: &Path,
    k: usize,
    params: &RerankParams,
    out: &Path,
) -> Result<usize> {
    let lists = read_ranking(ranking)?;
    let queries = read_feature_dir(query_features, lists.len())?;
    let tiles = read_feature_dir(tile_features, files_with_extension(tile_features, "avlf")?.len())?;
    let heads = lists
        .iter()
        .zip(&queries)
        .map(|(list, q)| {
            let cands = list
                .iter()
                .map(|&id| tiles.get(id).map(|f| (id, f)).ok_or(Error::UnknownTile(id)))
                .collect::<Result<Vec<_>>>()?;
            rerank(q, &cands, list, k, params)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s = format!("{RERANK_HEADER}\n");
    for (qi, (list, head)) in lists.iter().zip(&heads).enumerate() {
        let merged = crate::bench::pipeline::merge_ranking(list, head);
        for (rank, id) in merged.iter().enumerate() {
            let inliers = head
                .iter()
                .find(|(t, _)| t == id)
                .map_or(String::new(), |(_, c)| c.to_string());
            let _ = writeln!(s, "{qi},{},{id},{inliers}", rank + 1);
        }
    }
    write_text(out, &s)?;
    Ok(lists.len())
}

/// Aligns every query against its top-ranked tile; writes the alignment
/// CSV. Returns `(queries, localized)`.
pub fn align_file(
    ranking: &Path,
    tiles_metadata: &Path,
    queries_csv: &Path,
    query_features: &Path,
    tile_features: &Path,
    params: &LocalizeParams,
    out: &Path,
) -> Result<(usize, usize)> {
    let tileset = load_tileset(&resolve_metadata(tiles_metadata, TILESET_FILE))?;
    let qs = QuerySet::load(queries_csv)?;
    let lists = read_ranking(ranking)?;
    if lists.len() > qs.len() {
        return Err(Error::Artifact(format!(
            "ranking lists {} queries but the query set has {}",
            lists.len(),
            qs.len()
        )));
    }
    let queries = read_feature_dir(query_features, qs.len())?;
    let tiles = read_feature_dir(tile_features, tileset.len())?;
    let sizes = (0..qs.len())
        .map(|i| image_dimensions(&qs.image_path(i)))
        .collect::<Result<Vec<ImageSize>>>()?;
    let rows = (0..qs.len())
        .into_par_iter()
        .map(|qi| {
            let Some(&top) = lists.get(qi).and_then(|l| l.first()) else {
                return Ok(format!("{qi},,failed,,,"));
            };
            let tile = tileset.get(top).ok_or(Error::UnknownTile(top))?;
            match localize(&queries[qi], sizes[qi], &tiles[top], tile, tileset.image_size(), params) {
                Ok(l) => Ok(format!(
                    "{qi},{top},ok,{},{},{}",
                    crate::tilemap::format_coord(l.position.lat),
                    crate::tilemap::format_coord(l.position.lon),
                    l.inliers
                )),
                Err(Error::AlignmentFailed(_)) => Ok(format!("{qi},{top},failed,,,")),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let localized = rows.iter().filter(|r| r.contains(",ok,")).count();
    write_text(out, &format!("{ALIGNMENT_HEADER}\n{}\n", rows.join("\n")))?;
    Ok((qs.len(), localized))
}

/// Result of one grid point of an evaluation run.
#[derive(Debug, Clone)]
pub struct CombinationResult {
    pub zoom: f64,
    pub overlap: f64,
    pub tiles: usize,
    pub dir: PathBuf,
    pub evaluation: Evaluation,
    pub storage: StorageReport,
}

fn query_inputs(cfg: &RunConfig, qs: &QuerySet) -> Result<Vec<QueryInput>> {
    match &cfg.extractor {
        Extractor::Builtin => load_query_images(qs),
        Extractor::Import(root) => {
            let global = read_descriptor_dir(&root.join("queries").join("global"), qs.len())?;
            let local = read_feature_dir(&root.join("queries").join("local"), qs.len())?;
            global
                .descriptors()
                .into_iter()
                .zip(local)
                .enumerate()
                .map(|(i, (g, l))| {
                    Ok(QueryInput::Imported {
                        global: g,
                        local: l,
                        size: image_dimensions(&qs.image_path(i))?,
                    })
                })
                .collect()
        }
    }
}

fn write_retrieval(ev: &Evaluation, path: &Path) -> Result<()> {
    let mut s = format!("{RERANK_HEADER}\n");
    for (qi, o) in ev.outcomes.iter().enumerate() {
        for (rank, id) in o.ranked.iter().enumerate() {
            let inliers = o
                .reranked
                .as_ref()
                .and_then(|h| h.iter().find(|(t, _)| t == id))
                .map_or(String::new(), |(_, c)| c.to_string());
            let _ = writeln!(s, "{qi},{},{id},{inliers}", rank + 1);
        }
    }
    write_text(path, &s)
}

fn write_alignment(ev: &Evaluation, path: &Path) -> Result<()> {
    let mut s = format!("{ALIGNMENT_HEADER}\n");
    for (qi, o) in ev.outcomes.iter().enumerate() {
        let top = o.ranked.first().map_or(String::new(), |t| t.to_string());
        match &o.localization {
            Some(l) => {
                let _ = writeln!(
                    s,
                    "{qi},{top},ok,{},{},{}",
                    crate::tilemap::format_coord(l.position.lat),
                    crate::tilemap::format_coord(l.position.lon),
                    l.inliers
                );
            }
            None => {
                let _ = writeln!(s, "{qi},{top},failed,,,");
            }
        }
    }
    write_text(path, &s)
}

/// Grid evaluation: for each `(zoom, overlap)` builds the tileset and its
/// descriptors under `out/z{zoom}_o{overlap}/`, runs every query and writes
/// the recall report, stage timing and storage report there, plus a
/// `summary.csv` across the grid in `out`.
pub fn evaluate_run(cfg: &RunConfig) -> Result<Vec<CombinationResult>> {
    cfg.validate()?;
    let raw = ingest_raw_map(&resolve_metadata(&cfg.map, MAP_METADATA_FILE))?;
    let qs = QuerySet::load(&resolve_metadata(&cfg.queries, crate::synth::QUERY_METADATA_FILE))?;
    if qs.is_empty() {
        return Err(Error::Artifact(format!(
            "{} lists no queries",
            cfg.queries.display()
        )));
    }
    let inputs = query_inputs(cfg, &qs)?;
    let mut results = Vec::new();
    for (zoom, overlap) in cfg.combinations() {
        let name = combination_dir(zoom, overlap);
        let dir = cfg.out.join(&name);
        let built = build_tiles(&raw, zoom, overlap, None)?;
        let tiles_dir = dir.join("tiles");
        write_tileset(&built, &tiles_dir)?;
        let mut tileset = built.tileset.clone();
        tileset.base_dir = tiles_dir.clone();
        let db = match &cfg.extractor {
            Extractor::Builtin => TileDatabase::from_images(
                tileset,
                &built.images,
                cfg.pipeline.max_keypoints,
            )?,
            Extractor::Import(root) => {
                let src = root.join(&name);
                let n = tileset.len();
                TileDatabase::from_parts(
                    tileset,
                    read_descriptor_dir(&src.join("global"), n)?,
                    read_feature_dir(&src.join("local"), n)?,
                )?
            }
        };
        let global_path = dir.join("tiles.avld");
        let local_dir = dir.join("tiles_local");
        save_database(&db.global, &global_path)?;
        write_feature_dir(&local_dir, &db.local)?;

        let evaluation = evaluate(&db, &qs, &inputs, &cfg.pipeline)?;
        write_text(&dir.join(RECALL_REPORT_CSV), &evaluation.report.to_csv())?;
        write_text(&dir.join(RECALL_REPORT_TXT), &evaluation.report.to_text())?;
        write_text(&dir.join(TIMING_FILE), &evaluation.timing.to_csv())?;
        write_retrieval(&evaluation, &dir.join(RETRIEVAL_FILE))?;
        write_alignment(&evaluation, &dir.join(ALIGNMENT_FILE))?;

        let mut storage = StorageReport::default();
        storage.measure("tile_images", &tiles_dir)?;
        storage.measure("global_descriptors", &global_path)?;
        storage.measure("local_features", &local_dir)?;
        write_text(&dir.join(STORAGE_FILE), &storage.to_csv())?;

        results.push(CombinationResult {
            zoom,
            overlap,
            tiles: db.tileset.len(),
            dir,
            evaluation,
            storage,
        });
    }
    write_text(&cfg.out.join(SUMMARY_FILE), &summary_csv(&results))?;
    Ok(results)
}

/// `zoom,overlap,tiles,metric,param,value` over all grid points.
pub fn summary_csv(results: &[CombinationResult]) -> String {
    let mut s = String::from("zoom,overlap,tiles,metric,param,value\n");
    for r in results {
        for row in &r.evaluation.report.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.1}",
                r.zoom,
                r.overlap,
                r.tiles,
                row.metric.name(),
                row.param,
                row.value
            );
        }
    }
    s
}

/// Reads a recall report CSV back into a table.
pub fn read_report(path: &Path) -> Result<ReportTable> {
    use crate::metrics::{Metric, ReportRow};
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::parse(path, i as u64 + 1, format!("malformed row {line:?}"));
        let mut it = line.split(',');
        let metric = match it.next() {
            Some("vpr_recall") => Metric::VprRecall,
            Some("georeference_recall") => Metric::GeoreferenceRecall,
            _ => return Err(bad()),
        };
        let param = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let value = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        rows.push(ReportRow {
            metric,
            param,
            value,
        });
    }
    Ok(ReportTable { rows })
}
