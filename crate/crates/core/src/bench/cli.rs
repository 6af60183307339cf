//! `avl-bench` command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::alignment::{LocalizeParams, RansacParams, DEFAULT_RANSAC_SEED};
use crate::bench::commands::{self, FeatureKind, ImageSource};
use crate::bench::config::Settings;
use crate::error::{Error, Result};
use crate::extract::DEFAULT_MAX_KEYPOINTS;
use crate::features::{RerankParams, DEFAULT_RATIO};
use crate::geo::GeoPoint;
use crate::synth::{Perturbation, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "avl-bench", version, about = "Aerial visual place recognition benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic raw map (OUT/map) and queries (OUT/queries).
    Synth(SynthArgs),
    /// Cut a raw map into a tileset for one zoom/overlap pair.
    BuildMap(BuildMapArgs),
    /// Compute or import global (AVLD) or local (AVLF) features.
    Extract(ExtractArgs),
    /// Exact top-N search of query descriptors against a tile database.
    Retrieve(RetrieveArgs),
    /// Rerank retrieval lists by RANSAC inlier count.
    Rerank(RerankArgs),
    /// Localize each query against its top-ranked tile.
    Align(AlignArgs),
    /// Run the full pipeline over a zoom x overlap grid and write reports.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub rows: u32,
    #[arg(long, default_value_t = 4)]
    pub cols: u32,
    #[arg(long, default_value_t = 256)]
    pub tile_px: u32,
    #[arg(long, default_value_t = 50)]
    pub queries: usize,
    #[arg(long, default_value_t = 200.0)]
    pub meters_per_tile: f64,
    #[arg(long, default_value_t = 47.3769, allow_negative_numbers = true)]
    pub anchor_lat: f64,
    #[arg(long, default_value_t = 8.5417, allow_negative_numbers = true)]
    pub anchor_lon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub max_rotation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub scale_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub scale_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
}

#[derive(Debug, Args)]
pub struct BuildMapArgs {
    /// Raw-map metadata CSV or the directory containing map.csv.
    #[arg(long)]
    pub raw: PathBuf,
    #[arg(long)]
    pub zoom: f64,
    #[arg(long)]
    pub overlap: f64,
    /// Output tile resolution in pixels (default: raw tile resolution).
    #[arg(long)]
    pub out_res: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Global,
    Local,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["tiles", "queries"])))]
pub struct ExtractArgs {
    /// Tileset metadata CSV or its directory.
    #[arg(long)]
    pub tiles: Option<PathBuf>,
    /// Query CSV.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Import externally computed files from this directory instead of
    /// running the builtin extractor.
    #[arg(long)]
    pub import: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_KEYPOINTS)]
    pub max_keypoints: usize,
    /// AVLD file (global) or directory of AVLF files (local).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Tile descriptor database (AVLD).
    #[arg(long)]
    pub db: PathBuf,
    /// Query descriptors (AVLD), one row per query.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    #[arg(long, default_value_t = DEFAULT_RATIO)]
    pub ratio: f64,
    #[arg(long, default_value_t = 3.0)]
    pub ransac_threshold: f64,
    #[arg(long, default_value_t = 2000)]
    pub ransac_iters: usize,
    #[arg(long, default_value_t = 0.999)]
    pub ransac_confidence: f64,
    #[arg(long, default_value_t = DEFAULT_RANSAC_SEED)]
    pub seed: u64,
}

impl GeometryArgs {
    fn ransac(&self) -> RansacParams {
        RansacParams {
            inlier_threshold_px: self.ransac_threshold,
            max_iters: self.ransac_iters,
            seed: self.seed,
            confidence: self.ransac_confidence,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Config(format!("ratio {} must lie in (0, 1]", self.ratio)));
        }
        if !(self.ransac_threshold > 0.0) || self.ransac_iters == 0 {
            return Err(Error::Config(
                "RANSAC threshold and iteration count must be positive".into(),
            ));
        }
        if !(self.ransac_confidence > 0.0 && self.ransac_confidence <= 1.0) {
            return Err(Error::Config("ransac confidence must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    /// Retrieval CSV.
    #[arg(long)]
    pub retrieval: PathBuf,
    #[arg(long)]
    pub query_features: PathBuf,
    #[arg(long)]
    pub tile_features: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Retrieval or rerank CSV; the first-ranked tile is used.
    #[arg(long)]
    pub ranking: PathBuf,
    #[arg(long)]
    pub tiles: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub query_features: PathBuf,
    #[arg(long)]
    pub tile_features: PathBuf,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Every setting is optional here; missing ones come from `--config` or
/// the built-in defaults.
#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub queries: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
    /// Comma-separated zoom percentages.
    #[arg(long)]
    pub zoom: Option<String>,
    /// Comma-separated overlap percentages.
    #[arg(long)]
    pub overlap: Option<String>,
    /// `builtin` or `import:<dir>`.
    #[arg(long)]
    pub extractor: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    /// Skip reranking; alignment uses the top retrieval hit.
    #[arg(long)]
    pub no_rerank: bool,
    #[arg(long)]
    pub ratio: Option<String>,
    #[arg(long)]
    pub ransac_threshold: Option<String>,
    #[arg(long)]
    pub ransac_iters: Option<String>,
    #[arg(long)]
    pub ransac_confidence: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Comma-separated georeference thresholds in meters.
    #[arg(long)]
    pub mu: Option<String>,
    /// Comma-separated VPR recall depths.
    #[arg(long)]
    pub recall_n: Option<String>,
    #[arg(long)]
    pub max_keypoints: Option<String>,
}

impl EvaluateArgs {
    pub fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::parse_file(p)?,
            None => Settings::default(),
        };
        let flags = [
            ("map", &self.map),
            ("queries", &self.queries),
            ("out", &self.out),
            ("zoom", &self.zoom),
            ("overlap", &self.overlap),
            ("extractor", &self.extractor),
            ("n", &self.n),
            ("k", &self.k),
            ("ratio", &self.ratio),
            ("ransac_threshold", &self.ransac_threshold),
            ("ransac_iters", &self.ransac_iters),
            ("ransac_confidence", &self.ransac_confidence),
            ("seed", &self.seed),
            ("mu", &self.mu),
            ("recall_n", &self.recall_n),
            ("max_keypoints", &self.max_keypoints),
        ];
        for (key, value) in flags {
            s.set(key, value.clone());
        }
        if self.no_rerank {
            s.set("rerank", Some("false".into()));
        }
        Ok(s)
    }
}

/// Runs one parsed command, returning the lines to print on success.
pub fn run(cli: Cli) -> Result<Vec<String>> {
    match cli.command {
        Command::Synth(a) => {
            let cfg = SynthConfig {
                seed: a.seed,
                rows: a.rows,
                cols: a.cols,
                tile_px: a.tile_px,
                anchor: GeoPoint::new(a.anchor_lat, a.anchor_lon)
                    .map_err(|e| Error::Config(e.to_string()))?,
                meters_per_raw_tile: a.meters_per_tile,
                query_count: a.queries,
                perturbation: Perturbation {
                    max_rotation_deg: a.max_rotation,
                    scale_min: a.scale_min,
                    scale_max: a.scale_max,
                    noise_sigma: a.noise_sigma,
                },
            };
            let (map, qs) = commands::synth(&cfg, &a.out)?;
            Ok(vec![format!(
                "raw_tiles={} queries={} map={} queries_csv={}",
                cfg.rows * cfg.cols,
                qs.len(),
                map.metadata_path.display(),
                qs.base_dir.join(crate::synth::QUERY_METADATA_FILE).display()
            )])
        }
        Command::BuildMap(a) => {
            let ts = commands::build_map(&a.raw, a.zoom, a.overlap, a.out_res, &a.out)?;
            Ok(vec![format!(
                "tiles={} zoom={} overlap={}",
                ts.len(),
                a.zoom,
                a.overlap
            )])
        }
        Command::Extract(a) => {
            let source = match (a.tiles, a.queries) {
                (Some(t), None) => ImageSource::Tiles(t),
                (None, Some(q)) => ImageSource::Queries(q),
                _ => return Err(Error::Config("give exactly one of --tiles or --queries".into())),
            };
            if a.max_keypoints == 0 {
                return Err(Error::Config("max_keypoints must be >= 1".into()));
            }
            let kind = match a.kind {
                KindArg::Global => FeatureKind::Global,
                KindArg::Local => FeatureKind::Local,
            };
            let n = commands::extract(&source, kind, a.import.as_deref(), a.max_keypoints, &a.out)?;
            Ok(vec![format!("extracted={n} out={}", a.out.display())])
        }
        Command::Retrieve(a) => {
            if a.n == 0 {
                return Err(Error::Config("N must be >= 1".into()));
            }
            let q = commands::retrieve(&a.db, &a.queries, a.n, &a.out)?;
            Ok(vec![format!("queries={q} n={}", a.n)])
        }
        Command::Rerank(a) => {
            a.geometry.validate()?;
            if a.k == 0 {
                return Err(Error::Config("K must be >= 1".into()));
            }
            let params = RerankParams {
                ratio: a.geometry.ratio,
                ransac: a.geometry.ransac(),
            };
            let q = commands::rerank_file(
                &a.retrieval,
                &a.query_features,
                &a.tile_features,
                a.k,
                &params,
                &a.out,
            )?;
            Ok(vec![format!("queries={q} k={}", a.k)])
        }
        Command::Align(a) => {
            a.geometry.validate()?;
            let params = LocalizeParams {
                ratio: a.geometry.ratio,
                ransac: a.geometry.ransac(),
            };
            let (q, ok) = commands::align_file(
                &a.ranking,
                &a.tiles,
                &a.queries,
                &a.query_features,
                &a.tile_features,
                &params,
                &a.out,
            )?;
            Ok(vec![format!("queries={q} localized={ok}")])
        }
        Command::Evaluate(a) => {
            let cfg = a.settings()?.into_run_config()?;
            let results = commands::evaluate_run(&cfg)?;
            let mut lines = Vec::new();
            for r in &results {
                lines.push(format!(
                    "zoom={} overlap={} tiles={} dir={}",
                    r.zoom,
                    r.overlap,
                    r.tiles,
                    r.dir.display()
                ));
                lines.extend(r.evaluation.report.to_text().lines().map(String::from));
            }
            Ok(lines)
        }
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code,
/// writing messages to stdout/stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_FAILURE
            }
        }
    }
}
