//! Evaluation run configuration: `key = value` files merged with flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::alignment::{RansacParams, DEFAULT_RANSAC_SEED};
use crate::bench::pipeline::PipelineParams;
use crate::error::{Error, Result};
use crate::extract::DEFAULT_MAX_KEYPOINTS;
use crate::features::DEFAULT_RATIO;

pub const CONFIG_KEYS: [&str; 17] = [
    "map",
    "queries",
    "out",
    "zoom",
    "overlap",
    "extractor",
    "n",
    "k",
    "rerank",
    "ratio",
    "ransac_threshold",
    "ransac_iters",
    "ransac_confidence",
    "seed",
    "mu",
    "recall_n",
    "max_keypoints",
];

/// Where descriptors come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extractor {
    Builtin,
    /// Root directory with externally computed AVLD/AVLF files.
    Import(PathBuf),
}

impl Extractor {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "builtin" => Ok(Extractor::Builtin),
            _ => match s.strip_prefix("import:") {
                Some(dir) if !dir.is_empty() => Ok(Extractor::Import(PathBuf::from(dir))),
                _ => Err(Error::Config(format!(
                    "extractor must be 'builtin' or 'import:<dir>', got {s:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Raw-map metadata CSV.
    pub map: PathBuf,
    /// Query CSV.
    pub queries: PathBuf,
    pub out: PathBuf,
    pub zoom: Vec<f64>,
    pub overlap: Vec<f64>,
    pub extractor: Extractor,
    pub pipeline: PipelineParams,
}

/// Ordered `key -> value` settings prior to typed parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: String| Error::Config(format!("{}:{}: {m}", path.display(), i + 1));
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            let key = k.trim().to_string();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(bad(format!("unknown key {key:?}")));
            }
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(bad(format!("duplicate key {key:?}")));
            }
        }
        Ok(Settings(map))
    }

    /// Sets `key` when `value` is present, replacing any file value.
    pub fn set(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.0.insert(key.to_string(), v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("{key}: cannot parse {p:?}")))
                })
                .collect(),
        }
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        self.get(key)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config(format!("missing required setting {key:?}")))
    }

    pub fn into_run_config(self) -> Result<RunConfig> {
        let ransac = RansacParams {
            inlier_threshold_px: self.parsed("ransac_threshold", 3.0)?,
            max_iters: self.parsed("ransac_iters", 2000)?,
            seed: self.parsed("seed", DEFAULT_RANSAC_SEED)?,
            confidence: self.parsed("ransac_confidence", 0.999)?,
        };
        let n = self.parsed("n", 100)?;
        let k = if self.parsed("rerank", true)? {
            Some(self.parsed("k", 10)?)
        } else {
            None
        };
        let pipeline = PipelineParams {
            n,
            k,
            ratio: self.parsed("ratio", DEFAULT_RATIO)?,
            ransac,
            max_keypoints: self.parsed("max_keypoints", DEFAULT_MAX_KEYPOINTS)?,
            recall_n: self.list("recall_n", vec![1, 5, 10])?,
            mu: self.list("mu", vec![5.0, 10.0, 25.0, 50.0])?,
        };
        let cfg = RunConfig {
            map: self.path("map")?,
            queries: self.path("queries")?,
            out: self.path("out")?,
            zoom: self.list("zoom", vec![100.0])?,
            overlap: self.list("overlap", vec![0.0])?,
            extractor: Extractor::parse(self.get("extractor").unwrap_or("builtin"))?,
            pipeline,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn strictly_ascending(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.zoom.is_empty() || self.overlap.is_empty() {
            return bad("zoom and overlap lists must be nonempty");
        }
        if self.zoom.iter().any(|&z| !(z > 0.0 && z.is_finite())) {
            return bad("zoom values must be positive");
        }
        if self.overlap.iter().any(|&o| !(0.0..100.0).contains(&o)) {
            return bad("overlap values must lie in [0, 100)");
        }
        if self.pipeline.mu.is_empty() || !strictly_ascending(&self.pipeline.mu) {
            return bad("mu must be a nonempty strictly ascending list");
        }
        if self.pipeline.mu.iter().any(|&m| !(m > 0.0)) {
            return bad("mu values must be positive");
        }
        let rn = &self.pipeline.recall_n;
        if rn.is_empty() || rn.windows(2).any(|w| w[0] >= w[1]) || rn[0] == 0 {
            return bad("recall_n must be a nonempty strictly ascending list of depths >= 1");
        }
        if !(self.pipeline.ransac.confidence > 0.0 && self.pipeline.ransac.confidence <= 1.0) {
            return bad("ransac_confidence must lie in (0, 1]");
        }
        self.pipeline.validate()
    }

    /// `(zoom, overlap)` pairs in grid order (zoom outer).
    pub fn combinations(&self) -> Vec<(f64, f64)> {
        self.zoom
            .iter()
            .flat_map(|&z| self.overlap.iter().map(move |&o| (z, o)))
            .collect()
    }
}

/// Output subdirectory name for one grid point, e.g. `z100_o50`.
pub fn combination_dir(zoom: f64, overlap: f64) -> String {
    format!("z{zoom}_o{overlap}")
}
