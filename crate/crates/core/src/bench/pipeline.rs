//! Offline (tile database) and online (per query) phases of the harness.

use std::time::Instant;

use rayon::prelude::*;

use crate::alignment::{localize, LocalizeParams, Localization, RansacParams};
use crate::bench::report::StageTiming;
use crate::descstore::{DescriptorDatabase, GlobalDescriptor};
use crate::error::{Error, Result};
use crate::extract::{extract_local, global_descriptor_grid, DEFAULT_MAX_KEYPOINTS};
use crate::features::{rerank, LocalFeatureSet, RerankParams, DEFAULT_RATIO};
use crate::metrics::{recall_report, AlignmentResult, QuerySet, ReportTable, RetrievalResult};
use crate::raster::{Image, ImageSize};
use crate::tilemap::{BuiltTiles, TileSet};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    /// Retrieval depth.
    pub n: usize,
    /// Rerank depth; `None` disables reranking.
    pub k: Option<usize>,
    pub ratio: f64,
    pub ransac: RansacParams,
    pub max_keypoints: usize,
    /// Depths at which VPR recall is reported (clamped to `n`).
    pub recall_n: Vec<usize>,
    /// Georeference thresholds in meters.
    pub mu: Vec<f64>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            n: 100,
            k: Some(10),
            ratio: DEFAULT_RATIO,
            ransac: RansacParams::default(),
            max_keypoints: DEFAULT_MAX_KEYPOINTS,
            recall_n: vec![1, 5, 10],
            mu: vec![5.0, 10.0, 25.0, 50.0],
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return bad("N must be >= 1".into());
        }
        if let Some(k) = self.k {
            if k == 0 || k > self.n {
                return bad(format!("need N >= K >= 1, got N={} K={k}", self.n));
            }
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad(format!("ratio {} must lie in (0, 1]", self.ratio));
        }
        if !(self.ransac.inlier_threshold_px > 0.0) || self.ransac.max_iters == 0 {
            return bad("RANSAC threshold and iteration count must be positive".into());
        }
        if self.max_keypoints == 0 {
            return bad("max_keypoints must be >= 1".into());
        }
        Ok(())
    }

    fn rerank_params(&self) -> RerankParams {
        RerankParams {
            ratio: self.ratio,
            ransac: self.ransac,
        }
    }

    fn localize_params(&self) -> LocalizeParams {
        LocalizeParams {
            ratio: self.ratio,
            ransac: self.ransac,
        }
    }

    /// Report depths that fit within the retrieval depth; falls back to `[n]`.
    pub fn effective_recall_n(&self) -> Vec<usize> {
        let v: Vec<usize> = self.recall_n.iter().copied().filter(|&d| d <= self.n).collect();
        if v.is_empty() {
            vec![self.n]
        } else {
            v
        }
    }
}

/// Everything the online phase needs about the map.
#[derive(Debug, Clone)]
pub struct TileDatabase {
    pub tileset: TileSet,
    pub global: DescriptorDatabase,
    pub local: Vec<LocalFeatureSet>,
}

impl TileDatabase {
    /// Runs the builtin extractors over every tile image.
    pub fn from_images(tileset: TileSet, images: &[Image], max_keypoints: usize) -> Result<Self> {
        if images.len() != tileset.len() {
            return Err(Error::Artifact(format!(
                "{} tile images for {} tiles",
                images.len(),
                tileset.len()
            )));
        }
        let global = DescriptorDatabase::build(&global_descriptors(images)?)?;
        let local = local_features(images, max_keypoints)?;
        Ok(Self {
            tileset,
            global,
            local,
        })
    }

    pub fn from_built(built: &BuiltTiles, max_keypoints: usize) -> Result<Self> {
        Self::from_images(built.tileset.clone(), &built.images, max_keypoints)
    }

    /// Checks imported artifacts against the tileset.
    pub fn from_parts(
        tileset: TileSet,
        global: DescriptorDatabase,
        local: Vec<LocalFeatureSet>,
    ) -> Result<Self> {
        if global.count() != tileset.len() {
            return Err(Error::Artifact(format!(
                "global descriptor count mismatch: expected {}, found {}",
                tileset.len(),
                global.count()
            )));
        }
        if local.len() != tileset.len() {
            return Err(Error::Artifact(format!(
                "local feature file count mismatch: expected {}, found {}",
                tileset.len(),
                local.len()
            )));
        }
        Ok(Self {
            tileset,
            global,
            local,
        })
    }
}

pub fn global_descriptors(images: &[Image]) -> Result<Vec<GlobalDescriptor>> {
    images.par_iter().map(global_descriptor_grid).collect()
}

pub fn local_features(images: &[Image], max_keypoints: usize) -> Result<Vec<LocalFeatureSet>> {
    images
        .par_iter()
        .map(|img| extract_local(img, max_keypoints))
        .collect()
}

/// Query input: either an image for the builtin extractors or imported
/// descriptors with the size of the original image.
#[derive(Debug, Clone)]
pub enum QueryInput {
    Image(Image),
    Imported {
        global: GlobalDescriptor,
        local: LocalFeatureSet,
        size: ImageSize,
    },
}

/// Result of the online phase for one query.
#[derive(Debug, Clone)]
pub struct QueryOutcome {
    /// Final ranking: reranked head followed by the rest of the retrieval list.
    pub ranked: Vec<usize>,
    /// Retrieval order before reranking.
    pub retrieved: Vec<usize>,
    /// `(tile_id, inliers)` for the reranked head, when reranking ran.
    pub reranked: Option<Vec<(usize, usize)>>,
    pub localization: Option<Localization>,
    /// Seconds per stage, in [`StageTiming`] column order.
    pub seconds: [f64; 5],
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot = start.elapsed().as_secs_f64();
    out
}

/// Moves the reranked ids to the front, keeping the remaining retrieval order.
pub fn merge_ranking(retrieved: &[usize], head: &[(usize, usize)]) -> Vec<usize> {
    let front: Vec<usize> = head.iter().map(|&(id, _)| id).collect();
    let rest = retrieved.iter().filter(|id| !front.contains(id));
    front.iter().chain(rest).copied().collect()
}

/// Online phase for a single query: global descriptor, search, local
/// features, optional rerank, and alignment against the top-1 tile.
pub fn run_query(db: &TileDatabase, input: &QueryInput, params: &PipelineParams) -> Result<QueryOutcome> {
    let mut secs = [0.0; 5];
    let (global, size) = match input {
        QueryInput::Image(img) => (
            timed(&mut secs[0], || global_descriptor_grid(img))?,
            img.size(),
        ),
        QueryInput::Imported { global, size, .. } => (global.clone(), *size),
    };
    let hits = timed(&mut secs[1], || db.global.search(&global, params.n))?;
    let retrieved: Vec<usize> = hits.iter().map(|h| h.tile_id).collect();
    let computed;
    let local = match input {
        QueryInput::Image(img) => {
            computed = timed(&mut secs[2], || extract_local(img, params.max_keypoints))?;
            &computed
        }
        QueryInput::Imported { local, .. } => local,
    };

    let reranked = match params.k {
        Some(k) => Some(timed(&mut secs[3], || {
            let head = &retrieved[..retrieved.len().min(params.n)];
            let cands: Vec<(usize, &LocalFeatureSet)> =
                head.iter().map(|&id| (id, &db.local[id])).collect();
            rerank(local, &cands, head, k, &params.rerank_params())
        })?),
        None => None,
    };
    let ranked = match &reranked {
        Some(head) => merge_ranking(&retrieved, head),
        None => retrieved.clone(),
    };

    let localization = match ranked.first() {
        Some(&top) => timed(&mut secs[4], || {
            let tile = &db.tileset.tiles[top];
            match localize(
                local,
                size,
                &db.local[top],
                tile,
                db.tileset.image_size(),
                &params.localize_params(),
            ) {
                Ok(l) => Ok(Some(l)),
                Err(Error::AlignmentFailed(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })?,
        None => None,
    };

    Ok(QueryOutcome {
        ranked,
        retrieved,
        reranked,
        localization,
        seconds: secs,
    })
}

/// Output of [`evaluate`] for one tileset.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: ReportTable,
    pub timing: StageTiming,
    pub retrieval: RetrievalResult,
    pub alignment: AlignmentResult,
    pub outcomes: Vec<QueryOutcome>,
}

/// Runs the online phase for every query (in parallel, reduced in query
/// order) and computes the recall report.
pub fn evaluate(
    db: &TileDatabase,
    queries: &QuerySet,
    inputs: &[QueryInput],
    params: &PipelineParams,
) -> Result<Evaluation> {
    params.validate()?;
    if inputs.len() != queries.len() {
        return Err(Error::Artifact(format!(
            "{} query inputs for {} queries",
            inputs.len(),
            queries.len()
        )));
    }
    let outcomes = inputs
        .par_iter()
        .enumerate()
        .map(|(i, input)| {
            run_query(db, input, params).map_err(|e| Error::QueryResult {
                query: queries.entries[i].query_id,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let retrieval = RetrievalResult {
        ranked: outcomes.iter().map(|o| o.ranked.clone()).collect(),
    };
    let alignment = AlignmentResult {
        positions: outcomes
            .iter()
            .map(|o| o.localization.as_ref().map(|l| l.position))
            .collect(),
    };
    let report = recall_report(
        queries,
        &retrieval,
        &db.tileset,
        &alignment,
        &params.effective_recall_n(),
        &params.mu,
    )?;
    let timing = StageTiming::mean(outcomes.iter().map(|o| o.seconds));
    Ok(Evaluation {
        report,
        timing,
        retrieval,
        alignment,
        outcomes,
    })
}

/// Loads every query image of `queries` as builtin-extractor input.
pub fn load_query_images(queries: &QuerySet) -> Result<Vec<QueryInput>> {
    (0..queries.len())
        .into_par_iter()
        .map(|i| Image::load(&queries.image_path(i)).map(QueryInput::Image))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_keeps_tail_order() {
        let merged = merge_ranking(&[4, 2, 9, 7, 1], &[(9, 30), (4, 12)]);
        assert_eq!(merged, vec![9, 4, 2, 7, 1]);
    }

    #[test]
    fn params_validation() {
        PipelineParams::default().validate().unwrap();
        let p = PipelineParams {
            n: 5,
            k: Some(6),
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = PipelineParams {
            k: None,
            n: 3,
            ..Default::default()
        };
        p.validate().unwrap();
        assert_eq!(p.effective_recall_n(), vec![1]);
    }
}
