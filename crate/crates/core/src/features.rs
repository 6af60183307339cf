//! Local features, mutual nearest-neighbour matching and inlier-count
//! re-ranking.
//!
//! Per-image features are stored in the AVLF format (little-endian): magic
//! `"AVLF"`, version `u32` = 1, keypoint count `u32`, descriptor dimension
//! `u32`, then `(u, v, score)` as `f32` per keypoint, then the `k x m` `f32`
//! descriptor matrix row-major.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::alignment::{ransac_homography, Correspondence, RansacParams};
use crate::descstore::{l2_normalize, squared_l2};
use crate::error::{Error, Result};
use crate::geo::PixelPoint;

pub const AVLF_MAGIC: &[u8; 4] = b"AVLF";
pub const AVLF_VERSION: u32 = 1;
const AVLF_HEADER_LEN: usize = 16;

/// Nearest/second-nearest distance ratio used when none is configured.
pub const DEFAULT_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub u: f32,
    pub v: f32,
    pub score: f32,
}

impl Keypoint {
    pub fn pixel(&self) -> PixelPoint {
        PixelPoint::new(self.u as f64, self.v as f64)
    }
}

/// Keypoints with one descriptor row each.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFeatureSet {
    keypoints: Vec<Keypoint>,
    dim: usize,
    descriptors: Vec<f32>,
}

impl LocalFeatureSet {
    /// Validates shapes and L2-normalizes every descriptor row.
    pub fn new(keypoints: Vec<Keypoint>, dim: usize, descriptors: Vec<f32>) -> Result<Self> {
        let mut set = Self::from_parts(keypoints, dim, descriptors)?;
        if dim > 0 {
            set.descriptors = set
                .descriptors
                .chunks_exact(dim)
                .flat_map(l2_normalize)
                .collect();
        }
        Ok(set)
    }

    /// Validates shapes, storing descriptors as given.
    pub fn from_parts(keypoints: Vec<Keypoint>, dim: usize, descriptors: Vec<f32>) -> Result<Self> {
        if descriptors.len() != keypoints.len() * dim {
            return Err(Error::InvalidParameter(format!(
                "{} keypoints with dimension {dim} need {} descriptor values, got {}",
                keypoints.len(),
                keypoints.len() * dim,
                descriptors.len()
            )));
        }
        for (i, k) in keypoints.iter().enumerate() {
            if !(k.u.is_finite() && k.v.is_finite() && k.score.is_finite()) {
                return Err(Error::NonFinite { row: i });
            }
        }
        if dim > 0 {
            if let Some(row) = descriptors
                .chunks_exact(dim)
                .position(|r| r.iter().any(|x| !x.is_finite()))
            {
                return Err(Error::NonFinite { row });
            }
        }
        Ok(Self {
            keypoints,
            dim,
            descriptors,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            keypoints: Vec::new(),
            dim,
            descriptors: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn descriptors(&self) -> &[f32] {
        &self.descriptors
    }

    pub fn descriptor(&self, i: usize) -> &[f32] {
        &self.descriptors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(AVLF_HEADER_LEN + self.len() * 12 + self.descriptors.len() * 4);
        out.extend_from_slice(AVLF_MAGIC);
        out.extend_from_slice(&AVLF_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for k in &self.keypoints {
            out.extend_from_slice(&k.u.to_le_bytes());
            out.extend_from_slice(&k.v.to_le_bytes());
            out.extend_from_slice(&k.score.to_le_bytes());
        }
        for v in &self.descriptors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let truncated = |expected: usize| Error::Truncated {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: bytes.len() as u64,
        };
        if bytes.len() < 4 {
            return Err(truncated(AVLF_HEADER_LEN));
        }
        if &bytes[..4] != AVLF_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "AVLF".into(),
                found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
            });
        }
        if bytes.len() < AVLF_HEADER_LEN {
            return Err(truncated(AVLF_HEADER_LEN));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != AVLF_VERSION {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                expected: AVLF_VERSION,
                found: version,
            });
        }
        let count = word(8) as usize;
        let dim = word(12) as usize;
        let expected = AVLF_HEADER_LEN + count * 12 + count * dim * 4;
        if bytes.len() < expected {
            return Err(truncated(expected));
        }
        if bytes.len() > expected {
            return Err(Error::InvalidFormat {
                path: path.to_path_buf(),
                message: "trailing bytes after the descriptor matrix".into(),
            });
        }
        let floats: Vec<f32> = bytes[AVLF_HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (kp, desc) = floats.split_at(count * 3);
        let keypoints = kp
            .chunks_exact(3)
            .map(|c| Keypoint {
                u: c[0],
                v: c[1],
                score: c[2],
            })
            .collect();
        Self::from_parts(keypoints, dim, desc.to_vec()).map_err(|e| Error::InvalidFormat {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

pub fn save_features(set: &LocalFeatureSet, path: &Path) -> Result<()> {
    fs::write(path, set.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: &Path) -> Result<LocalFeatureSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    LocalFeatureSet::from_bytes(&bytes, path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    /// L2 distance between the two descriptors.
    pub distance: f64,
}

/// One-to-one keypoint pairs, ordered by `index_a`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub pairs: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Keypoint positions of each pair, `a` as source and `b` as destination.
    pub fn correspondences(&self, a: &LocalFeatureSet, b: &LocalFeatureSet) -> Vec<Correspondence> {
        self.pairs
            .iter()
            .map(|m| Correspondence {
                src: a.keypoints[m.index_a].pixel(),
                dst: b.keypoints[m.index_b].pixel(),
            })
            .collect()
    }
}

// Best index (lowest on ties), best and second-best squared distances.
#[derive(Clone, Copy)]
struct Nearest {
    index: usize,
    best: f64,
    second: f64,
}

impl Nearest {
    const NONE: Nearest = Nearest {
        index: usize::MAX,
        best: f64::INFINITY,
        second: f64::INFINITY,
    };

    fn offer(&mut self, index: usize, d: f64) {
        if d < self.best {
            self.second = self.best;
            self.best = d;
            self.index = index;
        } else if d < self.second {
            self.second = d;
        }
    }

    fn passes_ratio(&self, ratio: f64, other_len: usize) -> bool {
        other_len == 1 || self.best.sqrt() < ratio * self.second.sqrt()
    }
}

/// Mutual nearest neighbours under L2 that pass the ratio test in both
/// directions. The ratio test is skipped against a single-feature set.
pub fn match_features(a: &LocalFeatureSet, b: &LocalFeatureSet, ratio: f64) -> Result<MatchSet> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ratio {ratio} must lie in (0, 1]"
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Ok(MatchSet::default());
    }
    if a.dim != b.dim {
        return Err(Error::InvalidParameter(format!(
            "descriptor dimensions differ: {} vs {}",
            a.dim, b.dim
        )));
    }

    let mut from_a = vec![Nearest::NONE; a.len()];
    let mut from_b = vec![Nearest::NONE; b.len()];
    let rows: Vec<Vec<f64>> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let da = a.descriptor(i);
            (0..b.len())
                .map(|j| squared_l2(da, b.descriptor(j)))
                .collect()
        })
        .collect();
    for (i, row) in rows.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            from_a[i].offer(j, d);
            from_b[j].offer(i, d);
        }
    }

    let pairs = from_a
        .iter()
        .enumerate()
        .filter_map(|(i, na)| {
            let j = na.index;
            let nb = &from_b[j];
            let mutual = nb.index == i;
            (mutual && na.passes_ratio(ratio, b.len()) && nb.passes_ratio(ratio, a.len())).then(
                || Match {
                    index_a: i,
                    index_b: j,
                    distance: na.best.sqrt(),
                },
            )
        })
        .collect();
    Ok(MatchSet { pairs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RerankParams {
    pub ratio: f64,
    pub ransac: RansacParams,
}

impl Default for RerankParams {
    fn default() -> Self {
        Self {
            ratio: DEFAULT_RATIO,
            ransac: RansacParams::default(),
        }
    }
}

/// Geometric verification score: RANSAC inlier count, 0 when infeasible.
pub fn inlier_score(
    query: &LocalFeatureSet,
    candidate: &LocalFeatureSet,
    params: &RerankParams,
) -> Result<usize> {
    let matches = match_features(query, candidate, params.ratio)?;
    if matches.len() < 4 {
        return Ok(0);
    }
    let corrs = matches.correspondences(query, candidate);
    Ok(ransac_homography(&corrs, &params.ransac).map_or(0, |(_, inliers)| inliers.len()))
}

/// Re-orders retrieval candidates by inlier count (descending), keeping the
/// retrieval order among equal scores, and returns the first `k` as
/// `(tile_id, inlier_count)`.
pub fn rerank(
    query: &LocalFeatureSet,
    candidates: &[(usize, &LocalFeatureSet)],
    initial_order: &[usize],
    k: usize,
    params: &RerankParams,
) -> Result<Vec<(usize, usize)>> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    let by_id: HashMap<usize, &LocalFeatureSet> =
        candidates.iter().map(|&(id, f)| (id, f)).collect();
    let mut scored = initial_order
        .par_iter()
        .map(|id| {
            let feats = by_id.get(id).ok_or(Error::UnknownTile(*id))?;
            Ok((*id, inlier_score(query, feats, params)?))
        })
        .collect::<Result<Vec<_>>>()?;
    // stable: equal scores keep their retrieval position
    scored.sort_by(|a, b| b.1.cmp(&a.1));
    scored.truncate(k);
    Ok(scored)
}
