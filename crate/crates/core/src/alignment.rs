//! Homography estimation and local alignment of a query against a tile.
//!
//! The estimator is the normalized Direct Linear Transform: both point sets
//! are translated to their centroid and scaled to a mean distance of `sqrt(2)`,
//! the `2n x 9` design matrix is solved for its smallest right singular
//! vector and the result is denormalized. [`ransac_homography`] wraps it in a
//! seeded random-sample consensus loop.

use nalgebra::{DMatrix, Matrix3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{match_features, LocalFeatureSet, DEFAULT_RATIO};
use crate::geo::{pixel_to_geo, GeoPoint, PixelPoint};
use crate::raster::ImageSize;
use crate::tilemap::TileRecord;

/// Seed used when none is configured.
pub const DEFAULT_RANSAC_SEED: u64 = 0x00C0_FFEE;

const REFINE_ROUNDS: usize = 5;

const DEGENERACY_TOL: f64 = 1e-9;
const INFINITY_TOL: f64 = 1e-12;

/// A 3x3 projective transform mapping query pixels to tile pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    /// Wraps a matrix, scaling it so that `h[2][2] = 1` when that entry is
    /// nonzero.
    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        let s = m[(2, 2)];
        if s.abs() > f64::EPSILON * m.abs().max() {
            Homography(m / s)
        } else {
            Homography(m)
        }
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn translation(du: f64, dv: f64) -> Self {
        Self::from_rows([[1.0, 0.0, du], [0.0, 1.0, dv], [0.0, 0.0, 1.0]])
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Option<Homography> {
        self.0.try_inverse().map(Homography::from_matrix)
    }

    pub fn apply(&self, p: PixelPoint) -> Result<PixelPoint> {
        apply_homography(self, p)
    }
}

/// A query-pixel to tile-pixel point pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub src: PixelPoint,
    pub dst: PixelPoint,
}

impl Correspondence {
    pub fn new(src: (f64, f64), dst: (f64, f64)) -> Self {
        Self {
            src: PixelPoint::new(src.0, src.1),
            dst: PixelPoint::new(dst.0, dst.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub inlier_threshold_px: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Stop once an all-inlier sample has been drawn with this probability,
    /// given the best inlier ratio so far. `1.0` always runs `max_iters`.
    pub confidence: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_threshold_px: 3.0,
            max_iters: 2000,
            seed: DEFAULT_RANSAC_SEED,
            confidence: 0.999,
        }
    }
}

pub fn apply_homography(h: &Homography, p: PixelPoint) -> Result<PixelPoint> {
    let m = &h.0;
    let w = m[(2, 0)] * p.u + m[(2, 1)] * p.v + m[(2, 2)];
    if w.abs() < INFINITY_TOL {
        return Err(Error::PointAtInfinity);
    }
    Ok(PixelPoint {
        u: (m[(0, 0)] * p.u + m[(0, 1)] * p.v + m[(0, 2)]) / w,
        v: (m[(1, 0)] * p.u + m[(1, 1)] * p.v + m[(1, 2)]) / w,
    })
}

/// Centroid to the origin, mean distance `sqrt(2)`.
fn hartley_normalize(points: &[PixelPoint]) -> Result<(Vec<(f64, f64)>, Matrix3<f64>)> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.u).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.v).sum::<f64>() / n;
    let mean = points
        .iter()
        .map(|p| ((p.u - cx).powi(2) + (p.v - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::Degenerate);
    }
    let s = std::f64::consts::SQRT_2 / mean;
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let pts = points
        .iter()
        .map(|p| (s * (p.u - cx), s * (p.v - cy)))
        .collect();
    Ok((pts, t))
}

fn has_collinear_triple(pts: &[(f64, f64)]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                if cross.abs() <= DEGENERACY_TOL {
                    return true;
                }
            }
        }
    }
    false
}

/// Normalized DLT over at least four correspondences.
pub fn estimate_homography_dlt(corrs: &[Correspondence]) -> Result<Homography> {
    if corrs.len() < 4 {
        return Err(Error::TooFewCorrespondences {
            needed: 4,
            found: corrs.len(),
        });
    }
    let src: Vec<PixelPoint> = corrs.iter().map(|c| c.src).collect();
    let dst: Vec<PixelPoint> = corrs.iter().map(|c| c.dst).collect();
    let (src_n, t_src) = hartley_normalize(&src)?;
    let (dst_n, t_dst) = hartley_normalize(&dst)?;
    if corrs.len() == 4 && (has_collinear_triple(&src_n) || has_collinear_triple(&dst_n)) {
        return Err(Error::Degenerate);
    }

    let n = corrs.len();
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (&(x, y), &(u, v))) in src_n.iter().zip(&dst_n).enumerate() {
        let r0 = 2 * i;
        let r1 = r0 + 1;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::Degenerate)?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let (smallest, second) = (sv[order[0]], sv[order[1]]);
    let largest = sv[order[sv.len() - 1]];
    if second - smallest <= DEGENERACY_TOL * largest {
        return Err(Error::Degenerate);
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::from_fn(|r, c| h[3 * r + c]);

    let hn_sv = hn.singular_values();
    if hn_sv.min() <= DEGENERACY_TOL * hn_sv.max() {
        return Err(Error::Degenerate);
    }
    let t_dst_inv = t_dst.try_inverse().ok_or(Error::Degenerate)?;
    let m = t_dst_inv * hn * t_src;
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate);
    }
    Ok(Homography::from_matrix(m))
}

/// One-directional (src to dst) reprojection error; infinite when the source
/// point maps to infinity.
pub fn reprojection_error(h: &Homography, c: &Correspondence) -> f64 {
    match apply_homography(h, c.src) {
        Ok(p) => ((p.u - c.dst.u).powi(2) + (p.v - c.dst.v).powi(2)).sqrt(),
        Err(_) => f64::INFINITY,
    }
}

fn inliers_of(h: &Homography, corrs: &[Correspondence], threshold: f64) -> Vec<usize> {
    corrs
        .iter()
        .enumerate()
        .filter(|(_, c)| reprojection_error(h, c) < threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Iterations after which an all-inlier 4-sample has been drawn with
/// probability `confidence`, for inlier ratio `inliers / n`.
fn required_iters(inliers: usize, n: usize, params: &RansacParams) -> usize {
    if params.confidence >= 1.0 || inliers < 4 {
        return params.max_iters;
    }
    let w4 = (inliers as f64 / n as f64).powi(4);
    if w4 >= 1.0 {
        return 1;
    }
    let k = (1.0 - params.confidence).ln() / (1.0 - w4).ln();
    if k.is_finite() {
        (k.ceil() as usize).clamp(1, params.max_iters)
    } else {
        params.max_iters
    }
}

/// Robust homography fit. Returns the model refit on the best consensus set
/// together with that set (ascending indices).
pub fn ransac_homography(
    corrs: &[Correspondence],
    params: &RansacParams,
) -> Result<(Homography, Vec<usize>)> {
    if corrs.len() < 4 {
        return Err(Error::TooFewCorrespondences {
            needed: 4,
            found: corrs.len(),
        });
    }
    if !(params.inlier_threshold_px > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "inlier threshold {} must be > 0",
            params.inlier_threshold_px
        )));
    }
    if !(params.confidence > 0.0 && params.confidence <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "RANSAC confidence {} must lie in (0, 1]",
            params.confidence
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Homography, Vec<usize>)> = None;
    let mut sample = Vec::with_capacity(4);
    let mut needed = params.max_iters;
    let mut iter = 0;
    while iter < needed {
        iter += 1;
        sample.clear();
        sample.extend(
            rand::seq::index::sample(&mut rng, corrs.len(), 4)
                .iter()
                .map(|i| corrs[i]),
        );
        let Ok(h) = estimate_homography_dlt(&sample) else {
            continue;
        };
        let inliers = inliers_of(&h, corrs, params.inlier_threshold_px);
        if best.as_ref().is_none_or(|(_, b)| inliers.len() > b.len()) {
            needed = needed.min(required_iters(inliers.len(), corrs.len(), params));
            best = Some((h, inliers));
        }
    }
    let (hypothesis, inliers) = match best {
        Some(b) if b.1.len() >= 4 => b,
        other => {
            return Err(Error::NoConsensus {
                best: other.map_or(0, |b| b.1.len()),
            })
        }
    };
    // Refit on the consensus set and re-score until the set stops changing.
    // A minimal sample drawn from noisy points can be badly conditioned far
    // from its four points; the least-squares refit recovers those inliers.
    let (mut model, mut inliers) = (hypothesis, inliers);
    for _ in 0..REFINE_ROUNDS {
        let support: Vec<Correspondence> = inliers.iter().map(|&i| corrs[i]).collect();
        let Ok(refit) = estimate_homography_dlt(&support) else {
            break;
        };
        let next = inliers_of(&refit, corrs, params.inlier_threshold_px);
        if next.len() < inliers.len() {
            break;
        }
        let stable = next == inliers;
        model = refit;
        inliers = next;
        if stable {
            break;
        }
    }
    Ok((model, inliers))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizeParams {
    pub ratio: f64,
    pub ransac: RansacParams,
}

impl Default for LocalizeParams {
    fn default() -> Self {
        Self {
            ratio: DEFAULT_RATIO,
            ransac: RansacParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub position: GeoPoint,
    pub homography: Homography,
    pub inliers: usize,
    /// Query center in tile pixels.
    pub tile_pixel: PixelPoint,
}

/// Local alignment: match, fit a homography, map the query center into the
/// tile and convert it to geographic coordinates. Geometric failures are
/// reported as [`Error::AlignmentFailed`].
pub fn localize(
    query_feats: &LocalFeatureSet,
    query_size: ImageSize,
    tile_feats: &LocalFeatureSet,
    tile: &TileRecord,
    tile_size: ImageSize,
    params: &LocalizeParams,
) -> Result<Localization> {
    let failed = |why: String| Error::AlignmentFailed(why);
    if query_feats.is_empty() || tile_feats.is_empty() {
        return Err(failed("empty feature set".into()));
    }
    let matches = match_features(query_feats, tile_feats, params.ratio)?;
    if matches.len() < 4 {
        return Err(failed(format!("only {} matches", matches.len())));
    }
    let corrs = matches.correspondences(query_feats, tile_feats);
    let (h, inliers) = ransac_homography(&corrs, &params.ransac).map_err(|e| match e {
        Error::NoConsensus { .. } | Error::TooFewCorrespondences { .. } | Error::Degenerate => {
            failed(e.to_string())
        }
        other => other,
    })?;
    let center = PixelPoint::new(query_size.width as f64 / 2.0, query_size.height as f64 / 2.0);
    let tile_pixel = apply_homography(&h, center).map_err(|e| failed(e.to_string()))?;
    let position = pixel_to_geo(tile, tile_size, tile_pixel).map_err(|e| failed(e.to_string()))?;
    Ok(Localization {
        position,
        homography: h,
        inliers: inliers.len(),
        tile_pixel,
    })
}
