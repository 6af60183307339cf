//! Classical baseline extractors so the whole pipeline runs without any
//! external model: a 16x16 thumbnail global descriptor, Harris corners and
//! 8x8 downsampled patch descriptors.

use crate::descstore::GlobalDescriptor;
use crate::error::{Error, Result};
use crate::features::{Keypoint, LocalFeatureSet};
use crate::raster::Image;

pub const GLOBAL_GRID: usize = 16;
pub const GLOBAL_DIM: usize = GLOBAL_GRID * GLOBAL_GRID;
pub const HARRIS_K: f64 = 0.04;
pub const BORDER_PX: u32 = 8;
pub const PATCH_PX: u32 = 16;
pub const LOCAL_DIM: usize = 64;
pub const DEFAULT_MAX_KEYPOINTS: usize = 300;

/// Pixel-to-cell overlaps along one axis, in units of 1/`GLOBAL_GRID` pixel.
/// Pixel `i` spans `[G*i, G*(i+1))` and cell `c` spans `[c*len, (c+1)*len)`.
fn axis_overlaps(len: u32) -> Vec<Vec<(usize, i128)>> {
    let g = GLOBAL_GRID as i128;
    let len = len as i128;
    (0..len)
        .map(|i| {
            let (p0, p1) = (g * i, g * (i + 1));
            let first = (p0 / len) as usize;
            let last = ((p1 - 1) / len) as usize;
            (first..=last.min(GLOBAL_GRID - 1))
                .filter_map(|c| {
                    let (c0, c1) = (c as i128 * len, (c as i128 + 1) * len);
                    let ov = p1.min(c1) - p0.max(c0);
                    (ov > 0).then_some((c, ov))
                })
                .collect()
        })
        .collect()
}

/// Grayscale, area-averaged to 16x16, mean-subtracted and L2-normalized.
/// Constant images give the zero vector.
///
/// The cell sums are computed in exact integer arithmetic (luma scaled by
/// 1000, overlaps in 1/16 pixel), so a uniform brightness offset cancels
/// bit-exactly.
pub fn global_descriptor_grid(img: &Image) -> Result<GlobalDescriptor> {
    if img.is_empty() {
        return Err(Error::InvalidImage("zero-size image".into()));
    }
    let xs = axis_overlaps(img.width());
    let ys = axis_overlaps(img.height());
    let mut cells = [0i128; GLOBAL_DIM];
    let mut row_acc = [0i128; GLOBAL_GRID];
    for (y, yov) in ys.iter().enumerate() {
        row_acc.fill(0);
        for (x, xov) in xs.iter().enumerate() {
            let l = img.luma_milli(x as u32, y as u32) as i128;
            for &(cx, w) in xov {
                row_acc[cx] += l * w;
            }
        }
        for &(cy, wy) in yov {
            for cx in 0..GLOBAL_GRID {
                cells[cy * GLOBAL_GRID + cx] += row_acc[cx] * wy;
            }
        }
    }
    // every cell covers the same area, so sums stand in for means
    let total: i128 = cells.iter().sum();
    let centered: Vec<i128> = cells.iter().map(|&s| s * GLOBAL_DIM as i128 - total).collect();
    if centered.iter().all(|&v| v == 0) {
        return Ok(GlobalDescriptor(vec![0.0; GLOBAL_DIM]));
    }
    let as_f64: Vec<f64> = centered.iter().map(|&v| v as f64).collect();
    let norm = as_f64.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(GlobalDescriptor(
        as_f64.iter().map(|v| (v / norm) as f32).collect(),
    ))
}

fn clamp_idx(i: i64, n: u32) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Harris corner response per pixel (Sobel gradients, 3x3 binomial window).
pub fn harris_response(img: &Image) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let lum = img.luma_plane();
    let at = |x: i64, y: i64| lum[clamp_idx(y, h) * w as usize + clamp_idx(x, w)];
    let n = w as usize * h as usize;
    let (mut ixx, mut iyy, mut ixy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w as usize + x as usize;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let smooth = |src: &[f64]| -> Vec<f64> {
        const K: [f64; 3] = [1.0, 2.0, 1.0];
        let mut out = vec![0.0; n];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut s = 0.0;
                for (dy, ky) in K.iter().enumerate() {
                    for (dx, kx) in K.iter().enumerate() {
                        let sx = clamp_idx(x + dx as i64 - 1, w);
                        let sy = clamp_idx(y + dy as i64 - 1, h);
                        s += ky * kx * src[sy * w as usize + sx];
                    }
                }
                out[y as usize * w as usize + x as usize] = s / 16.0;
            }
        }
        out
    };
    let (sxx, syy, sxy) = (smooth(&ixx), smooth(&iyy), smooth(&ixy));
    (0..n)
        .map(|i| {
            let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
            let tr = sxx[i] + syy[i];
            det - HARRIS_K * tr * tr
        })
        .collect()
}

/// Strongest `max_k` Harris corners after 3x3 non-maximum suppression,
/// excluding an 8-pixel border. Ordered by descending score, then raster
/// position. Keypoint coordinates are pixel centers (`x + 0.5`).
pub fn detect_corners(img: &Image, max_k: usize) -> Result<Vec<Keypoint>> {
    let (w, h) = (img.width(), img.height());
    if w < PATCH_PX || h < PATCH_PX {
        return Err(Error::InvalidImage(format!(
            "corner detection needs at least {PATCH_PX}x{PATCH_PX} pixels, got {w}x{h}"
        )));
    }
    let r = harris_response(img);
    let idx = |x: u32, y: u32| y as usize * w as usize + x as usize;
    let mut found: Vec<(f64, u32, u32)> = Vec::new();
    for y in BORDER_PX..h - BORDER_PX {
        for x in BORDER_PX..w - BORDER_PX {
            let v = r[idx(x, y)];
            if v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nv = r[idx((x as i32 + dx) as u32, (y as i32 + dy) as u32)];
                    // plateaus keep their first pixel in raster order
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if nv > v || (earlier && nv == v) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                found.push((v, x, y));
            }
        }
    }
    found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));
    found.truncate(max_k);
    Ok(found
        .into_iter()
        .map(|(score, x, y)| Keypoint {
            u: x as f32 + 0.5,
            v: y as f32 + 0.5,
            score: score as f32,
        })
        .collect())
}

/// 16x16 patch around each keypoint, 2x2 averaged to 8x8, mean-subtracted
/// and L2-normalized (64 values). Keypoints whose patch leaves the image are
/// dropped; the output stays aligned with the surviving keypoints.
pub fn describe_patches(img: &Image, keypoints: &[Keypoint]) -> LocalFeatureSet {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let half = (PATCH_PX / 2) as i64;
    let mut kept = Vec::with_capacity(keypoints.len());
    let mut desc = Vec::with_capacity(keypoints.len() * LOCAL_DIM);
    for kp in keypoints {
        let px = kp.u.floor() as i64;
        let py = kp.v.floor() as i64;
        if px < half || py < half || px + half > w || py + half > h {
            continue;
        }
        let mut cells = [0i64; LOCAL_DIM];
        for (c, cell) in cells.iter_mut().enumerate() {
            let cx = px - half + 2 * (c % 8) as i64;
            let cy = py - half + 2 * (c / 8) as i64;
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                *cell += img.luma_milli((cx + dx) as u32, (cy + dy) as u32);
            }
        }
        let total: i64 = cells.iter().sum();
        let centered: Vec<f64> = cells
            .iter()
            .map(|&s| (s * LOCAL_DIM as i64 - total) as f64)
            .collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            desc.extend(std::iter::repeat_n(0.0f32, LOCAL_DIM));
        } else {
            desc.extend(centered.iter().map(|v| (v / norm) as f32));
        }
        kept.push(*kp);
    }
    LocalFeatureSet::from_parts(kept, LOCAL_DIM, desc).expect("shapes built consistently")
}

/// Corners plus patch descriptors.
pub fn extract_local(img: &Image, max_k: usize) -> Result<LocalFeatureSet> {
    let kps = detect_corners(img, max_k)?;
    Ok(describe_patches(img, &kps))
}
