use aero_vpr::alignment::{
    apply_homography, ransac_homography, reprojection_error, Correspondence, Homography,
    RansacParams,
};
use aero_vpr::extract::{extract_local, DEFAULT_MAX_KEYPOINTS};
use aero_vpr::features::{inlier_score, match_features, rerank, Keypoint, LocalFeatureSet, RerankParams};
use aero_vpr::synth::{render_canvas, SynthConfig};
use aero_vpr::PixelPoint;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn feature_set(rng: &mut ChaCha8Rng, rows: &[Vec<f32>]) -> LocalFeatureSet {
    let dim = rows[0].len();
    let kps = rows
        .iter()
        .map(|_| Keypoint {
            u: rng.random_range(0.0..100.0),
            v: rng.random_range(0.0..100.0),
            score: 1.0,
        })
        .collect();
    LocalFeatureSet::new(kps, dim, rows.concat()).unwrap()
}

#[test]
fn planted_pairs_among_distractors() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let dim = 32;
    let shared: Vec<Vec<f32>> = (0..5).map(|_| unit(&mut rng, dim)).collect();
    let mut a_rows: Vec<Vec<f32>> = (0..20).map(|_| unit(&mut rng, dim)).collect();
    let mut b_rows: Vec<Vec<f32>> = (0..20).map(|_| unit(&mut rng, dim)).collect();
    let a_slots = [3, 7, 11, 15, 19];
    let b_slots = [18, 0, 9, 4, 12];
    for (k, d) in shared.iter().enumerate() {
        a_rows[a_slots[k]] = d.clone();
        b_rows[b_slots[k]] = d.clone();
    }
    let a = feature_set(&mut rng, &a_rows);
    let b = feature_set(&mut rng, &b_rows);
    let m = match_features(&a, &b, 0.8).unwrap();
    let got: Vec<(usize, usize)> = m.pairs.iter().map(|p| (p.index_a, p.index_b)).collect();
    let want: Vec<(usize, usize)> = a_slots.iter().copied().zip(b_slots).collect();
    assert_eq!(got, want);

    // the pairwise table confirms every planted pair is the unique zero entry
    for (i, ra) in a_rows.iter().enumerate() {
        for (j, rb) in b_rows.iter().enumerate() {
            let d: f32 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
            assert_eq!(d == 0.0, want.contains(&(i, j)));
        }
    }
}

#[test]
fn planted_ransac_inliers() {
    let h = Homography::from_rows([[0.9, -0.2, 12.0], [0.15, 1.1, -7.0], [1e-4, -2e-4, 1.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut corrs = Vec::new();
    for _ in 0..14 {
        let p = (rng.random_range(0.0..300.0), rng.random_range(0.0..300.0));
        let q = apply_homography(&h, PixelPoint::new(p.0, p.1)).unwrap();
        corrs.push(Correspondence::new(p, (q.u, q.v)));
    }
    for _ in 0..6 {
        let p = (rng.random_range(0.0..300.0), rng.random_range(0.0..300.0));
        let q = (rng.random_range(0.0..300.0), rng.random_range(0.0..300.0));
        corrs.push(Correspondence::new(p, q));
    }
    // outliers must not happen to agree with the planted model
    assert!(corrs[14..].iter().all(|c| reprojection_error(&h, c) > 2.0));
    let params = RansacParams {
        inlier_threshold_px: 2.0,
        max_iters: 1000,
        confidence: 1.0,
        ..Default::default()
    };
    let (est, inliers) = ransac_homography(&corrs, &params).unwrap();
    assert_eq!(inliers, (0..14).collect::<Vec<_>>());
    assert!(corrs[..14].iter().all(|c| reprojection_error(&est, c) < 1e-6));
    let again = ransac_homography(&corrs, &params).unwrap();
    assert_eq!(again.1, inliers);
}

#[test]
fn translation_homography_applies() {
    let h = Homography::translation(5.0, -3.0);
    let q = apply_homography(&h, PixelPoint::new(10.0, 10.0)).unwrap();
    assert_eq!((q.u, q.v), (15.0, 7.0));
}

#[test]
fn rerank_finds_translated_crop() {
    let cfg = SynthConfig {
        seed: 4,
        rows: 4,
        cols: 4,
        tile_px: 128,
        ..Default::default()
    };
    let canvas = render_canvas(&cfg).unwrap();
    let tiles: Vec<_> = (0..10)
        .map(|i| canvas.crop((i % 4) * 128, (i / 4) * 128, 128, 128).unwrap())
        .collect();
    let feats: Vec<LocalFeatureSet> = tiles
        .iter()
        .map(|t| extract_local(t, DEFAULT_MAX_KEYPOINTS).unwrap())
        .collect();
    // tile 3 is at canvas (384, 0); the query is shifted 20 px right, 30 down
    let query = canvas.crop(384 - 20, 30, 128, 128).unwrap();
    let qf = extract_local(&query, DEFAULT_MAX_KEYPOINTS).unwrap();
    let params = RerankParams::default();
    let scores: Vec<usize> = feats.iter().map(|f| inlier_score(&qf, f, &params).unwrap()).collect();
    let candidates: Vec<(usize, &LocalFeatureSet)> = feats.iter().enumerate().filter(|(i, _)| *i != 2).collect();
    let order: Vec<usize> = candidates.iter().map(|c| c.0).collect();
    let out = rerank(&qf, &candidates, &order, 3, &params).unwrap();
    assert_eq!(out[0].0, 3, "scores {scores:?}");
    assert_eq!(out[0].1, scores[3]);
    let best_other = order.iter().filter(|&&i| i != 3).map(|&i| scores[i]).max().unwrap();
    assert!(scores[3] > best_other);
}

#[test]
fn identical_query_ranks_first_with_full_consensus() {
    let cfg = SynthConfig { seed: 2, tile_px: 128, ..Default::default() };
    let canvas = render_canvas(&cfg).unwrap();
    let a = extract_local(&canvas.crop(0, 0, 128, 128).unwrap(), 200).unwrap();
    let b = extract_local(&canvas.crop(256, 128, 128, 128).unwrap(), 200).unwrap();
    let params = RerankParams::default();
    let out = rerank(&a, &[(0, &b), (1, &a)], &[0, 1], 2, &params).unwrap();
    assert_eq!(out[0], (1, match_features(&a, &a, params.ratio).unwrap().len()));
}

proptest! {
    #[test]
    fn mutual_matching_is_symmetric(seed: u64, na in 0usize..25, nb in 0usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mk = |rng: &mut ChaCha8Rng, n: usize| {
            if n == 0 {
                return LocalFeatureSet::empty(8);
            }
            let rows: Vec<Vec<f32>> = (0..n).map(|_| unit(rng, 8)).collect();
            feature_set(rng, &rows)
        };
        let a = mk(&mut rng, na);
        let b = mk(&mut rng, nb);
        let ab = match_features(&a, &b, 0.9).unwrap();
        let ba = match_features(&b, &a, 0.9).unwrap();
        let mut fwd: Vec<_> = ab.pairs.iter().map(|m| (m.index_a, m.index_b)).collect();
        let mut rev: Vec<_> = ba.pairs.iter().map(|m| (m.index_b, m.index_a)).collect();
        fwd.sort();
        rev.sort();
        prop_assert_eq!(&fwd, &rev);
        let mut sa: Vec<_> = fwd.iter().map(|p| p.0).collect();
        let mut sb: Vec<_> = fwd.iter().map(|p| p.1).collect();
        sa.dedup();
        sb.sort();
        sb.dedup();
        prop_assert_eq!(sa.len(), fwd.len());
        prop_assert_eq!(sb.len(), fwd.len());
    }
}
