//! Normalized DLT and seeded RANSAC on planted correspondences.

use aero_vpr::alignment::{
    estimate_homography_dlt, ransac_homography, reprojection_error, Correspondence, Homography,
    RansacParams,
};
use aero_vpr::PixelPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> aero_vpr::Result<()> {
    let truth = Homography::from_rows([
        [0.98, -0.17, 30.0],
        [0.17, 0.98, -12.0],
        [1e-4, -5e-5, 1.0],
    ]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut corrs = Vec::new();
    for i in 0..60 {
        let src = (rng.random_range(0.0..256.0), rng.random_range(0.0..256.0));
        let dst = if i % 10 < 7 {
            let p = truth.apply(PixelPoint::new(src.0, src.1))?;
            (p.u, p.v)
        } else {
            (rng.random_range(0.0..256.0), rng.random_range(0.0..256.0))
        };
        corrs.push(Correspondence::new(src, dst));
    }

    let clean: Vec<_> = corrs.iter().enumerate().filter(|(i, _)| i % 10 < 7).map(|(_, c)| *c).collect();
    let h = estimate_homography_dlt(&clean)?;
    let worst = clean.iter().map(|c| reprojection_error(&h, c)).fold(0.0, f64::max);
    println!("DLT on the 42 inliers: max residual {worst:.2e} px");

    let (h, inliers) = ransac_homography(&corrs, &RansacParams::default())?;
    let planted = inliers.iter().all(|i| i % 10 < 7);
    println!("RANSAC: {} inliers, all planted: {planted}", inliers.len());
    let p = h.apply(PixelPoint::new(128.0, 128.0))?;
    let q = truth.apply(PixelPoint::new(128.0, 128.0))?;
    println!("center maps to ({:.3}, {:.3}), truth ({:.3}, {:.3})", p.u, p.v, q.u, q.v);
    Ok(())
}
