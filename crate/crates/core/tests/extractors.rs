use aero_vpr::extract::{
    describe_patches, detect_corners, extract_local, global_descriptor_grid, GLOBAL_DIM,
};
use aero_vpr::features::{match_features, Keypoint};
use aero_vpr::synth::{render_canvas, SynthConfig};
use aero_vpr::Image;
use proptest::prelude::*;

fn canvas() -> Image {
    render_canvas(&SynthConfig { seed: 8, rows: 2, cols: 2, tile_px: 256, ..Default::default() }).unwrap()
}

#[test]
fn global_descriptor_ignores_brightness_offset() {
    let c = canvas();
    let img = c.crop(0, 0, 256, 256).unwrap();
    // keep headroom so adding 20 never clips
    let base = Image::from_fn(256, 256, |x, y| img.pixel(x, y, 0) / 2 + 40);
    let lifted = Image::from_fn(256, 256, |x, y| base.pixel(x, y, 0) + 20);
    let a = global_descriptor_grid(&base).unwrap();
    let b = global_descriptor_grid(&lifted).unwrap();
    assert_eq!(a.dim(), GLOBAL_DIM);
    assert_eq!(a, b);
    assert_eq!(global_descriptor_grid(&base).unwrap(), a);
}

#[test]
fn patch_descriptors_follow_integer_shifts() {
    let c = canvas();
    let a = c.crop(40, 60, 200, 200).unwrap();
    let b = c.crop(40 + 13, 60 + 7, 200, 200).unwrap();
    let kps_a = detect_corners(&a, 100).unwrap();
    // keypoints of a that stay inside b's interior, shifted into b's frame
    let (shared_a, shared_b): (Vec<Keypoint>, Vec<Keypoint>) = kps_a
        .iter()
        .filter(|k| k.u >= 30.0 && k.v >= 20.0 && k.u < 170.0 && k.v < 170.0)
        .map(|k| (*k, Keypoint { u: k.u - 13.0, v: k.v - 7.0, score: k.score }))
        .unzip();
    assert!(shared_a.len() > 20);
    let da = describe_patches(&a, &shared_a);
    let db = describe_patches(&b, &shared_b);
    for i in 0..da.len() {
        let d: f64 = da
            .descriptor(i)
            .iter()
            .zip(db.descriptor(i))
            .map(|(x, y)| ((x - y) as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(d < 1e-6, "keypoint {i}: {d}");
    }
}

#[test]
fn white_square_corners() {
    let img = Image::from_fn(96, 96, |x, y| if (30..70).contains(&x) && (30..70).contains(&y) { 255 } else { 0 });
    let kps = detect_corners(&img, 4).unwrap();
    assert_eq!(kps.len(), 4);
    let corners = [(30.0, 30.0), (70.0, 30.0), (30.0, 70.0), (70.0, 70.0)];
    for (cx, cy) in corners {
        assert!(
            kps.iter().any(|k| (k.u as f64 - cx).abs() <= 2.0 && (k.v as f64 - cy).abs() <= 2.0),
            "no keypoint near ({cx}, {cy}): {kps:?}"
        );
    }
}

#[test]
fn textured_tiles_self_match() {
    let c = canvas();
    for (x, y) in [(0, 0), (256, 0), (128, 200)] {
        let t = c.crop(x, y, 256, 256).unwrap();
        let f = extract_local(&t, 300).unwrap();
        assert!(f.len() >= 100, "only {} corners at ({x}, {y})", f.len());
        assert_eq!(extract_local(&t, 5).unwrap().len(), 5);
        assert!(match_features(&f, &f, 0.8).unwrap().len() >= 50);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn local_descriptors_are_unit_or_zero(seed in 0u64..1000) {
        let img = render_canvas(&SynthConfig { seed, rows: 1, cols: 1, tile_px: 96, ..Default::default() }).unwrap();
        let f = extract_local(&img, 50).unwrap();
        prop_assert!(f.len() <= 50);
        for i in 0..f.len() {
            let n: f64 = f.descriptor(i).iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-5 || n == 0.0);
        }
        let g = global_descriptor_grid(&img).unwrap();
        let n: f64 = g.as_slice().iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() < 1e-5 || n == 0.0);
    }
}
