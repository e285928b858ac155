mod common;

use proptest::prelude::*;

use common::*;
use scene_synth::align::{
    align_depth, distort_depth, global_align, local_align, sample_pairs, AlignConfig, Distortion, LocalConfig,
};
use scene_synth::camera::{CameraView, Intrinsics, Pose};
use scene_synth::provider::OracleScene;
use scene_synth::rng::{stream_rng, Stream};
use scene_synth::DepthMap;

fn oracle_depth(w: usize, yaw: f64) -> (Intrinsics, DepthMap) {
    let k = Intrinsics::default_for(w, w).unwrap();
    let v = CameraView::new(k, Pose::from_yaw_pitch(yaw, 10.0, nalgebra::Vector3::zeros()), 0);
    (k, OracleScene::default().render(&v).1)
}

#[test]
fn pure_scale_is_recovered_exactly() {
    let (k, d) = oracle_depth(48, 30.0);
    for s in [0.37, 1.0, 2.5, 11.0] {
        let est = d.map_valid(|_, z| z / s);
        let mut r = stream_rng(1, Stream::PairSampling, 0);
        let a = align_depth(&d, &est, &k, &AlignConfig::default(), &mut r).unwrap();
        assert!((a.global.scale - s).abs() < 1e-6, "{} vs {s}", a.global.scale);
        assert!(a.global.offset.abs() < 1e-6);
        assert!(a.rmse_global.unwrap() < 1e-6);
    }
}

#[test]
fn global_fit_matches_brute_force() {
    let (k, d) = oracle_depth(40, 120.0);
    let est = distort_depth(&d, Distortion { tau1: 0.3, tau2: 35.0 }).unwrap();
    let overlap = d.overlap(&est).unwrap();
    let mut r = stream_rng(9, Stream::PairSampling, 0);
    let pairs = sample_pairs(&d, &est, &overlap, &k, 500, &mut r).unwrap();
    assert_eq!(pairs.len(), 500);
    let mut ratios = Vec::new();
    for i in 0..pairs.len() - 1 {
        let (a, b) = (&pairs[i], &pairs[i + 1]);
        let w = d.width();
        let unproject = |p: usize, z: f64| {
            let q = [(p % w) as f64, (p / w) as f64];
            nalgebra::Vector3::new((q[0] - k.cx) / k.fx * z, (q[1] - k.cy) / k.fy * z, z)
        };
        let ra = unproject(a.pixel, d.values()[a.pixel]);
        let rb = unproject(b.pixel, d.values()[b.pixel]);
        let ea = unproject(a.pixel, est.values()[a.pixel]);
        let eb = unproject(b.pixel, est.values()[b.pixel]);
        ratios.push((ra - rb).norm() / (ea - eb).norm());
    }
    let scale = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let offset = pairs
        .iter()
        .map(|p| d.values()[p.pixel] - scale * est.values()[p.pixel])
        .sum::<f64>()
        / pairs.len() as f64;
    let g = global_align(&pairs).unwrap();
    assert!((g.scale - scale).abs() < 1e-12);
    assert!((g.offset - offset).abs() < 1e-12);
}

#[test]
fn noise_model_is_largely_removed() {
    let (k, d) = oracle_depth(64, 200.0);
    let est = distort_depth(&d, Distortion { tau1: 0.5, tau2: 40.0 }).unwrap();
    let mut r = stream_rng(3, Stream::PairSampling, 0);
    let a = align_depth(&d, &est, &k, &AlignConfig::default(), &mut r).unwrap();
    let raw = a.rmse_raw.unwrap();
    let local = a.rmse_local.unwrap();
    assert!(local <= 0.2 * raw, "raw {raw} local {local}");
    assert!(a.fallback.is_none());
}

#[test]
fn very_smooth_field_is_the_affine_fit() {
    let (_, d) = oracle_depth(40, 60.0);
    let est = distort_depth(&d, Distortion { tau1: 0.4, tau2: 30.0 }).unwrap();
    let overlap = d.overlap(&est).unwrap();
    let cfg = LocalConfig {
        lattice: 5,
        smoothness: 1e9,
    };
    let (_, field) = local_align(&est, &d, &overlap, &cfg).unwrap();
    let (a, b) = affine_fit(&est, &d, &overlap);
    for (s, o) in field.scale.iter().zip(&field.offset) {
        assert!((s - a).abs() < 1e-4 * a.abs(), "{s} vs {a}");
        assert!((o - b).abs() < 1e-4 * b.abs().max(1.0), "{o} vs {b}");
    }
}

#[test]
fn partial_overlap_only_fits_known_pixels() {
    let (k, d) = oracle_depth(48, 0.0);
    // Rendered depth only on the left half.
    let keep: Vec<bool> = (0..d.len()).map(|i| i % 48 < 24).collect();
    let rendered = d.restricted(&keep);
    let est = d.map_valid(|_, z| 0.5 * z + 0.2);
    let mut r = stream_rng(2, Stream::PairSampling, 0);
    let a = align_depth(&rendered, &est, &k, &AlignConfig::default(), &mut r).unwrap();
    assert_eq!(a.overlap_pixels, 24 * 48);
    // The whole estimate is corrected, including the right half.
    let err = rmse(&a.depth, &d, &vec![true; d.len()]);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn no_overlap_keeps_the_estimate() {
    let (k, d) = oracle_depth(16, 0.0);
    let rendered = DepthMap::invalid(16, 16);
    let mut r = stream_rng(0, Stream::PairSampling, 0);
    let a = align_depth(&rendered, &d, &k, &AlignConfig::default(), &mut r).unwrap();
    assert_eq!(a.depth, d);
    assert!(a.fallback.is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn residual_never_increases(tau1 in 0.0f64..1.0, tau2 in 30.0f64..50.0, yaw in 0.0f64..360.0, seed in any::<u64>()) {
        let (k, d) = oracle_depth(24, yaw);
        let est = distort_depth(&d, Distortion { tau1, tau2 }).unwrap();
        let mut r = stream_rng(seed, Stream::PairSampling, 0);
        let a = align_depth(&d, &est, &k, &AlignConfig::default(), &mut r).unwrap();
        let (raw, g, l) = (a.rmse_raw.unwrap(), a.rmse_global.unwrap(), a.rmse_local.unwrap());
        prop_assert!(g <= raw);
        prop_assert!(l <= g);
        prop_assert_eq!(a.depth.valid_mask(), est.valid_mask());
    }
}
