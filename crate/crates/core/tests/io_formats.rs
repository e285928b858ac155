mod common;

use proptest::prelude::*;

use scene_synth::field::{Aabb, RadianceGrid};
use scene_synth::io::{
    decode_checkpoint, decode_mask_png, decode_pbm, decode_pfm, decode_png, encode_checkpoint, encode_mask_png,
    encode_pbm, encode_pfm, encode_png, grid_hash, RunConfig,
};
use scene_synth::{ColorImage, DepthMap, RegionMask};

fn depth_strategy() -> impl Strategy<Value = DepthMap> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
        prop::collection::vec(prop_oneof![Just(0.0f32), 1e-6f32..1e6], w * h).prop_map(move |v| {
            DepthMap::from_values(w, h, v.into_iter().map(f64::from).collect()).unwrap()
        })
    })
}

fn mask_strategy() -> impl Strategy<Value = RegionMask> {
    (1usize..20, 1usize..20).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<bool>(), w * h).prop_map(move |v| RegionMask::from_bools(w, h, v).unwrap())
    })
}

fn image_strategy() -> impl Strategy<Value = ColorImage> {
    (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h * 3).prop_map(move |b| ColorImage::from_rgb8(w, h, &b).unwrap())
    })
}

proptest! {
    #[test]
    fn pfm_round_trips_bit_exactly(d in depth_strategy()) {
        let bytes = encode_pfm(&d);
        let back = decode_pfm(&bytes).unwrap();
        prop_assert_eq!(&back, &d);
        prop_assert_eq!(encode_pfm(&back), bytes);
    }

    #[test]
    fn pbm_round_trips(m in mask_strategy()) {
        prop_assert_eq!(decode_pbm(&encode_pbm(&m)).unwrap(), m.clone());
        prop_assert_eq!(decode_mask_png(&encode_mask_png(&m)).unwrap(), m);
    }

    #[test]
    fn png_round_trips(img in image_strategy()) {
        prop_assert_eq!(decode_png(&encode_png(&img)).unwrap(), img);
    }

    #[test]
    fn checkpoint_round_trips(seed in any::<u64>(), n in 2usize..5) {
        let mut r = common::rng(seed);
        let g = common::random_grid(&mut r, n, 7.5);
        let bytes = encode_checkpoint(&g);
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(back.raw(), g.raw());
        prop_assert_eq!(grid_hash(&back), grid_hash(&g));
    }

    #[test]
    fn any_single_byte_flip_is_caught(seed in any::<u64>(), pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut r = common::rng(seed);
        let g = common::random_grid(&mut r, 2, 1.0);
        let mut bytes = encode_checkpoint(&g);
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(decode_checkpoint(&bytes).is_err());
    }

    #[test]
    fn decoders_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode_pfm(&bytes);
        let _ = decode_pbm(&bytes);
        let _ = decode_png(&bytes);
        let _ = decode_checkpoint(&bytes);
        let _ = RunConfig::from_toml(&String::from_utf8_lossy(&bytes));
    }

    #[test]
    fn truncated_checkpoints_rejected(cut in 1usize..200) {
        let g = RadianceGrid::uniform(Aabb::cube(1.0).unwrap(), [3; 3], 5.0, 1.0, [0.5; 3]).unwrap();
        let bytes = encode_checkpoint(&g);
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(decode_checkpoint(&bytes[..keep]).is_err());
    }
}

#[test]
fn identical_grids_hash_identically() {
    let a = RadianceGrid::uniform(Aabb::cube(1.0).unwrap(), [3; 3], 5.0, 1.0, [0.5; 3]).unwrap();
    let mut b = a.clone();
    assert_eq!(grid_hash(&a), grid_hash(&b));
    b.set_raw(5, b.raw()[5] + 1e-12);
    assert_ne!(grid_hash(&a), grid_hash(&b));
}

#[test]
fn pfm_headers_from_other_writers_parse() {
    // Big-endian scale, comment, extra whitespace.
    let mut bytes = b"Pf\n# written elsewhere\n2  1\n1.0\n".to_vec();
    bytes.extend_from_slice(&1.5f32.to_be_bytes());
    bytes.extend_from_slice(&0.0f32.to_be_bytes());
    let d = decode_pfm(&bytes).unwrap();
    assert_eq!(d.get(0, 0), Some(1.5));
    assert_eq!(d.get(1, 0), None);
    assert!(decode_pfm(b"PF\n1 1\n-1.0\n000000000000").is_err());
}
