mod common;

use std::sync::{Arc, Mutex};
use std::thread;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::Vector3;
use serde_json::{json, Value};

use scene_synth::camera::{CameraView, Intrinsics, Pose};
use scene_synth::io::{decode_mask_png, decode_pfm, decode_png, encode_pfm, encode_png};
use scene_synth::provider::{
    self, wire, DepthNoise, InpaintRequest, OracleProvider, OracleScene, RemoteConfig, RemoteProvider, SceneProvider,
};
use scene_synth::{ColorImage, DepthMap, Error, RegionMask};

type Handler = Box<dyn Fn(usize, &str, &Value) -> (u16, String) + Send>;

struct Mock {
    url: String,
    seen: Arc<Mutex<Vec<(String, Value)>>>,
}

impl Mock {
    fn start(handler: Handler) -> Self {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let port = server.server_addr().to_ip().unwrap().port();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        thread::spawn(move || {
            for mut req in server.incoming_requests() {
                let mut body = String::new();
                req.as_reader().read_to_string(&mut body).unwrap();
                let value: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
                let path = req.url().to_string();
                let n = {
                    let mut l = log.lock().unwrap();
                    l.push((path.clone(), value.clone()));
                    l.len() - 1
                };
                let (status, text) = handler(n, &path, &value);
                let resp = tiny_http::Response::from_string(text).with_status_code(status);
                let _ = req.respond(resp);
            }
        });
        Self {
            url: format!("http://127.0.0.1:{port}"),
            seen,
        }
    }

    fn provider(&self) -> RemoteProvider {
        let mut cfg = RemoteConfig::new(&self.url);
        cfg.backoff_ms = 1;
        cfg.timeout_secs = 10.0;
        RemoteProvider::new(cfg).unwrap()
    }

    fn requests(&self) -> Vec<(String, Value)> {
        self.seen.lock().unwrap().clone()
    }
}

fn view(w: usize, h: usize) -> CameraView {
    CameraView::new(Intrinsics::default_for(w, h).unwrap(), Pose::from_yaw_pitch(10.0, 0.0, Vector3::zeros()), 2)
}

fn b64_png(img: &ColorImage) -> String {
    B64.encode(encode_png(img))
}

fn noise_image(w: usize, h: usize, seed: u64) -> ColorImage {
    let mut r = common::rng(seed);
    let px = (0..w * h).map(|_| [rand::Rng::random(&mut r), rand::Rng::random(&mut r), 0.5]).collect();
    ColorImage::from_pixels(w, h, px).unwrap()
}

fn half_mask(w: usize, h: usize) -> RegionMask {
    RegionMask::from_bools(w, h, (0..w * h).map(|i| i % w >= w / 2).collect()).unwrap()
}

fn ok(body: Value) -> (u16, String) {
    (200, body.to_string())
}

#[test]
fn inpaint_returns_thirty_composited_candidates() {
    let mock = Mock::start(Box::new(|_, path, body| {
        assert_eq!(path, wire::INPAINT);
        let n = body["num_candidates"].as_u64().unwrap() as usize;
        let cands: Vec<String> = (0..n).map(|i| b64_png(&noise_image(8, 6, i as u64))).collect();
        ok(json!({ "candidates": cands }))
    }));
    let p = mock.provider();
    let v = view(8, 6);
    let image = noise_image(8, 6, 99).quantized();
    let mask = half_mask(8, 6);
    let req = InpaintRequest {
        prompt: "a room".into(),
        image: image.clone(),
        mask: mask.clone(),
        candidates: 30,
        seed: 5,
    };
    let set = provider::inpaint(&p, &req, &v).unwrap();
    assert_eq!(set.candidates.len(), 30);
    for c in &set.candidates {
        for i in 0..48 {
            if !mask.as_slice()[i] {
                assert_eq!(c.pixels()[i], image.pixels()[i]);
            }
        }
    }
    // Not every candidate equals the input inside the mask.
    assert!(set.candidates.iter().any(|c| c != &image));

    let seen = mock.requests();
    assert_eq!(seen.len(), 1);
    let body = &seen[0].1;
    let sent: wire::InpaintRequest = serde_json::from_value(body.clone()).unwrap();
    assert_eq!(sent.num_candidates, 30);
    assert_eq!(sent.seed, 5);
    assert_eq!(decode_png(&B64.decode(&sent.image).unwrap()).unwrap(), image);
    assert_eq!(decode_mask_png(&B64.decode(&sent.mask).unwrap()).unwrap(), mask);
}

#[test]
fn empty_mask_never_reaches_the_server() {
    let mock = Mock::start(Box::new(|_, _, _| ok(json!({ "candidates": [] }))));
    let p = mock.provider();
    let req = InpaintRequest {
        prompt: String::new(),
        image: ColorImage::filled(4, 4, [0.5; 3]),
        mask: RegionMask::empty(4, 4),
        candidates: 30,
        seed: 0,
    };
    assert!(matches!(provider::inpaint(&p, &req, &view(4, 4)), Err(Error::InvalidArgument(_))));
    assert!(mock.requests().is_empty());
}

#[test]
fn server_errors_are_retried() {
    let img = noise_image(4, 4, 1).quantized();
    let body = b64_png(&img);
    let mock = Mock::start(Box::new(move |n, _, _| match n {
        0 => (503, json!({"code": "busy", "message": "warming up"}).to_string()),
        1 => (429, "slow down".into()),
        _ => ok(json!({ "image": body })),
    }));
    let p = mock.provider();
    let got = provider::generate_initial(&p, "x", &view(4, 4), 3).unwrap();
    assert_eq!(got, img);
    assert_eq!(mock.requests().len(), 3);
    let sent: wire::GenerateRequest = serde_json::from_value(mock.requests()[2].1.clone()).unwrap();
    assert_eq!((sent.width, sent.height, sent.seed), (4, 4, 3));
}

#[test]
fn retries_give_up() {
    let mock = Mock::start(Box::new(|_, _, _| (500, json!({"code": "oom", "message": "out of memory"}).to_string())));
    let p = mock.provider();
    let err = provider::generate_initial(&p, "x", &view(4, 4), 0).unwrap_err();
    assert!(err.is_provider_failure());
    match err {
        Error::RemoteStatus { status, code, .. } => assert_eq!((status, code.as_str()), (500, "oom")),
        e => panic!("unexpected {e}"),
    }
    assert_eq!(mock.requests().len(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let mock = Mock::start(Box::new(|_, _, _| {
        (400, json!({"code": "usage", "message": "mask is empty"}).to_string())
    }));
    let p = mock.provider();
    let err = p.embed(&ColorImage::filled(2, 2, [0.1; 3])).unwrap_err();
    match err {
        Error::RemoteStatus { status, code, message } => {
            assert_eq!(status, 400);
            assert_eq!(code, "usage");
            assert_eq!(message, "mask is empty");
        }
        e => panic!("unexpected {e}"),
    }
    assert_eq!(mock.requests().len(), 1);
}

#[test]
fn malformed_and_mismatched_responses_are_provider_failures() {
    let mock = Mock::start(Box::new(|_, path, _| match path {
        wire::GENERATE => ok(json!({ "image": b64_png(&ColorImage::filled(3, 3, [0.2; 3])) })),
        wire::DEPTH => ok(json!({ "depth": "%%%not base64" })),
        _ => (200, "{ not json".into()),
    }));
    let p = mock.provider();
    let v = view(4, 4);
    let e = provider::generate_initial(&p, "x", &v, 0).unwrap_err();
    assert!(e.is_provider_failure(), "{e}");
    let e = provider::estimate_depth(&p, &ColorImage::filled(4, 4, [0.2; 3]), &v).unwrap_err();
    assert!(e.is_provider_failure(), "{e}");
    let e = provider::embed(&p, &ColorImage::filled(4, 4, [0.2; 3])).unwrap_err();
    assert!(e.is_provider_failure(), "{e}");
}

#[test]
fn depth_travels_as_pfm() {
    let depth = DepthMap::from_values(3, 2, vec![1.0, 2.5, 0.0, 4.0, 1e-3, 7.25]).unwrap();
    let encoded = B64.encode(encode_pfm(&depth));
    let mock = Mock::start(Box::new(move |_, _, _| ok(json!({ "depth": encoded }))));
    let p = mock.provider();
    let got = provider::estimate_depth(&p, &ColorImage::filled(3, 2, [0.5; 3]), &view(3, 2)).unwrap();
    assert_eq!(got, depth.quantized());
    assert_eq!(got.valid_count(), 5);
    let sent: wire::ImageRequest = serde_json::from_value(mock.requests()[0].1.clone()).unwrap();
    assert_eq!(decode_png(&B64.decode(&sent.image).unwrap()).unwrap().dims(), (3, 2));
    assert!(decode_pfm(&encode_pfm(&got)).unwrap() == got);
}

#[test]
fn selection_uses_remote_embeddings() {
    let mock = Mock::start(Box::new(|_, _, body| {
        let img = decode_png(&B64.decode(body["image"].as_str().unwrap()).unwrap()).unwrap();
        let v = img.pixels()[0][0];
        ok(json!({ "vector": [v, 1.0 - v] }))
    }));
    let p = mock.provider();
    let reference = ColorImage::filled(2, 2, [0.8; 3]).quantized();
    let set = provider::CandidateSet {
        candidates: [0.1, 0.75, 0.4].iter().map(|&c| ColorImage::filled(2, 2, [c; 3]).quantized()).collect(),
        provider: "remote".into(),
        seed: 0,
    };
    assert_eq!(provider::select_candidate(&p, &set, &reference).unwrap(), 1);
    assert_eq!(mock.requests().len(), 4);
}

#[test]
fn unreachable_server_is_a_provider_failure() {
    let mut cfg = RemoteConfig::new("http://127.0.0.1:9");
    cfg.retries = 1;
    cfg.backoff_ms = 1;
    let p = RemoteProvider::new(cfg).unwrap();
    assert!(p.embed(&ColorImage::filled(2, 2, [0.5; 3])).unwrap_err().is_provider_failure());
}

#[test]
fn oracle_candidates_equal_the_truth() {
    let p = OracleProvider::new(OracleScene::default(), DepthNoise::Off).unwrap();
    let v = view(16, 16);
    let truth = p.scene.render(&v).0.quantized();
    let req = InpaintRequest {
        prompt: String::new(),
        image: ColorImage::filled(16, 16, [0.0; 3]),
        mask: RegionMask::full(16, 16),
        candidates: 30,
        seed: 1,
    };
    let set = provider::inpaint(&p, &req, &v).unwrap();
    assert_eq!(set.candidates.len(), 30);
    assert!(set.candidates.iter().all(|c| c == &truth));
    assert_eq!(provider::select_candidate(&p, &set, &truth).unwrap(), 0);
}

#[test]
fn oracle_depth_noise_follows_the_model() {
    let scene = OracleScene::default();
    let v = view(16, 16);
    let exact = scene.render(&v).1;
    let p = OracleProvider::new(scene, DepthNoise::Fixed { tau1: 0.5, tau2: 40.0 }).unwrap();
    let noisy = provider::estimate_depth(&p, &ColorImage::filled(16, 16, [0.5; 3]), &v).unwrap();
    for i in 0..exact.len() {
        let d = exact.get_index(i).unwrap();
        let want = (d + 0.5) * d.powf(1.0 / 40.0);
        assert!((noisy.get_index(i).unwrap() - want).abs() <= 1e-6 * want);
    }
}

#[test]
fn wrong_resolution_from_provider_is_rejected() {
    struct Liar;
    impl SceneProvider for Liar {
        fn name(&self) -> &str {
            "liar"
        }
        fn generate(&self, _: &str, _: &CameraView, _: u64) -> scene_synth::Result<ColorImage> {
            Ok(ColorImage::filled(3, 3, [0.0; 3]))
        }
        fn inpaint(&self, _: &InpaintRequest, _: &CameraView) -> scene_synth::Result<Vec<ColorImage>> {
            Ok(vec![])
        }
        fn estimate_depth(&self, _: &ColorImage, _: &CameraView) -> scene_synth::Result<DepthMap> {
            Ok(DepthMap::invalid(1, 1))
        }
        fn embed(&self, _: &ColorImage) -> scene_synth::Result<provider::EmbeddingVector> {
            Ok(provider::EmbeddingVector(vec![f64::NAN]))
        }
    }
    let v = view(4, 4);
    assert!(provider::generate_initial(&Liar, "", &v, 0).unwrap_err().is_provider_failure());
    let img = ColorImage::filled(4, 4, [0.0; 3]);
    assert!(provider::estimate_depth(&Liar, &img, &v).unwrap_err().is_provider_failure());
    assert!(provider::embed(&Liar, &img).unwrap_err().is_provider_failure());
    let req = InpaintRequest {
        prompt: String::new(),
        image: img,
        mask: RegionMask::full(4, 4),
        candidates: 2,
        seed: 0,
    };
    assert!(provider::inpaint(&Liar, &req, &v).unwrap_err().is_provider_failure());
}
