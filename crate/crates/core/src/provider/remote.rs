//! HTTP client for model-backed providers.
//!
//! Every endpoint takes and returns a JSON object; images travel as base64
//! PNG, masks as base64 grayscale PNG (white = inpaint), depth as base64
//! little-endian PFM. Failures come back as a non-2xx status with
//! `{code, message}`.

use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::buffers::{ColorImage, DepthMap};
use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::io::{decode_pfm, decode_png, encode_mask_png, encode_png};

use super::{EmbeddingVector, InpaintRequest, SceneProvider};

/// Request and response bodies.
pub mod wire {
    use serde::{Deserialize, Serialize};

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct GenerateRequest {
        pub prompt: String,
        pub width: usize,
        pub height: usize,
        pub seed: u64,
    }

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct ImageResponse {
        pub image: String,
    }

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct InpaintRequest {
        pub prompt: String,
        pub image: String,
        pub mask: String,
        pub num_candidates: usize,
        pub seed: u64,
    }

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct CandidatesResponse {
        pub candidates: Vec<String>,
    }

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct ImageRequest {
        pub image: String,
    }

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct DepthResponse {
        pub depth: String,
    }

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct EmbedResponse {
        pub vector: Vec<f64>,
    }

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct ErrorBody {
        pub code: String,
        pub message: String,
    }

    pub const GENERATE: &str = "/v1/generate";
    pub const INPAINT: &str = "/v1/inpaint";
    pub const DEPTH: &str = "/v1/depth";
    pub const EMBED: &str = "/v1/embed";
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_timeout() -> f64 {
    300.0
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
            backoff_ms: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.url.starts_with("http://") || self.url.starts_with("https://")) {
            return Err(Error::Config(format!("provider URL must be http(s): {:?}", self.url)));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::Config("provider timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Largest response body accepted.
const MAX_BODY: u64 = 1 << 30;

pub struct RemoteProvider {
    cfg: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteProvider {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        cfg.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { cfg, agent })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn failure(&self, message: impl Into<String>) -> Error {
        Error::Provider {
            provider: self.name().to_string(),
            message: message.into(),
        }
    }

    /// POSTs `body`, retrying transport failures, 429 and 5xx with
    /// exponential backoff. Requests carry their seed, so repeats are safe.
    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp> {
        let url = format!("{}{}", self.cfg.url.trim_end_matches('/'), path);
        let mut attempt = 0;
        loop {
            let err = match self.agent.post(&url).send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp
                        .body_mut()
                        .with_config()
                        .limit(MAX_BODY)
                        .read_to_string()
                        .map_err(|e| self.failure(format!("{path}: reading response: {e}")));
                    if (200..300).contains(&status) {
                        let text = text?;
                        return serde_json::from_str(&text)
                            .map_err(|e| self.failure(format!("{path}: malformed response: {e}")));
                    }
                    let (code, message) = match text.as_deref().map(serde_json::from_str::<wire::ErrorBody>) {
                        Ok(Ok(b)) => (b.code, b.message),
                        Ok(Err(_)) => ("unknown".into(), truncate(text.as_deref().unwrap_or(""))),
                        Err(_) => ("unknown".into(), String::new()),
                    };
                    let e = Error::RemoteStatus { status, code, message };
                    if status != 429 && status < 500 {
                        return Err(e);
                    }
                    e
                }
                Err(e) => self.failure(format!("{path}: {e}")),
            };
            if attempt >= self.cfg.retries {
                return Err(err);
            }
            let wait = self.cfg.backoff_ms.saturating_mul(1 << attempt.min(16));
            log::warn!("{path} failed ({err}); retrying in {wait} ms");
            thread::sleep(Duration::from_millis(wait));
            attempt += 1;
        }
    }

    fn decode_b64(&self, what: &str, s: &str) -> Result<Vec<u8>> {
        B64.decode(s).map_err(|e| self.failure(format!("{what}: bad base64: {e}")))
    }

    fn image(&self, what: &str, s: &str) -> Result<ColorImage> {
        decode_png(&self.decode_b64(what, s)?).map_err(|e| self.failure(format!("{what}: {e}")))
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

impl SceneProvider for RemoteProvider {
    fn name(&self) -> &str {
        "remote"
    }

    fn generate(&self, prompt: &str, view: &CameraView, seed: u64) -> Result<ColorImage> {
        let req = wire::GenerateRequest {
            prompt: prompt.to_string(),
            width: view.width(),
            height: view.height(),
            seed,
        };
        let resp: wire::ImageResponse = self.call(wire::GENERATE, &req)?;
        self.image("generated image", &resp.image)
    }

    fn inpaint(&self, req: &InpaintRequest, _view: &CameraView) -> Result<Vec<ColorImage>> {
        let body = wire::InpaintRequest {
            prompt: req.prompt.clone(),
            image: B64.encode(encode_png(&req.image)),
            mask: B64.encode(encode_mask_png(&req.mask)),
            num_candidates: req.candidates,
            seed: req.seed,
        };
        let resp: wire::CandidatesResponse = self.call(wire::INPAINT, &body)?;
        resp.candidates
            .iter()
            .enumerate()
            .map(|(i, c)| self.image(&format!("candidate {i}"), c))
            .collect()
    }

    fn estimate_depth(&self, image: &ColorImage, _view: &CameraView) -> Result<DepthMap> {
        let body = wire::ImageRequest {
            image: B64.encode(encode_png(image)),
        };
        let resp: wire::DepthResponse = self.call(wire::DEPTH, &body)?;
        decode_pfm(&self.decode_b64("depth", &resp.depth)?).map_err(|e| self.failure(format!("depth: {e}")))
    }

    fn embed(&self, image: &ColorImage) -> Result<EmbeddingVector> {
        let body = wire::ImageRequest {
            image: B64.encode(encode_png(image)),
        };
        let resp: wire::EmbedResponse = self.call(wire::EMBED, &body)?;
        Ok(EmbeddingVector(resp.vector))
    }
}
