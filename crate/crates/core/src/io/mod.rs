//! File formats and run-directory plumbing.

mod checkpoint;
mod config;
mod netpbm;
mod png;
mod run;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, grid_hash, MAGIC, VERSION};
pub use netpbm::{decode_pbm, decode_pfm, encode_pbm, encode_pfm, MAX_SIDE};
pub use png::{decode_mask_png, decode_png, encode_mask_png, encode_png};

pub use config::{
    AlignSection, CameraSection, GridSection, ProviderSection, RunConfig, SupportSection, TrainSection, UpdateSection,
    PROVIDER_URL_ENV,
};
pub use run::{LogEvent, Recorder, RunDir, UpdateFiles, CONFIG_FILE, LOG_FILE};

use crate::error::Result;

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Appends one JSON record per line.
pub fn append_jsonl<T: serde::Serialize>(path: &Path, record: &T) -> Result<()> {
    let mut line = serde_json::to_vec(record).map_err(|e| crate::Error::Format(e.to_string()))?;
    line.push(b'\n');
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&line)?;
    Ok(())
}
