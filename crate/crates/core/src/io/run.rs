//! Run directories.
//!
//! ```text
//! <root>/config.toml                  config exactly as given
//! <root>/log.jsonl                    append-only event log
//! <root>/checkpoints/NNN.ckpt         grid after update NNN
//! <root>/views/NNN_image.png          supervision image of update NNN
//! <root>/views/NNN_depth.pfm          its (aligned) depth
//! <root>/views/NNN_rendered.png       inpainting input
//! <root>/views/NNN_rendered_depth.pfm
//! <root>/views/NNN_mask.pbm           region sent to inpainting
//! <root>/views/NNN_estimated.pfm      depth before alignment
//! ```
//!
//! An update counts once its `update` event is in the log; the event is
//! written after every file it names.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::buffers::{ColorImage, DepthMap};
use crate::error::{Error, Result};
use crate::optim::IterationRecord;
use crate::pipeline::{visit_order, Observer, PipelineState, UpdateArtifacts, UpdateRecord, UpdatedView};

use super::config::RunConfig;
use super::{
    append_jsonl, decode_checkpoint, decode_pfm, decode_png, encode_checkpoint, encode_pbm,
    encode_pfm, encode_png, write_atomic,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const LOG_FILE: &str = "log.jsonl";

/// Files written for one update, relative to the run root.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateFiles {
    pub checkpoint: String,
    pub image: String,
    pub depth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rendered: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rendered_depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated_depth: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Iteration {
        sequence: usize,
        view_id: usize,
        record: IterationRecord,
    },
    Update {
        sequence: usize,
        record: UpdateRecord,
        files: UpdateFiles,
    },
}

#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Creates `root` and stores the config text verbatim. Refuses a
    /// directory that already holds a run.
    pub fn create(root: impl Into<PathBuf>, config_text: &str) -> Result<Self> {
        let root = root.into();
        if root.join(LOG_FILE).exists() || root.join(CONFIG_FILE).exists() {
            return Err(Error::invalid(format!("{} already holds a run", root.display())));
        }
        fs::create_dir_all(root.join("checkpoints"))?;
        fs::create_dir_all(root.join("views"))?;
        write_atomic(&root.join(CONFIG_FILE), config_text.as_bytes())?;
        Ok(Self { root })
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.join(CONFIG_FILE).is_file() {
            return Err(Error::invalid(format!("{} is not a run directory", root.display())));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn config_text(&self) -> Result<String> {
        Ok(fs::read_to_string(self.path(CONFIG_FILE))?)
    }

    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::from_toml(&self.config_text()?)
    }

    /// Every complete event in the log. A torn final line is ignored.
    pub fn events(&self) -> Result<Vec<LogEvent>> {
        let text = match fs::read_to_string(self.path(LOG_FILE)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        complete
            .lines()
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(format!("log line {}: {e}", i + 1))))
            .collect()
    }

    /// Update events in order, checked to be numbered `0, 1, 2, ...`.
    pub fn updates(&self) -> Result<Vec<(UpdateRecord, UpdateFiles)>> {
        let mut out = Vec::new();
        for ev in self.events()? {
            if let LogEvent::Update { sequence, record, files } = ev {
                if sequence != out.len() {
                    return Err(Error::format(format!("update {sequence} out of sequence")));
                }
                out.push((record, files));
            }
        }
        Ok(out)
    }

    /// Drops a torn final log line so appends start on a fresh line.
    pub fn repair_log(&self) -> Result<()> {
        let path = self.path(LOG_FILE);
        let Ok(bytes) = fs::read(&path) else {
            return Ok(());
        };
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if keep < bytes.len() {
            log::warn!("dropping {} bytes of torn log line", bytes.len() - keep);
            write_atomic(&path, &bytes[..keep])?;
        }
        Ok(())
    }

    /// Rebuilds the state after the first `upto` updates (all by default)
    /// from the files on disk.
    pub fn load_state(&self, config: &RunConfig, upto: Option<usize>) -> Result<PipelineState> {
        let mut updates = self.updates()?;
        if let Some(n) = upto {
            if n > updates.len() {
                return Err(Error::invalid(format!("run has {} updates, asked for {n}", updates.len())));
            }
            updates.truncate(n);
        }
        let Some((last, last_files)) = updates.last() else {
            return Err(Error::invalid("run has no completed updates"));
        };
        let grid = decode_checkpoint(&fs::read(self.path(&last_files.checkpoint))?)?;
        let hash = super::grid_hash(&grid);
        if hash != last.grid_hash {
            return Err(Error::Checkpoint(format!(
                "{} hashes to {hash}, log says {}",
                last_files.checkpoint, last.grid_hash
            )));
        }
        let trajectory = config.trajectory()?;
        let pipeline = config.pipeline()?;
        let mut updated = Vec::with_capacity(updates.len());
        for (record, files) in &updates {
            let view = *trajectory
                .get(record.view_id)
                .ok_or_else(|| Error::format(format!("view {} is not in the trajectory", record.view_id)))?;
            let image = decode_png(&fs::read(self.path(&files.image))?)?;
            let depth = decode_pfm(&fs::read(self.path(&files.depth))?)?;
            if image.dims() != view.dims() || depth.dims() != view.dims() {
                return Err(Error::format(format!("files of view {} have the wrong size", view.id)));
            }
            updated.push(UpdatedView { view, image, depth });
        }
        let done: Vec<usize> = updated.iter().map(|u| u.view.id).collect();
        let pending = visit_order(&trajectory, pipeline.order)
            .into_iter()
            .filter(|id| !done.contains(id))
            .collect();
        let state = PipelineState {
            config: pipeline,
            trajectory,
            updated,
            pending,
            grid,
            history: updates.into_iter().map(|(r, _)| r).collect(),
        };
        state.check_partition()?;
        Ok(state)
    }
}

/// Observer that persists every update into a run directory.
pub struct Recorder<'a> {
    dir: &'a RunDir,
}

impl<'a> Recorder<'a> {
    pub fn new(dir: &'a RunDir) -> Self {
        Self { dir }
    }

    fn put(&self, rel: String, bytes: &[u8]) -> Result<String> {
        write_atomic(&self.dir.path(&rel), bytes)?;
        Ok(rel)
    }
}

fn view_file(seq: usize, what: &str) -> String {
    format!("views/{seq:03}_{what}")
}

fn png(img: &ColorImage) -> Vec<u8> {
    encode_png(img)
}

fn pfm(d: &DepthMap) -> Vec<u8> {
    encode_pfm(d)
}

impl Observer for Recorder<'_> {
    fn on_update(&mut self, state: &PipelineState, record: &UpdateRecord, artifacts: &UpdateArtifacts) -> Result<()> {
        let seq = state.history.len() - 1;
        let entry = state.updated.last().expect("an update just happened");
        let mut files = UpdateFiles {
            checkpoint: self.put(format!("checkpoints/{seq:03}.ckpt"), &encode_checkpoint(&state.grid))?,
            image: self.put(view_file(seq, "image.png"), &png(&entry.image))?,
            depth: self.put(view_file(seq, "depth.pfm"), &pfm(&entry.depth))?,
            ..Default::default()
        };
        if let Some(r) = &artifacts.rendered {
            files.rendered = Some(self.put(view_file(seq, "rendered.png"), &png(r))?);
        }
        if let Some(d) = &artifacts.rendered_depth {
            files.rendered_depth = Some(self.put(view_file(seq, "rendered_depth.pfm"), &pfm(d))?);
        }
        if let Some(m) = &artifacts.mask {
            files.mask = Some(self.put(view_file(seq, "mask.pbm"), &encode_pbm(m))?);
        }
        if let Some(d) = &artifacts.estimated_depth {
            files.estimated_depth = Some(self.put(view_file(seq, "estimated.pfm"), &pfm(d))?);
        }

        let log = self.dir.path(LOG_FILE);
        let mut lines = Vec::new();
        for it in &artifacts.history {
            let ev = LogEvent::Iteration {
                sequence: seq,
                view_id: record.view_id,
                record: *it,
            };
            serde_json::to_writer(&mut lines, &ev).map_err(|e| Error::format(e.to_string()))?;
            lines.push(b'\n');
        }
        let mut f = fs::OpenOptions::new().create(true).append(true).open(&log)?;
        f.write_all(&lines)?;
        drop(f);
        append_jsonl(
            &log,
            &LogEvent::Update {
                sequence: seq,
                record: record.clone(),
                files,
            },
        )
    }
}
