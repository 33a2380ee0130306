//! JSONL datasets for referring-expression comprehension and part detection.
//!
//! One record per line. Blank lines are skipped; unknown fields are logged
//! and ignored; any other problem is an error naming the 1-based line.

use std::path::{Path, PathBuf};

use fgvp_core::Bbox;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::fsutil::write_atomic;
use crate::wire::{bbox_array, bbox_vec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecRecord {
    pub image: PathBuf,
    #[serde(with = "bbox_vec", default)]
    pub proposals: Vec<Bbox>,
    pub caption: String,
    #[serde(with = "bbox_array")]
    pub gt_box: Bbox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtPart {
    pub label: String,
    #[serde(rename = "box", with = "bbox_array")]
    pub bbox: Bbox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub image: PathBuf,
    #[serde(with = "bbox_array")]
    pub object_box: Bbox,
    pub labels: Vec<String>,
    pub gt: Vec<GtPart>,
}

const REC_FIELDS: &[&str] = &["image", "proposals", "caption", "gt_box"];
const PART_FIELDS: &[&str] = &["image", "object_box", "labels", "gt"];

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: no records", path.display())]
    NoRecords { path: PathBuf },
    #[error("{}:{line}: {message}", path.display())]
    Line { path: PathBuf, line: usize, message: String },
}

trait Validate {
    fn validate(&mut self) -> Result<(), String>;
}

impl Validate for RecRecord {
    fn validate(&mut self) -> Result<(), String> {
        let trimmed = self.caption.trim();
        if trimmed.is_empty() {
            return Err("caption is empty".into());
        }
        self.caption = trimmed.to_string();
        Ok(())
    }
}

impl Validate for PartRecord {
    fn validate(&mut self) -> Result<(), String> {
        if self.labels.is_empty() {
            return Err("labels list is empty".into());
        }
        for l in &mut self.labels {
            *l = l.trim().to_string();
            if l.is_empty() {
                return Err("empty part label".into());
            }
        }
        for (i, g) in self.gt.iter_mut().enumerate() {
            g.label = g.label.trim().to_string();
            if !self.labels.contains(&g.label) {
                return Err(format!("gt entry {i} has label {:?} missing from labels", g.label));
            }
        }
        Ok(())
    }
}

fn load<T: DeserializeOwned + Validate>(path: &Path, known: &[&str]) -> Result<Vec<T>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DatasetError::Line {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| err(format!("invalid JSON: {e}")))?;
        let Some(obj) = value.as_object() else {
            return Err(err("expected a JSON object".into()));
        };
        for key in obj.keys().filter(|k| !known.contains(&k.as_str())) {
            log::warn!("{}:{line_no}: ignoring unknown field {key:?}", path.display());
        }
        let mut record: T = serde_json::from_value(value).map_err(|e| err(e.to_string()))?;
        record.validate().map_err(err)?;
        out.push(record);
    }
    if out.is_empty() {
        return Err(DatasetError::NoRecords {
            path: path.to_path_buf(),
        });
    }
    Ok(out)
}

pub fn load_rec_jsonl(path: &Path) -> Result<Vec<RecRecord>, DatasetError> {
    load(path, REC_FIELDS)
}

pub fn load_part_jsonl(path: &Path) -> Result<Vec<PartRecord>, DatasetError> {
    load(path, PART_FIELDS)
}

/// Serializes records one per line and writes the file atomically.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> std::io::Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(std::io::Error::other)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
