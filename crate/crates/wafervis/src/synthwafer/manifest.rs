//! Dataset manifest: a line-delimited JSON file listing every sample.
//!
//! The first line is a header `{"format_version":1,"generator":{...}}`;
//! each following line is one [`ManifestRecord`]. Field order is stable
//! (struct order), so writing is deterministic.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        };
        f.write_str(s)
    }
}

/// Sample label; street records use the three street classes, chip records
/// additionally use `border`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Good,
    Anomaly,
    Bad,
    Border,
}

impl Label {
    pub fn from_class(c: super::StreetClass) -> Self {
        match c {
            super::StreetClass::Good => Label::Good,
            super::StreetClass::Anomaly => Label::Anomaly,
            super::StreetClass::Bad => Label::Bad,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::Good => "good",
            Label::Anomaly => "anomaly",
            Label::Bad => "bad",
            Label::Border => "border",
        };
        f.write_str(s)
    }
}

/// Which part of the chip a record refers to: one of the four street
/// sides, or the whole chip view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecordSide {
    N,
    E,
    S,
    W,
    #[serde(rename = "chip")]
    Chip,
}

impl From<super::Side> for RecordSide {
    fn from(s: super::Side) -> Self {
        match s {
            super::Side::N => RecordSide::N,
            super::Side::E => RecordSide::E,
            super::Side::S => RecordSide::S,
            super::Side::W => RecordSide::W,
        }
    }
}

impl RecordSide {
    pub fn as_side(self) -> Option<super::Side> {
        match self {
            RecordSide::N => Some(super::Side::N),
            RecordSide::E => Some(super::Side::E),
            RecordSide::S => Some(super::Side::S),
            RecordSide::W => Some(super::Side::W),
            RecordSide::Chip => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Image path relative to the manifest's directory.
    pub image_path: String,
    pub wafer_id: u32,
    pub chip_col: u32,
    pub chip_row: u32,
    pub side: RecordSide,
    pub label: Label,
    pub split: Split,
    #[serde(default)]
    pub duplicate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    generator: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// Echo of the generator configuration that produced the dataset.
    pub generator: serde_json::Value,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn new(generator: serde_json::Value) -> Self {
        DatasetManifest {
            format_version: MANIFEST_VERSION,
            generator,
            records: Vec::new(),
        }
    }

    /// Records of the given split.
    pub fn split_records(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Check that every referenced image exists relative to `base`.
    pub fn validate_files(&self, base: &Path) -> Result<()> {
        for (i, rec) in self.records.iter().enumerate() {
            let p = base.join(&rec.image_path);
            if !p.exists() {
                return Err(Error::Data(format!(
                    "manifest record {} references missing file {}",
                    i,
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = Header {
        format_version: manifest.format_version,
        generator: manifest.generator.clone(),
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::Data(e.to_string()))?;
    w.write_all(b"\n")?;
    for rec in &manifest.records {
        serde_json::to_writer(&mut w, rec).map_err(|e| Error::Data(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = File::open(path).map_err(|e| {
        Error::Data(format!("cannot open manifest {}: {e}", path.display()))
    })?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::Data(format!("manifest {} is empty", path.display())))?;
    let header_line = header_line?;
    let header: Header = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 1,
        msg: format!("bad header: {e}"),
    })?;
    if header.format_version != MANIFEST_VERSION {
        return Err(Error::Data(format!(
            "unsupported manifest version {} (expected {})",
            header.format_version, MANIFEST_VERSION
        )));
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(DatasetManifest {
        format_version: header.format_version,
        generator: header.generator,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceMode {
    /// Duplicate records of underrepresented classes until every class
    /// matches the majority count.
    Duplicate,
}

/// Balance train-split class counts by duplication. Duplicates reference
/// the same image and are flagged `duplicate=true`; val/test records are
/// untouched.
pub fn class_balance(
    manifest: &DatasetManifest,
    _mode: BalanceMode,
) -> Result<DatasetManifest> {
    let mut labels: Vec<Label> = manifest.records.iter().map(|r| r.label).collect();
    labels.sort();
    labels.dedup();

    let mut out = manifest.clone();
    let mut max_count = 0usize;
    let mut per_label: Vec<(Label, Vec<usize>)> = Vec::new();
    for &label in &labels {
        let idxs: Vec<usize> = manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == Split::Train && r.label == label)
            .map(|(i, _)| i)
            .collect();
        if idxs.is_empty() {
            return Err(Error::Data(format!("cannot balance empty class '{label}'")));
        }
        max_count = max_count.max(idxs.len());
        per_label.push((label, idxs));
    }
    for (_, idxs) in &per_label {
        let needed = max_count - idxs.len();
        for k in 0..needed {
            let mut rec = manifest.records[idxs[k % idxs.len()]].clone();
            rec.duplicate = true;
            out.records.push(rec);
        }
    }
    Ok(out)
}

/// 50/25/25 split sizes, each within one sample of the exact fraction.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let tr = (n as f64 * 0.5).round() as usize;
    let va = (n as f64 * 0.25).round() as usize;
    let va = va.min(n - tr);
    let te = n - tr - va;
    (tr, va, te)
}
