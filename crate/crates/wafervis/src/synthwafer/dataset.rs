//! Corpus writer: renders wafers to disk and builds the dataset manifest.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{
    split_counts, write_manifest, DatasetManifest, Label, ManifestRecord, RecordSide, Split,
};
use super::{crop_with_fill, generate_wafer, GroundTruth, WaferGeometry, WaferSpec};
use crate::error::{Error, Result};

/// A corpus of wafers rendered into one dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub wafers: Vec<WaferSpec>,
    /// Seed for the corpus-wide train/val/test assignment.
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
}

fn default_split_seed() -> u64 {
    0x5EED
}

/// Conventional file layout inside a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub root: PathBuf,
}

impl DatasetPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetPaths { root: root.into() }
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }
    pub fn truth(&self) -> PathBuf {
        self.root.join("truth.jsonl")
    }
    pub fn wafer_image(&self, wafer_id: u32) -> PathBuf {
        self.root.join(wafer_image_rel(wafer_id))
    }
}

pub fn wafer_image_rel(wafer_id: u32) -> String {
    format!("wafers/wafer_{wafer_id:03}.png")
}

pub fn chip_image_rel(wafer_id: u32, col: usize, row: usize) -> String {
    format!("chips/w{wafer_id:03}_c{col:02}_r{row:02}.png")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TruthLine {
    wafer_id: u32,
    truth: GroundTruth,
}

/// Generate every wafer of the corpus into `out`, writing wafer images,
/// chip views, ground truth, and the dataset manifest.
pub fn write_dataset(corpus: &CorpusSpec, out: &Path) -> Result<(DatasetManifest, Vec<GroundTruth>)> {
    if corpus.wafers.is_empty() {
        return Err(Error::Config("corpus has no wafers".into()));
    }
    for spec in &corpus.wafers {
        spec.validate()?;
    }
    fs::create_dir_all(out.join("wafers"))?;
    fs::create_dir_all(out.join("chips"))?;

    let generated: Vec<_> = corpus
        .wafers
        .par_iter()
        .map(|spec| generate_wafer(spec))
        .collect::<Result<Vec<_>>>()?;

    let mut truths = Vec::with_capacity(generated.len());
    let mut records: Vec<ManifestRecord> = Vec::new();

    for (wi, (img, truth)) in generated.iter().enumerate() {
        let wafer_id = wi as u32;
        img.save(out.join(wafer_image_rel(wafer_id)))?;
        let geom = WaferGeometry::new(&truth.spec);
        // Chip views (parallel crop+encode, sequential write order).
        let views: Vec<_> = truth
            .chips
            .par_iter()
            .map(|chip| {
                let view = crop_with_fill(img, geom.view_rect(chip.col, chip.row));
                (chip.col, chip.row, view)
            })
            .collect();
        for (col, row, view) in views {
            view.save(out.join(chip_image_rel(wafer_id, col, row)))?;
        }
        for chip in &truth.chips {
            let label = if chip.inside {
                Label::from_class(chip.chip_class())
            } else {
                Label::Border
            };
            records.push(ManifestRecord {
                image_path: chip_image_rel(wafer_id, chip.col, chip.row),
                wafer_id,
                chip_col: chip.col as u32,
                chip_row: chip.row as u32,
                side: RecordSide::Chip,
                label,
                split: Split::Train, // reassigned below
                duplicate: false,
            });
        }
        for chip in truth.inside_chips() {
            for seg in &chip.segments {
                records.push(ManifestRecord {
                    image_path: wafer_image_rel(wafer_id),
                    wafer_id,
                    chip_col: chip.col as u32,
                    chip_row: chip.row as u32,
                    side: seg.side.into(),
                    label: Label::from_class(seg.class),
                    split: Split::Train,
                    duplicate: false,
                });
            }
        }
        truths.push(truth.clone());
    }

    assign_splits(&mut records, corpus.split_seed);

    let generator = serde_json::to_value(corpus).map_err(|e| Error::Data(e.to_string()))?;
    let mut manifest = DatasetManifest::new(generator);
    manifest.records = records;
    write_manifest(&manifest, &out.join("manifest.jsonl"))?;

    let mut tw = BufWriter::new(File::create(out.join("truth.jsonl"))?);
    for (wi, truth) in truths.iter().enumerate() {
        let line = TruthLine {
            wafer_id: wi as u32,
            truth: truth.clone(),
        };
        serde_json::to_writer(&mut tw, &line).map_err(|e| Error::Data(e.to_string()))?;
        tw.write_all(b"\n")?;
    }
    tw.flush()?;

    Ok((manifest, truths))
}

pub fn read_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open truth {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TruthLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        if t.wafer_id as usize != out.len() {
            return Err(Error::Data(format!(
                "truth file out of order at line {}",
                idx + 1
            )));
        }
        out.push(t.truth);
    }
    Ok(out)
}

/// Assign 50/25/25 splits per class, separately for chip and street
/// records, deterministic in `seed`.
fn assign_splits(records: &mut [ManifestRecord], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for kind_chip in [true, false] {
        for label in [Label::Good, Label::Anomaly, Label::Bad, Label::Border] {
            let mut idxs: Vec<usize> = records
                .iter()
                .enumerate()
                .filter(|(_, r)| (r.side == RecordSide::Chip) == kind_chip && r.label == label)
                .map(|(i, _)| i)
                .collect();
            if idxs.is_empty() {
                continue;
            }
            idxs.shuffle(&mut rng);
            let (tr, va, _) = split_counts(idxs.len());
            for (k, &i) in idxs.iter().enumerate() {
                records[i].split = if k < tr {
                    Split::Train
                } else if k < tr + va {
                    Split::Val
                } else {
                    Split::Test
                };
            }
        }
    }
}
