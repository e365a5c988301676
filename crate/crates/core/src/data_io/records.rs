//! JSON-lines records: candidate windows in, proposals out.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cascade::Candidate;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, ScoredBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub image_id: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub eb_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub image_id: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl ProposalRecord {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(self.x, self.y, self.w, self.h)
    }
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", n + 1),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a candidate file, checking every record belongs to `image_id` and
/// describes a valid box.
pub fn read_candidates(path: &Path, image_id: &str) -> Result<Vec<Candidate>> {
    let records: Vec<CandidateRecord> = read_lines(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.image_id != image_id {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!(
                        "record {} belongs to image {:?}, expected {image_id:?}",
                        i + 1,
                        r.image_id
                    ),
                });
            }
            if !r.eb_score.is_finite() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("record {}: non-finite score", i + 1),
                });
            }
            let bbox = BoundingBox::try_new(r.x, r.y, r.w, r.h).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: format!("record {}: {e}", i + 1),
            })?;
            Ok(Candidate {
                bbox,
                eb_score: r.eb_score,
            })
        })
        .collect()
}

pub fn write_candidates(path: &Path, image_id: &str, cands: &[Candidate]) -> Result<()> {
    let records: Vec<CandidateRecord> = cands
        .iter()
        .map(|c| CandidateRecord {
            image_id: image_id.to_string(),
            x: c.bbox.x,
            y: c.bbox.y,
            w: c.bbox.w,
            h: c.bbox.h,
            eb_score: c.eb_score,
        })
        .collect();
    write_lines(path, &records)
}

pub fn write_proposals(path: &Path, image_id: &str, boxes: &[ScoredBox]) -> Result<()> {
    let records: Vec<ProposalRecord> = boxes
        .iter()
        .map(|b| ProposalRecord {
            image_id: image_id.to_string(),
            x: b.bbox.x,
            y: b.bbox.y,
            w: b.bbox.w,
            h: b.bbox.h,
            score: b.score,
        })
        .collect();
    write_lines(path, &records)
}

pub fn read_proposals(path: &Path) -> Result<Vec<ProposalRecord>> {
    read_lines(path)
}
