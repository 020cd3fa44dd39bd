//! On-disk dataset format: a JSONL file with a header line followed by one
//! mention record per line.
//!
//! The header carries the schema version, embedding widths, and the full type
//! inventory, so a dataset file is self-describing. Records reference types by
//! path; loading resolves them against the embedded hierarchy and rejects a
//! file whose candidate sets are not ancestor-closed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::batch::MentionSample;
use crate::error::{Error, Result};
use crate::hierarchy::TypeHierarchy;

pub const DATASET_SCHEMA: u32 = 1;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub hierarchy: TypeHierarchy,
    pub samples: Vec<MentionSample>,
    pub d_w: usize,
    pub d_h: usize,
}

#[derive(Serialize, Deserialize)]
struct HeaderRec {
    schema: u32,
    d_w: usize,
    d_h: usize,
    hierarchy: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SampleRec {
    id: String,
    mention: Vec<Vec<f64>>,
    context: Vec<Vec<f64>>,
    candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header_line = match lines.next() {
            Some(l) => l?,
            None => return Err(Error::validation_at(1, "missing header line")),
        };
        let header: HeaderRec = serde_json::from_str(&header_line)
            .map_err(|e| Error::validation_at(1, format!("bad header: {e}")))?;
        if header.schema != DATASET_SCHEMA {
            return Err(Error::validation_at(
                1,
                format!(
                    "unsupported schema {} (expected {DATASET_SCHEMA})",
                    header.schema
                ),
            ));
        }
        if header.d_w == 0 || header.d_h == 0 {
            return Err(Error::validation_at(1, "embedding widths must be positive"));
        }
        let hierarchy = TypeHierarchy::from_paths(header.hierarchy.iter().map(String::as_str))?;

        let mut samples = Vec::new();
        for (offset, line) in lines.enumerate() {
            let lineno = offset + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SampleRec = serde_json::from_str(&line)
                .map_err(|e| Error::validation_at(lineno, format!("bad record: {e}")))?;
            samples.push(parse_sample(&hierarchy, rec, header.d_w, header.d_h, lineno)?);
        }
        Ok(Dataset {
            hierarchy,
            samples,
            d_w: header.d_w,
            d_h: header.d_h,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        let mut out = BufWriter::new(file);
        let header = HeaderRec {
            schema: DATASET_SCHEMA,
            d_w: self.d_w,
            d_h: self.d_h,
            hierarchy: self.hierarchy.paths().to_vec(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for s in &self.samples {
            let rec = SampleRec {
                id: s.id.clone(),
                mention: rows_to_vec(&s.mention_vecs),
                context: rows_to_vec(&s.context_vecs),
                candidates: s
                    .candidates
                    .iter()
                    .map(|&t| self.hierarchy.path(t).to_string())
                    .collect(),
                gold: s.gold.map(|t| self.hierarchy.path(t).to_string()),
            };
            writeln!(out, "{}", serde_json::to_string(&rec)?)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn parse_sample(
    hierarchy: &TypeHierarchy,
    rec: SampleRec,
    d_w: usize,
    d_h: usize,
    lineno: usize,
) -> Result<MentionSample> {
    let mention_vecs = vec_to_rows(&rec.mention, d_w)
        .map_err(|msg| Error::validation_at(lineno, format!("mention: {msg}")))?;
    let context_vecs = vec_to_rows(&rec.context, d_h)
        .map_err(|msg| Error::validation_at(lineno, format!("context: {msg}")))?;
    if rec.candidates.is_empty() {
        return Err(Error::validation_at(lineno, "empty candidate set"));
    }
    let mut candidates = Vec::with_capacity(rec.candidates.len());
    for p in &rec.candidates {
        let t = hierarchy
            .index_of(p)
            .ok_or_else(|| Error::validation_at(lineno, format!("unknown candidate type {p:?}")))?;
        candidates.push(t);
    }
    candidates.sort_unstable();
    candidates.dedup();
    for &t in &candidates {
        for anc in hierarchy.ancestors(t) {
            if !candidates.contains(&anc) {
                return Err(Error::validation_at(
                    lineno,
                    format!(
                        "candidate set is not ancestor-closed: {} is missing {}",
                        hierarchy.path(t),
                        hierarchy.path(anc)
                    ),
                ));
            }
        }
    }
    let gold = match &rec.gold {
        None => None,
        Some(p) => {
            let t = hierarchy
                .index_of(p)
                .ok_or_else(|| Error::validation_at(lineno, format!("unknown gold type {p:?}")))?;
            if !candidates.contains(&t) {
                return Err(Error::validation_at(
                    lineno,
                    format!("gold type {p} is not among the candidates"),
                ));
            }
            Some(t)
        }
    };
    Ok(MentionSample {
        id: rec.id,
        mention_vecs,
        context_vecs,
        candidates,
        gold,
    })
}

fn rows_to_vec(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn vec_to_rows(rows: &[Vec<f64>], width: usize) -> std::result::Result<Array2<f64>, String> {
    if rows.is_empty() {
        return Err("no token vectors".into());
    }
    for r in rows {
        if r.len() != width {
            return Err(format!("expected width {width}, found a row of {}", r.len()));
        }
    }
    let mut out = Array2::zeros((rows.len(), width));
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}
