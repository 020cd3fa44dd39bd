//! Full parameter set (encoder + classifier head), flat-vector views for
//! the optimiser, and a versioned checkpoint format.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierParams;
use crate::encoder::{EncoderParams, Linear};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "clsc-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub classifier: ClassifierParams,
}

impl ModelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng>(
        d_w: usize,
        d_h: usize,
        n_hidden: usize,
        hidden_width: usize,
        d_z: usize,
        k: usize,
        rng: &mut R,
    ) -> Self {
        ModelParams {
            encoder: EncoderParams::init(d_w, d_h, n_hidden, hidden_width, d_z, rng),
            classifier: ClassifierParams::init(k, d_z, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            encoder: self.encoder.zeros_like(),
            classifier: self.classifier.zeros_like(),
        }
    }

    pub fn flat_len(&self) -> usize {
        self.encoder.flat_len() + self.classifier.flat_len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        self.encoder.append_to(&mut out);
        self.classifier.append_to(&mut out);
        out
    }

    pub fn set_flat(&mut self, src: &[f64]) {
        assert_eq!(src.len(), self.flat_len(), "flat parameter length mismatch");
        let used = self.encoder.assign_from(src);
        self.classifier.assign_from(&src[used..]);
    }

    /// Squared-norm penalty over the weight matrices; biases are exempt.
    pub fn l2_penalty(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        let mut acc: f64 = self.encoder.attn_w.iter().map(|v| v * v).sum();
        for l in &self.encoder.layers {
            acc += l.w.iter().map(|v| v * v).sum::<f64>();
        }
        acc += self.classifier.w.iter().map(|v| v * v).sum::<f64>();
        lambda * acc
    }

    /// Adds the penalty's gradient (`2 lambda w`) onto `grads`.
    pub fn add_l2_grad(&self, grads: &mut ModelParams, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        grads
            .encoder
            .attn_w
            .zip_mut_with(&self.encoder.attn_w, |g, &w| *g += 2.0 * lambda * w);
        for (gl, pl) in grads.encoder.layers.iter_mut().zip(&self.encoder.layers) {
            gl.w.zip_mut_with(&pl.w, |g, &w| *g += 2.0 * lambda * w);
        }
        grads
            .classifier
            .w
            .zip_mut_with(&self.classifier.w, |g, &w| *g += 2.0 * lambda * w);
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = CheckpointFile::from_params(self);
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        file.into_params()
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRec {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    tensors: Vec<TensorRec>,
}

impl CheckpointFile {
    fn from_params(p: &ModelParams) -> Self {
        let mut tensors = vec![TensorRec {
            name: "attn_w".into(),
            shape: vec![p.encoder.attn_w.len()],
            data: p.encoder.attn_w.to_vec(),
        }];
        for (i, l) in p.encoder.layers.iter().enumerate() {
            tensors.push(TensorRec {
                name: format!("q{i}.w"),
                shape: vec![l.w.nrows(), l.w.ncols()],
                data: l.w.iter().cloned().collect(),
            });
            tensors.push(TensorRec {
                name: format!("q{i}.b"),
                shape: vec![l.b.len()],
                data: l.b.to_vec(),
            });
        }
        tensors.push(TensorRec {
            name: "head.w".into(),
            shape: vec![p.classifier.w.nrows(), p.classifier.w.ncols()],
            data: p.classifier.w.iter().cloned().collect(),
        });
        tensors.push(TensorRec {
            name: "head.b".into(),
            shape: vec![p.classifier.b.len()],
            data: p.classifier.b.to_vec(),
        });
        CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            tensors,
        }
    }

    fn into_params(self) -> Result<ModelParams> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unexpected format marker {:?}",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        let mut attn_w = None;
        let mut q_layers: Vec<Linear> = Vec::new();
        let mut head_w = None;
        let mut head_b = None;
        let mut q_parts: std::collections::BTreeMap<usize, (Option<TensorRec>, Option<TensorRec>)> =
            std::collections::BTreeMap::new();

        for t in self.tensors {
            check_len(&t)?;
            match t.name.as_str() {
                "attn_w" => attn_w = Some(vec_1d(t)?),
                "head.w" => head_w = Some(mat_2d(t)?),
                "head.b" => head_b = Some(vec_1d(t)?),
                name => {
                    let (idx, part) = parse_q_name(name)
                        .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {name}")))?;
                    let entry = q_parts.entry(idx).or_default();
                    match part {
                        'w' => entry.0 = Some(t),
                        _ => entry.1 = Some(t),
                    }
                }
            }
        }
        for (idx, (w, b)) in q_parts {
            let w = w.ok_or_else(|| Error::Checkpoint(format!("layer {idx} missing weights")))?;
            let b = b.ok_or_else(|| Error::Checkpoint(format!("layer {idx} missing bias")))?;
            if q_layers.len() != idx {
                return Err(Error::Checkpoint(format!("layer {idx} out of sequence")));
            }
            let w = mat_2d(w)?;
            let b = vec_1d(b)?;
            if w.nrows() != b.len() {
                return Err(Error::Checkpoint(format!(
                    "layer {idx}: weight rows {} disagree with bias length {}",
                    w.nrows(),
                    b.len()
                )));
            }
            q_layers.push(Linear { w, b });
        }

        let encoder = EncoderParams {
            attn_w: attn_w.ok_or_else(|| Error::Checkpoint("missing attn_w".into()))?,
            layers: q_layers,
        };
        if encoder.layers.is_empty() {
            return Err(Error::Checkpoint("no encoder layers".into()));
        }
        let w = head_w.ok_or_else(|| Error::Checkpoint("missing head.w".into()))?;
        let b = head_b.ok_or_else(|| Error::Checkpoint("missing head.b".into()))?;
        if w.nrows() != b.len() {
            return Err(Error::Checkpoint(
                "head weight rows disagree with bias length".into(),
            ));
        }
        if w.ncols() != encoder.d_z() {
            return Err(Error::Checkpoint(
                "head width disagrees with encoder output".into(),
            ));
        }
        Ok(ModelParams {
            encoder,
            classifier: ClassifierParams { w, b },
        })
    }
}

fn check_len(t: &TensorRec) -> Result<()> {
    let expect: usize = t.shape.iter().product();
    if expect != t.data.len() {
        return Err(Error::Checkpoint(format!(
            "tensor {}: shape {:?} does not cover {} values",
            t.name,
            t.shape,
            t.data.len()
        )));
    }
    Ok(())
}

fn vec_1d(t: TensorRec) -> Result<ndarray::Array1<f64>> {
    if t.shape.len() != 1 {
        return Err(Error::Checkpoint(format!("tensor {} is not 1-d", t.name)));
    }
    Ok(ndarray::Array1::from_vec(t.data))
}

fn mat_2d(t: TensorRec) -> Result<ndarray::Array2<f64>> {
    if t.shape.len() != 2 {
        return Err(Error::Checkpoint(format!("tensor {} is not 2-d", t.name)));
    }
    ndarray::Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

fn parse_q_name(name: &str) -> Option<(usize, char)> {
    let rest = name.strip_prefix('q')?;
    let (idx, part) = rest.split_once('.')?;
    let idx: usize = idx.parse().ok()?;
    match part {
        "w" => Some((idx, 'w')),
        "b" => Some((idx, 'b')),
        _ => None,
    }
}
