//! Linear softmax head over the embeddings.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::batch::Batch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    /// `k x d_z`.
    pub w: Array2<f64>,
    /// `k`.
    pub b: Array1<f64>,
}

impl ClassifierParams {
    pub fn init<R: Rng>(k: usize, d_z: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (d_z as f64).sqrt();
        ClassifierParams {
            w: Array2::from_shape_fn((k, d_z), |_| rng.gen_range(-bound..bound)),
            b: Array1::zeros(k),
        }
    }

    pub fn zeros(k: usize, d_z: usize) -> Self {
        ClassifierParams {
            w: Array2::zeros((k, d_z)),
            b: Array1::zeros(k),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ClassifierParams {
            w: Array2::zeros(self.w.dim()),
            b: Array1::zeros(self.b.len()),
        }
    }

    pub fn num_types(&self) -> usize {
        self.w.nrows()
    }

    pub fn flat_len(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn append_to(&self, out: &mut Vec<f64>) {
        out.extend(self.w.iter());
        out.extend(self.b.iter());
    }

    pub fn assign_from(&mut self, src: &[f64]) -> usize {
        let mut pos = 0;
        for v in self.w.iter_mut() {
            *v = src[pos];
            pos += 1;
        }
        for v in self.b.iter_mut() {
            *v = src[pos];
            pos += 1;
        }
        pos
    }
}

/// Softmax type probabilities for each embedding row, `b x k`.
pub fn classify(params: &ClassifierParams, z: &Array2<f64>) -> Result<Array2<f64>> {
    if z.ncols() != params.w.ncols() {
        return Err(Error::DimensionMismatch {
            what: "embedding width vs classifier".into(),
            expected: params.w.ncols(),
            got: z.ncols(),
        });
    }
    let logits = z.dot(&params.w.t()) + &params.b;
    let b = logits.nrows();
    let k = logits.ncols();
    let mut probs = Array2::zeros((b, k));
    for i in 0..b {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..k {
            let e = (row[j] - max).exp();
            probs[[i, j]] = e;
            sum += e;
        }
        for j in 0..k {
            probs[[i, j]] /= sum;
        }
    }
    if probs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("classification probabilities".into()));
    }
    Ok(probs)
}

/// Mean negative log-likelihood over the clean samples; zero when the batch
/// has none.
pub fn supervision_loss(probs: &Array2<f64>, batch: &Batch) -> Result<f64> {
    supervision_loss_grad(probs, batch).map(|(loss, _)| loss)
}

/// Loss plus its gradient with respect to the logits (`b x k`); noisy rows
/// get a zero gradient row.
pub fn supervision_loss_grad(probs: &Array2<f64>, batch: &Batch) -> Result<(f64, Array2<f64>)> {
    let b = batch.len();
    if probs.nrows() != b {
        return Err(Error::DimensionMismatch {
            what: "probability rows vs batch".into(),
            expected: b,
            got: probs.nrows(),
        });
    }
    let clean: Vec<(usize, usize)> = (0..b)
        .filter_map(|i| batch.clean_label(i).map(|y| (i, y)))
        .collect();
    let mut dlogits = Array2::zeros(probs.dim());
    if clean.is_empty() {
        return Ok((0.0, dlogits));
    }
    let inv = 1.0 / clean.len() as f64;
    let mut loss = 0.0;
    for &(i, y) in &clean {
        loss -= probs[[i, y]].ln();
        for j in 0..probs.ncols() {
            dlogits[[i, j]] = probs[[i, j]] * inv;
        }
        dlogits[[i, y]] -= inv;
    }
    loss *= inv;
    if !loss.is_finite() {
        return Err(Error::NonFinite("supervision loss".into()));
    }
    Ok((loss, dlogits))
}
