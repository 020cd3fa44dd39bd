//! Compact-clustering loss over within-class Markov chains.
//!
//! From a propagated label posterior `phi` the batch gets a target matrix
//! `T` (probability that two samples share a label, normalised per label
//! column) and an agreement mask `E = phi phi^T`. Transitions are walked
//! `s` steps with every hop weighted by the agreement mask, and the loss is
//! the cross-entropy from `T` to each chain length, averaged over lengths.
//! Minimising it pulls same-label samples into tight, well-separated
//! clusters in embedding space.
//!
//! `phi` is treated as a constant throughout: gradients flow through the
//! transition matrix into the embeddings only, never into the posterior.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::graph::build_graph_with;

/// Additive guard inside the logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// Pairwise target distribution: `t[[i, j]]` is the chance that `i` and `j`
/// carry the same label under `phi`, with each label column normalised by
/// its total mass. Labels with zero mass contribute nothing.
pub fn target_matrix(phi: &Array2<f64>) -> Array2<f64> {
    let col_mass = phi.sum_axis(Axis(0));
    let mut scaled = phi.clone();
    for (mut col, &m) in scaled.axis_iter_mut(Axis(1)).zip(col_mass.iter()) {
        if m > 0.0 {
            col.mapv_inplace(|v| v / m);
        } else {
            col.fill(0.0);
        }
    }
    scaled.dot(&phi.t())
}

/// Label agreement between samples: `phi phi^T`.
pub fn agreement_mask(phi: &Array2<f64>) -> Array2<f64> {
    phi.dot(&phi.t())
}

/// Chain transition matrices `[H, G^2, .., G^s_m]` with `G = H (*) E`.
/// Every hop of a multi-step walk is agreement-weighted, so with hard
/// labels no multi-step mass ever crosses a class boundary.
pub fn markov_powers(h: &Array2<f64>, e: &Array2<f64>, s_m: usize) -> Vec<Array2<f64>> {
    let mut out = Vec::with_capacity(s_m);
    if s_m == 0 {
        return out;
    }
    out.push(h.clone());
    if s_m >= 2 {
        let g = h * e;
        let mut q = g.clone();
        for _ in 2..=s_m {
            q = g.dot(&q);
            out.push(q.clone());
        }
    }
    out
}

/// Cross-entropy from the target to every chain length, averaged:
/// `-(1/s_m)(1/b^2) sum_s sum_ij t_ij ln(p_s_ij + eps)`. Terms with
/// `t_ij = 0` are skipped before the logarithm.
pub fn clsc_loss(t: &Array2<f64>, powers: &[Array2<f64>]) -> Result<f64> {
    if powers.is_empty() {
        return Err(Error::validation("need at least one chain length"));
    }
    let b = t.nrows();
    let norm = 1.0 / (powers.len() as f64 * (b * b) as f64);
    let mut acc = 0.0;
    for p in powers {
        for (tv, pv) in t.iter().zip(p.iter()) {
            if *tv > 0.0 {
                acc -= tv * (pv + LOG_EPS).ln();
            }
        }
    }
    let loss = acc * norm;
    if !loss.is_finite() {
        return Err(Error::NonFinite("clustering loss".into()));
    }
    Ok(loss)
}

/// Everything the loss looks at for one batch.
#[derive(Debug, Clone)]
pub struct ClscTerms {
    pub t: Array2<f64>,
    pub e: Array2<f64>,
    pub powers: Vec<Array2<f64>>,
    pub loss: f64,
}

impl ClscTerms {
    pub fn compute(h: &Array2<f64>, phi: &Array2<f64>, s_m: usize) -> Result<ClscTerms> {
        let t = target_matrix(phi);
        let e = agreement_mask(phi);
        let powers = markov_powers(h, &e, s_m);
        let loss = clsc_loss(&t, &powers)?;
        Ok(ClscTerms { t, e, powers, loss })
    }
}

/// Loss and its gradient with respect to the embeddings, holding `phi`
/// fixed. Rebuilds the graph from `z`, so the forward value matches
/// `ClscTerms::compute` on `build_graph(z)`.
pub fn clsc_backward(z: &Array2<f64>, phi: &Array2<f64>, s_m: usize) -> Result<(f64, Array2<f64>)> {
    clsc_backward_with(z, phi, s_m, false)
}

pub fn clsc_backward_with(
    z: &Array2<f64>,
    phi: &Array2<f64>,
    s_m: usize,
    zero_diagonal: bool,
) -> Result<(f64, Array2<f64>)> {
    if s_m == 0 {
        return Err(Error::validation("need at least one chain length"));
    }
    let graph = build_graph_with(z, zero_diagonal)?;
    let b = z.nrows();
    let t = target_matrix(phi);
    let e = agreement_mask(phi);
    let powers = markov_powers(&graph.h, &e, s_m);
    let loss = clsc_loss(&t, &powers)?;

    let norm = 1.0 / (s_m as f64 * (b * b) as f64);
    let upstream: Vec<Array2<f64>> = powers
        .iter()
        .map(|p| {
            Array2::from_shape_fn((b, b), |(i, j)| {
                if t[[i, j]] > 0.0 {
                    -norm * t[[i, j]] / (p[[i, j]] + LOG_EPS)
                } else {
                    0.0
                }
            })
        })
        .collect();

    let mut dh = upstream[0].clone();
    if s_m >= 2 {
        let g = &graph.h * &e;
        let mut dg: Array2<f64> = Array2::zeros((b, b));
        let mut dq: Array2<f64> = Array2::zeros((b, b));
        for s in (2..=s_m).rev() {
            dq += &upstream[s - 1];
            let q_prev = if s == 2 { &g } else { &powers[s - 2] };
            dg = dg + dq.dot(&q_prev.t());
            dq = g.t().dot(&dq);
        }
        // What reaches the bottom of the chain is a gradient on G itself.
        dg += &dq;
        dh = dh + &dg * &e;
    }

    // Row-softmax backward; rows with an excluded diagonal have h = 0
    // there, which zeroes the corresponding term automatically.
    let mut ds = Array2::zeros((b, b));
    for i in 0..b {
        let hrow = graph.h.row(i);
        let pivot: f64 = dh.row(i).iter().zip(hrow.iter()).map(|(a, b)| a * b).sum();
        for j in 0..b {
            ds[[i, j]] = hrow[j] * (dh[[i, j]] - pivot);
        }
    }
    let scale = 1.0 / (z.ncols() as f64).sqrt();
    let dz = (&ds + &ds.t()).dot(z) * scale;
    Ok((loss, dz))
}
