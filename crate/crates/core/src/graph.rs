//! Batch similarity graph and candidate-masked label propagation.
//!
//! Pairwise scores are scaled dot products of the embeddings,
//! `logits = Z Z^T / sqrt(d_z)`, and the transition matrix `H` is the
//! row-softmax of those scores. The softmax is evaluated with the row
//! maximum subtracted, so the unnormalised similarities are never
//! materialised and large embeddings cannot overflow.
//!
//! `propagate` spreads label mass along `H`, after every step clamping each
//! row to the sample's admissible terminal types and renormalising. Clean
//! rows are pinned to their one-hot label by the clamp itself.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Change threshold below which propagation is considered converged.
pub const CONVERGENCE_EPS: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    /// Scaled dot products, `b x b`, symmetric.
    pub logits: Array2<f64>,
    /// Row-stochastic transition matrix.
    pub h: Array2<f64>,
}

/// Builds the similarity graph over batch embeddings, keeping self-loops.
pub fn build_graph(z: &Array2<f64>) -> Result<SimilarityGraph> {
    build_graph_with(z, false)
}

/// As `build_graph`; `zero_diagonal` drops self-similarity, in which case
/// the diagonal of `H` is exactly zero.
pub fn build_graph_with(z: &Array2<f64>, zero_diagonal: bool) -> Result<SimilarityGraph> {
    let b = z.nrows();
    if b < 2 {
        return Err(Error::validation(format!(
            "similarity graph needs at least 2 rows, got {b}"
        )));
    }
    if z.ncols() == 0 {
        return Err(Error::validation("embeddings have width 0"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embeddings".into()));
    }
    let scale = 1.0 / (z.ncols() as f64).sqrt();
    let logits = z.dot(&z.t()) * scale;
    let h = row_softmax(&logits, zero_diagonal);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transition matrix".into()));
    }
    Ok(SimilarityGraph { logits, h })
}

fn row_softmax(logits: &Array2<f64>, zero_diagonal: bool) -> Array2<f64> {
    let b = logits.nrows();
    let mut h = Array2::zeros((b, b));
    for i in 0..b {
        let row = logits.row(i);
        let mut max = f64::NEG_INFINITY;
        for j in 0..b {
            if zero_diagonal && j == i {
                continue;
            }
            max = max.max(row[j]);
        }
        let mut sum = 0.0;
        for j in 0..b {
            if zero_diagonal && j == i {
                continue;
            }
            let e = (row[j] - max).exp();
            h[[i, j]] = e;
            sum += e;
        }
        for j in 0..b {
            h[[i, j]] /= sum;
        }
    }
    h
}

#[derive(Debug, Clone)]
pub struct PropagationResult {
    /// Posterior label mass, `b x k`; zero outside the mask, rows sum to 1.
    pub phi: Array2<f64>,
    /// Propagation steps actually run.
    pub iterations: usize,
    pub converged: bool,
    /// Max-abs change of the final step.
    pub residual: f64,
}

/// Iterates `phi <- clamp(H phi)` from a seeded uniform start until the
/// update falls below [`CONVERGENCE_EPS`] or `s_lp` steps have run.
pub fn propagate(
    graph: &SimilarityGraph,
    mask: &Array2<f64>,
    s_lp: usize,
    seed: u64,
) -> Result<PropagationResult> {
    let b = graph.h.nrows();
    if mask.nrows() != b {
        return Err(Error::DimensionMismatch {
            what: "mask rows vs graph".into(),
            expected: b,
            got: mask.nrows(),
        });
    }
    for (i, row) in mask.axis_iter(Axis(0)).enumerate() {
        if row.iter().all(|&v| v == 0.0) {
            return Err(Error::validation(format!(
                "mask row {i} admits no types"
            )));
        }
    }

    let k = mask.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = Array2::from_shape_fn((b, k), |_| rng.gen::<f64>());
    clamp(&mut phi, mask)?;

    let mut iterations = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..s_lp {
        let mut next = graph.h.dot(&phi);
        clamp(&mut next, mask)?;
        iterations += 1;
        residual = max_abs_diff(&next, &phi);
        phi = next;
        if residual < CONVERGENCE_EPS {
            converged = true;
            break;
        }
    }
    Ok(PropagationResult {
        phi,
        iterations,
        converged,
        residual,
    })
}

/// Zeroes mass outside the mask and renormalises each row.
fn clamp(phi: &mut Array2<f64>, mask: &Array2<f64>) -> Result<()> {
    for (i, mut row) in phi.axis_iter_mut(Axis(0)).enumerate() {
        let mut sum = 0.0;
        for (v, &m) in row.iter_mut().zip(mask.row(i)) {
            *v *= m;
            sum += *v;
        }
        if sum <= 0.0 {
            return Err(Error::StarvedRow { row: i });
        }
        row.mapv_inplace(|v| v / sum);
    }
    Ok(())
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
