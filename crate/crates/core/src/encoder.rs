//! Mention/context encoder.
//!
//! Each sample is embedded as `z = q([r_a; r_c])` where `r_a` is the mean of
//! the mention token vectors, `r_c` is an attention-pooled combination of the
//! context token vectors, and `q` is a small MLP with ReLU hidden layers and
//! a linear output. The attention score of context token `h_j` is
//! `w . tanh(h_j)`, normalised with a softmax.
//!
//! `encode` records a tape of intermediates so `encode_backward` can run an
//! exact reverse-mode pass; gradients with respect to the token vectors are
//! not needed (the tokens are data) and are not computed.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::batch::Batch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out x in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// Attention vector over tanh-squashed context tokens, length `d_h`.
    pub attn_w: Array1<f64>,
    /// Hidden ReLU layers followed by one linear output layer. The first
    /// layer takes the concatenation `[r_a; r_c]` of width `d_w + d_h`.
    pub layers: Vec<Linear>,
}

impl EncoderParams {
    /// Seeded init: weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng>(
        d_w: usize,
        d_h: usize,
        n_hidden: usize,
        hidden_width: usize,
        d_z: usize,
        rng: &mut R,
    ) -> Self {
        let dims = layer_dims(d_w + d_h, n_hidden, hidden_width, d_z);
        let layers = dims
            .iter()
            .map(|&(d_in, d_out)| {
                let bound = 1.0 / (d_in as f64).sqrt();
                Linear {
                    w: Array2::from_shape_fn((d_out, d_in), |_| rng.gen_range(-bound..bound)),
                    b: Array1::zeros(d_out),
                }
            })
            .collect();
        let bound = 1.0 / (d_h as f64).sqrt();
        EncoderParams {
            attn_w: Array1::from_shape_fn(d_h, |_| rng.gen_range(-bound..bound)),
            layers,
        }
    }

    pub fn zeros(d_w: usize, d_h: usize, n_hidden: usize, hidden_width: usize, d_z: usize) -> Self {
        let layers = layer_dims(d_w + d_h, n_hidden, hidden_width, d_z)
            .iter()
            .map(|&(d_in, d_out)| Linear {
                w: Array2::zeros((d_out, d_in)),
                b: Array1::zeros(d_out),
            })
            .collect();
        EncoderParams {
            attn_w: Array1::zeros(d_h),
            layers,
        }
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            attn_w: Array1::zeros(self.attn_w.len()),
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    w: Array2::zeros(l.w.dim()),
                    b: Array1::zeros(l.b.len()),
                })
                .collect(),
        }
    }

    pub fn d_h(&self) -> usize {
        self.attn_w.len()
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn d_z(&self) -> usize {
        self.layers.last().expect("at least one layer").w.nrows()
    }

    pub fn flat_len(&self) -> usize {
        self.attn_w.len()
            + self
                .layers
                .iter()
                .map(|l| l.w.len() + l.b.len())
                .sum::<usize>()
    }

    pub fn append_to(&self, out: &mut Vec<f64>) {
        out.extend(self.attn_w.iter());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
    }

    /// Reads values back in `append_to` order; returns how many were used.
    pub fn assign_from(&mut self, src: &[f64]) -> usize {
        let mut pos = 0;
        for v in self.attn_w.iter_mut() {
            *v = src[pos];
            pos += 1;
        }
        for l in &mut self.layers {
            for v in l.w.iter_mut() {
                *v = src[pos];
                pos += 1;
            }
            for v in l.b.iter_mut() {
                *v = src[pos];
                pos += 1;
            }
        }
        pos
    }
}

fn layer_dims(d_in: usize, n_hidden: usize, hidden_width: usize, d_z: usize) -> Vec<(usize, usize)> {
    let mut dims = Vec::with_capacity(n_hidden + 1);
    let mut cur = d_in;
    for _ in 0..n_hidden {
        dims.push((cur, hidden_width));
        cur = hidden_width;
    }
    dims.push((cur, d_z));
    dims
}

/// Per-sample intermediates needed by the backward pass.
#[derive(Debug, Clone)]
struct SampleTape {
    ctx: Array2<f64>,
    tanh_ctx: Array2<f64>,
    beta: Array1<f64>,
    /// `activations[0]` is the MLP input `[r_a; r_c]`, then one entry per
    /// hidden layer output.
    activations: Vec<Array1<f64>>,
    /// Pre-activations of the hidden layers, for the ReLU mask.
    preacts: Vec<Array1<f64>>,
}

#[derive(Debug, Clone)]
pub struct EncodedBatch {
    /// `b x d_z` embeddings.
    pub z: Array2<f64>,
    tape: Vec<SampleTape>,
}

/// Mean of the mention token vectors.
pub fn average_mention(mention_vecs: ArrayView2<f64>) -> Result<Array1<f64>> {
    if mention_vecs.nrows() == 0 {
        return Err(Error::validation("cannot average an empty token list"));
    }
    Ok(&mention_vecs.sum_axis(ndarray::Axis(0)) / mention_vecs.nrows() as f64)
}

/// Attention-pooled context vector and its attention weights.
pub fn attention_pool(
    attn_w: &Array1<f64>,
    context_vecs: ArrayView2<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let (r_c, beta, _) = attention_forward(attn_w, context_vecs)?;
    Ok((r_c, beta))
}

fn attention_forward(
    attn_w: &Array1<f64>,
    ctx: ArrayView2<f64>,
) -> Result<(Array1<f64>, Array1<f64>, Array2<f64>)> {
    if ctx.nrows() == 0 {
        return Err(Error::validation("cannot pool an empty context"));
    }
    if ctx.ncols() != attn_w.len() {
        return Err(Error::DimensionMismatch {
            what: "context width vs attention vector".into(),
            expected: attn_w.len(),
            got: ctx.ncols(),
        });
    }
    let tanh_ctx = ctx.mapv(f64::tanh);
    let scores = tanh_ctx.dot(attn_w);
    let beta = softmax(&scores);
    // The pooled vector mixes the raw context rows; tanh only shapes scores.
    let r_c = beta.dot(&ctx);
    Ok((r_c, beta, tanh_ctx))
}

fn softmax(scores: &Array1<f64>) -> Array1<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp = scores.mapv(|s| (s - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Runs the encoder over a batch, recording the tape for `encode_backward`.
pub fn encode(params: &EncoderParams, batch: &Batch) -> Result<EncodedBatch> {
    let b = batch.len();
    let d_z = params.d_z();
    let mut z = Array2::zeros((b, d_z));
    let mut tape = Vec::with_capacity(b);
    for (i, s) in batch.samples.iter().enumerate() {
        let r_a = average_mention(s.mention_vecs.view())?;
        let (r_c, beta, tanh_ctx) = attention_forward(&params.attn_w, s.context_vecs.view())?;
        if r_a.len() + r_c.len() != params.d_in() {
            return Err(Error::DimensionMismatch {
                what: format!("encoder input for sample {}", s.id),
                expected: params.d_in(),
                got: r_a.len() + r_c.len(),
            });
        }
        let mut a = Array1::zeros(params.d_in());
        a.slice_mut(ndarray::s![..r_a.len()]).assign(&r_a);
        a.slice_mut(ndarray::s![r_a.len()..]).assign(&r_c);

        let mut activations = vec![a];
        let mut preacts = Vec::new();
        let n_layers = params.layers.len();
        for (l, layer) in params.layers.iter().enumerate() {
            let u = layer.w.dot(activations.last().unwrap()) + &layer.b;
            if l + 1 < n_layers {
                preacts.push(u.clone());
                activations.push(u.mapv(|v| v.max(0.0)));
            } else {
                z.row_mut(i).assign(&u);
            }
        }
        tape.push(SampleTape {
            ctx: s.context_vecs.clone(),
            tanh_ctx,
            beta,
            activations,
            preacts,
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder output".into()));
    }
    Ok(EncodedBatch { z, tape })
}

/// Reverse-mode pass: turns an upstream gradient `d_loss/d_z` (`b x d_z`)
/// into parameter gradients, arranged like the parameters themselves.
pub fn encode_backward(
    params: &EncoderParams,
    encoded: &EncodedBatch,
    dz: &Array2<f64>,
) -> EncoderParams {
    let mut grads = params.zeros_like();
    let d_w = params.d_in() - params.d_h();
    for (i, tape) in encoded.tape.iter().enumerate() {
        let mut g: Array1<f64> = dz.row(i).to_owned();
        for l in (0..params.layers.len()).rev() {
            let a_in = &tape.activations[l];
            for (r, gv) in g.iter().enumerate() {
                if *gv != 0.0 {
                    grads.layers[l].w.row_mut(r).scaled_add(*gv, a_in);
                }
            }
            grads.layers[l].b += &g;
            let mut ga = params.layers[l].w.t().dot(&g);
            if l > 0 {
                let mask = &tape.preacts[l - 1];
                ga.zip_mut_with(mask, |v, &u| {
                    if u <= 0.0 {
                        *v = 0.0;
                    }
                });
                g = ga;
            } else {
                // Split the input gradient; the mention half stops here.
                let dr_c = ga.slice(ndarray::s![d_w..]);
                let proj = tape.ctx.dot(&dr_c);
                let sbar = tape.beta.dot(&proj);
                for j in 0..tape.beta.len() {
                    let dalpha = tape.beta[j] * (proj[j] - sbar);
                    grads.attn_w.scaled_add(dalpha, &tape.tanh_ctx.row(j));
                }
            }
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::{build_batch, MentionSample};
    use crate::hierarchy::TypeHierarchy;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_hierarchy() -> TypeHierarchy {
        TypeHierarchy::from_paths(["/a", "/b"]).unwrap()
    }

    fn random_batch(rng: &mut ChaCha8Rng, b: usize, d_w: usize, d_h: usize) -> Batch {
        let h = flat_hierarchy();
        let samples = (0..b)
            .map(|i| {
                let n_m = rng.gen_range(1..4);
                let n_c = rng.gen_range(1..5);
                MentionSample {
                    id: format!("s{i}"),
                    mention_vecs: Array2::from_shape_fn((n_m, d_w), |_| rng.gen_range(-1.5..1.5)),
                    context_vecs: Array2::from_shape_fn((n_c, d_h), |_| rng.gen_range(-1.5..1.5)),
                    candidates: vec![i % 2],
                    gold: None,
                }
            })
            .collect();
        build_batch(&h, samples).unwrap()
    }

    #[test]
    fn average_mention_is_the_row_mean() {
        let v = arr2(&[[1.0, 2.0], [3.0, 6.0]]);
        let r = average_mention(v.view()).unwrap();
        assert_eq!(r.as_slice().unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn attention_weights_form_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let ctx = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-3.0..3.0));
            let w = Array1::from_shape_fn(3, |_| rng.gen_range(-2.0..2.0));
            let (_, beta) = attention_pool(&w, ctx.view()).unwrap();
            assert!(beta.iter().all(|&b| b >= 0.0));
            assert_abs_diff_eq!(beta.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pooled_vector_stays_in_coordinate_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let ctx = Array2::from_shape_fn((5, 4), |_| rng.gen_range(-2.0..2.0));
            let w = Array1::from_shape_fn(4, |_| rng.gen_range(-2.0..2.0));
            let (r_c, _) = attention_pool(&w, ctx.view()).unwrap();
            for d in 0..4 {
                let col: Vec<f64> = ctx.column(d).to_vec();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(r_c[d] >= lo - 1e-12 && r_c[d] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn single_context_token_passes_through() {
        let ctx = arr2(&[[0.4, -0.2]]);
        let w = Array1::from_vec(vec![1.0, 1.0]);
        let (r_c, beta) = attention_pool(&w, ctx.view()).unwrap();
        assert_eq!(beta.as_slice().unwrap(), &[1.0]);
        assert_abs_diff_eq!(r_c[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(r_c[1], -0.2, epsilon = 1e-15);
    }

    #[test]
    fn zero_parameters_give_zero_embeddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batch = random_batch(&mut rng, 3, 2, 3);
        let params = EncoderParams::zeros(2, 3, 1, 4, 5);
        let enc = encode(&params, &batch).unwrap();
        assert!(enc.z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_output_layer_concatenates_the_pooled_parts() {
        let h = flat_hierarchy();
        let batch = build_batch(
            &h,
            vec![
                MentionSample {
                    id: "a".into(),
                    mention_vecs: arr2(&[[1.0, 3.0], [3.0, 5.0]]),
                    context_vecs: arr2(&[[0.25, -0.5]]),
                    candidates: vec![0],
                    gold: None,
                },
                MentionSample {
                    id: "b".into(),
                    mention_vecs: arr2(&[[0.0, 0.0]]),
                    context_vecs: arr2(&[[1.0, 1.0]]),
                    candidates: vec![1],
                    gold: None,
                },
            ],
        )
        .unwrap();
        let mut params = EncoderParams::zeros(2, 2, 0, 0, 4);
        params.layers[0].w = Array2::eye(4);
        let enc = encode(&params, &batch).unwrap();
        assert_abs_diff_eq!(enc.z[[0, 0]], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(enc.z[[0, 1]], 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(enc.z[[0, 2]], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(enc.z[[0, 3]], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(enc.z[[1, 0]], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(enc.z[[1, 2]], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn encode_matches_a_straight_line_reevaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (d_w, d_h, hid, d_z) = (3, 4, 5, 3);
        let batch = random_batch(&mut rng, 4, d_w, d_h);
        let params = EncoderParams::init(d_w, d_h, 2, hid, d_z, &mut rng);
        let enc = encode(&params, &batch).unwrap();

        for (i, s) in batch.samples.iter().enumerate() {
            // Naive per-coordinate recomputation, no shared code with encode.
            let n_m = s.mention_vecs.nrows();
            let mut r = vec![0.0; d_w + d_h];
            for d in 0..d_w {
                for t in 0..n_m {
                    r[d] += s.mention_vecs[[t, d]] / n_m as f64;
                }
            }
            let n_c = s.context_vecs.nrows();
            let mut scores = vec![0.0; n_c];
            for (j, score) in scores.iter_mut().enumerate() {
                for d in 0..d_h {
                    *score += params.attn_w[d] * s.context_vecs[[j, d]].tanh();
                }
            }
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|v| (v - mx).exp()).collect();
            let zsum: f64 = exps.iter().sum();
            for j in 0..n_c {
                for d in 0..d_h {
                    r[d_w + d] += exps[j] / zsum * s.context_vecs[[j, d]];
                }
            }
            let mut act = r;
            for (l, layer) in params.layers.iter().enumerate() {
                let mut next = vec![0.0; layer.w.nrows()];
                for (o, nv) in next.iter_mut().enumerate() {
                    let mut acc = layer.b[o];
                    for (j, av) in act.iter().enumerate() {
                        acc += layer.w[[o, j]] * av;
                    }
                    *nv = if l + 1 < params.layers.len() {
                        acc.max(0.0)
                    } else {
                        acc
                    };
                }
                act = next;
            }
            for d in 0..d_z {
                assert_abs_diff_eq!(enc.z[[i, d]], act[d], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn encode_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let batch = random_batch(&mut rng, 3, 2, 2);
        let params = EncoderParams::init(2, 2, 1, 3, 2, &mut rng);
        let a = encode(&params, &batch).unwrap();
        let b = encode(&params, &batch).unwrap();
        assert_eq!(a.z, b.z);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_parameter_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let batch = random_batch(&mut rng, 3, 2, 3);
        let params = EncoderParams::init(2, 3, 1, 4, 2, &mut rng);
        let enc = encode(&params, &batch).unwrap();
        let grads = encode_backward(&params, &enc, &Array2::zeros((3, 2)));
        assert!(grads.attn_w.iter().all(|&v| v == 0.0));
        for l in &grads.layers {
            assert!(l.w.iter().all(|&v| v == 0.0));
            assert!(l.b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_layer_weight_gradient_is_an_outer_product() {
        let h = flat_hierarchy();
        let batch = build_batch(
            &h,
            vec![
                MentionSample {
                    id: "a".into(),
                    mention_vecs: arr2(&[[2.0, -1.0]]),
                    context_vecs: arr2(&[[0.5, 0.25]]),
                    candidates: vec![0],
                    gold: None,
                },
                MentionSample {
                    id: "b".into(),
                    mention_vecs: arr2(&[[1.0, 1.0]]),
                    context_vecs: arr2(&[[-0.75, 0.1]]),
                    candidates: vec![1],
                    gold: None,
                },
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = EncoderParams::init(2, 2, 0, 0, 3, &mut rng);
        let enc = encode(&params, &batch).unwrap();
        // Loss = sum of all embedding entries, so dL/dz is all ones and the
        // weight gradient must be sum_i ones (x) input_i.
        let grads = encode_backward(&params, &enc, &Array2::ones((2, 3)));
        let mut expected = Array2::zeros((3, 4));
        for tape_input in enc.tape.iter().map(|t| &t.activations[0]) {
            for r in 0..3 {
                for c in 0..4 {
                    expected[[r, c]] += tape_input[c];
                }
            }
        }
        assert_abs_diff_eq!(grads.layers[0].w, expected, epsilon = 1e-12);
        assert_eq!(grads.layers[0].b.as_slice().unwrap(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn dead_relu_unit_gets_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let batch = random_batch(&mut rng, 2, 2, 2);
        let mut params = EncoderParams::init(2, 2, 1, 3, 2, &mut rng);
        // Force hidden unit 0 to a negative pre-activation on every sample.
        params.layers[0].w.row_mut(0).fill(0.0);
        params.layers[0].b[0] = -1.0;
        let enc = encode(&params, &batch).unwrap();
        let dz = Array2::from_elem((2, 2), 0.7);
        let grads = encode_backward(&params, &enc, &dz);
        assert!(grads.layers[0].w.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(grads.layers[0].b[0], 0.0);
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for case in 0..3 {
            let (d_w, d_h, d_z) = (2, 3, 3);
            let batch = random_batch(&mut rng, 4, d_w, d_h);
            let mut params = EncoderParams::init(d_w, d_h, 1 + case % 2, 4, d_z, &mut rng);
            let c = Array2::from_shape_fn((4, d_z), |_| rng.gen_range(-1.0..1.0));
            let loss = |p: &EncoderParams| -> f64 {
                let enc = encode(p, &batch).unwrap();
                (&enc.z * &c).sum()
            };
            let enc = encode(&params, &batch).unwrap();
            let analytic = encode_backward(&params, &enc, &c);
            let mut flat_a = Vec::new();
            analytic.append_to(&mut flat_a);

            let mut theta = Vec::new();
            params.append_to(&mut theta);
            let step = 1e-5;
            let mut flat_fd = Vec::with_capacity(theta.len());
            for i in 0..theta.len() {
                let orig = theta[i];
                theta[i] = orig + step;
                params.assign_from(&theta);
                let up = loss(&params);
                theta[i] = orig - step;
                params.assign_from(&theta);
                let down = loss(&params);
                theta[i] = orig;
                flat_fd.push((up - down) / (2.0 * step));
            }
            params.assign_from(&theta);

            let num: f64 = flat_a
                .iter()
                .zip(&flat_fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den = flat_a
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(flat_fd.iter().map(|v| v * v).sum::<f64>().sqrt())
                .max(1e-12);
            assert!(num / den <= 1e-5, "case {case}: rel err {}", num / den);
        }
    }
}
