//! Experiment harness: model evaluation, paired-seed comparisons across
//! noise regimes, the chain-length ablation, embedding compactness, and a
//! 2-D principal-component projection for inspection.
//!
//! Every comparison here is paired: cells that differ in one knob share
//! their data subset, parameter init, and batch order, so a reported gap is
//! attributable to the knob and not to sampling luck.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::batch::{build_batch, MentionSample};
use crate::classifier::classify;
use crate::dataset::Dataset;
use crate::encoder::encode;
use crate::error::{Error, Result};
use crate::hierarchy::TypeHierarchy;
use crate::metrics::{evaluate, EvalResult};
use crate::model::ModelParams;
use crate::seeds::{derive, TAG_SPLIT, TAG_SUBSET};
use crate::train::{train, TrainConfig, TrainReport};

/// Argmax type index for each sample.
pub fn predict(
    params: &ModelParams,
    hierarchy: &TypeHierarchy,
    samples: Vec<MentionSample>,
) -> Result<Vec<usize>> {
    let batch = build_batch(hierarchy, samples)?;
    let encoded = encode(&params.encoder, &batch)?;
    let probs = classify(&params.classifier, &encoded.z)?;
    Ok(probs
        .rows()
        .into_iter()
        .map(|row| {
            // Ties break toward the lowest index.
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Scores predictions against gold labels, ignoring samples without one.
pub fn evaluate_samples(
    params: &ModelParams,
    hierarchy: &TypeHierarchy,
    samples: Vec<MentionSample>,
) -> Result<EvalResult> {
    let labeled: Vec<MentionSample> = samples.into_iter().filter(|s| s.gold.is_some()).collect();
    if labeled.len() < 2 {
        return Err(Error::validation(
            "need at least 2 gold-labeled samples to evaluate",
        ));
    }
    let golds: Vec<usize> = labeled.iter().map(|s| s.gold.unwrap()).collect();
    let preds = predict(params, hierarchy, labeled)?;
    evaluate(hierarchy, &preds, &golds)
}

pub fn evaluate_dataset(params: &ModelParams, ds: &Dataset) -> Result<EvalResult> {
    evaluate_samples(params, &ds.hierarchy, ds.samples.clone())
}

pub fn is_clean_sample(hierarchy: &TypeHierarchy, sample: &MentionSample) -> bool {
    hierarchy
        .terminal_types(&sample.candidates)
        .map(|t| t.len() == 1)
        .unwrap_or(false)
}

/// Keeps only the samples whose candidates pin down a single terminal type.
pub fn filter_clean(ds: &Dataset) -> Dataset {
    Dataset {
        hierarchy: ds.hierarchy.clone(),
        samples: ds
            .samples
            .iter()
            .filter(|s| is_clean_sample(&ds.hierarchy, s))
            .cloned()
            .collect(),
        d_w: ds.d_w,
        d_h: ds.d_h,
    }
}

/// Retains a seeded `fraction` of the clean samples plus every noisy sample,
/// in original order, so `fraction = 1.0` returns the dataset unchanged.
pub fn subset_clean(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::validation("fraction must lie in (0, 1]"));
    }
    let clean_idx: Vec<usize> = (0..ds.len())
        .filter(|&i| is_clean_sample(&ds.hierarchy, &ds.samples[i]))
        .collect();
    let keep = (fraction * clean_idx.len() as f64).round() as usize;
    let mut chosen = clean_idx.clone();
    chosen.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(seed, TAG_SUBSET, 0)));
    chosen.truncate(keep);
    let mut retained: Vec<usize> = (0..ds.len())
        .filter(|&i| !is_clean_sample(&ds.hierarchy, &ds.samples[i]) || chosen.contains(&i))
        .collect();
    retained.sort_unstable();
    if retained.len() < 2 {
        return Err(Error::validation(format!(
            "fraction {fraction} leaves {} samples, need at least 2",
            retained.len()
        )));
    }
    Ok(Dataset {
        hierarchy: ds.hierarchy.clone(),
        samples: retained.iter().map(|&i| ds.samples[i].clone()).collect(),
        d_w: ds.d_w,
        d_h: ds.d_h,
    })
}

/// Seeded split into (train, test), both in original sample order.
pub fn split_dataset(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::validation("test_fraction must lie in (0, 1)"));
    }
    let n = ds.len();
    let n_test = ((n as f64 * test_fraction).round() as usize).max(2);
    if n < n_test + 2 {
        return Err(Error::validation(format!(
            "cannot split {n} samples with test_fraction {test_fraction}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(seed, TAG_SPLIT, 1)));
    let mut test_idx: Vec<usize> = perm[..n_test].to_vec();
    let mut train_idx: Vec<usize> = perm[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |idx: &[usize]| Dataset {
        hierarchy: ds.hierarchy.clone(),
        samples: idx.iter().map(|&i| ds.samples[i].clone()).collect(),
        d_w: ds.d_w,
        d_h: ds.d_h,
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

pub fn train_and_eval(
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(TrainReport, EvalResult)> {
    let report = train(train_ds, cfg)?;
    let metrics = evaluate_dataset(report.selected_params(), test_ds)?;
    Ok((report, metrics))
}

/// One delimited `key=value` record, the line format of every report table.
pub fn record_line(pairs: &[(&str, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("\t")
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub fraction: f64,
    /// "clsc" or "baseline".
    pub method: &'static str,
    pub seed: u64,
    pub metrics: EvalResult,
}

impl SweepRow {
    pub fn record(&self) -> String {
        record_line(&[
            ("fraction", self.fraction.to_string()),
            ("method", self.method.to_string()),
            ("seed", self.seed.to_string()),
            ("strict_acc", self.metrics.strict_acc.to_string()),
            ("macro_f1", self.metrics.macro_f1.to_string()),
            ("micro_f1", self.metrics.micro_f1.to_string()),
        ])
    }
}

/// For each clean-data fraction, trains the regularized model and the
/// `lambda_clsc = 0` baseline on identical subsets with identical seeds.
pub fn noise_sweep(
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &TrainConfig,
    fractions: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if fractions.is_empty() || seeds.is_empty() {
        return Err(Error::validation("need at least one fraction and one seed"));
    }
    let mut rows = Vec::with_capacity(fractions.len() * 2 * seeds.len());
    for (fi, &fraction) in fractions.iter().enumerate() {
        for &seed in seeds {
            let subset = subset_clean(train_ds, fraction, derive(seed, TAG_SUBSET, fi as u64))?;
            for method in ["clsc", "baseline"] {
                let mut run_cfg = cfg.clone();
                run_cfg.seed = seed;
                if method == "baseline" {
                    run_cfg.lambda_clsc = 0.0;
                }
                let (_, metrics) = train_and_eval(&subset, test_ds, &run_cfg)?;
                rows.push(SweepRow {
                    fraction,
                    method,
                    seed,
                    metrics,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    /// "clean" or "clean+noisy".
    pub data: &'static str,
    pub s_m: usize,
    pub n_seeds: usize,
    pub strict_mean: f64,
    pub strict_std: f64,
}

impl AblationRow {
    pub fn record(&self) -> String {
        record_line(&[
            ("data", self.data.to_string()),
            ("s_m", self.s_m.to_string()),
            ("n_seeds", self.n_seeds.to_string()),
            ("strict_mean", self.strict_mean.to_string()),
            ("strict_std", self.strict_std.to_string()),
        ])
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Four cells: {clean-only, clean+noisy} x {one-step, configured chain}.
/// The regularizer stays on in all of them; only its walk length and the
/// training pool change.
pub fn ablation(
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::validation("need at least one seed"));
    }
    let clean_ds = filter_clean(train_ds);
    let mut rows = Vec::with_capacity(4);
    for (data, pool) in [("clean", &clean_ds), ("clean+noisy", train_ds)] {
        for s_m in [1, cfg.s_m] {
            let mut accs = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let mut run_cfg = cfg.clone();
                run_cfg.seed = seed;
                run_cfg.s_m = s_m;
                let (_, metrics) = train_and_eval(pool, test_ds, &run_cfg)?;
                accs.push(metrics.strict_acc);
            }
            let (strict_mean, strict_std) = mean_std(&accs);
            rows.push(AblationRow {
                data,
                s_m,
                n_seeds: seeds.len(),
                strict_mean,
                strict_std,
            });
        }
    }
    Ok(rows)
}

/// Headline comparison cells for one seed, all sharing the same test set.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkCells {
    /// `lambda_clsc = 0` trained on the clean subset.
    pub baseline_clean: EvalResult,
    /// Regularized model trained on the clean subset.
    pub clsc_clean: EvalResult,
    /// Regularized model trained on clean plus noisy data.
    pub clsc_full: EvalResult,
    /// Intra/inter distance ratio of test embeddings, regularized full model.
    pub compact_clsc: f64,
    /// Same ratio for the baseline model.
    pub compact_baseline: f64,
}

pub fn benchmark(
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<BenchmarkCells> {
    let clean_ds = filter_clean(train_ds);
    let mut base_cfg = cfg.clone();
    base_cfg.seed = seed;
    base_cfg.lambda_clsc = 0.0;
    let mut clsc_cfg = cfg.clone();
    clsc_cfg.seed = seed;

    let (base_report, baseline_clean) = train_and_eval(&clean_ds, test_ds, &base_cfg)?;
    let (_, clsc_clean) = train_and_eval(&clean_ds, test_ds, &clsc_cfg)?;
    let (full_report, clsc_full) = train_and_eval(train_ds, test_ds, &clsc_cfg)?;

    let compact_clsc = embedding_compactness(full_report.selected_params(), test_ds)?;
    let compact_baseline = embedding_compactness(base_report.selected_params(), test_ds)?;
    Ok(BenchmarkCells {
        baseline_clean,
        clsc_clean,
        clsc_full,
        compact_clsc,
        compact_baseline,
    })
}

/// Mean intra-class over mean inter-class pairwise distance; small is tight.
pub fn compactness_ratio(points: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    let n = points.nrows();
    if n != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "labels vs points".into(),
            expected: n,
            got: labels.len(),
        });
    }
    let mut intra = (0.0, 0usize);
    let mut inter = (0.0, 0usize);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (&points.row(i) - &points.row(j)).mapv(|v| v * v).sum().sqrt();
            let acc = if labels[i] == labels[j] { &mut intra } else { &mut inter };
            acc.0 += d;
            acc.1 += 1;
        }
    }
    if intra.1 == 0 || inter.1 == 0 {
        return Err(Error::validation(
            "compactness needs both same-class and cross-class pairs",
        ));
    }
    Ok((intra.0 / intra.1 as f64) / (inter.0 / inter.1 as f64))
}

/// Compactness of a model's embeddings on a gold-labeled dataset.
pub fn embedding_compactness(params: &ModelParams, ds: &Dataset) -> Result<f64> {
    let labeled: Vec<MentionSample> = ds
        .samples
        .iter()
        .filter(|s| s.gold.is_some())
        .cloned()
        .collect();
    let labels: Vec<usize> = labeled.iter().map(|s| s.gold.unwrap()).collect();
    let batch = build_batch(&ds.hierarchy, labeled)?;
    let encoded = encode(&params.encoder, &batch)?;
    compactness_ratio(&encoded.z, &labels)
}

/// Centers the rows and projects them onto the top two principal components.
pub fn project_embeddings(z: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, d) = z.dim();
    if n < 2 {
        return Err(Error::validation("need at least 2 points to project"));
    }
    if d < 2 {
        return Err(Error::validation("need at least 2 dimensions to project"));
    }
    let mean = z.mean_axis(Axis(0)).expect("non-empty");
    let centered = z - &mean.broadcast((n, d)).expect("broadcast mean");
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0).max(1.0);
    let (eigvals, eigvecs) = jacobi_eigh(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).expect("finite eigenvalues"));
    let mut basis = Array2::zeros((d, 2));
    for (c, &col) in order.iter().take(2).enumerate() {
        let mut v = eigvecs.column(col).to_owned();
        // Fix the sign so the projection is deterministic.
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).expect("finite"))
            .map(|(i, _)| i)
            .expect("non-empty eigenvector");
        if v[lead] < 0.0 {
            v.mapv_inplace(|x| -x);
        }
        basis.column_mut(c).assign(&v);
    }
    Ok(centered.dot(&basis))
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: returns
/// (eigenvalues, column eigenvectors) with `a = v diag(e) v^T`.
fn jacobi_eigh(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let d = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::eye(d);
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    (m.diag().to_owned(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn tiny_synth(seed: u64) -> Dataset {
        generate(&SynthConfig {
            n_types: 4,
            depth: 2,
            n_samples: 60,
            noise_rate: 0.3,
            cluster_spread: 0.5,
            d_w: 4,
            d_h: 4,
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            lr: 5e-3,
            batch_size: 16,
            s_lp: 20,
            s_m: 2,
            lambda_clsc: 1.0,
            epochs: 2,
            d_z: 4,
            n_hidden: 1,
            hidden_width: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn full_fraction_returns_the_dataset_unchanged() {
        let ds = tiny_synth(3);
        let sub = subset_clean(&ds, 1.0, 99).unwrap();
        assert_eq!(sub.samples, ds.samples);
    }

    #[test]
    fn subsets_pair_up_and_keep_every_noisy_sample() {
        let ds = tiny_synth(4);
        let a = subset_clean(&ds, 0.5, 7).unwrap();
        let b = subset_clean(&ds, 0.5, 7).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = subset_clean(&ds, 0.5, 8).unwrap();
        assert_ne!(
            a.samples.iter().map(|s| &s.id).collect::<Vec<_>>(),
            c.samples.iter().map(|s| &s.id).collect::<Vec<_>>()
        );
        let noisy_total = ds
            .samples
            .iter()
            .filter(|s| !is_clean_sample(&ds.hierarchy, s))
            .count();
        let noisy_kept = a
            .samples
            .iter()
            .filter(|s| !is_clean_sample(&a.hierarchy, s))
            .count();
        assert_eq!(noisy_total, noisy_kept);
        let clean_total = ds.len() - noisy_total;
        let clean_kept = a.len() - noisy_kept;
        assert_eq!(clean_kept, (0.5 * clean_total as f64).round() as usize);
    }

    #[test]
    fn starving_subsets_are_rejected() {
        let ds = generate(&SynthConfig {
            n_types: 2,
            depth: 1,
            n_samples: 3,
            noise_rate: 0.0,
            seed: 5,
            ..SynthConfig::default()
        })
        .unwrap();
        assert!(subset_clean(&ds, 0.1, 1).is_err());
        assert!(subset_clean(&ds, 0.0, 1).is_err());
    }

    #[test]
    fn split_is_a_disjoint_ordered_partition() {
        let ds = tiny_synth(6);
        let (tr, te) = split_dataset(&ds, 0.25, 11).unwrap();
        assert_eq!(tr.len() + te.len(), ds.len());
        let mut ids: Vec<&String> = tr.samples.iter().chain(&te.samples).map(|s| &s.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), ds.len());
        let (tr2, te2) = split_dataset(&ds, 0.25, 11).unwrap();
        assert_eq!(tr.samples, tr2.samples);
        assert_eq!(te.samples, te2.samples);
    }

    #[test]
    fn zero_params_predict_the_first_type() {
        let ds = tiny_synth(8);
        let params = ModelParams::zeros_like(&{
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            ModelParams::init(4, 4, 1, 8, 4, ds.hierarchy.len(), &mut rng)
        });
        let preds = predict(&params, &ds.hierarchy, ds.samples.clone()).unwrap();
        assert!(preds.iter().all(|&p| p == 0));
    }

    #[test]
    fn record_lines_are_tab_delimited_key_value_pairs() {
        let line = record_line(&[("a", "1".to_string()), ("b", "x".to_string())]);
        assert_eq!(line, "a=1\tb=x");
        let row = SweepRow {
            fraction: 0.25,
            method: "clsc",
            seed: 3,
            metrics: EvalResult {
                strict_acc: 0.5,
                macro_f1: 0.625,
                micro_f1: 0.75,
            },
        };
        assert_eq!(
            row.record(),
            "fraction=0.25\tmethod=clsc\tseed=3\tstrict_acc=0.5\tmacro_f1=0.625\tmicro_f1=0.75"
        );
    }

    #[test]
    fn compactness_of_two_tight_far_clusters_is_small() {
        let pts = array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let ratio = compactness_ratio(&pts, &[0, 0, 1, 1]).unwrap();
        let expected = 1.0 / ((20.0 + 2.0 * f64::sqrt(101.0)) / 4.0);
        assert_abs_diff_eq!(ratio, expected, epsilon = 1e-12);
        assert!(compactness_ratio(&pts, &[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn jacobi_recovers_known_eigenpairs() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = jacobi_eigh(&a);
        let mut sorted: Vec<f64> = vals.to_vec();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_abs_diff_eq!(sorted[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sorted[1], 3.0, epsilon = 1e-12);
        // Reconstruct a = v diag(e) v^T.
        let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for (x, y) in recon.iter().zip(a.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_rows_project_to_a_single_point() {
        let z = Array2::from_elem((5, 3), 2.5);
        let p = project_embeddings(&z).unwrap();
        for v in p.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn centered_planar_data_projects_by_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut z = Array2::zeros((12, 2));
        for v in z.iter_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        let mean = z.mean_axis(Axis(0)).unwrap();
        let z = &z - &mean.broadcast((12, 2)).unwrap();
        let p = project_embeddings(&z.to_owned()).unwrap();
        for i in 0..12 {
            for j in (i + 1)..12 {
                let dz = (&z.row(i) - &z.row(j)).mapv(|v| v * v).sum().sqrt();
                let dp = (&p.row(i) - &p.row(j)).mapv(|v| v * v).sum().sqrt();
                assert_abs_diff_eq!(dz, dp, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn projection_rejects_degenerate_shapes() {
        assert!(project_embeddings(&Array2::zeros((1, 4))).is_err());
        assert!(project_embeddings(&Array2::zeros((4, 1))).is_err());
    }

    #[test]
    fn sweep_emits_one_row_per_cell_and_seed() {
        let ds = tiny_synth(13);
        let (tr, te) = split_dataset(&ds, 0.25, 13).unwrap();
        let rows = noise_sweep(&tr, &te, &tiny_cfg(), &[1.0, 0.5], &[1, 2]).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        let full_row = rows
            .iter()
            .find(|r| r.fraction == 1.0 && r.method == "clsc" && r.seed == 1)
            .unwrap();
        let mut plain_cfg = tiny_cfg();
        plain_cfg.seed = 1;
        let (_, plain) = train_and_eval(&tr, &te, &plain_cfg).unwrap();
        assert_eq!(full_row.metrics.strict_acc, plain.strict_acc);
        assert_eq!(full_row.metrics.micro_f1, plain.micro_f1);
    }

    #[test]
    fn ablation_reports_four_labeled_rows() {
        let ds = tiny_synth(14);
        let (tr, te) = split_dataset(&ds, 0.25, 14).unwrap();
        let rows = ablation(&tr, &te, &tiny_cfg(), &[5]).unwrap();
        assert_eq!(rows.len(), 4);
        let labels: Vec<(&str, usize)> = rows.iter().map(|r| (r.data, r.s_m)).collect();
        assert_eq!(
            labels,
            vec![
                ("clean", 1),
                ("clean", 2),
                ("clean+noisy", 1),
                ("clean+noisy", 2)
            ]
        );
        for r in &rows {
            assert_eq!(r.n_seeds, 1);
            assert_eq!(r.strict_std, 0.0);
            assert!(r.strict_mean.is_finite());
        }
    }

    #[test]
    fn benchmark_cells_come_back_finite_and_comparable() {
        let ds = tiny_synth(15);
        let (tr, te) = split_dataset(&ds, 0.25, 15).unwrap();
        let cells = benchmark(&tr, &te, &tiny_cfg(), 2).unwrap();
        for v in [
            cells.baseline_clean.strict_acc,
            cells.clsc_clean.strict_acc,
            cells.clsc_full.strict_acc,
            cells.compact_clsc,
            cells.compact_baseline,
        ] {
            assert!(v.is_finite());
        }
        assert!(cells.compact_clsc > 0.0 && cells.compact_baseline > 0.0);
    }
}
