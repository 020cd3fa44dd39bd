//! Synthetic noisy-typing corpus generator.
//!
//! Each terminal type owns a Gaussian cluster center in both token spaces;
//! samples scatter around a center of their true type. Label noise is
//! injected on the supervision side: a noisy sample keeps feature vectors
//! drawn from its true type but picks up extra distractor types in its
//! candidate set, the way context-agnostic knowledge-base linking
//! over-labels a mention. A configurable share of the noisy samples scatter
//! around a displaced "atypical" center rather than the prototype —
//! atypical usages attract spurious candidates disproportionately — so each
//! type contributes a second cluster that carries no clean supervision at
//! all; the remaining noisy samples are prototype-mode usages whose only
//! defect is the inflated candidate set.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::batch::MentionSample;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hierarchy::TypeHierarchy;

/// Spread of the parent-level cluster centers.
const PARENT_SCALE: f64 = 3.0;
/// Offset of each terminal's center from its parent's, which controls how
/// confusable sibling types are.
const SIBLING_SCALE: f64 = 0.7;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of terminal types.
    pub n_types: usize,
    /// 1 for a flat inventory, 2 to group terminals under parents in pairs.
    pub depth: usize,
    pub n_samples: usize,
    /// Fraction of samples that receive distractor candidate types.
    pub noise_rate: f64,
    /// Token scatter around the cluster center.
    pub cluster_spread: f64,
    /// Displacement scale of each type's atypical mode. Atypical noisy
    /// samples scatter around a second, shifted center, forming a separate
    /// cluster per type that carries no clean supervision.
    pub atypical_shift: f64,
    /// Share of noisy samples drawn from the atypical mode. The rest are
    /// ordinary prototype-mode usages that still pick up distractor types —
    /// over-labeling hits unremarkable mentions too.
    pub atypical_fraction: f64,
    pub d_w: usize,
    pub d_h: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_types: 4,
            depth: 2,
            n_samples: 2000,
            noise_rate: 0.3,
            cluster_spread: 1.0,
            atypical_shift: 4.0,
            atypical_fraction: 0.7,
            d_w: 8,
            d_h: 8,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_types < 2 {
            return Err(Error::validation("need at least 2 terminal types"));
        }
        if !(self.depth == 1 || self.depth == 2) {
            return Err(Error::validation("depth must be 1 or 2"));
        }
        if self.n_samples == 0 {
            return Err(Error::validation("n_samples must be positive"));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::validation("noise_rate must lie in [0, 1]"));
        }
        if !(self.cluster_spread.is_finite() && self.cluster_spread >= 0.0) {
            return Err(Error::validation("cluster_spread must be non-negative"));
        }
        if !(self.atypical_shift.is_finite() && self.atypical_shift >= 0.0) {
            return Err(Error::validation("atypical_shift must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.atypical_fraction) {
            return Err(Error::validation("atypical_fraction must lie in [0, 1]"));
        }
        if self.d_w == 0 || self.d_h == 0 {
            return Err(Error::validation("embedding widths must be positive"));
        }
        Ok(())
    }

    fn terminal_paths(&self) -> Vec<String> {
        (0..self.n_types)
            .map(|k| match self.depth {
                1 => format!("/t{k}"),
                _ => format!("/g{}/t{k}", k / 2),
            })
            .collect()
    }
}

fn normal_vec<R: Rng>(rng: &mut R, len: usize, scale: f64) -> Vec<f64> {
    (0..len)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn scatter_rows<R: Rng>(rng: &mut R, n_rows: usize, center: &[f64], spread: f64) -> Array2<f64> {
    let mut out = Array2::zeros((n_rows, center.len()));
    for mut row in out.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = center[j] + spread * rng.sample::<f64, _>(StandardNormal);
        }
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let paths = cfg.terminal_paths();
    let hierarchy = TypeHierarchy::from_paths(paths.iter().map(String::as_str))?;
    let terminals: Vec<usize> = paths
        .iter()
        .map(|p| hierarchy.index_of(p).expect("generated path"))
        .collect();

    // Cluster centers: parents first, then each terminal offset from its
    // parent so siblings stay confusable while groups stay apart.
    let n_parents = (cfg.n_types + 1) / 2;
    let mut centers_w = Vec::with_capacity(cfg.n_types);
    let mut centers_h = Vec::with_capacity(cfg.n_types);
    if cfg.depth == 1 {
        for _ in 0..cfg.n_types {
            centers_w.push(normal_vec(&mut rng, cfg.d_w, PARENT_SCALE));
            centers_h.push(normal_vec(&mut rng, cfg.d_h, PARENT_SCALE));
        }
    } else {
        let mut parents_w = Vec::with_capacity(n_parents);
        let mut parents_h = Vec::with_capacity(n_parents);
        for _ in 0..n_parents {
            parents_w.push(normal_vec(&mut rng, cfg.d_w, PARENT_SCALE));
            parents_h.push(normal_vec(&mut rng, cfg.d_h, PARENT_SCALE));
        }
        for k in 0..cfg.n_types {
            let off_w = normal_vec(&mut rng, cfg.d_w, SIBLING_SCALE);
            let off_h = normal_vec(&mut rng, cfg.d_h, SIBLING_SCALE);
            centers_w.push(add(&parents_w[k / 2], &off_w));
            centers_h.push(add(&parents_h[k / 2], &off_h));
        }
    }
    let atypical_w: Vec<Vec<f64>> = centers_w
        .iter()
        .map(|c| add(c, &normal_vec(&mut rng, cfg.d_w, cfg.atypical_shift)))
        .collect();
    let atypical_h: Vec<Vec<f64>> = centers_h
        .iter()
        .map(|c| add(c, &normal_vec(&mut rng, cfg.d_h, cfg.atypical_shift)))
        .collect();

    let mut samples = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let true_type = rng.gen_range(0..cfg.n_types);
        let gold = terminals[true_type];
        let mut terminal_set = vec![true_type];
        let noisy = rng.gen_bool(cfg.noise_rate);
        if noisy {
            let max_extra = 2.min(cfg.n_types - 1);
            let n_extra = rng.gen_range(1..=max_extra);
            let mut pool: Vec<usize> = (0..cfg.n_types).filter(|&t| t != true_type).collect();
            pool.shuffle(&mut rng);
            terminal_set.extend(pool.into_iter().take(n_extra));
        }
        let mut candidates: Vec<usize> = terminal_set
            .iter()
            .flat_map(|&t| hierarchy.expand_path(terminals[t]))
            .collect();
        candidates.sort_unstable();
        candidates.dedup();

        let atypical = noisy && rng.gen_bool(cfg.atypical_fraction);
        let (center_w, center_h) = if atypical {
            (&atypical_w[true_type], &atypical_h[true_type])
        } else {
            (&centers_w[true_type], &centers_h[true_type])
        };
        let n_mention = rng.gen_range(1..=3);
        let n_ctx = rng.gen_range(1..=4);
        let mention_vecs = scatter_rows(&mut rng, n_mention, center_w, cfg.cluster_spread);
        let context_vecs = scatter_rows(&mut rng, n_ctx, center_h, cfg.cluster_spread);
        samples.push(MentionSample {
            id: format!("m{i}"),
            mention_vecs,
            context_vecs,
            candidates,
            gold: Some(gold),
        });
    }
    Ok(Dataset {
        hierarchy,
        samples,
        d_w: cfg.d_w,
        d_h: cfg.d_h,
    })
}

/// Fraction of samples whose candidate set pins down a single terminal type.
pub fn clean_fraction(ds: &Dataset) -> f64 {
    if ds.samples.is_empty() {
        return 0.0;
    }
    let clean = ds
        .samples
        .iter()
        .filter(|s| {
            ds.hierarchy
                .terminal_types(&s.candidates)
                .map(|t| t.len() == 1)
                .unwrap_or(false)
        })
        .count();
    clean as f64 / ds.samples.len() as f64
}
