//! Samples and mini-batches.
//!
//! A `MentionSample` carries pre-extracted word vectors for the mention
//! span and its context window, plus an ancestor-closed candidate type set.
//! `build_batch` validates the candidates against a hierarchy and derives
//! the per-sample terminal-type mask used by label propagation.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::hierarchy::TypeHierarchy;

#[derive(Debug, Clone, PartialEq)]
pub struct MentionSample {
    pub id: String,
    /// One row per mention token, width `d_w`.
    pub mention_vecs: Array2<f64>,
    /// One row per context token, width `d_h`.
    pub context_vecs: Array2<f64>,
    /// Ancestor-closed set of admissible type indices.
    pub candidates: Vec<usize>,
    /// Annotated true type, kept for evaluation only.
    pub gold: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub samples: Vec<MentionSample>,
    /// Embeddings, `b x d_z`; `None` until an encoder has run.
    pub z: Option<Array2<f64>>,
    /// Terminal-type indicator, `b x k`: `m[[i, j]] = 1` iff type `j` is a
    /// terminal member of sample `i`'s candidate set.
    pub m: Array2<f64>,
    pub clean_flags: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_types(&self) -> usize {
        self.m.ncols()
    }

    /// The single terminal type of a clean sample, `None` for noisy ones.
    pub fn clean_label(&self, i: usize) -> Option<usize> {
        if !self.clean_flags[i] {
            return None;
        }
        self.m.row(i).iter().position(|&v| v != 0.0)
    }

    pub fn set_embeddings(&mut self, z: Array2<f64>) -> Result<()> {
        if z.nrows() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "embedding rows".into(),
                expected: self.len(),
                got: z.nrows(),
            });
        }
        self.z = Some(z);
        Ok(())
    }
}

/// Validates samples against the hierarchy and assembles a batch.
pub fn build_batch(h: &TypeHierarchy, samples: Vec<MentionSample>) -> Result<Batch> {
    if samples.len() < 2 {
        return Err(Error::validation(format!(
            "a batch needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let d_w = samples[0].mention_vecs.ncols();
    let d_h = samples[0].context_vecs.ncols();
    let b = samples.len();
    let k = h.len();
    let mut m = Array2::zeros((b, k));
    let mut clean_flags = Vec::with_capacity(b);
    for (i, s) in samples.iter().enumerate() {
        if s.mention_vecs.nrows() == 0 || s.context_vecs.nrows() == 0 {
            return Err(Error::validation(format!(
                "sample {} has an empty token list",
                s.id
            )));
        }
        if s.mention_vecs.ncols() != d_w {
            return Err(Error::DimensionMismatch {
                what: format!("mention vectors of sample {}", s.id),
                expected: d_w,
                got: s.mention_vecs.ncols(),
            });
        }
        if s.context_vecs.ncols() != d_h {
            return Err(Error::DimensionMismatch {
                what: format!("context vectors of sample {}", s.id),
                expected: d_h,
                got: s.context_vecs.ncols(),
            });
        }
        if let Some(g) = s.gold {
            if g >= k {
                return Err(Error::UnknownType(format!(
                    "gold index {g} of sample {} out of range",
                    s.id
                )));
            }
        }
        let terminals = h.terminal_types(&s.candidates)?;
        for &t in &terminals {
            m[[i, t]] = 1.0;
        }
        clean_flags.push(terminals.len() == 1);
    }
    Ok(Batch {
        samples,
        z: None,
        m,
        clean_flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn h() -> TypeHierarchy {
        TypeHierarchy::from_paths(["/person", "/person/artist", "/person/politician", "/org"])
            .unwrap()
    }

    fn sample(id: &str, h: &TypeHierarchy, cand_paths: &[&str]) -> MentionSample {
        let candidates = cand_paths
            .iter()
            .map(|p| h.index_of(p).unwrap())
            .collect();
        MentionSample {
            id: id.into(),
            mention_vecs: arr2(&[[1.0, 2.0], [3.0, 4.0]]),
            context_vecs: arr2(&[[0.5, 0.5, 0.5]]),
            candidates,
            gold: None,
        }
    }

    #[test]
    fn mask_marks_terminal_types_only() {
        let h = h();
        let batch = build_batch(
            &h,
            vec![
                sample("a", &h, &["/person", "/person/artist"]),
                sample("b", &h, &["/person", "/person/artist", "/person/politician"]),
                sample("c", &h, &["/org"]),
            ],
        )
        .unwrap();
        let artist = h.index_of("/person/artist").unwrap();
        let politician = h.index_of("/person/politician").unwrap();
        let person = h.index_of("/person").unwrap();
        let org = h.index_of("/org").unwrap();

        assert_eq!(batch.m[[0, artist]], 1.0);
        assert_eq!(batch.m[[0, person]], 0.0);
        assert_eq!(batch.m.row(0).sum(), 1.0);
        assert_eq!(batch.m[[1, artist]], 1.0);
        assert_eq!(batch.m[[1, politician]], 1.0);
        assert_eq!(batch.m.row(1).sum(), 2.0);
        assert_eq!(batch.m[[2, org]], 1.0);

        assert_eq!(batch.clean_flags, vec![true, false, true]);
        assert_eq!(batch.clean_label(0), Some(artist));
        assert_eq!(batch.clean_label(1), None);
        assert_eq!(batch.clean_label(2), Some(org));
    }

    #[test]
    fn embeddings_start_unset() {
        let h = h();
        let batch = build_batch(
            &h,
            vec![sample("a", &h, &["/org"]), sample("b", &h, &["/org"])],
        )
        .unwrap();
        assert!(batch.z.is_none());
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let h = h();
        let err = build_batch(&h, vec![sample("a", &h, &["/org"])]).unwrap_err();
        assert!(err.to_string().contains("at least 2"));
    }

    #[test]
    fn inconsistent_widths_are_rejected() {
        let h = h();
        let mut s2 = sample("b", &h, &["/org"]);
        s2.mention_vecs = arr2(&[[1.0, 2.0, 3.0]]);
        let err = build_batch(&h, vec![sample("a", &h, &["/org"]), s2]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn unclosed_candidates_are_rejected() {
        let h = h();
        let artist = h.index_of("/person/artist").unwrap();
        let mut s = sample("a", &h, &["/org"]);
        s.candidates = vec![artist];
        assert!(build_batch(&h, vec![s, sample("b", &h, &["/org"])]).is_err());
    }

    #[test]
    fn embedding_row_count_is_checked() {
        let h = h();
        let mut batch = build_batch(
            &h,
            vec![sample("a", &h, &["/org"]), sample("b", &h, &["/org"])],
        )
        .unwrap();
        assert!(batch.set_embeddings(Array2::zeros((3, 4))).is_err());
        assert!(batch.set_embeddings(Array2::zeros((2, 4))).is_ok());
    }
}
