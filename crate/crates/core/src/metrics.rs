//! Accuracy and F1 over path-expanded type predictions.
//!
//! A prediction of `/person/artist` counts the full path `{/person,
//! /person/artist}`, so predicting a parent of the gold type earns partial
//! credit under the loose metrics while strict accuracy demands the exact
//! path.

use crate::error::{Error, Result};
use crate::hierarchy::TypeHierarchy;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalResult {
    pub strict_acc: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

/// Scores one predicted type index per mention against one gold index.
pub fn evaluate(h: &TypeHierarchy, predictions: &[usize], golds: &[usize]) -> Result<EvalResult> {
    if predictions.len() != golds.len() {
        return Err(Error::DimensionMismatch {
            what: "predictions vs golds".into(),
            expected: golds.len(),
            got: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::validation("nothing to evaluate"));
    }
    for &t in predictions.iter().chain(golds.iter()) {
        if t >= h.len() {
            return Err(Error::UnknownType(format!(
                "type index {t} out of range for {} types",
                h.len()
            )));
        }
    }

    let n = predictions.len() as f64;
    let mut strict = 0.0;
    let mut macro_p = 0.0;
    let mut macro_r = 0.0;
    let mut overlap_total = 0.0;
    let mut pred_total = 0.0;
    let mut gold_total = 0.0;
    for (&p, &g) in predictions.iter().zip(golds) {
        let pred_path = h.expand_path(p);
        let gold_path = h.expand_path(g);
        let overlap = pred_path.iter().filter(|t| gold_path.contains(t)).count() as f64;
        if pred_path == gold_path {
            strict += 1.0;
        }
        macro_p += overlap / pred_path.len() as f64;
        macro_r += overlap / gold_path.len() as f64;
        overlap_total += overlap;
        pred_total += pred_path.len() as f64;
        gold_total += gold_path.len() as f64;
    }
    let macro_p = macro_p / n;
    let macro_r = macro_r / n;
    let micro_p = safe_div(overlap_total, pred_total);
    let micro_r = safe_div(overlap_total, gold_total);
    Ok(EvalResult {
        strict_acc: strict / n,
        macro_f1: f1(macro_p, macro_r),
        micro_f1: f1(micro_p, micro_r),
    })
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn h() -> TypeHierarchy {
        TypeHierarchy::from_paths(["/person", "/person/artist", "/person/politician", "/org"])
            .unwrap()
    }

    #[test]
    fn parent_prediction_earns_partial_credit() {
        let h = h();
        let person = h.index_of("/person").unwrap();
        let artist = h.index_of("/person/artist").unwrap();
        let r = evaluate(&h, &[person], &[artist]).unwrap();
        assert_eq!(r.strict_acc, 0.0);
        // Precision 1, recall 1/2.
        assert_abs_diff_eq!(r.macro_f1, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.micro_f1, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_matches_score_one_everywhere() {
        let h = h();
        let artist = h.index_of("/person/artist").unwrap();
        let org = h.index_of("/org").unwrap();
        let r = evaluate(&h, &[artist, org], &[artist, org]).unwrap();
        assert_eq!(r.strict_acc, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.micro_f1, 1.0);
    }

    #[test]
    fn disjoint_paths_score_zero_without_dividing_by_zero() {
        let h = h();
        let org = h.index_of("/org").unwrap();
        let artist = h.index_of("/person/artist").unwrap();
        let r = evaluate(&h, &[org], &[artist]).unwrap();
        assert_eq!(r.strict_acc, 0.0);
        assert_eq!(r.macro_f1, 0.0);
        assert_eq!(r.micro_f1, 0.0);
    }

    #[test]
    fn sibling_confusion_shares_the_parent() {
        let h = h();
        let artist = h.index_of("/person/artist").unwrap();
        let politician = h.index_of("/person/politician").unwrap();
        let r = evaluate(&h, &[politician], &[artist]).unwrap();
        assert_eq!(r.strict_acc, 0.0);
        // Overlap is the shared /person node: precision = recall = 1/2.
        assert_abs_diff_eq!(r.macro_f1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.micro_f1, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn consistent_permutation_changes_nothing() {
        let h = h();
        let artist = h.index_of("/person/artist").unwrap();
        let politician = h.index_of("/person/politician").unwrap();
        let org = h.index_of("/org").unwrap();
        let person = h.index_of("/person").unwrap();
        let preds = vec![artist, person, org, politician];
        let golds = vec![artist, politician, artist, politician];
        let a = evaluate(&h, &preds, &golds).unwrap();
        let perm = [2usize, 0, 3, 1];
        let preds_p: Vec<usize> = perm.iter().map(|&i| preds[i]).collect();
        let golds_p: Vec<usize> = perm.iter().map(|&i| golds[i]).collect();
        let b = evaluate(&h, &preds_p, &golds_p).unwrap();
        assert_abs_diff_eq!(a.strict_acc, b.strict_acc, epsilon = 1e-15);
        assert_abs_diff_eq!(a.macro_f1, b.macro_f1, epsilon = 1e-15);
        assert_abs_diff_eq!(a.micro_f1, b.micro_f1, epsilon = 1e-15);
    }

    #[test]
    fn single_mention_macro_equals_micro() {
        let h = h();
        let person = h.index_of("/person").unwrap();
        let artist = h.index_of("/person/artist").unwrap();
        let r = evaluate(&h, &[person], &[artist]).unwrap();
        assert_abs_diff_eq!(r.macro_f1, r.micro_f1, epsilon = 1e-15);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let h = h();
        assert!(evaluate(&h, &[0], &[0, 1]).is_err());
        assert!(evaluate(&h, &[], &[]).is_err());
    }
}
