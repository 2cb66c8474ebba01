//! Confusion counts and the rates derived from them. mTBI (label 1) is positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }

    pub fn record(&mut self, predicted: u8, truth: u8) {
        match (predicted == 1, truth == 1) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

/// Tally predictions against truth; both are {0,1} label slices.
pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::data(format!(
            "confusion: {} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        c.record(p, t);
    }
    Ok(c)
}

/// TP / (TP + FN); `None` without positives.
pub fn sensitivity(c: &ConfusionCounts) -> Option<f64> {
    let d = c.tp + c.fn_;
    (d > 0).then(|| c.tp as f64 / d as f64)
}

/// TN / (TN + FP); `None` without negatives.
pub fn specificity(c: &ConfusionCounts) -> Option<f64> {
    let d = c.tn + c.fp;
    (d > 0).then(|| c.tn as f64 / d as f64)
}

pub fn accuracy(c: &ConfusionCounts) -> Option<f64> {
    let d = c.total();
    (d > 0).then(|| (c.tp + c.tn) as f64 / d as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_split() {
        let c = confusion(&[1, 1, 0, 0], &[1, 1, 0, 0]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 2, fp: 0, tn: 2, fn_: 0 });
    }

    #[test]
    fn all_false_positives() {
        let c = confusion(&[1; 5], &[0; 5]).unwrap();
        assert_eq!(c.fp, 5);
        assert_eq!(sensitivity(&c), None);
        assert_eq!(specificity(&c), Some(0.0));
    }

    #[test]
    fn rate_examples() {
        let c = ConfusionCounts { tp: 3, fp: 0, tn: 4, fn_: 1 };
        assert_eq!(sensitivity(&c), Some(0.75));
        assert_eq!(specificity(&c), Some(1.0));
        assert_eq!(accuracy(&c), Some(7.0 / 8.0));
        let none = ConfusionCounts { tp: 0, fp: 2, tn: 1, fn_: 0 };
        assert_eq!(sensitivity(&none), None);
        assert_eq!(accuracy(&ConfusionCounts::default()), None);
    }

    #[test]
    fn length_mismatch() {
        assert!(confusion(&[1], &[1, 0]).is_err());
    }

    proptest! {
        #[test]
        fn matches_recount(pairs in proptest::collection::vec((0u8..2, 0u8..2), 0..100)) {
            let pred: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let truth: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let c = confusion(&pred, &truth).unwrap();
            let count = |p: u8, t: u8| pairs.iter().filter(|&&x| x == (p, t)).count();
            prop_assert_eq!(c.tp, count(1, 1));
            prop_assert_eq!(c.fp, count(1, 0));
            prop_assert_eq!(c.tn, count(0, 0));
            prop_assert_eq!(c.fn_, count(0, 1));
            prop_assert_eq!(c.total(), pairs.len());
        }
    }
}
