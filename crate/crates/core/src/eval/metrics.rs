use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Metrics with zero denominators reported as `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn check_pairs(n_true: usize, n_other: usize) -> Result<()> {
    if n_true != n_other {
        return Err(Error::InvalidArgument(format!(
            "{n_true} labels but {n_other} predictions"
        )));
    }
    Ok(())
}

pub fn confusion_counts(y_true: &[u8], y_flag: &[u8]) -> Result<Confusion> {
    check_pairs(y_true.len(), y_flag.len())?;
    let mut c = Confusion::default();
    for (&t, &f) in y_true.iter().zip(y_flag) {
        match (t != 0, f != 0) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Confusion {
    pub fn metrics(&self) -> ConfusionMetrics {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        ConfusionMetrics {
            accuracy: ratio(self.tp + self.tn, self.tp + self.fp + self.tn + self.fn_),
            precision,
            recall,
            f1,
        }
    }
}

pub fn confusion_metrics(y_true: &[u8], y_flag: &[u8]) -> Result<ConfusionMetrics> {
    Ok(confusion_counts(y_true, y_flag)?.metrics())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Counts are exact integers over groups of equal scores.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    check_pairs(y_true.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let n_pos = y_true.iter().filter(|&&t| t != 0).count() as u128;
    let n_neg = y_true.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut wins, mut ties, mut neg_below) = (0u128, 0u128, 0u128);
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        let (mut pos, mut neg) = (0u128, 0u128);
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            if y_true[order[end]] != 0 {
                pos += 1;
            } else {
                neg += 1;
            }
            end += 1;
        }
        wins += pos * neg_below;
        ties += pos * neg;
        neg_below += neg;
        start = end;
    }
    Ok((2 * wins + ties) as f64 / (2 * n_pos * n_neg) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_example() {
        let y = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let f = [1, 1, 0, 1, 0, 0, 0, 0, 0, 0];
        let m = confusion_metrics(&y, &f).unwrap();
        assert!((m.precision.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.accuracy, Some(0.8));
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let y = [1, 0, 1, 0];
        let m = confusion_metrics(&y, &y).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
        let m = confusion_metrics(&y, &[0; 4]).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, None);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0, 0, 1, 1], &[0.1, 0.4, 0.35, 0.8]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0, 1, 0, 1], &[0.0, 1.0, 0.2, 0.9]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0, 1, 0, 1], &[0.5; 4]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[1, 1], &[0.1, 0.2]), Err(Error::SingleClass)));
        assert!(roc_auc(&[0, 1], &[f64::NAN, 0.2]).is_err());
    }
}
