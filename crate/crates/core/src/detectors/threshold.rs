//! Turning scores into binary flags.

use crate::error::{Error, Result};

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no scores to threshold".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    Ok(())
}

/// Nearest-rank percentile: the value at 1-based position `ceil(p/100 * n)`
/// of the ascending sort (position at least 1).
pub fn nearest_rank(scores: &[f64], percentile: f64) -> Result<f64> {
    check_scores(scores)?;
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::InvalidArgument(format!(
            "percentile {percentile} outside [0, 100]"
        )));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((percentile * n as f64) / 100.0).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// Flags scores strictly above the nearest-rank percentile.
pub fn threshold_flags(scores: &[f64], percentile: f64) -> Result<(f64, Vec<u8>)> {
    let t = nearest_rank(scores, percentile)?;
    Ok((t, scores.iter().map(|&s| u8::from(s > t)).collect()))
}

/// Flags exactly `round(fraction * n)` rows with the highest scores; equal
/// scores are taken in row order.
pub fn quota_flags(scores: &[f64], fraction: f64) -> Result<Vec<u8>> {
    check_scores(scores)?;
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside [0, 1]")));
    }
    let quota = (fraction * scores.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut flags = vec![0u8; scores.len()];
    for &i in &order[..quota] {
        flags[i] = 1;
    }
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eightieth_percentile_of_one_to_ten() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        let (t, f) = threshold_flags(&s, 80.0).unwrap();
        assert_eq!(t, 8.0);
        assert_eq!(f, vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn equal_scores_flag_nothing() {
        let (_, f) = threshold_flags(&[2.0; 7], 80.0).unwrap();
        assert!(f.iter().all(|&v| v == 0));
    }

    #[test]
    fn zeroth_percentile_is_the_minimum() {
        let (t, f) = threshold_flags(&[3.0, 1.0, 2.0, 1.0], 0.0).unwrap();
        assert_eq!(t, 1.0);
        assert_eq!(f, vec![1, 0, 1, 0]);
    }

    #[test]
    fn quota_breaks_ties_by_row() {
        let f = quota_flags(&[0.5, 0.9, 0.5, 0.5, 0.1], 0.4).unwrap();
        assert_eq!(f, vec![1, 1, 0, 0, 0]);
    }

    #[test]
    fn nan_is_rejected() {
        assert!(threshold_flags(&[1.0, f64::NAN], 50.0).is_err());
        assert!(threshold_flags(&[], 50.0).is_err());
    }
}
