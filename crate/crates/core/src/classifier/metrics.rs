use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ClassifierError;

/// Redraws allowed per bootstrap replicate before giving up.
pub const MAX_REDRAWS: usize = 100;
/// Fewest examples of each class accepted by [`bootstrap_ci`].
pub const MIN_PER_CLASS: usize = 10;

fn counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), ClassifierError> {
    if scores.len() != labels.len() {
        return Err(ClassifierError::InvalidConfig(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (pos, neg) = counts(labels);
    if pos == 0 || neg == 0 {
        return Err(ClassifierError::SingleClass);
    }
    Ok((pos, neg))
}

fn order_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Area under the ROC curve from the rank-sum statistic with mid-ranks for ties.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, ClassifierError> {
    let (pos, neg) = check(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: precision at each distinct threshold weighted by the
/// recall gained there.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64, ClassifierError> {
    let (pos, _) = check(scores, labels)?;
    let idx = order_desc(scores);
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let gained = idx[i..=j].iter().filter(|&&k| labels[k]).count();
        tp += gained;
        seen += j - i + 1;
        ap += gained as f64 / pos as f64 * (tp as f64 / seen as f64);
        i = j + 1;
    }
    Ok(ap)
}

/// Percentile bootstrap interval of `metric` at `level` (e.g. 0.95).
///
/// Replicate `b` draws from its own ChaCha stream, so results depend only on
/// `seed`. A resample holding a single class is redrawn, at most
/// [`MAX_REDRAWS`] times. The interval is widened, if needed, to contain the
/// point estimate.
pub fn bootstrap_ci(
    scores: &[f64],
    labels: &[bool],
    metric: impl Fn(&[f64], &[bool]) -> Result<f64, ClassifierError>,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64), ClassifierError> {
    let (pos, neg) = check(scores, labels)?;
    if pos < MIN_PER_CLASS || neg < MIN_PER_CLASS {
        return Err(ClassifierError::TooFewSamples { pos, neg, min: MIN_PER_CLASS });
    }
    if n_boot == 0 || !(level > 0.0 && level < 1.0) {
        return Err(ClassifierError::InvalidConfig("bootstrap needs n_boot > 0 and 0 < level < 1".into()));
    }
    let point = metric(scores, labels)?;
    let n = scores.len();
    let mut stats = Vec::with_capacity(n_boot);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s, mut l) = (vec![0.0; n], vec![false; n]);
    for b in 0..n_boot {
        rng.set_stream(b as u64);
        rng.set_word_pos(0);
        let mut tries = 0;
        loop {
            for k in 0..n {
                let j = rng.random_range(0..n);
                s[k] = scores[j];
                l[k] = labels[j];
            }
            let (p, q) = counts(&l);
            if p > 0 && q > 0 {
                break;
            }
            tries += 1;
            if tries > MAX_REDRAWS {
                return Err(ClassifierError::DegenerateResampling);
            }
        }
        stats.push(metric(&s, &l)?);
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo = quantile(&stats, tail).min(point);
    let hi = quantile(&stats, 1.0 - tail).max(point);
    Ok((lo, hi))
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn separated_and_tied() {
        let labels = [false, false, true, true];
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auprc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5; 4], &labels).unwrap(), 0.5);
        assert_eq!(auprc(&[0.5; 4], &labels).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.2], &[true, true]), Err(ClassifierError::SingleClass));
    }

    #[test]
    fn average_precision_hand_value() {
        // ranking: +, -, +  -> (1/2)(1) + (1/2)(2/3)
        let ap = auprc(&[0.9, 0.5, 0.1], &[true, false, true]).unwrap();
        assert!((ap - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_contracts() {
        let scores: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let labels: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let (lo, hi) = bootstrap_ci(&scores, &labels, auroc, 200, 0.95, 7).unwrap();
        assert_eq!(hi, 1.0);
        assert!(lo > 0.99);
        let noisy: Vec<f64> = (0..40).map(|i| ((i * 37) % 40) as f64).collect();
        let point = auroc(&noisy, &labels).unwrap();
        let a = bootstrap_ci(&noisy, &labels, auroc, 300, 0.95, 3).unwrap();
        assert!(a.0 <= point && point <= a.1);
        assert_eq!(a, bootstrap_ci(&noisy, &labels, auroc, 300, 0.95, 3).unwrap());
        assert!(matches!(
            bootstrap_ci(&scores[15..], &labels[15..], auroc, 10, 0.95, 1),
            Err(ClassifierError::TooFewSamples { .. })
        ));
    }

    proptest! {
        #[test]
        fn auroc_matches_pairwise(raw in proptest::collection::vec((0u8..12, any::<bool>()), 2..120)) {
            let scores: Vec<f64> = raw.iter().map(|r| r.0 as f64 / 4.0).collect();
            let labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = auroc(&scores, &labels).unwrap();
            prop_assert!((a - pairwise(&scores, &labels)).abs() < 1e-12);
            let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            let aff: Vec<f64> = scores.iter().map(|s| 3.0 * s - 1.0).collect();
            prop_assert!((auroc(&exp, &labels).unwrap() - a).abs() < 1e-12);
            prop_assert!((auroc(&aff, &labels).unwrap() - a).abs() < 1e-12);
        }
    }
}
