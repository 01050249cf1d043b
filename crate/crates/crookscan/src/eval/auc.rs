use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::Annotation;

/// One scored test sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: u64,
    pub probability: f64,
    pub annotation: Annotation,
    /// False once the sample has been rejected by abstention.
    pub kept: bool,
}

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes, got {} positive and {} negative",
            pos.len(),
            neg.len()
        )));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the rank sum of positives, using 1-based average ranks.
    let mut twice_rank_sum = 0u64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let positives = all[i..=j].iter().filter(|x| x.1).count() as u64;
        // average rank of the tie group is (i + 1 + j + 1) / 2
        twice_rank_sum += positives * (i + j + 2) as u64;
        i = j + 1;
    }
    let np = pos.len() as u64;
    let nn = neg.len() as u64;
    // U counts correctly ordered pairs with ties as 1/2; 2U is an integer.
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 * 0.5 / (np * nn) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucBounds {
    pub worst: f64,
    pub best: f64,
}

fn kept_scores(samples: &[ScoredSample], a: Annotation) -> Vec<f64> {
    samples
        .iter()
        .filter(|s| s.kept && s.annotation == a)
        .map(|s| s.probability)
        .collect()
}

/// Exact extreme AUCs over all class assignments of the kept unsure
/// samples.
///
/// For a fixed number `j` of unsure samples labelled positive, the best
/// assignment makes the `j` highest-scored unsure samples positive and the
/// worst makes the `j` lowest-scored ones positive, so only `u + 1`
/// candidates per bound need evaluating.
pub fn auc_bounds(samples: &[ScoredSample]) -> Result<AucBounds> {
    let pos = kept_scores(samples, Annotation::Positive);
    let neg = kept_scores(samples, Annotation::Negative);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "AUC bounds need a kept sure positive and negative, got {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    let mut unsure = kept_scores(samples, Annotation::Unsure);
    unsure.sort_by(|a, b| b.total_cmp(a));
    let u = unsure.len();

    let mut best = f64::NEG_INFINITY;
    let mut worst = f64::INFINITY;
    let mut p = Vec::with_capacity(pos.len() + u);
    let mut n = Vec::with_capacity(neg.len() + u);
    for j in 0..=u {
        // top j unsure -> positive
        p.clear();
        n.clear();
        p.extend_from_slice(&pos);
        p.extend_from_slice(&unsure[..j]);
        n.extend_from_slice(&neg);
        n.extend_from_slice(&unsure[j..]);
        best = best.max(auc(&p, &n)?);

        // bottom j unsure -> positive
        p.clear();
        n.clear();
        p.extend_from_slice(&pos);
        p.extend_from_slice(&unsure[u - j..]);
        n.extend_from_slice(&neg);
        n.extend_from_slice(&unsure[..u - j]);
        worst = worst.min(auc(&p, &n)?);
    }
    Ok(AucBounds { worst, best })
}

/// AUC over the kept sure samples only.
pub fn sure_auc(samples: &[ScoredSample]) -> Result<f64> {
    auc(
        &kept_scores(samples, Annotation::Positive),
        &kept_scores(samples, Annotation::Negative),
    )
}
