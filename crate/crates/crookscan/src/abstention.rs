//! Percentile-based abstention.
//!
//! With a class prior `q1` for the positive class and `q0` for the rest,
//! an ideal classifier puts the top `q1` fraction of a test set in the
//! positive class, so the prediction at percentile `1 - q1` is the natural
//! decision anchor. The rejection interval around it, in percentile space,
//! is
//!
//! ```text
//! p_min = 1 - q1 - e * q0
//! p_max = 1 - q1 + e * q1
//! ```
//!
//! for an exclusion rate `e` in `[0, 1]`, so both sides shrink in
//! proportion to their class prior. The base scheme uses `q1 = p_y1` and
//! `q0 = 1 - p_y1`. The unsure-aware variant replaces `q1` with
//! `p_y1 + p_y05` and `q0` with `(1 - p_y1) - (p_y1 + p_y05)`, which also
//! moves the anchor.
//!
//! Percentiles become probability thresholds through the empirical
//! quantile of the prediction set (linear interpolation between order
//! statistics). A sample is rejected iff its probability lies in the
//! closed interval `[threshold_low, threshold_high]`; with `e = 0` nothing is
//! rejected. The thresholds can be applied to new samples unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstentionConfig {
    /// Prior prevalence of the positive class.
    pub p_y1: f64,
    /// Prevalence of unsure samples; only read when `use_unsure_prior`.
    pub p_y05: f64,
    pub exclusion_rate: f64,
    pub use_unsure_prior: bool,
}

impl Default for AbstentionConfig {
    fn default() -> Self {
        Self {
            p_y1: 0.05,
            p_y05: 0.0,
            exclusion_rate: 0.0,
            use_unsure_prior: false,
        }
    }
}

impl AbstentionConfig {
    pub fn base(exclusion_rate: f64) -> Self {
        Self {
            exclusion_rate,
            ..Default::default()
        }
    }

    pub fn with_unsure_prior(exclusion_rate: f64, p_y05: f64) -> Self {
        Self {
            exclusion_rate,
            p_y05,
            use_unsure_prior: true,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_y1 > 0.0 && self.p_y1 < 1.0) {
            return Err(Error::Config(format!("p_y1 = {} must lie in (0, 1)", self.p_y1)));
        }
        if !(0.0..=1.0).contains(&self.exclusion_rate) {
            return Err(Error::Config(format!(
                "exclusion rate {} must lie in [0, 1]",
                self.exclusion_rate
            )));
        }
        if self.use_unsure_prior && !(self.p_y05 >= 0.0 && self.p_y1 + self.p_y05 < 1.0) {
            return Err(Error::Config(format!(
                "need p_y05 >= 0 and p_y1 + p_y05 < 1, got {} and {}",
                self.p_y05, self.p_y1
            )));
        }
        Ok(())
    }

    /// `(q1, q0)` after the optional unsure-prior substitution.
    pub fn class_weights(&self) -> (f64, f64) {
        let q0_base = 1.0 - self.p_y1;
        if self.use_unsure_prior {
            let q1 = self.p_y1 + self.p_y05;
            (q1, q0_base - q1)
        } else {
            (self.p_y1, q0_base)
        }
    }

    /// `(p_min, anchor, p_max)` in percentile space.
    pub fn percentiles(&self) -> Result<(f64, f64, f64)> {
        self.validate()?;
        let (q1, q0) = self.class_weights();
        if q0 < 0.0 {
            return Err(Error::Config(format!(
                "negative weight {q0} for the rest class: p_y1 + p_y05 exceeds 1 - p_y1"
            )));
        }
        let e = self.exclusion_rate;
        let anchor = 1.0 - q1;
        let pmin = anchor - e * q0;
        let pmax = anchor + e * q1;
        if pmin < 0.0 || pmax > 1.0 {
            return Err(Error::Config(format!(
                "abstention interval [{pmin}, {pmax}] leaves [0, 1]"
            )));
        }
        Ok((pmin, anchor, pmax))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstentionRule {
    pub config: AbstentionConfig,
    pub anchor_percentile: f64,
    pub pmin_percentile: f64,
    pub pmax_percentile: f64,
    pub threshold_low: f64,
    pub threshold_high: f64,
}

impl AbstentionRule {
    /// A zero exclusion rate rejects nothing, even when ties sit on the
    /// anchor threshold.
    pub fn rejects(&self, probability: f64) -> bool {
        self.config.exclusion_rate > 0.0
            && self.threshold_low <= probability
            && probability <= self.threshold_high
    }
}

/// Type-7 empirical quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn compute_rule(predictions: &[f64], cfg: &AbstentionConfig) -> Result<AbstentionRule> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput("no predictions to derive an abstention rule from".into()));
    }
    if predictions.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidInput("non-finite prediction".into()));
    }
    let (pmin, anchor, pmax) = cfg.percentiles()?;
    let mut sorted = predictions.to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold_low = quantile_sorted(&sorted, pmin);
    let threshold_high = quantile_sorted(&sorted, pmax);
    Ok(AbstentionRule {
        config: *cfg,
        anchor_percentile: anchor,
        pmin_percentile: pmin,
        pmax_percentile: pmax,
        threshold_low,
        threshold_high,
    })
}

/// Splits ids into `(kept, rejected)`, preserving input order.
pub fn apply_rule<I: Copy>(predictions: &[(I, f64)], rule: &AbstentionRule) -> (Vec<I>, Vec<I>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for &(id, p) in predictions {
        if rule.rejects(p) {
            rejected.push(id);
        } else {
            kept.push(id);
        }
    }
    (kept, rejected)
}

/// Maps a coverage level to the exclusion rate of the base scheme.
pub fn exclusion_rate_for_coverage(coverage: f64) -> f64 {
    // 1 - 0.95 is not exactly 0.05 in binary; round to clean decimals.
    ((1.0 - coverage) * 1e12).round() / 1e12
}
