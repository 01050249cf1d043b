//! Derive an abstention interval from a set of predictions and apply it,
//! with and without the unsure prevalence folded into the positive weight.
//!
//!     cargo run --example abstention

use crookscan::abstention::{apply_rule, compute_rule, exclusion_rate_for_coverage, AbstentionConfig};
use crookscan::seed;
use rand_distr::{Beta, Distribution};

fn main() -> crookscan::Result<()> {
    let mut rng = seed::rng(5);
    let scores = Beta::new(1.0, 8.0).expect("valid shape");
    let predictions: Vec<(usize, f64)> = (0..1000).map(|i| (i, scores.sample(&mut rng))).collect();
    let probabilities: Vec<f64> = predictions.iter().map(|p| p.1).collect();

    for coverage in [1.0, 0.95, 0.90, 0.75] {
        let e = exclusion_rate_for_coverage(coverage);
        for cfg in [AbstentionConfig::base(e), AbstentionConfig::with_unsure_prior(e, 0.0423)] {
            let rule = compute_rule(&probabilities, &cfg)?;
            let (kept, rejected) = apply_rule(&predictions, &rule);
            println!(
                "coverage {coverage:.2} {:<13} percentiles [{:.4}, {:.4}] thresholds [{:.4}, {:.4}] kept {} rejected {}",
                if cfg.use_unsure_prior { "unsure-aware" } else { "base" },
                rule.pmin_percentile,
                rule.pmax_percentile,
                rule.threshold_low,
                rule.threshold_high,
                kept.len(),
                rejected.len()
            );
        }
    }
    Ok(())
}
