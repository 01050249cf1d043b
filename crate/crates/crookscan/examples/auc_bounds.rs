//! Best and worst AUC over every labeling of the unsure samples, next to the
//! AUC on sure samples only.
//!
//!     cargo run --example auc_bounds

use crookscan::eval::{auc_bounds, sure_auc, ScoredSample};
use crookscan::synthdata::Annotation;

fn main() -> crookscan::Result<()> {
    let table = [
        (0.92, Annotation::Positive),
        (0.81, Annotation::Unsure),
        (0.74, Annotation::Positive),
        (0.66, Annotation::Negative),
        (0.52, Annotation::Unsure),
        (0.40, Annotation::Negative),
        (0.40, Annotation::Positive),
        (0.21, Annotation::Unsure),
        (0.10, Annotation::Negative),
        (0.05, Annotation::Negative),
    ];
    let mut samples: Vec<ScoredSample> = table
        .iter()
        .enumerate()
        .map(|(i, &(probability, annotation))| ScoredSample {
            id: i as u64,
            probability,
            annotation,
            kept: true,
        })
        .collect();

    let bounds = auc_bounds(&samples)?;
    println!(
        "all kept:        sure {:.4}, worst {:.4}, best {:.4}",
        sure_auc(&samples)?,
        bounds.worst,
        bounds.best
    );

    // rejecting the middle of the score range narrows the bounds
    for s in samples.iter_mut().filter(|s| (0.45..=0.7).contains(&s.probability)) {
        s.kept = false;
    }
    let bounds = auc_bounds(&samples)?;
    println!(
        "middle rejected: sure {:.4}, worst {:.4}, best {:.4}",
        sure_auc(&samples)?,
        bounds.worst,
        bounds.best
    );
    Ok(())
}
