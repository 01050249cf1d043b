//! Build a repeated stratified CV plan and compare two per-repetition score
//! series with a paired t-test.
//!
//!     cargo run --example cross_validation

use crookscan::eval::{make_cv_plan, paired_ttest, significance_stars, CvConfig};
use crookscan::synthdata::{generate_dataset, Annotation, GeneratorConfig};

fn main() -> crookscan::Result<()> {
    let samples = generate_dataset(&GeneratorConfig::default())?;
    let plan = make_cv_plan(
        &samples,
        &CvConfig {
            folds: 5,
            repetitions: 3,
            seed: 1,
        },
    )?;
    for r in 0..plan.repetitions() {
        let sizes: Vec<String> = (0..plan.folds())
            .map(|f| {
                let test = plan.test_indices(r, f);
                let count = |a| test.iter().filter(|&&i| samples[i].annotation == a).count();
                format!(
                    "{}({}+/{}?)",
                    test.len(),
                    count(Annotation::Positive),
                    count(Annotation::Unsure)
                )
            })
            .collect();
        println!("repetition {r}: test folds {}", sizes.join(" "));
    }

    let a = [0.912, 0.905, 0.921, 0.917, 0.909, 0.915];
    let b = [0.901, 0.899, 0.910, 0.905, 0.903, 0.902];
    let t = paired_ttest(&a, &b)?;
    println!(
        "paired t = {:.3}, df = {}, p = {:.5} {}",
        t.t_statistic,
        t.degrees_of_freedom,
        t.p_value,
        significance_stars(t.p_value)
    );
    Ok(())
}
