//! Show how each strategy turns unsure annotations into training targets.
//!
//!     cargo run --example uncertain_labels

use crookscan::seed;
use crookscan::synthdata::{generate_dataset, Annotation, GeneratorConfig};
use crookscan::uncertainty::{apply_strategy, Strategy};

fn main() -> crookscan::Result<()> {
    let samples = generate_dataset(&GeneratorConfig {
        n_samples: 40,
        n_positive: 4,
        n_unsure: 4,
        ..GeneratorConfig::default()
    })?;
    let unsure: Vec<u64> = samples
        .iter()
        .filter(|s| s.annotation == Annotation::Unsure)
        .map(|s| s.id)
        .collect();
    println!("unsure ids {unsure:?}");

    for strategy in Strategy::ALL {
        let assignment = apply_strategy(&samples, strategy, 5, &mut seed::rng(9));
        println!("{}:", strategy.label());
        for (m, targets) in assignment.members.iter().enumerate() {
            let shown: Vec<String> = unsure
                .iter()
                .map(|id| match targets.iter().find(|(i, _)| i == id) {
                    Some((_, t)) => format!("{t:.1}"),
                    None => "-".into(),
                })
                .collect();
            println!("  member {m}: {} samples, unsure targets [{}]", targets.len(), shown.join(" "));
        }
    }
    Ok(())
}
