//! Generate a synthetic cohort, write it to disk, read it back and score it
//! with the hand-made crook heuristic.
//!
//!     cargo run --example generate_dataset -- [seed]

use crookscan::eval::auc;
use crookscan::io::{read_dataset_with_header, write_dataset};
use crookscan::synthdata::{crook_score, generate_dataset, Annotation, GeneratorConfig};

fn main() -> crookscan::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = GeneratorConfig {
        seed,
        ..GeneratorConfig::default()
    };
    let samples = generate_dataset(&cfg)?;

    let dir = std::env::temp_dir().join("crookscan-example");
    let path = dir.join(format!("cohort-{seed}.jsonl"));
    write_dataset(&path, &samples, Some(&cfg))?;
    let (header, back) = read_dataset_with_header(&path)?;
    assert_eq!(back, samples);
    println!("wrote {} samples to {} (format {})", back.len(), path.display(), header.format_version);

    for a in [Annotation::Negative, Annotation::Unsure, Annotation::Positive] {
        let scores: Vec<f64> = samples
            .iter()
            .filter(|s| s.annotation == a)
            .map(|s| crook_score(&s.centerline))
            .collect();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        println!("{:>8}: {:3} samples, mean crook score {mean:.3}", a.as_str(), scores.len());
    }

    let score_of = |a| {
        samples
            .iter()
            .filter(|s| s.annotation == a)
            .map(|s| crook_score(&s.centerline))
            .collect::<Vec<_>>()
    };
    let sure = auc(&score_of(Annotation::Positive), &score_of(Annotation::Negative))?;
    println!("heuristic AUC on sure labels: {sure:.3}");
    Ok(())
}
