//! Train a small ensemble on a synthetic cohort, save it as a checkpoint,
//! reload it and score held-out centerlines.
//!
//!     cargo run --release --example train_and_predict

use crookscan::eval::auc;
use crookscan::geometry::{normalize, NormalizedCenterline};
use crookscan::io::{read_checkpoint, write_checkpoint};
use crookscan::nn::{train_submodel_with_history, ArchConfig, Ensemble, TrainConfig};
use crookscan::synthdata::{generate_dataset, Annotation, GeneratorConfig};

fn main() -> crookscan::Result<()> {
    let samples = generate_dataset(&GeneratorConfig {
        n_samples: 240,
        n_positive: 40,
        n_unsure: 0,
        ..GeneratorConfig::default()
    })?;
    let (train, test) = samples.split_at(160);

    let data: Vec<(NormalizedCenterline, f64)> = train
        .iter()
        .map(|s| Ok((normalize(&s.centerline)?, f64::from(s.annotation == Annotation::Positive))))
        .collect::<crookscan::Result<_>>()?;
    let arch = ArchConfig {
        channels: 4,
        mlp_hidden: 16,
        ..ArchConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 20,
        ensemble_size: 2,
        ..TrainConfig::default()
    };

    let mut members = Vec::new();
    for m in 0..cfg.ensemble_size {
        let outcome = train_submodel_with_history(&data, &cfg, &arch, m as u64)?;
        let first = outcome.epoch_losses[0];
        let last = outcome.epoch_losses[outcome.epoch_losses.len() - 1];
        println!("member {m}: epoch loss {first:.4} -> {last:.4}");
        members.push(outcome.params);
    }
    let ensemble = Ensemble::new(arch, members)?;

    let path = std::env::temp_dir().join("crookscan-example").join("ensemble.json");
    write_checkpoint(&path, &ensemble)?;
    let reloaded = read_checkpoint(&path)?;
    assert_eq!(reloaded, ensemble);
    println!("checkpoint round trip ok: {}", path.display());

    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for s in test {
        let p = reloaded.predict(&s.centerline)?;
        if s.annotation == Annotation::Positive {
            pos.push(p);
        } else {
            neg.push(p);
        }
    }
    println!("held-out AUC {:.3} ({} positive, {} negative)", auc(&pos, &neg)?, pos.len(), neg.len());
    Ok(())
}
