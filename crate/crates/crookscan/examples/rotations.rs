//! Normalize a centerline, rotate it about the ostium and undo the rotation.
//!
//!     cargo run --example rotations

use crookscan::geometry::{
    denormalize, distance, normalize, rotate, rotate_inverse, sample_training_rotation, tta_variants,
};
use crookscan::seed;
use crookscan::synthdata::{generate_dataset, GeneratorConfig};

fn main() -> crookscan::Result<()> {
    let cfg = GeneratorConfig {
        n_samples: 4,
        n_positive: 1,
        n_unsure: 1,
        ..GeneratorConfig::default()
    };
    let sample = &generate_dataset(&cfg)?[0];
    let raw = &sample.centerline;
    let ostium = raw.points()[0];
    println!("spacing {:.4} mm, worst step error {:.1e} mm", raw.spacing_mm(), raw.max_spacing_error());

    let unit = normalize(raw)?;
    println!("normalized: ostium at {:?}, max norm {:.3}", unit.points()[0], unit.max_norm());

    let mut rng = seed::rng(3);
    let angles = sample_training_rotation(&mut rng);
    let turned = rotate(&unit, angles)?;
    let back = rotate_inverse(&turned, angles)?;
    let worst = unit
        .points()
        .iter()
        .zip(back.points())
        .map(|(a, b)| distance(a, b))
        .fold(0.0, f64::max);
    println!(
        "rotated by ({:.1}, {:.1}, {:.1}) deg and back: worst drift {worst:.1e}",
        angles[0], angles[1], angles[2]
    );

    let restored = denormalize(&unit, ostium);
    let drift = raw
        .points()
        .iter()
        .zip(restored.points())
        .map(|(a, b)| distance(a, b))
        .fold(0.0, f64::max);
    println!("denormalized drift {drift:.1e} mm");

    for (i, v) in tta_variants(&unit).iter().enumerate() {
        let tip = v.points()[v.points().len() - 1];
        println!("test-time view {i}: tip at ({:.3}, {:.3}, {:.3})", tip[0], tip[1], tip[2]);
    }
    Ok(())
}
