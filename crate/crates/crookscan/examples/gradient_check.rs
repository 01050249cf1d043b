//! Compare backpropagated gradients with central differences on a small
//! network.
//!
//!     cargo run --example gradient_check

use crookscan::geometry::normalize;
use crookscan::nn::{backward, bce_loss, to_input, ArchConfig, ModelParams, Workspace};
use crookscan::seed;
use crookscan::synthdata::{generate_dataset, GeneratorConfig};

fn main() -> crookscan::Result<()> {
    let arch = ArchConfig {
        channels: 4,
        mlp_hidden: 8,
        dilations: vec![1, 4, 16],
        ..ArchConfig::default()
    };
    let cfg = GeneratorConfig {
        n_samples: 4,
        n_positive: 1,
        n_unsure: 1,
        ..GeneratorConfig::default()
    };
    let x = normalize(&generate_dataset(&cfg)?[0].centerline)?;
    let params = ModelParams::init(&arch, &mut seed::rng(1))?;
    let target = 1.0;
    let (loss, grad) = backward(&params, &x, target)?;
    println!("{} parameters, loss {loss:.6}", params.len());

    let input = to_input(&x);
    let mut ws = Workspace::new(&arch);
    // loss and ReLU on/off pattern at a perturbed parameter vector
    let mut probe = |i: usize, delta: f64| -> crookscan::Result<(f64, Vec<bool>)> {
        let mut p = params.clone();
        p.values_mut()[i] += delta;
        let loss = bce_loss(ws.forward(&p, &input)?, target);
        Ok((loss, ws.relu_pattern()))
    };

    let step = 1e-6;
    for info in params.tensors() {
        // first entry of every tensor
        let i = info.range.start;
        let (up, up_pattern) = probe(i, step)?;
        let (down, down_pattern) = probe(i, -step)?;
        let numeric = (up - down) / (2.0 * step);
        let analytic = grad.values()[i];
        let note = if up_pattern != down_pattern { "  (straddles a ReLU kink)" } else { "" };
        println!("{:<26} analytic {analytic:+.6e} numeric {numeric:+.6e}{note}", info.name);
    }
    Ok(())
}
