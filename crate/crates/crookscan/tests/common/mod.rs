//! Helpers shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use crookscan::geometry::{normalize, NormalizedCenterline};
use crookscan::nn::{bce_with_logit, ModelParams, TensorKind};
use crookscan::synthdata::{generate_dataset, GeneratorConfig, LabeledSample};

pub fn small_dataset(n: usize, n_positive: usize, n_unsure: usize, seed: u64) -> Vec<LabeledSample> {
    generate_dataset(&GeneratorConfig {
        n_samples: n,
        n_positive,
        n_unsure,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

pub fn normalized(sample: &LabeledSample) -> NormalizedCenterline {
    normalize(&sample.centerline).unwrap()
}

/// Straight-line re-implementation of the forward pass, written from the
/// architecture description only: nested loops, explicit zero padding,
/// tensors looked up by name. It shares no code with the library kernels.
pub fn reference_logit(p: &ModelParams, x: &NormalizedCenterline) -> f64 {
    let arch = p.arch();
    let c = arch.channels;
    let k = arch.kernel_size;
    let n = x.points().len();
    let t = |name: &str| p.tensor(name).unwrap_or_else(|| panic!("missing tensor {name}"));

    let w_in = t("input.weight");
    let b_in = t("input.bias");
    let mut h = vec![vec![0.0; n]; c];
    for o in 0..c {
        for (pos, pt) in x.points().iter().enumerate() {
            let mut s = b_in[o];
            for j in 0..3 {
                s += w_in[o * 3 + j] * pt[j];
            }
            h[o][pos] = s;
        }
    }

    for b in 0..arch.n_blocks {
        if arch.dilations.is_empty() {
            continue;
        }
        let mut skip_sum = vec![vec![0.0; n]; c];
        for (i, &d) in arch.dilations.iter().enumerate() {
            let prefix = format!("block{b}.layer{i}");
            let cw = t(&format!("{prefix}.conv.weight"));
            let cb = t(&format!("{prefix}.conv.bias"));
            let sw = t(&format!("{prefix}.skip.weight"));
            let sb = t(&format!("{prefix}.skip.bias"));
            let center = (k as isize - 1) / 2;
            let mut act = vec![vec![0.0; n]; c];
            for o in 0..c {
                for pos in 0..n {
                    let mut z = cb[o];
                    for ic in 0..c {
                        for tap in 0..k {
                            let src = pos as isize + (tap as isize - center) * d as isize;
                            if src >= 0 && (src as usize) < n {
                                z += cw[(o * c + ic) * k + tap] * h[ic][src as usize];
                            }
                        }
                    }
                    act[o][pos] = if z > 0.0 { z } else { 0.0 };
                }
            }
            for o in 0..c {
                for pos in 0..n {
                    let mut s = sb[o];
                    for ic in 0..c {
                        s += sw[o * c + ic] * act[ic][pos];
                    }
                    skip_sum[o][pos] += s;
                }
            }
            for o in 0..c {
                for pos in 0..n {
                    h[o][pos] += act[o][pos];
                }
            }
        }
        h = skip_sum;
    }

    let pooled: Vec<f64> = h.iter().map(|row| row.iter().sum::<f64>() / n as f64).collect();
    let w1 = t("head.hidden.weight");
    let b1 = t("head.hidden.bias");
    let w2 = t("head.output.weight");
    let b2 = t("head.output.bias");
    let mut out = b2[0];
    for j in 0..arch.mlp_hidden {
        let mut z = b1[j];
        for o in 0..c {
            z += w1[j * c + o] * pooled[o];
        }
        out += w2[j] * z.max(0.0);
    }
    out
}

pub fn reference_loss(p: &ModelParams, x: &NormalizedCenterline, target: f64) -> f64 {
    bce_with_logit(reference_logit(p, x), target)
}

/// Outcome of [`gradient_check`].
#[derive(Debug)]
pub struct GradientCheck {
    pub worst_relative_error: f64,
    pub checked: usize,
    /// Draws skipped because the perturbation flipped a ReLU.
    pub skipped_at_kink: usize,
    /// Tensor kinds (layer types) among the checked parameters.
    pub kinds: Vec<TensorKind>,
}

/// Central finite differences (step 1e-4) on `count` random parameters,
/// covering every tensor kind. A parameter whose +-step perturbation
/// changes any ReLU state is not differentiable over that interval; it is
/// skipped and another one is drawn.
pub fn gradient_check(p: &ModelParams, x: &NormalizedCenterline, target: f64, count: usize, seed: u64) -> GradientCheck {
    use crookscan::nn::{sigmoid, to_input, Workspace};
    use rand::seq::SliceRandom;
    use rand::Rng;

    let step = 1e-4;
    let input = to_input(x);
    let mut ws = Workspace::new(p.arch());
    let z = ws.forward_logit(p, &input).unwrap();
    let pattern = ws.relu_pattern();
    let mut grad = vec![0.0; p.len()];
    ws.backward_from_logit(p, sigmoid(z) - target, &mut grad);

    let mut rng = crookscan::seed::rng(seed);
    let tensors = p.tensors();
    let first: Vec<usize> = tensors.iter().map(|t| rng.gen_range(t.range.clone())).collect();
    let mut rest: Vec<usize> = (0..p.len()).filter(|i| !first.contains(i)).collect();
    rest.shuffle(&mut rng);

    let mut probe = p.clone();
    let mut loss_at = |i: usize, v: f64| {
        probe.values_mut()[i] = v;
        let z = ws.forward_logit(&probe, &input).unwrap();
        probe.values_mut()[i] = p.values()[i];
        (bce_with_logit(z, target), ws.relu_pattern() == pattern)
    };
    let mut out = GradientCheck {
        worst_relative_error: 0.0,
        checked: 0,
        skipped_at_kink: 0,
        kinds: Vec::new(),
    };
    let mut kinds: Vec<TensorKind> = Vec::new();
    for t in &tensors {
        if !kinds.contains(&t.kind) {
            kinds.push(t.kind);
        }
    }
    let mut touched = vec![false; kinds.len()];
    for i in first.into_iter().chain(rest) {
        if out.checked >= count && touched.iter().all(|t| *t) {
            break;
        }
        let kind = tensors.iter().find(|t| t.range.contains(&i)).unwrap().kind;
        let k = kinds.iter().position(|x| *x == kind).unwrap();
        if out.checked >= count && touched[k] {
            continue;
        }
        let v = p.values()[i];
        let (up, smooth_up) = loss_at(i, v + step);
        let (down, smooth_down) = loss_at(i, v - step);
        if !(smooth_up && smooth_down) {
            out.skipped_at_kink += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * step);
        let analytic = grad[i];
        let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-7);
        out.worst_relative_error = out.worst_relative_error.max(rel);
        out.checked += 1;
        touched[k] = true;
    }
    out.kinds = kinds.into_iter().zip(touched).filter(|(_, t)| *t).map(|(k, _)| k).collect();
    out
}
