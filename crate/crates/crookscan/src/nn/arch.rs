use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::N_POINTS;

/// Network shape. One block is a stack of dilated convolutions with
/// residual connections whose per-layer skip outputs are summed; the sum
/// feeds the next block. A block with no dilations passes its input
/// through unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub channels: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub n_blocks: usize,
    pub mlp_hidden: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            kernel_size: 3,
            dilations: vec![1, 2, 4, 8, 16, 32, 64],
            n_blocks: 2,
            mlp_hidden: 64,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.kernel_size == 0 || self.n_blocks == 0 || self.mlp_hidden == 0 {
            return Err(Error::Config(format!("all architecture sizes must be positive: {self:?}")));
        }
        if self.dilations.contains(&0) {
            return Err(Error::Config("dilations must be positive".into()));
        }
        Ok(())
    }

    /// Input span seen by one output position of a single block.
    pub fn block_receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * self.dilations.iter().sum::<usize>()
    }

    /// Tap offsets of a "same"-padded kernel with the given dilation.
    pub(crate) fn tap_offsets(&self, dilation: usize) -> impl Iterator<Item = isize> {
        let center = ((self.kernel_size - 1) / 2) as isize;
        (0..self.kernel_size as isize).map(move |k| (k - center) * dilation as isize)
    }

    pub fn n_params(&self) -> usize {
        Layout::new(self).total
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerSlots {
    pub dilation: usize,
    pub conv_w: usize,
    pub conv_b: usize,
    pub skip_w: usize,
    pub skip_b: usize,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub channels: usize,
    pub kernel: usize,
    pub hidden: usize,
    pub in_w: usize,
    pub in_b: usize,
    pub blocks: Vec<Vec<LayerSlots>>,
    pub head_w1: usize,
    pub head_b1: usize,
    pub head_w2: usize,
    pub head_b2: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(arch: &ArchConfig) -> Self {
        let c = arch.channels;
        let k = arch.kernel_size;
        let h = arch.mlp_hidden;
        let mut next = 0;
        let mut take = |n: usize| {
            let at = next;
            next += n;
            at
        };
        let in_w = take(c * 3);
        let in_b = take(c);
        let blocks = (0..arch.n_blocks)
            .map(|_| {
                arch.dilations
                    .iter()
                    .map(|&dilation| LayerSlots {
                        dilation,
                        conv_w: take(c * c * k),
                        conv_b: take(c),
                        skip_w: take(c * c),
                        skip_b: take(c),
                    })
                    .collect()
            })
            .collect();
        let head_w1 = take(h * c);
        let head_b1 = take(h);
        let head_w2 = take(h);
        let head_b2 = take(1);
        Self {
            channels: c,
            kernel: k,
            hidden: h,
            in_w,
            in_b,
            blocks,
            head_w1,
            head_b1,
            head_w2,
            head_b2,
            total: next,
        }
    }
}

/// Which kind of tensor a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensorKind {
    InputWeight,
    InputBias,
    ConvWeight,
    ConvBias,
    SkipWeight,
    SkipBias,
    HiddenWeight,
    HiddenBias,
    OutputWeight,
    OutputBias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorInfo {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub range: Range<usize>,
}

/// All trainable values of one sub-model, stored flat. The same type holds
/// gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: ArchConfig,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            arch: arch.clone(),
            values: vec![0.0; arch.n_params()],
        })
    }

    /// Fan-in scaled uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let c = arch.channels as f64;
        for t in p.tensors() {
            let fan_in = match t.kind {
                TensorKind::InputWeight => 3.0,
                TensorKind::ConvWeight => c * arch.kernel_size as f64,
                TensorKind::SkipWeight | TensorKind::HiddenWeight => c,
                TensorKind::OutputWeight => arch.mlp_hidden as f64,
                _ => continue,
            };
            let bound = 1.0 / fan_in.sqrt();
            for v in &mut p.values[t.range] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn from_values(arch: &ArchConfig, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let expected = arch.n_params();
        if values.len() != expected {
            return Err(Error::Structural(format!(
                "expected {expected} parameters, got {}",
                values.len()
            )));
        }
        Ok(Self {
            arch: arch.clone(),
            values,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.arch)
    }

    /// Named tensors in storage order.
    pub fn tensors(&self) -> Vec<TensorInfo> {
        let l = self.layout();
        let (c, k, h) = (l.channels, l.kernel, l.hidden);
        let mut out = Vec::new();
        let mut push = |name: String, kind, shape: Vec<usize>, at: usize| {
            let n: usize = shape.iter().product();
            out.push(TensorInfo {
                name,
                kind,
                shape,
                range: at..at + n,
            });
        };
        push("input.weight".into(), TensorKind::InputWeight, vec![c, 3], l.in_w);
        push("input.bias".into(), TensorKind::InputBias, vec![c], l.in_b);
        for (b, block) in l.blocks.iter().enumerate() {
            for (i, s) in block.iter().enumerate() {
                let p = format!("block{b}.layer{i}");
                push(format!("{p}.conv.weight"), TensorKind::ConvWeight, vec![c, c, k], s.conv_w);
                push(format!("{p}.conv.bias"), TensorKind::ConvBias, vec![c], s.conv_b);
                push(format!("{p}.skip.weight"), TensorKind::SkipWeight, vec![c, c], s.skip_w);
                push(format!("{p}.skip.bias"), TensorKind::SkipBias, vec![c], s.skip_b);
            }
        }
        push("head.hidden.weight".into(), TensorKind::HiddenWeight, vec![h, c], l.head_w1);
        push("head.hidden.bias".into(), TensorKind::HiddenBias, vec![h], l.head_b1);
        push("head.output.weight".into(), TensorKind::OutputWeight, vec![h], l.head_w2);
        push("head.output.bias".into(), TensorKind::OutputBias, vec![1], l.head_b2);
        out
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensors()
            .into_iter()
            .find(|t| t.name == name)
            .map(|t| &self.values[t.range])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.tensors().into_iter().find(|t| t.name == name)?.range;
        Some(&mut self.values[range])
    }

    /// Index of the output bias in the flat vector.
    pub fn output_bias_index(&self) -> usize {
        self.layout().head_b2
    }

}

/// Length of every channel buffer.
pub(crate) const SEQ: usize = N_POINTS;
