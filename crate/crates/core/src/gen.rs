// SPDX-License-Identifier: Apache-2.0

//! Seeded random models and images.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::reference::lif::LifParams;
use crate::reference::model::{encoding_acc_scale, Block, HeadSpec, LayerSpec, ModelConfig};
use crate::reference::ssa::{Projection, SsaSpec, DEFAULT_SCALE_SHIFT};
use crate::tensor::{AccTensor, ByteImage, QTensor};

/// Weight scale of every generated layer: int8 values in units of 1/16.
pub const WEIGHT_SCALE_EXP: i8 = -4;
const WEIGHT_RANGE: i8 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SizeClass {
    Tiny,
    Small,
    Paper384,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SizeSpec {
    pub blocks: usize,
    pub dim: usize,
    pub input: [usize; 3],
    /// Output channels of the four tokenizer convolutions.
    pub tokenizer: [usize; 4],
    pub heads: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Tiny, SizeClass::Small, SizeClass::Paper384];

    pub fn spec(self) -> SizeSpec {
        match self {
            SizeClass::Tiny => SizeSpec {
                blocks: 1,
                dim: 16,
                input: [3, 8, 8],
                tokenizer: [8, 8, 16, 16],
                heads: 2,
                hidden: 64,
                classes: 10,
            },
            SizeClass::Small => SizeSpec {
                blocks: 2,
                dim: 32,
                input: [3, 16, 16],
                tokenizer: [16, 16, 32, 32],
                heads: 4,
                hidden: 128,
                classes: 10,
            },
            SizeClass::Paper384 => SizeSpec {
                blocks: 8,
                dim: 384,
                input: [3, 32, 32],
                tokenizer: [48, 96, 192, 384],
                heads: 12,
                hidden: 1536,
                classes: 10,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SizeClass::Tiny => "tiny",
            SizeClass::Small => "small",
            SizeClass::Paper384 => "paper-384",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SizeClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown size class {s:?} (tiny|small|paper-384)")))
    }
}

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn weights(&mut self, shape: &[usize]) -> QTensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-WEIGHT_RANGE..=WEIGHT_RANGE)).collect();
        QTensor::new(shape, data, WEIGHT_SCALE_EXP).expect("valid scale")
    }

    /// Biases in `[-threshold/2, threshold]`, so layers fire at moderate rates.
    fn bias(&mut self, n: usize, scale_exp: i8) -> AccTensor {
        let th = LifParams::for_scale(scale_exp).threshold;
        let data = (0..n).map(|_| self.rng.gen_range(-th / 2..=th)).collect();
        AccTensor::new(&[n], data, scale_exp).expect("shape")
    }

    fn projection(&mut self, d_in: usize, d_out: usize) -> Projection {
        Projection {
            weights: self.weights(&[d_out, d_in]),
            bias: self.bias(d_out, WEIGHT_SCALE_EXP),
            lif: LifParams::for_scale(WEIGHT_SCALE_EXP),
        }
    }

    fn conv(&mut self, in_ch: usize, out_ch: usize, encoding: bool) -> [LayerSpec; 2] {
        let scale = if encoding { encoding_acc_scale(WEIGHT_SCALE_EXP) } else { WEIGHT_SCALE_EXP };
        [
            LayerSpec::ConvBn3x3 {
                in_ch,
                out_ch,
                stride: 1,
                weights: self.weights(&[out_ch, in_ch, 3, 3]),
                bias: self.bias(out_ch, scale),
            },
            LayerSpec::Lif(LifParams::for_scale(scale)),
        ]
    }

    fn linear(&mut self, d_in: usize, d_out: usize) -> [LayerSpec; 2] {
        let p = self.projection(d_in, d_out);
        [LayerSpec::Linear { in_dim: d_in, out_dim: d_out, weights: p.weights, bias: p.bias }, LayerSpec::Lif(p.lif)]
    }
}

/// Random model of the given size class. Same seed, same weights.
pub fn generate(size: SizeClass, seed: u64, time_steps: usize) -> Result<ModelConfig> {
    crate::tensor::check_time_steps(time_steps)?;
    let s = size.spec();
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed) };
    let [c0, c1, c2, c3] = s.tokenizer;
    let mut tokenizer = Vec::new();
    tokenizer.extend(g.conv(s.input[0], c0, true));
    tokenizer.extend(g.conv(c0, c1, false));
    tokenizer.push(LayerSpec::MaxPool2x2);
    tokenizer.extend(g.conv(c1, c2, false));
    tokenizer.extend(g.conv(c2, c3, false));
    tokenizer.push(LayerSpec::MaxPool2x2);
    let d = s.dim;
    let blocks = (0..s.blocks)
        .map(|_| {
            let ssa = SsaSpec {
                dim: d,
                heads: s.heads,
                q: g.projection(d, d),
                k: g.projection(d, d),
                v: g.projection(d, d),
                proj: g.projection(d, d),
                attn_lif: LifParams::for_scale(0),
                scale_shift: DEFAULT_SCALE_SHIFT,
            };
            let mut mlp = Vec::new();
            mlp.extend(g.linear(d, s.hidden));
            mlp.extend(g.linear(s.hidden, d));
            Block {
                attn: LayerSpec::IandResidual { inner: vec![LayerSpec::Ssa(Box::new(ssa))] },
                mlp: LayerSpec::IandResidual { inner: mlp },
            }
        })
        .collect();
    let head =
        HeadSpec { classes: s.classes, weights: g.weights(&[s.classes, d]), bias: g.bias(s.classes, WEIGHT_SCALE_EXP) };
    let cfg = ModelConfig { name: size.name().to_string(), time_steps, input: s.input, tokenizer, blocks, head };
    cfg.validate()?;
    Ok(cfg)
}

/// Uniform random 8-bit image; independent of the model stream for the same seed.
pub fn random_image(shape: [usize; 3], seed: u64) -> ByteImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let [c, h, w] = shape;
    let mut data = vec![0u8; c * h * w];
    rng.fill(data.as_mut_slice());
    ByteImage::new(c, h, w, data).expect("shape")
}
