// SPDX-License-Identifier: Apache-2.0

//! TOML model description. Layers refer to tensors in a SIAF weight file by name.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::accel::AccelConfig;
use crate::error::{Error, Result};
use crate::memory::{EnergyModel, SramBudget};
use crate::reference::lif::LifParams;
use crate::reference::model::{Block, HeadSpec, LayerSpec, ModelConfig};
use crate::reference::ssa::{Projection, SsaSpec, DEFAULT_SCALE_SHIFT};
use crate::siaf::{StoredTensor, TensorFile};

fn one() -> usize {
    1
}

fn default_shift() -> u32 {
    DEFAULT_SCALE_SHIFT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionDef {
    pub weights: String,
    pub bias: String,
    pub lif: LifParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerDef {
    Conv3x3 {
        in_ch: usize,
        out_ch: usize,
        #[serde(default = "one")]
        stride: usize,
        weights: String,
        bias: String,
    },
    Conv1x1 {
        in_ch: usize,
        out_ch: usize,
        weights: String,
        bias: String,
    },
    Linear {
        in_dim: usize,
        out_dim: usize,
        weights: String,
        bias: String,
    },
    Maxpool,
    Lif(LifParams),
    Iand {
        inner: Vec<LayerDef>,
    },
    Ssa {
        dim: usize,
        heads: usize,
        #[serde(default = "default_shift")]
        scale_shift: u32,
        q: ProjectionDef,
        k: ProjectionDef,
        v: ProjectionDef,
        proj: ProjectionDef,
        attn_lif: LifParams,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDef {
    pub attn: LayerDef,
    pub mlp: LayerDef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadDef {
    pub classes: usize,
    pub weights: String,
    pub bias: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub name: String,
    pub time_steps: usize,
    /// `[channels, height, width]`.
    pub input: [usize; 3],
    pub tokenizer: Vec<LayerDef>,
    #[serde(default)]
    pub blocks: Vec<BlockDef>,
    pub head: HeadDef,
    #[serde(default)]
    pub accel: AccelConfig,
    #[serde(default)]
    pub budget: SramBudget,
    #[serde(default)]
    pub energy: EnergyModel,
}

struct Resolver<'a> {
    file: &'a TensorFile,
}

impl Resolver<'_> {
    fn q(&self, name: &str) -> Result<crate::tensor::QTensor> {
        match self.file.get(name) {
            Some(StoredTensor::Int8(q)) => Ok(q.clone()),
            Some(_) => Err(Error::Config(format!("tensor {name:?} is not int8"))),
            None => Err(Error::Config(format!("tensor {name:?} not in weight file"))),
        }
    }

    fn acc(&self, name: &str) -> Result<crate::tensor::AccTensor> {
        match self.file.get(name) {
            Some(StoredTensor::Int32(a)) => Ok(a.clone()),
            Some(_) => Err(Error::Config(format!("tensor {name:?} is not int32"))),
            None => Err(Error::Config(format!("tensor {name:?} not in weight file"))),
        }
    }

    fn proj(&self, p: &ProjectionDef) -> Result<Projection> {
        Ok(Projection { weights: self.q(&p.weights)?, bias: self.acc(&p.bias)?, lif: p.lif })
    }

    fn layer(&self, l: &LayerDef) -> Result<LayerSpec> {
        Ok(match l {
            LayerDef::Conv3x3 { in_ch, out_ch, stride, weights, bias } => LayerSpec::ConvBn3x3 {
                in_ch: *in_ch,
                out_ch: *out_ch,
                stride: *stride,
                weights: self.q(weights)?,
                bias: self.acc(bias)?,
            },
            LayerDef::Conv1x1 { in_ch, out_ch, weights, bias } => LayerSpec::ConvBn1x1 {
                in_ch: *in_ch,
                out_ch: *out_ch,
                weights: self.q(weights)?,
                bias: self.acc(bias)?,
            },
            LayerDef::Linear { in_dim, out_dim, weights, bias } => LayerSpec::Linear {
                in_dim: *in_dim,
                out_dim: *out_dim,
                weights: self.q(weights)?,
                bias: self.acc(bias)?,
            },
            LayerDef::Maxpool => LayerSpec::MaxPool2x2,
            LayerDef::Lif(p) => LayerSpec::Lif(*p),
            LayerDef::Iand { inner } => {
                LayerSpec::IandResidual { inner: inner.iter().map(|l| self.layer(l)).collect::<Result<_>>()? }
            }
            LayerDef::Ssa { dim, heads, scale_shift, q, k, v, proj, attn_lif } => LayerSpec::Ssa(Box::new(SsaSpec {
                dim: *dim,
                heads: *heads,
                q: self.proj(q)?,
                k: self.proj(k)?,
                v: self.proj(v)?,
                proj: self.proj(proj)?,
                attn_lif: *attn_lif,
                scale_shift: *scale_shift,
            })),
        })
    }
}

struct Writer {
    file: TensorFile,
}

impl Writer {
    fn put(&mut self, name: String, t: StoredTensor) -> String {
        self.file.insert(name.clone(), t);
        name
    }

    fn proj(&mut self, prefix: &str, p: &Projection) -> ProjectionDef {
        ProjectionDef {
            weights: self.put(format!("{prefix}.weight"), StoredTensor::Int8(p.weights.clone())),
            bias: self.put(format!("{prefix}.bias"), StoredTensor::Int32(p.bias.clone())),
            lif: p.lif,
        }
    }

    fn layer(&mut self, label: &str, l: &LayerSpec) -> LayerDef {
        let w =
            |s: &mut Self, x: &crate::tensor::QTensor| s.put(format!("{label}.weight"), StoredTensor::Int8(x.clone()));
        let b =
            |s: &mut Self, x: &crate::tensor::AccTensor| s.put(format!("{label}.bias"), StoredTensor::Int32(x.clone()));
        match l {
            LayerSpec::ConvBn3x3 { in_ch, out_ch, stride, weights, bias } => LayerDef::Conv3x3 {
                in_ch: *in_ch,
                out_ch: *out_ch,
                stride: *stride,
                weights: w(self, weights),
                bias: b(self, bias),
            },
            LayerSpec::ConvBn1x1 { in_ch, out_ch, weights, bias } => {
                LayerDef::Conv1x1 { in_ch: *in_ch, out_ch: *out_ch, weights: w(self, weights), bias: b(self, bias) }
            }
            LayerSpec::Linear { in_dim, out_dim, weights, bias } => {
                LayerDef::Linear { in_dim: *in_dim, out_dim: *out_dim, weights: w(self, weights), bias: b(self, bias) }
            }
            LayerSpec::MaxPool2x2 => LayerDef::Maxpool,
            LayerSpec::Lif(p) => LayerDef::Lif(*p),
            LayerSpec::IandResidual { inner } => LayerDef::Iand { inner: self.layers(label, inner) },
            LayerSpec::Ssa(s) => LayerDef::Ssa {
                dim: s.dim,
                heads: s.heads,
                scale_shift: s.scale_shift,
                q: self.proj(&format!("{label}.q"), &s.q),
                k: self.proj(&format!("{label}.k"), &s.k),
                v: self.proj(&format!("{label}.v"), &s.v),
                proj: self.proj(&format!("{label}.proj"), &s.proj),
                attn_lif: s.attn_lif,
            },
        }
    }

    fn layers(&mut self, prefix: &str, ls: &[LayerSpec]) -> Vec<LayerDef> {
        ls.iter().enumerate().map(|(i, l)| self.layer(&format!("{prefix}.{i}.{}", l.kind()), l)).collect()
    }
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().replace('\n', " "),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    /// Resolves tensor names against `weights` and validates the model.
    pub fn build_model(&self, weights: &TensorFile) -> Result<ModelConfig> {
        let r = Resolver { file: weights };
        let cfg = ModelConfig {
            name: self.name.clone(),
            time_steps: self.time_steps,
            input: self.input,
            tokenizer: self.tokenizer.iter().map(|l| r.layer(l)).collect::<Result<_>>()?,
            blocks: self
                .blocks
                .iter()
                .map(|b| Ok(Block { attn: r.layer(&b.attn)?, mlp: r.layer(&b.mlp)? }))
                .collect::<Result<_>>()?,
            head: HeadSpec {
                classes: self.head.classes,
                weights: r.q(&self.head.weights)?,
                bias: r.acc(&self.head.bias)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Splits a model into a config (default hardware sections) and its tensors.
    pub fn from_model(cfg: &ModelConfig) -> (ConfigFile, TensorFile) {
        let mut w = Writer { file: TensorFile::default() };
        let tokenizer = w.layers("tok", &cfg.tokenizer);
        let blocks = cfg
            .blocks
            .iter()
            .enumerate()
            .map(|(b, blk)| BlockDef {
                attn: w.layer(&format!("block{b}.attn.0.iand"), &blk.attn),
                mlp: w.layer(&format!("block{b}.mlp.0.iand"), &blk.mlp),
            })
            .collect();
        let head = HeadDef {
            classes: cfg.head.classes,
            weights: w.put("head.weight".into(), StoredTensor::Int8(cfg.head.weights.clone())),
            bias: w.put("head.bias".into(), StoredTensor::Int32(cfg.head.bias.clone())),
        };
        let file = ConfigFile {
            name: cfg.name.clone(),
            time_steps: cfg.time_steps,
            input: cfg.input,
            tokenizer,
            blocks,
            head,
            accel: AccelConfig::default(),
            budget: SramBudget::default(),
            energy: EnergyModel::default(),
        };
        (file, w.file)
    }
}
