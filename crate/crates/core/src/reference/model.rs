// SPDX-License-Identifier: Apache-2.0

//! Model description and the layer-by-layer golden forward pass.

use crate::error::{add_i32, Error, Result};
use crate::reference::layers::{
    conv3x3_core, conv3x3_out_dim, head_core, linear_core, maxpool2x2, to_tokens, PIXEL_SCALE_EXP,
};
use crate::reference::lif::{lif_seq, LifParams};
use crate::reference::ssa::{ssa_core, SsaOutput, SsaSpec};
use crate::tensor::{check_time_steps, AccTensor, ByteImage, QTensor, SpikeTensor};

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    ConvBn3x3 { in_ch: usize, out_ch: usize, stride: usize, weights: QTensor, bias: AccTensor },
    ConvBn1x1 { in_ch: usize, out_ch: usize, weights: QTensor, bias: AccTensor },
    Linear { in_dim: usize, out_dim: usize, weights: QTensor, bias: AccTensor },
    MaxPool2x2,
    Lif(LifParams),
    IandResidual { inner: Vec<LayerSpec> },
    Ssa(Box<SsaSpec>),
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::ConvBn3x3 { .. } => "conv3x3",
            LayerSpec::ConvBn1x1 { .. } => "conv1x1",
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::MaxPool2x2 => "maxpool",
            LayerSpec::Lif(_) => "lif",
            LayerSpec::IandResidual { .. } => "iand",
            LayerSpec::Ssa(_) => "ssa",
        }
    }

    /// Weight words (int8 elements) held by this layer, nested layers included.
    pub fn weight_words(&self) -> usize {
        match self {
            LayerSpec::ConvBn3x3 { weights, .. }
            | LayerSpec::ConvBn1x1 { weights, .. }
            | LayerSpec::Linear { weights, .. } => weights.len(),
            LayerSpec::IandResidual { inner } => inner.iter().map(|l| l.weight_words()).sum(),
            LayerSpec::Ssa(s) => s.q.weights.len() + s.k.weights.len() + s.v.weights.len() + s.proj.weights.len(),
            LayerSpec::MaxPool2x2 | LayerSpec::Lif(_) => 0,
        }
    }

    pub(crate) fn weights_mut(&mut self) -> Option<&mut QTensor> {
        match self {
            LayerSpec::ConvBn3x3 { weights, .. }
            | LayerSpec::ConvBn1x1 { weights, .. }
            | LayerSpec::Linear { weights, .. } => Some(weights),
            LayerSpec::Ssa(s) => Some(&mut s.q.weights),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadSpec {
    pub classes: usize,
    pub weights: QTensor,
    pub bias: AccTensor,
}

/// One transformer block: attention branch then MLP branch, each an
/// [`LayerSpec::IandResidual`].
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub attn: LayerSpec,
    pub mlp: LayerSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub name: String,
    pub time_steps: usize,
    /// `[channels, height, width]` of the 8-bit input image.
    pub input: [usize; 3],
    pub tokenizer: Vec<LayerSpec>,
    pub blocks: Vec<Block>,
    pub head: HeadSpec,
}

/// Symbolic activation shape used for validation and planning.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActShape {
    Image { c: usize, h: usize, w: usize },
    Map { c: usize, h: usize, w: usize, currents: bool },
    Tokens { n: usize, d: usize, currents: bool },
}

impl ActShape {
    fn is_currents(&self) -> bool {
        matches!(self, ActShape::Map { currents: true, .. } | ActShape::Tokens { currents: true, .. })
    }

    fn with_currents(self, currents: bool) -> Self {
        match self {
            ActShape::Map { c, h, w, .. } => ActShape::Map { c, h, w, currents },
            ActShape::Tokens { n, d, .. } => ActShape::Tokens { n, d, currents },
            s => s,
        }
    }
}

fn cfg_err(label: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{label}: {msg}"))
}

fn check_wb(label: &str, w: &QTensor, b: &AccTensor, out: usize, inp: usize, k: usize) -> Result<()> {
    let ws = w.shape();
    let ok = match k {
        3 => ws == [out, inp, 3, 3],
        _ => ws == [out, inp] || ws == [out, inp, 1, 1],
    };
    if !ok || b.shape() != [out] {
        return Err(cfg_err(label, format!("weights {ws:?} / bias {:?} do not match {out}x{inp}", b.shape())));
    }
    Ok(())
}

/// Infers the output shape of one layer, checking channel chaining.
pub fn infer_layer(layer: &LayerSpec, input: ActShape, label: &str) -> Result<ActShape> {
    use ActShape::*;
    match (layer, input) {
        (
            LayerSpec::ConvBn3x3 { in_ch, out_ch, stride, weights, bias },
            Image { c, h, w } | Map { c, h, w, currents: false },
        ) => {
            if *in_ch != c {
                return Err(cfg_err(label, format!("in_ch {in_ch} but input has {c} channels")));
            }
            if *stride == 0 {
                return Err(cfg_err(label, "stride 0"));
            }
            check_wb(label, weights, bias, *out_ch, *in_ch, 3)?;
            Ok(Map { c: *out_ch, h: conv3x3_out_dim(h, *stride), w: conv3x3_out_dim(w, *stride), currents: true })
        }
        (LayerSpec::ConvBn1x1 { in_ch, out_ch, weights, bias }, Map { c, h, w, currents: false }) => {
            if *in_ch != c {
                return Err(cfg_err(label, format!("in_ch {in_ch} but input has {c} channels")));
            }
            check_wb(label, weights, bias, *out_ch, *in_ch, 1)?;
            Ok(Map { c: *out_ch, h, w, currents: true })
        }
        (LayerSpec::Linear { in_dim, out_dim, weights, bias }, Tokens { n, d, currents: false }) => {
            if *in_dim != d {
                return Err(cfg_err(label, format!("in_dim {in_dim} but tokens have {d} features")));
            }
            check_wb(label, weights, bias, *out_dim, *in_dim, 1)?;
            Ok(Tokens { n, d: *out_dim, currents: true })
        }
        (LayerSpec::Lif(p), s) if s.is_currents() => {
            p.validate().map_err(|e| cfg_err(label, e))?;
            Ok(s.with_currents(false))
        }
        (LayerSpec::MaxPool2x2, Map { c, h, w, currents: false }) => {
            if h % 2 != 0 || w % 2 != 0 {
                return Err(cfg_err(label, format!("maxpool on odd size {h}x{w}")));
            }
            Ok(Map { c, h: h / 2, w: w / 2, currents: false })
        }
        (LayerSpec::IandResidual { inner }, s @ (Map { currents: false, .. } | Tokens { currents: false, .. })) => {
            let mut cur = s;
            for (i, l) in inner.iter().enumerate() {
                cur = infer_layer(l, cur, &format!("{label}.{i}.{}", l.kind()))?;
            }
            if cur != s {
                return Err(cfg_err(label, format!("residual branch maps {s:?} to {cur:?}")));
            }
            Ok(s)
        }
        (LayerSpec::Ssa(spec), Tokens { n, d, currents: false }) => {
            spec.validate().map_err(|e| cfg_err(label, e))?;
            if spec.dim != d {
                return Err(cfg_err(label, format!("ssa dim {} but tokens have {d} features", spec.dim)));
            }
            Ok(Tokens { n, d, currents: false })
        }
        (l, s) => Err(cfg_err(label, format!("{} cannot consume {s:?}", l.kind()))),
    }
}

impl ModelConfig {
    /// Checks shapes end to end and returns the token shape fed to the head.
    pub fn validate(&self) -> Result<ActShape> {
        check_time_steps(self.time_steps).map_err(|e| Error::Config(e.to_string()))?;
        if !matches!(self.tokenizer.first(), Some(LayerSpec::ConvBn3x3 { .. })) {
            return Err(Error::Config("first tokenizer layer must be the 3x3 encoding convolution".into()));
        }
        let [c, h, w] = self.input;
        let mut shape = ActShape::Image { c, h, w };
        for (i, l) in self.tokenizer.iter().enumerate() {
            shape = infer_layer(l, shape, &format!("tok.{i}.{}", l.kind()))?;
        }
        shape = match shape {
            ActShape::Map { c, h, w, currents: false } => ActShape::Tokens { n: h * w, d: c, currents: false },
            s => return Err(Error::Config(format!("tokenizer must end in spikes, got {s:?}"))),
        };
        for (b, block) in self.blocks.iter().enumerate() {
            for (branch, layer) in [("attn", &block.attn), ("mlp", &block.mlp)] {
                if !matches!(layer, LayerSpec::IandResidual { .. }) {
                    return Err(Error::Config(format!("block{b}.{branch} must be a residual")));
                }
                shape = infer_layer(layer, shape, &format!("block{b}.{branch}.0.iand"))?;
            }
        }
        let ActShape::Tokens { d, .. } = shape else { unreachable!() };
        if self.head.weights.shape() != [self.head.classes, d] || self.head.bias.shape() != [self.head.classes] {
            return Err(Error::Config(format!(
                "head weights {:?} do not match {} classes x {d}",
                self.head.weights.shape(),
                self.head.classes
            )));
        }
        Ok(shape)
    }

    /// Total int8 weight words across all layers, head included.
    pub fn weight_words(&self) -> usize {
        self.tokenizer.iter().map(LayerSpec::weight_words).sum::<usize>()
            + self.blocks.iter().map(|b| b.attn.weight_words() + b.mlp.weight_words()).sum::<usize>()
            + self.head.weights.len()
    }

    /// Visits every layer list with its label prefix, in execution order.
    pub fn sections(&self) -> Vec<(String, &LayerSpec)> {
        let mut out: Vec<(String, &LayerSpec)> =
            self.tokenizer.iter().enumerate().map(|(i, l)| (format!("tok.{i}.{}", l.kind()), l)).collect();
        for (b, block) in self.blocks.iter().enumerate() {
            out.push((format!("block{b}.attn.0.iand"), &block.attn));
            out.push((format!("block{b}.mlp.0.iand"), &block.mlp));
        }
        out
    }

    /// Mutable access to the weights of the layer labelled `label`.
    pub fn weights_mut(&mut self, label: &str) -> Option<&mut QTensor> {
        fn find<'a>(layers: &'a mut [LayerSpec], prefix: &str, label: &str) -> Option<&'a mut QTensor> {
            for (i, l) in layers.iter_mut().enumerate() {
                let name = format!("{prefix}.{i}.{}", l.kind());
                if let LayerSpec::IandResidual { inner } = l {
                    if let Some(w) = find(inner, &name, label) {
                        return Some(w);
                    }
                } else if name == label || (matches!(l, LayerSpec::Ssa(_)) && label.starts_with(&name)) {
                    return l.weights_mut();
                }
            }
            None
        }
        if label == "head" {
            return Some(&mut self.head.weights);
        }
        if let Some(w) = find(&mut self.tokenizer, "tok", label) {
            return Some(w);
        }
        for (b, block) in self.blocks.iter_mut().enumerate() {
            if let Some(w) = find(std::slice::from_mut(&mut block.attn), &format!("block{b}.attn"), label) {
                return Some(w);
            }
            if let Some(w) = find(std::slice::from_mut(&mut block.mlp), &format!("block{b}.mlp"), label) {
                return Some(w);
            }
        }
        None
    }
}

/// A value flowing between layers.
#[derive(Clone, Debug, PartialEq)]
pub enum Activation {
    Image(ByteImage),
    Spikes(SpikeTensor),
    /// Pre-LIF currents (or logits).
    Currents(AccTensor),
    /// Non-binary integer activations; only produced by additive residuals.
    Ints(AccTensor),
}

impl Activation {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            Activation::Image(i) => i.shape().to_vec(),
            Activation::Spikes(s) => s.shape().to_vec(),
            Activation::Currents(a) | Activation::Ints(a) => a.shape().to_vec(),
        }
    }

    /// Flat integer view; panics on bounds.
    pub fn value(&self, i: usize) -> i32 {
        match self {
            Activation::Image(img) => img.data()[i] as i32,
            Activation::Spikes(s) => s.bit(i) as i32,
            Activation::Currents(a) | Activation::Ints(a) => a.data()[i],
        }
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True for spike tensors and integer tensors holding only 0 and 1.
    pub fn is_binary(&self) -> bool {
        match self {
            Activation::Spikes(_) => true,
            Activation::Ints(a) => a.data().iter().all(|&v| v == 0 || v == 1),
            _ => false,
        }
    }

    /// Whether this entry is an inter-layer activation (as opposed to currents).
    pub fn is_activation(&self) -> bool {
        matches!(self, Activation::Spikes(_) | Activation::Ints(_))
    }

    pub fn as_spikes(&self) -> Option<&SpikeTensor> {
        match self {
            Activation::Spikes(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub label: String,
    pub value: Activation,
}

/// Ordered record of every tensor a forward pass produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayerTrace {
    pub entries: Vec<TraceEntry>,
}

impl LayerTrace {
    pub fn push(&mut self, label: impl Into<String>, value: Activation) {
        self.entries.push(TraceEntry { label: label.into(), value });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&Activation> {
        self.entries.iter().find(|e| e.label == label).map(|e| &e.value)
    }

    /// Labels of activations that are not binary.
    pub fn non_binary_activations(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.value.is_activation() && !e.value.is_binary())
            .map(|e| e.label.as_str())
            .collect()
    }

    /// Pushes the named intermediates of an attention pass under `label`.
    pub(crate) fn push_ssa(&mut self, label: &str, o: &SsaOutput) {
        self.push(format!("{label}.q_currents"), Activation::Currents(o.q_currents.clone()));
        self.push(format!("{label}.q"), Activation::Spikes(o.q.clone()));
        self.push(format!("{label}.k_currents"), Activation::Currents(o.k_currents.clone()));
        self.push(format!("{label}.k"), Activation::Spikes(o.k.clone()));
        self.push(format!("{label}.v_currents"), Activation::Currents(o.v_currents.clone()));
        self.push(format!("{label}.v"), Activation::Spikes(o.v.clone()));
        self.push(format!("{label}.attn_currents"), Activation::Currents(o.attn_currents.clone()));
        self.push(format!("{label}.attn"), Activation::Spikes(o.attn.clone()));
        self.push(format!("{label}.proj_currents"), Activation::Currents(o.proj_currents.clone()));
        self.push(label.to_string(), Activation::Spikes(o.out.clone()));
    }
}

/// Operator joining the residual input and branch output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResidualOp {
    /// `x AND NOT branch(x)`; keeps every activation binary.
    #[default]
    Iand,
    /// `x + branch(x)`; the additive residual, kept to show it breaks binarity.
    Add,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    pub residual: ResidualOp,
}

fn dims3(shape: &[usize]) -> Result<[usize; 3]> {
    match *shape {
        [a, b, c] => Ok([a, b, c]),
        ref s => Err(Error::shape(format!("expected rank 3, got {s:?}"))),
    }
}

fn dims4(shape: &[usize]) -> Result<[usize; 4]> {
    match *shape {
        [a, b, c, d] => Ok([a, b, c, d]),
        ref s => Err(Error::shape(format!("expected rank 4, got {s:?}"))),
    }
}

struct Interp<'a> {
    time_steps: usize,
    opts: ForwardOptions,
    trace: &'a mut LayerTrace,
}

impl Interp<'_> {
    fn run_layers(&mut self, layers: &[LayerSpec], prefix: &str, mut x: Activation) -> Result<Activation> {
        for (i, layer) in layers.iter().enumerate() {
            let label = format!("{prefix}.{i}.{}", layer.kind());
            x = self.run_layer(layer, &label, x)?;
        }
        Ok(x)
    }

    fn run_layer(&mut self, layer: &LayerSpec, label: &str, x: Activation) -> Result<Activation> {
        let out = match layer {
            LayerSpec::ConvBn3x3 { stride, weights, bias, .. } => {
                let out = match &x {
                    Activation::Image(img) => {
                        let [c, h, w] = img.shape();
                        let get = |_t: usize, ic: usize, y: usize, xx: usize| img.data()[(ic * h + y) * w + xx] as i32;
                        conv3x3_core([self.time_steps, c, h, w], &get, weights, bias, *stride)?
                    }
                    _ => {
                        let dims = dims4(&x.shape())?;
                        let [_, c, h, w] = dims;
                        let get = |t: usize, ic: usize, y: usize, xx: usize| x.value(((t * c + ic) * h + y) * w + xx);
                        conv3x3_core(dims, &get, weights, bias, *stride)?
                    }
                };
                Activation::Currents(out)
            }
            LayerSpec::ConvBn1x1 { weights, bias, out_ch, .. } => {
                let [t, c, h, w] = dims4(&x.shape())?;
                let hw = h * w;
                let get = |tt: usize, p: usize, i: usize| x.value((tt * c + i) * hw + p);
                let flat = linear_core([t, hw, c], &get, weights, bias)?;
                let mut out = vec![0; flat.len()];
                for tt in 0..t {
                    for p in 0..hw {
                        for o in 0..*out_ch {
                            out[(tt * out_ch + o) * hw + p] = flat[(tt * hw + p) * out_ch + o];
                        }
                    }
                }
                Activation::Currents(AccTensor::new(&[t, *out_ch, h, w], out, bias.scale_exp())?)
            }
            LayerSpec::Linear { weights, bias, out_dim, .. } => {
                let [t, n, d] = dims3(&x.shape())?;
                let get = |tt: usize, p: usize, i: usize| x.value((tt * n + p) * d + i);
                let out = linear_core([t, n, d], &get, weights, bias)?;
                Activation::Currents(AccTensor::new(&[t, n, *out_dim], out, bias.scale_exp())?)
            }
            LayerSpec::Lif(p) => match &x {
                Activation::Currents(c) => Activation::Spikes(lif_seq(c, p)?.0),
                _ => return Err(Error::Unsupported(format!("{label}: LIF needs currents"))),
            },
            LayerSpec::MaxPool2x2 => match &x {
                Activation::Spikes(s) => Activation::Spikes(maxpool2x2(s)?),
                _ => return Err(Error::Unsupported(format!("{label}: maxpool needs spikes"))),
            },
            LayerSpec::IandResidual { inner } => {
                let y = self.run_layers(inner, label, x.clone())?;
                let y = y
                    .as_spikes()
                    .ok_or_else(|| Error::Unsupported(format!("{label}: residual branch must end in spikes")))?;
                residual(self.opts.residual, &x, y)?
            }
            LayerSpec::Ssa(spec) => {
                let [t, n, d] = dims3(&x.shape())?;
                let get = |tt: usize, p: usize, i: usize| x.value((tt * n + p) * d + i);
                let o = ssa_core([t, n, d], &get, spec)?;
                self.trace.push_ssa(label, &o);
                return Ok(Activation::Spikes(o.out));
            }
        };
        self.trace.push(label, out.clone());
        Ok(out)
    }
}

/// Joins the residual input with a binary branch output.
pub fn residual(op: ResidualOp, x: &Activation, y: &SpikeTensor) -> Result<Activation> {
    match (op, x) {
        (ResidualOp::Iand, Activation::Spikes(xs)) => Ok(Activation::Spikes(xs.and_not(y)?)),
        (ResidualOp::Iand, _) => Err(Error::Unsupported("IAND residual needs spike input".into())),
        (ResidualOp::Add, _) => {
            if x.shape() != y.shape() {
                return Err(Error::shape(format!("residual {:?} + {:?}", x.shape(), y.shape())));
            }
            let data = (0..y.len())
                .map(|i| add_i32(x.value(i), y.bit(i) as i32, "residual add"))
                .collect::<Result<Vec<_>>>()?;
            Ok(Activation::Ints(AccTensor::new(y.shape(), data, 0)?))
        }
    }
}

/// Golden forward pass: tokenizer, blocks, head.
pub fn model_forward(img: &ByteImage, cfg: &ModelConfig) -> Result<(AccTensor, LayerTrace)> {
    model_forward_with(img, cfg, ForwardOptions::default())
}

pub fn model_forward_with(img: &ByteImage, cfg: &ModelConfig, opts: ForwardOptions) -> Result<(AccTensor, LayerTrace)> {
    cfg.validate()?;
    if img.shape() != cfg.input {
        return Err(Error::shape(format!("image {:?} but model expects {:?}", img.shape(), cfg.input)));
    }
    let mut trace = LayerTrace::default();
    let mut it = Interp { time_steps: cfg.time_steps, opts, trace: &mut trace };
    let x = it.run_layers(&cfg.tokenizer, "tok", Activation::Image(img.clone()))?;
    let mut x = match x {
        Activation::Spikes(s) => Activation::Spikes(to_tokens(&s)?),
        _ => return Err(Error::Config("tokenizer must end in spikes".into())),
    };
    for (b, block) in cfg.blocks.iter().enumerate() {
        x = it.run_layers(std::slice::from_ref(&block.attn), &format!("block{b}.attn"), x)?;
        x = it.run_layers(std::slice::from_ref(&block.mlp), &format!("block{b}.mlp"), x)?;
    }
    let [t, n, d] = dims3(&x.shape())?;
    let get = |tt: usize, p: usize, i: usize| x.value((tt * n + p) * d + i);
    let logits = head_core([t, n, d], &get, &cfg.head.weights, &cfg.head.bias)?;
    trace.push("head", Activation::Currents(logits.clone()));
    Ok((logits, trace))
}

/// Accumulator scale of an encoding layer with weight scale `w_scale`.
pub fn encoding_acc_scale(w_scale: i8) -> i8 {
    w_scale + PIXEL_SCALE_EXP
}
