// SPDX-License-Identifier: Apache-2.0

//! Softmax-free spiking self-attention.
//!
//! Q, K, V are spike tensors produced by linear + LIF. Per time step and head,
//! `A = (Q K^T) V` with integer matmuls on binary operands, then
//! `A >> scale_shift` feeds an LIF, then a projection linear + LIF.

use crate::error::{add_i32, Error, Result};
use crate::reference::layers::linear_core;
use crate::reference::lif::{lif_seq, LifParams};
use crate::tensor::{AccTensor, QTensor, SpikeTensor};

pub const DEFAULT_SCALE_SHIFT: u32 = 3;

/// One linear + LIF stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub weights: QTensor,
    pub bias: AccTensor,
    pub lif: LifParams,
}

impl Projection {
    pub fn in_dim(&self) -> usize {
        self.weights.shape().get(1).copied().unwrap_or(0)
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SsaSpec {
    pub dim: usize,
    pub heads: usize,
    pub q: Projection,
    pub k: Projection,
    pub v: Projection,
    pub proj: Projection,
    pub attn_lif: LifParams,
    pub scale_shift: u32,
}

impl SsaSpec {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("ssa dim {} not divisible by {} heads", self.dim, self.heads)));
        }
        for (name, p) in [("q", &self.q), ("k", &self.k), ("v", &self.v), ("proj", &self.proj)] {
            if p.weights.shape() != [self.dim, self.dim] || p.bias.shape() != [self.dim] {
                return Err(Error::Config(format!(
                    "ssa {name} weights {:?} / bias {:?} do not match dim {}",
                    p.weights.shape(),
                    p.bias.shape(),
                    self.dim
                )));
            }
            p.lif.validate()?;
        }
        self.attn_lif.validate()
    }
}

/// Every intermediate of one attention pass, in evaluation order.
#[derive(Clone, Debug, PartialEq)]
pub struct SsaOutput {
    pub q_currents: AccTensor,
    pub q: SpikeTensor,
    pub k_currents: AccTensor,
    pub k: SpikeTensor,
    pub v_currents: AccTensor,
    pub v: SpikeTensor,
    /// `(Q K^T V) >> scale_shift`, `[T, N, D]`.
    pub attn_currents: AccTensor,
    pub attn: SpikeTensor,
    pub proj_currents: AccTensor,
    pub out: SpikeTensor,
}

pub(crate) fn project(
    dims: [usize; 3],
    get: &dyn Fn(usize, usize, usize) -> i32,
    p: &Projection,
) -> Result<(AccTensor, SpikeTensor)> {
    let [t, n, _] = dims;
    let cur = linear_core(dims, get, &p.weights, &p.bias)?;
    let cur = AccTensor::new(&[t, n, p.out_dim()], cur, p.bias.scale_exp())?;
    let (s, _) = lif_seq(&cur, &p.lif)?;
    Ok((cur, s))
}

/// `(Q K^T) V` per time step and head, shifted. Naive triple loop.
pub fn attention_currents(
    q: &SpikeTensor,
    k: &SpikeTensor,
    v: &SpikeTensor,
    heads: usize,
    scale_shift: u32,
) -> Result<AccTensor> {
    let shape = q.shape().to_vec();
    if k.shape() != shape.as_slice() || v.shape() != shape.as_slice() || shape.len() != 3 {
        return Err(Error::shape(format!("attention operands {:?} {:?} {:?}", q.shape(), k.shape(), v.shape())));
    }
    let [t_steps, n, d] = [shape[0], shape[1], shape[2]];
    if heads == 0 || d % heads != 0 {
        return Err(Error::shape(format!("dim {d} not divisible by {heads} heads")));
    }
    let dh = d / heads;
    let at = |s: &SpikeTensor, t: usize, tok: usize, f: usize| s.bit((t * n + tok) * d + f) as i32;
    let mut out = vec![0i32; t_steps * n * d];
    let mut scores = vec![0i32; n * n];
    for t in 0..t_steps {
        for h in 0..heads {
            let base = h * dh;
            for a in 0..n {
                for b in 0..n {
                    let mut s = 0i32;
                    for i in 0..dh {
                        s += at(q, t, a, base + i) & at(k, t, b, base + i);
                    }
                    scores[a * n + b] = s;
                }
            }
            for a in 0..n {
                for j in 0..dh {
                    let mut acc = 0i32;
                    for b in 0..n {
                        if at(v, t, b, base + j) == 1 {
                            acc = add_i32(acc, scores[a * n + b], "attention")?;
                        }
                    }
                    out[(t * n + a) * d + base + j] = acc >> scale_shift;
                }
            }
        }
    }
    AccTensor::new(&[t_steps, n, d], out, 0)
}

pub(crate) fn ssa_core(
    dims: [usize; 3],
    get: &dyn Fn(usize, usize, usize) -> i32,
    spec: &SsaSpec,
) -> Result<SsaOutput> {
    spec.validate()?;
    if dims[2] != spec.dim {
        return Err(Error::shape(format!("ssa input dim {} != {}", dims[2], spec.dim)));
    }
    let (q_currents, q) = project(dims, get, &spec.q)?;
    let (k_currents, k) = project(dims, get, &spec.k)?;
    let (v_currents, v) = project(dims, get, &spec.v)?;
    let attn_currents = attention_currents(&q, &k, &v, spec.heads, spec.scale_shift)?;
    let (attn, _) = lif_seq(&attn_currents, &spec.attn_lif)?;
    let [_, n, d] = dims;
    let get_attn = |t: usize, p: usize, i: usize| attn.bit((t * n + p) * d + i) as i32;
    let (proj_currents, out) = project(dims, &get_attn, &spec.proj)?;
    Ok(SsaOutput { q_currents, q, k_currents, k, v_currents, v, attn_currents, attn, proj_currents, out })
}

/// Spiking self-attention over `[T, N, D]` spikes.
pub fn ssa(x: &SpikeTensor, spec: &SsaSpec) -> Result<SsaOutput> {
    let [t, n, d] = match *x.shape() {
        [t, n, d] => [t, n, d],
        ref s => return Err(Error::shape(format!("expected [T, N, D], got {s:?}"))),
    };
    let get = |tt: usize, p: usize, i: usize| x.bit((tt * n + p) * d + i) as i32;
    ssa_core([t, n, d], &get, spec)
}
