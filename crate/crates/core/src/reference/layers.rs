// SPDX-License-Identifier: Apache-2.0

//! Quantized layer arithmetic on binary (or, for the encoding layer, 8-bit)
//! inputs. Everything is plain integer loops; these are the golden results
//! the simulator is checked against.

use crate::error::{add_i32, Error, Result};
use crate::tensor::{check_time_steps, AccTensor, ByteImage, QTensor, SpikeTensor};

/// Scale exponent of 8-bit pixel inputs (pixel / 256).
pub const PIXEL_SCALE_EXP: i8 = -8;

/// Output size of a padded 3x3 convolution.
pub fn conv3x3_out_dim(n: usize, stride: usize) -> usize {
    (n - 1) / stride + 1
}

fn check_conv_weights(w: &QTensor, b: &AccTensor, in_ch: usize, k: usize) -> Result<usize> {
    let ws = w.shape();
    let ok = match k {
        3 => ws.len() == 4 && ws[1] == in_ch && ws[2] == 3 && ws[3] == 3,
        _ => (ws.len() == 2 && ws[1] == in_ch) || (ws.len() == 4 && ws[1] == in_ch && ws[2] == 1 && ws[3] == 1),
    };
    if !ok {
        return Err(Error::shape(format!("weights {ws:?} for {in_ch} input channels, {k}x{k} kernel")));
    }
    let oc = ws[0];
    if b.shape() != [oc] {
        return Err(Error::shape(format!("bias {:?} for {oc} outputs", b.shape())));
    }
    Ok(oc)
}

/// Shared 3x3 loop. `get(t, c, y, x)` yields the input value (padding handled here).
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv3x3_core(
    dims: [usize; 4],
    get: &dyn Fn(usize, usize, usize, usize) -> i32,
    w: &QTensor,
    b: &AccTensor,
    stride: usize,
) -> Result<AccTensor> {
    let [t_steps, in_ch, h, wd] = dims;
    if stride == 0 {
        return Err(Error::InvalidValue("stride 0".into()));
    }
    let oc_n = check_conv_weights(w, b, in_ch, 3)?;
    let (oh, ow) = (conv3x3_out_dim(h, stride), conv3x3_out_dim(wd, stride));
    let wdata = w.data();
    let mut out = Vec::with_capacity(t_steps * oc_n * oh * ow);
    for t in 0..t_steps {
        for oc in 0..oc_n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[oc];
                    for ic in 0..in_ch {
                        for ky in 0..3 {
                            let y = (oy * stride + ky) as isize - 1;
                            if y < 0 || y >= h as isize {
                                continue;
                            }
                            for kx in 0..3 {
                                let x = (ox * stride + kx) as isize - 1;
                                if x < 0 || x >= wd as isize {
                                    continue;
                                }
                                let v = get(t, ic, y as usize, x as usize);
                                if v == 0 {
                                    continue;
                                }
                                let wv = wdata[((oc * in_ch + ic) * 3 + ky) * 3 + kx] as i32;
                                let prod = wv.checked_mul(v).ok_or(Error::Overflow("conv3x3"))?;
                                acc = add_i32(acc, prod, "conv3x3")?;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    AccTensor::new(&[t_steps, oc_n, oh, ow], out, b.scale_exp())
}

fn conv_dims(x: &SpikeTensor) -> Result<[usize; 4]> {
    match *x.shape() {
        [t, c, h, w] => Ok([t, c, h, w]),
        ref s => Err(Error::shape(format!("expected [T, C, H, W], got {s:?}"))),
    }
}

/// Padded 3x3 convolution (BN folded into `w`, `b`) over binary input.
pub fn conv_bn_3x3(x: &SpikeTensor, w: &QTensor, b: &AccTensor, stride: usize) -> Result<AccTensor> {
    let dims = conv_dims(x)?;
    let [_, c, h, wd] = dims;
    let get = |t: usize, ic: usize, y: usize, xx: usize| x.bit(((t * c + ic) * h + y) * wd + xx) as i32;
    conv3x3_core(dims, &get, w, b, stride)
}

/// Encoding convolution straight on 8-bit pixels, identical at every time step.
pub fn encode_conv_3x3(
    img: &ByteImage,
    time_steps: usize,
    w: &QTensor,
    b: &AccTensor,
    stride: usize,
) -> Result<AccTensor> {
    check_time_steps(time_steps)?;
    let [c, h, wd] = img.shape();
    let data = img.data();
    let get = |_t: usize, ic: usize, y: usize, xx: usize| data[(ic * h + y) * wd + xx] as i32;
    conv3x3_core([time_steps, c, h, wd], &get, w, b, stride)
}

/// `out[t, p, o] = b[o] + sum_i w[o, i] * x(t, p, i)` over `positions` rows.
pub(crate) fn linear_core(
    dims: [usize; 3],
    get: &dyn Fn(usize, usize, usize) -> i32,
    w: &QTensor,
    b: &AccTensor,
) -> Result<Vec<i32>> {
    let [t_steps, positions, din] = dims;
    let dout = check_conv_weights(w, b, din, 1)?;
    let wdata = w.data();
    let mut out = vec![0i32; t_steps * positions * dout];
    for t in 0..t_steps {
        for p in 0..positions {
            for o in 0..dout {
                let mut acc = b.data()[o];
                for i in 0..din {
                    let v = get(t, p, i);
                    if v != 0 {
                        let prod = (wdata[o * din + i] as i32).checked_mul(v).ok_or(Error::Overflow("linear"))?;
                        acc = add_i32(acc, prod, "linear")?;
                    }
                }
                out[(t * positions + p) * dout + o] = acc;
            }
        }
    }
    Ok(out)
}

/// Fully connected layer on `[T, N, D]` tokens.
pub fn linear(x: &SpikeTensor, w: &QTensor, b: &AccTensor) -> Result<AccTensor> {
    let [t, n, d] = match *x.shape() {
        [t, n, d] => [t, n, d],
        ref s => return Err(Error::shape(format!("expected [T, N, D], got {s:?}"))),
    };
    let get = |tt: usize, p: usize, i: usize| x.bit((tt * n + p) * d + i) as i32;
    let out = linear_core([t, n, d], &get, w, b)?;
    let dout = w.shape()[0];
    AccTensor::new(&[t, n, dout], out, b.scale_exp())
}

/// Pointwise convolution on `[T, C, H, W]`.
pub fn conv_bn_1x1(x: &SpikeTensor, w: &QTensor, b: &AccTensor) -> Result<AccTensor> {
    let [t, c, h, wd] = conv_dims(x)?;
    let hw = h * wd;
    let get = |tt: usize, p: usize, i: usize| x.bit((tt * c + i) * hw + p) as i32;
    let flat = linear_core([t, hw, c], &get, w, b)?;
    let oc = w.shape()[0];
    // flat is [t, p, o]; transpose to channel-major
    let mut out = vec![0i32; flat.len()];
    for tt in 0..t {
        for p in 0..hw {
            for o in 0..oc {
                out[(tt * oc + o) * hw + p] = flat[(tt * hw + p) * oc + o];
            }
        }
    }
    AccTensor::new(&[t, oc, h, wd], out, b.scale_exp())
}

/// `x AND NOT y`, the spike-preserving residual operator.
pub fn iand(x: &SpikeTensor, y: &SpikeTensor) -> Result<SpikeTensor> {
    x.and_not(y)
}

/// 2x2 max pooling (an OR over each window) on `[T, C, H, W]` spikes.
pub fn maxpool2x2(x: &SpikeTensor) -> Result<SpikeTensor> {
    let [t, c, h, w] = conv_dims(x)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("maxpool needs even H, W (got {h}x{w})")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = SpikeTensor::zeros(&[t, c, oh, ow])?;
    for plane in 0..t * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = plane * h * w;
                let any = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .any(|&(dy, dx)| x.bit(base + (2 * oy + dy) * w + 2 * ox + dx));
                if any {
                    out.set_bit((plane * oh + oy) * ow + ox, true);
                }
            }
        }
    }
    Ok(out)
}

/// `[T, C, H, W]` feature map to `[T, H*W, C]` tokens.
pub fn to_tokens(x: &SpikeTensor) -> Result<SpikeTensor> {
    let [t, c, h, w] = conv_dims(x)?;
    let n = h * w;
    let mut out = SpikeTensor::zeros(&[t, n, c])?;
    for tt in 0..t {
        for ch in 0..c {
            for p in 0..n {
                if x.bit((tt * c + ch) * n + p) {
                    out.set_bit((tt * n + p) * c + ch, true);
                }
            }
        }
    }
    Ok(out)
}

/// Spike counts summed over time and tokens, then a linear layer.
pub(crate) fn head_core(
    dims: [usize; 3],
    get: &dyn Fn(usize, usize, usize) -> i32,
    w: &QTensor,
    b: &AccTensor,
) -> Result<AccTensor> {
    let [t, n, d] = dims;
    let mut rate = vec![0i32; d];
    for tt in 0..t {
        for p in 0..n {
            for (i, r) in rate.iter_mut().enumerate() {
                *r = add_i32(*r, get(tt, p, i), "head rate")?;
            }
        }
    }
    let get_rate = |_: usize, _: usize, i: usize| rate[i];
    let logits = linear_core([1, 1, d], &get_rate, w, b)?;
    AccTensor::new(&[w.shape()[0]], logits, b.scale_exp())
}

pub fn classifier_head(x: &SpikeTensor, w: &QTensor, b: &AccTensor) -> Result<AccTensor> {
    let [t, n, d] = match *x.shape() {
        [t, n, d] => [t, n, d],
        ref s => return Err(Error::shape(format!("expected [T, N, D], got {s:?}"))),
    };
    let get = |tt: usize, p: usize, i: usize| x.bit((tt * n + p) * d + i) as i32;
    head_core([t, n, d], &get, w, b)
}
