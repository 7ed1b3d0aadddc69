// SPDX-License-Identifier: Apache-2.0

//! Layers checked against straightforward real-valued computations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use siaf_core::gen::random_image;
use siaf_core::reference::layers::{
    classifier_head, conv3x3_out_dim, conv_bn_1x1, conv_bn_3x3, encode_conv_3x3, linear, maxpool2x2,
};
use siaf_core::reference::lif::LifParams;
use siaf_core::reference::ssa::{ssa, Projection, SsaSpec};
use siaf_core::tensor::{AccTensor, QTensor, SpikeTensor};

const SE: i8 = -4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn spikes(r: &mut ChaCha8Rng, shape: &[usize], p: f64) -> SpikeTensor {
    let n: usize = shape.iter().product();
    let bits: Vec<u8> = (0..n).map(|_| r.gen_bool(p) as u8).collect();
    SpikeTensor::from_bits(shape, &bits).unwrap()
}

fn weights(r: &mut ChaCha8Rng, shape: &[usize]) -> QTensor {
    let n: usize = shape.iter().product();
    QTensor::new(shape, (0..n).map(|_| r.gen_range(-128..=127)).collect(), SE).unwrap()
}

fn bias(r: &mut ChaCha8Rng, n: usize, se: i8) -> AccTensor {
    AccTensor::new(&[n], (0..n).map(|_| r.gen_range(-500..500)).collect(), se).unwrap()
}

fn real(v: i32, se: i8) -> f64 {
    v as f64 * 2f64.powi(se as i32)
}

/// Real-valued padded 3x3 convolution; `x(t, c, y, x)` gives the input value.
fn conv_oracle(
    dims: [usize; 4],
    x: &dyn Fn(usize, usize, usize, usize) -> f64,
    w: &QTensor,
    b: &AccTensor,
    stride: usize,
) -> Vec<f64> {
    let [t, c, h, wd] = dims;
    let oc_n = w.shape()[0];
    let (oh, ow) = ((h - 1) / stride + 1, (wd - 1) / stride + 1);
    let mut out = Vec::new();
    for tt in 0..t {
        for o in 0..oc_n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = real(b.data()[o], b.scale_exp());
                    for i in 0..c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (iy, ix) = ((oy * stride + ky) as isize - 1, (ox * stride + kx) as isize - 1);
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let wv = real(w.data()[((o * c + i) * 3 + ky) * 3 + kx] as i32, SE);
                                acc += wv * x(tt, i, iy as usize, ix as usize);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn assert_real_eq(actual: &AccTensor, expected: &[f64]) {
    assert_eq!(actual.len(), expected.len());
    for (i, (&a, &e)) in actual.data().iter().zip(expected).enumerate() {
        assert_eq!(real(a, actual.scale_exp()), e, "element {i}");
    }
}

#[test]
fn conv3x3_matches_real_convolution() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let (t, c, h, w) = (r.gen_range(1..3), r.gen_range(1..6), r.gen_range(1..11), r.gen_range(1..11));
        let oc = r.gen_range(1..5);
        let stride = r.gen_range(1..3);
        let x = spikes(&mut r, &[t, c, h, w], 0.3);
        let wt = weights(&mut r, &[oc, c, 3, 3]);
        let b = bias(&mut r, oc, SE);
        let got = conv_bn_3x3(&x, &wt, &b, stride).unwrap();
        assert_eq!(got.shape(), [t, oc, conv3x3_out_dim(h, stride), conv3x3_out_dim(w, stride)]);
        let get = |tt: usize, i: usize, y: usize, xx: usize| x.bit(((tt * c + i) * h + y) * w + xx) as u8 as f64;
        assert_real_eq(&got, &conv_oracle([t, c, h, w], &get, &wt, &b, stride));
    }
}

#[test]
fn encoding_conv_matches_real_convolution_on_pixels() {
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let (c, h, w) = (r.gen_range(1..4), r.gen_range(2..9), r.gen_range(2..9));
        let img = random_image([c, h, w], seed);
        let wt = weights(&mut r, &[4, c, 3, 3]);
        let b = bias(&mut r, 4, SE - 8);
        let got = encode_conv_3x3(&img, 2, &wt, &b, 1).unwrap();
        // pixels are fractions in [0, 1) with 8 fractional bits
        let get = |_: usize, i: usize, y: usize, x: usize| img.data()[(i * h + y) * w + x] as f64 / 256.0;
        assert_real_eq(&got, &conv_oracle([2, c, h, w], &get, &wt, &b, 1));
    }
}

#[test]
fn linear_and_pointwise_match_real_products() {
    for seed in 0..15 {
        let mut r = rng(200 + seed);
        let (t, n, din, dout) =
            ([1, 2, 4][r.gen_range(0..3)], r.gen_range(1..7), r.gen_range(1..40), r.gen_range(1..9));
        let x = spikes(&mut r, &[t, n, din], 0.4);
        let wt = weights(&mut r, &[dout, din]);
        let b = bias(&mut r, dout, SE);
        let got = linear(&x, &wt, &b).unwrap();
        let mut want = Vec::new();
        for tt in 0..t {
            for p in 0..n {
                for o in 0..dout {
                    let s: f64 = (0..din)
                        .filter(|&i| x.bit((tt * n + p) * din + i))
                        .map(|i| real(wt.data()[o * din + i] as i32, SE))
                        .sum();
                    want.push(real(b.data()[o], SE) + s);
                }
            }
        }
        assert_real_eq(&got, &want);

        // 1x1 conv: same reduction over channels, channel-major layout
        let (h, w) = (r.gen_range(1..5), r.gen_range(1..5));
        let xc = spikes(&mut r, &[t, din, h, w], 0.4);
        let got = conv_bn_1x1(&xc, &wt, &b).unwrap();
        assert_eq!(got.shape(), [t, dout, h, w]);
        for tt in 0..t {
            for o in 0..dout {
                for p in 0..h * w {
                    let s: f64 = (0..din)
                        .filter(|&i| xc.bit((tt * din + i) * h * w + p))
                        .map(|i| real(wt.data()[o * din + i] as i32, SE))
                        .sum();
                    let idx = (tt * dout + o) * h * w + p;
                    assert_eq!(real(got.data()[idx], SE), real(b.data()[o], SE) + s);
                }
            }
        }
    }
}

#[test]
fn maxpool_is_window_or() {
    let mut r = rng(7);
    let x = spikes(&mut r, &[2, 3, 6, 8], 0.2);
    let y = maxpool2x2(&x).unwrap();
    assert_eq!(y.shape(), [2, 3, 3, 4]);
    for t in 0..2 {
        for c in 0..3 {
            for oy in 0..3 {
                for ox in 0..4 {
                    let any = (0..4).any(|k| x.bit(((t * 3 + c) * 6 + 2 * oy + k / 2) * 8 + 2 * ox + k % 2));
                    assert_eq!(y.bit(((t * 3 + c) * 3 + oy) * 4 + ox), any);
                }
            }
        }
    }
}

#[test]
fn head_uses_spike_counts() {
    let mut r = rng(8);
    let (t, n, d, k) = (4, 5, 12, 10);
    let x = spikes(&mut r, &[t, n, d], 0.5);
    let wt = weights(&mut r, &[k, d]);
    let b = bias(&mut r, k, SE);
    let got = classifier_head(&x, &wt, &b).unwrap();
    for o in 0..k {
        let mut acc = real(b.data()[o], SE);
        for i in 0..d {
            let count = (0..t * n).filter(|&j| x.bit(j * d + i)).count() as f64;
            acc += count * real(wt.data()[o * d + i] as i32, SE);
        }
        assert_eq!(real(got.data()[o], SE), acc);
    }
}

fn projection(r: &mut ChaCha8Rng, d: usize) -> Projection {
    Projection { weights: weights(r, &[d, d]), bias: bias(r, d, SE), lif: LifParams::for_scale(SE) }
}

#[test]
fn attention_is_shifted_qk_then_v() {
    for seed in 0..8 {
        let mut r = rng(300 + seed);
        let (t, n, heads, dh) = (r.gen_range(1..3) * 2, r.gen_range(1..10), r.gen_range(1..4), r.gen_range(1..6));
        let d = heads * dh;
        let spec = SsaSpec {
            dim: d,
            heads,
            q: projection(&mut r, d),
            k: projection(&mut r, d),
            v: projection(&mut r, d),
            proj: projection(&mut r, d),
            attn_lif: LifParams::for_scale(0),
            scale_shift: 3,
        };
        let x = spikes(&mut r, &[t, n, d], 0.5);
        let o = ssa(&x, &spec).unwrap();
        let at = |s: &SpikeTensor, tt: usize, p: usize, i: usize| s.bit((tt * n + p) * d + i) as i64;
        for tt in 0..t {
            for hh in 0..heads {
                let cols = hh * dh..(hh + 1) * dh;
                for i in 0..n {
                    // scores S[i][j] = q_i . k_j within the head
                    let scores: Vec<i64> =
                        (0..n).map(|j| cols.clone().map(|c| at(&o.q, tt, i, c) * at(&o.k, tt, j, c)).sum()).collect();
                    for c in cols.clone() {
                        let sum: i64 = (0..n).map(|j| scores[j] * at(&o.v, tt, j, c)).sum();
                        let want = sum.div_euclid(8);
                        assert_eq!(o.attn_currents.data()[(tt * n + i) * d + c] as i64, want);
                    }
                }
            }
        }
        let want_proj = linear(&o.attn, &spec.proj.weights, &spec.proj.bias).unwrap();
        assert_eq!(o.proj_currents, want_proj);
    }
}
