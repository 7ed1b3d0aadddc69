// SPDX-License-Identifier: Apache-2.0

//! Runs layer plans on the tile models, moving operands and partial sums
//! through the SRAM banks.

use std::ops::Range;

use crate::error::{add_i32, Error, Result};
use crate::memory::{BankSet, TrafficReport};
use crate::reference::lif::LifParams;
use crate::reference::model::LayerSpec;
use crate::scheduler::Schedule;
use crate::tensor::{bitplane_decompose, AccTensor, ByteImage, QTensor, SpikeTensor};

use super::accumulate::{accumulate_group, BlockOutput, GroupFlags, PartialSumStore};
use super::lif_unit::{unrolled_lif, UnrolledLifUnit};
use super::plan::{plan_conv3x3, plan_pointwise, JobKind, LayerPlan};
use super::tile::{conv3x3_tile, matmul_tile, COLS, LANES};
use super::{AccelConfig, CycleStats};

/// Shared state for executing plans.
pub struct LayerCtx<'a> {
    pub cfg: &'a AccelConfig,
    pub sched: &'a Schedule,
    pub banks: &'a mut BankSet,
}

pub enum ConvInput<'a> {
    Spikes(&'a SpikeTensor),
    /// 8-bit image, decomposed into bitplanes.
    Image(&'a ByteImage),
}

/// Where a pointwise job's stationary operand comes from.
pub enum WeightSrc<'a> {
    /// Int8 weights `[out, in]` through the weight SRAM.
    Sram(&'a QTensor),
    /// Spike operand `(t, out, r)` read from the spike-input bank.
    Spikes(&'a dyn Fn(usize, usize, usize) -> bool),
    /// Integer operand in the temp bank at `base + (t * reduction + r) * out_channels + o`.
    Temp { base: usize },
}

/// Currents and spikes in `[t][out][position]` order.
#[derive(Clone, Debug, PartialEq)]
pub struct PeOutput {
    pub currents: Vec<i32>,
    pub spikes: Option<Vec<bool>>,
    pub stats: CycleStats,
}

fn plan_stats(plan: &LayerPlan, cfg: &AccelConfig) -> CycleStats {
    let drain = plan.drain_cycles();
    CycleStats {
        cycles: plan.cycles(cfg),
        pe_active_ops: 0,
        fill_cycles: plan.fill_cycles(),
        drain_cycles: if cfg.overlap_drain { 0 } else { drain },
        hidden_drain_cycles: if cfg.overlap_drain { drain } else { 0 },
        vector_cycles: plan.vector_cycles,
    }
}

fn words(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl LayerCtx<'_> {
    /// Loads a whole input batch into the spike-input bank if it fits.
    /// Returns false when the input has to be streamed per channel group.
    fn stage_input(&mut self, bits: usize) -> Result<bool> {
        let n = words(bits);
        if n <= self.banks.spike_in.capacity_words() {
            self.banks.spike_in.touch_write(0, n)?;
            self.banks.offchip_read_bytes += 8 * n as u64;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn stage_slice(&mut self, bits: usize) -> Result<()> {
        let n = words(bits);
        self.banks.spike_in.touch_write(0, n)?;
        self.banks.offchip_read_bytes += 8 * n as u64;
        Ok(())
    }

    /// Off-chip -> weight SRAM -> PE registers. Returns the values read back.
    fn fetch_weights(&mut self, values: &[i8]) -> Result<Vec<i32>> {
        let raw: Vec<u64> = values.iter().map(|&v| v as u8 as u64).collect();
        self.banks.weight.write(0, &raw)?;
        self.banks.offchip_read_bytes += raw.len() as u64;
        let back = self.banks.weight.read(0, raw.len())?;
        Ok(back.into_iter().map(|w| w as u8 as i8 as i32).collect())
    }

    fn active_ops(&self, gated_pes: u64, cycles: u64, arrays: usize) -> u64 {
        let pes = if self.cfg.sparsity_gating {
            gated_pes
        } else {
            cycles * (arrays * self.cfg.pe_rows * self.cfg.pe_cols) as u64
        };
        pes * self.cfg.ops_per_pe_cycle
    }

    /// Reads out one finished output channel, runs the LIF and ships spikes.
    #[allow(clippy::too_many_arguments)]
    fn release_channel(
        &mut self,
        plan: &LayerPlan,
        store: &mut PartialSumStore,
        oc: usize,
        lanes: Range<usize>,
        lif: Option<&LifParams>,
        shift: u32,
        out: &mut PeOutput,
    ) -> Result<()> {
        let g = plan.geometry.expect("PE plan");
        let p_n = g.positions();
        let oc_n = g.out_channels;
        let mut cur = Vec::with_capacity(lanes.len());
        for (li, t) in lanes.clone().enumerate() {
            let v: Vec<i32> = store.release(&mut self.banks.temp, li)?.into_iter().map(|x| x >> shift).collect();
            out.currents[(t * oc_n + oc) * p_n..][..p_n].copy_from_slice(&v);
            cur.push(v);
        }
        let Some(params) = lif else { return Ok(()) };
        let spikes = out.spikes.get_or_insert_with(|| vec![false; g.time_steps * oc_n * p_n]);
        match *self.sched {
            Schedule::Parallel { selectors, time_steps } => {
                let unit = UnrolledLifUnit { params: *params, selectors };
                // 4 / T neurons share one unit
                let per_unit = 4 / time_steps;
                for p0 in (0..p_n).step_by(per_unit) {
                    let mut c = [0i32; 4];
                    for s in 0..per_unit {
                        for t in 0..time_steps {
                            if p0 + s < p_n {
                                c[s * time_steps + t] = cur[t][p0 + s];
                            }
                        }
                    }
                    let o = unrolled_lif(c, &unit)?;
                    for s in 0..per_unit {
                        for t in 0..time_steps {
                            if p0 + s < p_n {
                                spikes[(t * oc_n + oc) * p_n + p0 + s] = o.spikes[s * time_steps + t];
                            }
                        }
                    }
                }
            }
            Schedule::Serial { time_steps } => {
                let t = lanes.start;
                for p in 0..p_n {
                    let addr = plan.membrane_base + oc * p_n + p;
                    let carry = if t > 0 { self.banks.membrane.read_i32(addr)? } else { 0 };
                    let (s, m) = params.step(carry, cur[0][p])?;
                    if t + 1 < time_steps {
                        self.banks.membrane.write_i32(addr, m)?;
                    }
                    spikes[(t * oc_n + oc) * p_n + p] = s;
                }
            }
        }
        let n = words(lanes.len() * p_n);
        self.banks.spike_temp.touch_write(0, n)?;
        self.banks.spike_temp.touch_read(0, n)?;
        self.banks.offchip_write_bytes += 8 * n as u64;
        Ok(())
    }
}

fn lane_positions(start: usize, end: usize) -> [Option<usize>; LANES] {
    std::array::from_fn(|l| (start + l < end).then_some(start + l))
}

/// Executes a 3x3 plan. Weights are `[oc, ic, 3, 3]`.
pub fn exec_conv3x3(
    ctx: &mut LayerCtx,
    plan: &LayerPlan,
    input: ConvInput,
    weights: &QTensor,
    bias: &AccTensor,
    lif: &LifParams,
) -> Result<PeOutput> {
    let g = plan
        .geometry
        .filter(|_| plan.kind == super::plan::PlanKind::Pe(JobKind::Conv3x3))
        .ok_or_else(|| Error::Unsupported(format!("{}: not a 3x3 plan", plan.label)))?;
    let (h, w, stride, out_w) = (g.full_h, g.full_w, g.stride, g.out_w);
    let in_ch = g.reduction;
    let planes = match input {
        ConvInput::Image(img) => {
            if img.shape() != [in_ch, h, w] {
                return Err(Error::shape(format!("{}: image {:?}", plan.label, img.shape())));
            }
            bitplane_decompose(img)
        }
        ConvInput::Spikes(x) => {
            if x.shape() != [g.time_steps, in_ch, h, w] {
                return Err(Error::shape(format!("{}: input {:?}", plan.label, x.shape())));
            }
            Vec::new()
        }
    };
    let pixel = |t: usize, c: usize, plane: Option<u8>, y: isize, x: isize| -> bool {
        if y < 0 || x < 0 || y as usize >= h || x as usize >= w {
            return false;
        }
        let (y, x) = (y as usize, x as usize);
        match (&input, plane) {
            (ConvInput::Image(_), Some(b)) => planes[b as usize].bit((c * h + y) * w + x),
            (ConvInput::Spikes(s), _) => s.bit(((t * in_ch + c) * h + y) * w + x),
            _ => false,
        }
    };
    // the image is the same at every step, so it is staged once per batch
    let batch_bits = |lanes: usize| match input {
        ConvInput::Image(_) => in_ch * h * w * 8,
        ConvInput::Spikes(_) => in_ch * h * w * lanes,
    };
    let slice_bits = |chans: usize, lanes: usize| batch_bits(lanes) / in_ch * chans;

    let mut out = PeOutput {
        currents: vec![0; g.time_steps * g.out_channels * g.positions()],
        spikes: None,
        stats: plan_stats(plan, ctx.cfg),
    };
    let mut batch: Option<Range<usize>> = None;
    let mut resident = true;
    let mut store: Option<PartialSumStore> = None;
    let mut kernels: Vec<[i32; 9]> = Vec::new();
    for job in &plan.jobs {
        if batch.as_ref() != Some(&job.lanes) {
            resident = ctx.stage_input(batch_bits(job.lanes.len()))?;
            batch = Some(job.lanes.clone());
        }
        if job.first_group && job.fetch_weights {
            store = Some(PartialSumStore::new(&ctx.banks.temp, job.lanes.len(), g.positions())?);
        }
        let store =
            store.as_mut().ok_or_else(|| Error::InvalidValue(format!("{}: job before first group", plan.label)))?;
        if job.fetch_weights {
            let oc = job.out_channel;
            let base = oc * in_ch * 9;
            let slice = &weights.data()[base + job.channels.start * 9..base + job.channels.end * 9];
            let vals = ctx.fetch_weights(slice)?;
            kernels = vals.chunks(9).map(|k| k.try_into().expect("9 taps")).collect();
            if !resident {
                ctx.stage_slice(slice_bits(job.channels.len(), job.lanes.len()))?;
            }
        }
        let shift = job.bitplane.unwrap_or(0) as u32;
        let flags = GroupFlags { first: job.first_group, last: job.last_group };
        let mut gated = 0u64;
        for (li, t) in job.lanes.clone().enumerate() {
            let tiles = job
                .channels
                .clone()
                .zip(kernels.iter())
                .map(|(c, k)| conv3x3_tile(&|y, x| pixel(t, c, job.bitplane, y, x), h, job.spatial.start, *k))
                .collect::<Result<Vec<_>>>()?;
            gated += tiles.iter().map(|r| r.active_pes).sum::<u64>();
            for y in (0..h).step_by(stride) {
                let pos: [Option<usize>; LANES] = std::array::from_fn(|l| {
                    let x = job.spatial.start + l;
                    (x < w && x % stride == 0).then(|| (y / stride) * out_w + x / stride)
                });
                let blocks: Vec<BlockOutput> =
                    tiles.iter().map(|r| BlockOutput { lane: li, sums: r.outputs[y] }).collect();
                accumulate_group(
                    store,
                    &mut ctx.banks.temp,
                    li,
                    &pos,
                    &blocks,
                    bias.data()[job.out_channel],
                    shift,
                    flags,
                )?;
            }
        }
        // one 64-bit word per block per cycle carries all lanes' tap bits
        ctx.banks.spike_in.stream_read(job.cycles * job.channels.len() as u64);
        out.stats.pe_active_ops += ctx.active_ops(gated, job.cycles, job.channels.len() * job.lanes.len());
        if job.release {
            ctx.release_channel(plan, store, job.out_channel, job.lanes.clone(), Some(lif), 0, &mut out)?;
        }
    }
    Ok(out)
}

/// Executes a pointwise plan: `input(t, position, r)` against the stationary
/// operand, plus `bias[o]` (empty for none), `>> shift`, and an optional LIF.
pub fn exec_pointwise(
    ctx: &mut LayerCtx,
    plan: &LayerPlan,
    input: &dyn Fn(usize, usize, usize) -> bool,
    weights: WeightSrc,
    bias: &[i32],
    shift: u32,
    lif: Option<&LifParams>,
) -> Result<PeOutput> {
    let g = plan
        .geometry
        .filter(|_| matches!(plan.kind, super::plan::PlanKind::Pe(JobKind::Conv1x1 | JobKind::MatMul)))
        .ok_or_else(|| Error::Unsupported(format!("{}: not a pointwise plan", plan.label)))?;
    let (red, p_n, oc_n) = (g.reduction, g.positions(), g.out_channels);
    if !bias.is_empty() && bias.len() != oc_n {
        return Err(Error::shape(format!("{}: {} biases for {oc_n} outputs", plan.label, bias.len())));
    }
    if let WeightSrc::Sram(q) = weights {
        if q.len() != oc_n * red {
            return Err(Error::shape(format!("{}: weights {:?}", plan.label, q.shape())));
        }
    }
    let mut out =
        PeOutput { currents: vec![0; g.time_steps * oc_n * p_n], spikes: None, stats: plan_stats(plan, ctx.cfg) };
    let mut batch: Option<Range<usize>> = None;
    let mut resident = true;
    let mut store: Option<PartialSumStore> = None;
    let mut fetched: Vec<Vec<i32>> = Vec::new();
    for job in &plan.jobs {
        if batch.as_ref() != Some(&job.lanes) {
            resident = ctx.stage_input(red * p_n * job.lanes.len())?;
            batch = Some(job.lanes.clone());
        }
        if job.first_group && job.fetch_weights {
            store = Some(PartialSumStore::new(&ctx.banks.temp, job.lanes.len(), p_n)?);
        }
        let store =
            store.as_mut().ok_or_else(|| Error::InvalidValue(format!("{}: job before first group", plan.label)))?;
        let oc = job.out_channel;
        if job.fetch_weights {
            fetched = match &weights {
                WeightSrc::Sram(q) => {
                    let row = &q.data()[oc * red..][job.channels.clone()];
                    let v = ctx.fetch_weights(row)?;
                    vec![v; job.lanes.len()]
                }
                WeightSrc::Spikes(f) => job
                    .lanes
                    .clone()
                    .map(|t| {
                        ctx.banks.spike_in.stream_read(words(job.channels.len()) as u64);
                        job.channels.clone().map(|r| f(t, oc, r) as i32).collect()
                    })
                    .collect(),
                WeightSrc::Temp { base } => job
                    .lanes
                    .clone()
                    .map(|t| {
                        job.channels
                            .clone()
                            .map(|r| ctx.banks.temp.read_i32(base + (t * red + r) * oc_n + oc))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?,
            };
            if !resident {
                ctx.stage_slice(job.channels.len() * p_n * job.lanes.len())?;
            }
        }
        let flags = GroupFlags { first: job.first_group, last: job.last_group };
        let b = bias.get(oc).copied().unwrap_or(0);
        let arrays = job.channels.len().div_ceil(COLS);
        let mut gated = 0u64;
        for (li, t) in job.lanes.clone().enumerate() {
            let tiles = fetched[li]
                .chunks(COLS)
                .enumerate()
                .map(|(k, wk)| {
                    let r0 = job.channels.start + k * COLS;
                    matmul_tile(&|p, j| input(t, p, r0 + j), job.spatial.clone(), wk)
                })
                .collect::<Result<Vec<_>>>()?;
            gated += tiles.iter().map(|r| r.active_pes).sum::<u64>();
            for (c, p0) in job.spatial.clone().step_by(LANES).enumerate() {
                let pos = lane_positions(p0, job.spatial.end);
                let blocks: Vec<BlockOutput> =
                    tiles.iter().map(|r| BlockOutput { lane: li, sums: r.outputs[c] }).collect();
                accumulate_group(store, &mut ctx.banks.temp, li, &pos, &blocks, b, 0, flags)?;
            }
        }
        // 9 columns x 8 positions x lanes bits per block per cycle
        let per_cycle = words(COLS * LANES * job.lanes.len()) as u64;
        ctx.banks.spike_in.stream_read(job.cycles * arrays as u64 * per_cycle);
        out.stats.pe_active_ops += ctx.active_ops(gated, job.cycles, arrays * job.lanes.len());
        if job.release {
            ctx.release_channel(plan, store, oc, job.lanes.clone(), lif, shift, &mut out)?;
        }
    }
    Ok(out)
}

fn vector_stats(plan: &LayerPlan, cfg: &AccelConfig) -> CycleStats {
    plan_stats(plan, cfg)
}

/// `x AND NOT y` on the vector unit.
pub fn exec_iand(
    ctx: &mut LayerCtx,
    plan: &LayerPlan,
    x: &SpikeTensor,
    y: &SpikeTensor,
) -> Result<(SpikeTensor, CycleStats)> {
    if x.shape() != y.shape() {
        return Err(Error::shape(format!("{}: {:?} vs {:?}", plan.label, x.shape(), y.shape())));
    }
    let data: Vec<u64> = x.words().iter().zip(y.words()).map(|(a, b)| a & !b).collect();
    let n = data.len() as u64;
    ctx.banks.spike_in.stream_write(2 * n);
    ctx.banks.spike_in.stream_read(2 * n);
    ctx.banks.spike_temp.stream_write(n);
    ctx.banks.spike_temp.stream_read(n);
    ctx.banks.offchip_read_bytes += 16 * n;
    ctx.banks.offchip_write_bytes += 8 * n;
    Ok((SpikeTensor::from_words(x.shape(), data)?, vector_stats(plan, ctx.cfg)))
}

/// 2x2 OR pooling of `[T, C, H, W]` on the vector unit.
pub fn exec_maxpool(ctx: &mut LayerCtx, plan: &LayerPlan, x: &SpikeTensor) -> Result<(SpikeTensor, CycleStats)> {
    let [t, c, h, w] = match *x.shape() {
        [a, b, c, d] => [a, b, c, d],
        ref s => return Err(Error::shape(format!("{}: {s:?}", plan.label))),
    };
    let (oh, ow) = (h / 2, w / 2);
    let mut out = SpikeTensor::zeros(&[t, c, oh, ow])?;
    for plane in 0..t * c {
        for y in 0..oh {
            for xx in 0..ow {
                let at = |dy: usize, dx: usize| x.bit((plane * h + 2 * y + dy) * w + 2 * xx + dx);
                if at(0, 0) || at(0, 1) || at(1, 0) || at(1, 1) {
                    out.set_bit((plane * oh + y) * ow + xx, true);
                }
            }
        }
    }
    let (ni, no) = (x.words().len() as u64, out.words().len() as u64);
    ctx.banks.spike_in.stream_write(ni);
    ctx.banks.spike_in.stream_read(ni);
    ctx.banks.spike_temp.stream_write(no);
    ctx.banks.spike_temp.stream_read(no);
    ctx.banks.offchip_read_bytes += 8 * ni;
    ctx.banks.offchip_write_bytes += 8 * no;
    Ok((out, vector_stats(plan, ctx.cfg)))
}

/// Spike-count readout and class scores on the vector unit. `x` is `[T, N, D]`.
pub fn exec_head(
    ctx: &mut LayerCtx,
    plan: &LayerPlan,
    x: &SpikeTensor,
    weights: &QTensor,
    bias: &AccTensor,
) -> Result<(AccTensor, CycleStats)> {
    let [t, n, d] = match *x.shape() {
        [a, b, c] => [a, b, c],
        ref s => return Err(Error::shape(format!("{}: {s:?}", plan.label))),
    };
    let classes = bias.len();
    if weights.len() != classes * d {
        return Err(Error::shape(format!("{}: weights {:?}", plan.label, weights.shape())));
    }
    let mut counts = vec![0i32; d];
    for tt in 0..t {
        for p in 0..n {
            for (i, c) in counts.iter_mut().enumerate() {
                *c += x.bit((tt * n + p) * d + i) as i32;
            }
        }
    }
    let mut logits = Vec::with_capacity(classes);
    for k in 0..classes {
        let row = ctx.fetch_weights(&weights.data()[k * d..(k + 1) * d])?;
        let mut acc = bias.data()[k];
        for (wv, c) in row.iter().zip(&counts) {
            let prod = wv.checked_mul(*c).ok_or(Error::Overflow("head product"))?;
            acc = add_i32(acc, prod, "head accumulation")?;
        }
        logits.push(acc);
    }
    let ni = x.words().len() as u64;
    ctx.banks.spike_in.stream_write(ni);
    ctx.banks.spike_in.stream_read(ni);
    ctx.banks.offchip_read_bytes += 8 * ni;
    ctx.banks.offchip_write_bytes += 4 * classes as u64;
    Ok((AccTensor::new(&[classes], logits, bias.scale_exp())?, vector_stats(plan, ctx.cfg)))
}

/// Result of one fused PE layer plus LIF.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerRun {
    pub plan: LayerPlan,
    pub currents: AccTensor,
    pub spikes: SpikeTensor,
    pub stats: CycleStats,
    pub traffic: TrafficReport,
}

/// Runs a single convolution or linear layer followed by `lif` on the
/// simulator. Spike inputs are `[T, C, H, W]` for convolutions and
/// `[T, N, D]` for linear layers.
pub fn run_layer(
    layer: &LayerSpec,
    lif: &LifParams,
    input: ConvInput,
    label: &str,
    cfg: &AccelConfig,
    sched: &Schedule,
    banks: &mut BankSet,
) -> Result<LayerRun> {
    let before = banks.traffic();
    let t = sched.time_steps();
    let mut ctx = LayerCtx { cfg, sched, banks };
    match (layer, &input) {
        (LayerSpec::ConvBn3x3 { in_ch, out_ch, stride, weights, bias }, _) => {
            let (h, w, encoding) = match input {
                ConvInput::Image(img) => (img.shape()[1], img.shape()[2], true),
                ConvInput::Spikes(x) => match *x.shape() {
                    [_, _, h, w] => (h, w, false),
                    ref s => return Err(Error::shape(format!("{label}: {s:?}"))),
                },
            };
            let plan = plan_conv3x3(label, *in_ch, *out_ch, h, w, *stride, encoding, sched, cfg);
            let o = exec_conv3x3(&mut ctx, &plan, input, weights, bias, lif)?;
            let g = plan.geometry.expect("PE plan");
            let shape = [t, *out_ch, g.out_h, g.out_w];
            let spikes = SpikeTensor::from_bits(&shape, &bool_bits(o.spikes.as_deref().unwrap_or(&[])))?;
            let currents = AccTensor::new(&shape, o.currents, bias.scale_exp())?;
            let traffic = ctx.banks.traffic().since(&before);
            Ok(LayerRun { plan, currents, spikes, stats: o.stats, traffic })
        }
        (LayerSpec::ConvBn1x1 { in_ch, out_ch, weights, bias }, ConvInput::Spikes(x)) => {
            let [_, _, h, w] = match *x.shape() {
                [a, b, c, d] if b == *in_ch => [a, b, c, d],
                ref s => return Err(Error::shape(format!("{label}: {s:?}"))),
            };
            let hw = h * w;
            let plan = plan_pointwise(label, JobKind::Conv1x1, *in_ch, *out_ch, hw, true, true, sched, cfg);
            let get = |tt: usize, p: usize, r: usize| x.bit((tt * in_ch + r) * hw + p);
            let o = exec_pointwise(&mut ctx, &plan, &get, WeightSrc::Sram(weights), bias.data(), 0, Some(lif))?;
            let shape = [t, *out_ch, h, w];
            let spikes = SpikeTensor::from_bits(&shape, &bool_bits(o.spikes.as_deref().unwrap_or(&[])))?;
            let currents = AccTensor::new(&shape, o.currents, bias.scale_exp())?;
            let traffic = ctx.banks.traffic().since(&before);
            Ok(LayerRun { plan, currents, spikes, stats: o.stats, traffic })
        }
        (LayerSpec::Linear { in_dim, out_dim, weights, bias }, ConvInput::Spikes(x)) => {
            let [_, n, _] = match *x.shape() {
                [a, b, c] if c == *in_dim => [a, b, c],
                ref s => return Err(Error::shape(format!("{label}: {s:?}"))),
            };
            let plan = plan_pointwise(label, JobKind::MatMul, *in_dim, *out_dim, n, true, true, sched, cfg);
            let get = |tt: usize, p: usize, r: usize| x.bit((tt * n + p) * in_dim + r);
            let o = exec_pointwise(&mut ctx, &plan, &get, WeightSrc::Sram(weights), bias.data(), 0, Some(lif))?;
            let (cur, sp) = tokens_major(&o, t, *out_dim, n);
            let shape = [t, n, *out_dim];
            let spikes = SpikeTensor::from_bits(&shape, &bool_bits(&sp))?;
            let currents = AccTensor::new(&shape, cur, bias.scale_exp())?;
            let traffic = ctx.banks.traffic().since(&before);
            Ok(LayerRun { plan, currents, spikes, stats: o.stats, traffic })
        }
        (l, _) => Err(Error::Unsupported(format!("{label}: {} is not a PE layer for this input", l.kind()))),
    }
}

pub(crate) fn bool_bits(v: &[bool]) -> Vec<u8> {
    v.iter().map(|&b| b as u8).collect()
}

/// `[t][o][p]` to `[t][p][o]` for token-major outputs.
pub(crate) fn tokens_major(o: &PeOutput, t: usize, oc: usize, n: usize) -> (Vec<i32>, Vec<bool>) {
    let mut cur = vec![0; t * n * oc];
    let mut sp = vec![false; t * n * oc];
    for tt in 0..t {
        for c in 0..oc {
            for p in 0..n {
                let src = (tt * oc + c) * n + p;
                let dst = (tt * n + p) * oc + c;
                cur[dst] = o.currents[src];
                if let Some(s) = &o.spikes {
                    sp[dst] = s[src];
                }
            }
        }
    }
    (cur, sp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::SramBudget;
    use crate::reference::layers::{conv_bn_3x3, encode_conv_3x3, linear};
    use crate::reference::lif::lif_seq;

    fn banks(membrane_words: usize) -> BankSet {
        BankSet::new(&SramBudget::default(), membrane_words * 4)
    }

    fn pattern_spikes(shape: &[usize], k: usize) -> SpikeTensor {
        let n: usize = shape.iter().product();
        let bits: Vec<u8> = (0..n).map(|i| ((i * 7 + k) % 5 < 2) as u8).collect();
        SpikeTensor::from_bits(shape, &bits).unwrap()
    }

    fn q(shape: &[usize]) -> QTensor {
        let n: usize = shape.iter().product();
        QTensor::new(shape, (0..n).map(|i| ((i * 37) % 15) as i8 - 7).collect(), -4).unwrap()
    }

    #[test]
    fn conv_matches_reference_both_schedules() {
        let x = pattern_spikes(&[4, 14, 6, 10], 1);
        let w = q(&[3, 14, 3, 3]);
        let b = AccTensor::new(&[3], vec![1, -2, 3], -4).unwrap();
        let lif = LifParams::new(4).unwrap();
        let layer = LayerSpec::ConvBn3x3 { in_ch: 14, out_ch: 3, stride: 1, weights: w.clone(), bias: b.clone() };
        let gold = conv_bn_3x3(&x, &w, &b, 1).unwrap();
        let (gs, _) = lif_seq(&gold, &lif).unwrap();
        let cfg = AccelConfig::default();
        for sched in [Schedule::serial(4), Schedule::parallel(4).unwrap()] {
            let mut bk = banks(3 * 60);
            let r = run_layer(&layer, &lif, ConvInput::Spikes(&x), "c", &cfg, &sched, &mut bk).unwrap();
            assert_eq!(r.currents, gold);
            assert_eq!(r.spikes, gs);
            let reads = r.traffic.bank("weight").unwrap().reads;
            let factor = if sched.is_parallel() { 1 } else { 4 };
            assert_eq!(reads, factor * w.len() as u64);
        }
    }

    #[test]
    fn strided_conv_matches_reference() {
        let x = pattern_spikes(&[2, 3, 7, 9], 3);
        let w = q(&[2, 3, 3, 3]);
        let b = AccTensor::new(&[2], vec![0, 2], -4).unwrap();
        let lif = LifParams::new(3).unwrap();
        let layer = LayerSpec::ConvBn3x3 { in_ch: 3, out_ch: 2, stride: 2, weights: w.clone(), bias: b.clone() };
        let gold = conv_bn_3x3(&x, &w, &b, 2).unwrap();
        let r = run_layer(
            &layer,
            &lif,
            ConvInput::Spikes(&x),
            "c",
            &AccelConfig::default(),
            &Schedule::parallel(2).unwrap(),
            &mut banks(0),
        )
        .unwrap();
        assert_eq!(r.currents, gold);
    }

    #[test]
    fn bitplane_encoding_matches_direct() {
        let data: Vec<u8> = (0..3 * 8 * 8).map(|i| (i * 53 % 256) as u8).collect();
        let img = ByteImage::new(3, 8, 8, data).unwrap();
        let w = q(&[4, 3, 3, 3]);
        let b = AccTensor::new(&[4], vec![5, 0, -5, 100], -12).unwrap();
        let gold = encode_conv_3x3(&img, 2, &w, &b, 1).unwrap();
        let lif = LifParams::for_scale(-12);
        let layer = LayerSpec::ConvBn3x3 { in_ch: 3, out_ch: 4, stride: 1, weights: w, bias: b };
        let r = run_layer(
            &layer,
            &lif,
            ConvInput::Image(&img),
            "e",
            &AccelConfig::default(),
            &Schedule::parallel(2).unwrap(),
            &mut banks(0),
        )
        .unwrap();
        assert_eq!(r.currents, gold);
    }

    #[test]
    fn linear_matches_reference() {
        let x = pattern_spikes(&[4, 20, 130], 2);
        let w = q(&[5, 130]);
        let b = AccTensor::new(&[5], vec![0, 1, 2, 3, 4], -4).unwrap();
        let lif = LifParams::new(6).unwrap();
        let layer = LayerSpec::Linear { in_dim: 130, out_dim: 5, weights: w.clone(), bias: b.clone() };
        let gold = linear(&x, &w, &b).unwrap();
        let (gs, _) = lif_seq(&gold, &lif).unwrap();
        for sched in [Schedule::serial(4), Schedule::parallel(4).unwrap()] {
            let r =
                run_layer(&layer, &lif, ConvInput::Spikes(&x), "l", &AccelConfig::default(), &sched, &mut banks(100))
                    .unwrap();
            assert_eq!(r.currents, gold);
            assert_eq!(r.spikes, gs);
            let mem = r.traffic.bank("membrane").unwrap();
            assert_eq!(mem.reads > 0, !sched.is_parallel());
        }
    }

    #[test]
    fn ungated_counts_every_pe() {
        let x = SpikeTensor::zeros(&[1, 9, 1, 8]).unwrap();
        let layer = LayerSpec::ConvBn1x1 { in_ch: 9, out_ch: 1, weights: q(&[1, 9]), bias: AccTensor::zeros(&[1], -4) };
        let lif = LifParams::new(1).unwrap();
        let mut cfg = AccelConfig::default();
        let sched = Schedule::parallel(1).unwrap();
        let r = run_layer(&layer, &lif, ConvInput::Spikes(&x), "p", &cfg, &sched, &mut banks(0)).unwrap();
        assert_eq!(r.stats.pe_active_ops, 0);
        cfg.sparsity_gating = false;
        let r = run_layer(&layer, &lif, ConvInput::Spikes(&x), "p", &cfg, &sched, &mut banks(0)).unwrap();
        assert_eq!(r.stats.pe_active_ops, 72 * 2);
    }
}
