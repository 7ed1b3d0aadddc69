// SPDX-License-Identifier: Apache-2.0

//! Tile-job lists for one layer under a tick-batching schedule.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scheduler::Schedule;

use super::tile::{FILL_CYCLES, LANES};
use super::AccelConfig;

/// Positions one pointwise job streams (8 cycles of 8 lanes).
pub const POINTWISE_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Conv3x3,
    Conv1x1,
    MatMul,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileJob {
    pub kind: JobKind,
    pub out_channel: usize,
    /// Input-channel (reduction) group.
    pub channels: Range<usize>,
    /// Time-step lanes computed concurrently.
    pub lanes: Range<usize>,
    /// Conv3x3: full-resolution output columns `x0..x0+8`. Pointwise: positions.
    pub spatial: Range<usize>,
    pub bitplane: Option<u8>,
    pub fetch_weights: bool,
    pub first_group: bool,
    pub last_group: bool,
    /// Last job for `(out_channel, lanes)`: currents are final, run the LIF.
    pub release: bool,
    pub cycles: u64,
    pub fill_cycles: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Pe(JobKind),
    Vector,
}

/// Geometry of the PE layer a plan computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub out_channels: usize,
    pub reduction: usize,
    pub time_steps: usize,
    /// Rows and columns streamed through the array (stride-1 resolution).
    pub full_h: usize,
    pub full_w: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Geometry {
    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn neurons(&self) -> usize {
        self.out_channels * self.positions()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerPlan {
    pub label: String,
    pub kind: PlanKind,
    pub geometry: Option<Geometry>,
    pub jobs: Vec<TileJob>,
    pub vector_cycles: u64,
    /// Words read from the weight SRAM over the whole layer.
    pub weight_fetch_words: u64,
    /// Weight words the layer owns (each fetched once under the parallel schedule).
    pub weight_words: u64,
    /// Temp-SRAM words one output channel's partial sums occupy.
    pub temp_footprint_words: usize,
    /// Membrane words needed under the serial schedule (0 when parallel).
    pub membrane_words: usize,
    /// First membrane-bank word this layer's neurons use.
    pub membrane_base: usize,
    /// Whether the layer ends in a LIF.
    pub fires: bool,
    /// Bitplane-decomposed 8-bit input.
    pub encoding: bool,
}

impl LayerPlan {
    pub fn vector(label: impl Into<String>, elements: usize, cfg: &AccelConfig) -> Self {
        Self {
            label: label.into(),
            kind: PlanKind::Vector,
            geometry: None,
            jobs: Vec::new(),
            vector_cycles: elements.div_ceil(cfg.vector_lanes) as u64,
            weight_fetch_words: 0,
            weight_words: 0,
            temp_footprint_words: 0,
            membrane_words: 0,
            membrane_base: 0,
            fires: false,
            encoding: false,
        }
    }

    pub fn compute_cycles(&self) -> u64 {
        self.jobs.iter().map(|j| j.cycles).sum()
    }

    pub fn fill_cycles(&self) -> u64 {
        self.jobs.iter().map(|j| j.fill_cycles).sum()
    }

    /// Drain cycles: one per job, hidden when drain overlaps compute.
    pub fn drain_cycles(&self) -> u64 {
        self.jobs.len() as u64
    }

    pub fn cycles(&self, cfg: &AccelConfig) -> u64 {
        let drain = if cfg.overlap_drain { 0 } else { self.drain_cycles() };
        self.compute_cycles() + self.vector_cycles + drain
    }

    /// Checks that last-group jobs cover every `(channel, lane, position)`
    /// of the output exactly once.
    pub fn check_coverage(&self) -> Result<()> {
        let Some(g) = self.geometry else { return Ok(()) };
        let positions = g.positions();
        let mut hits = vec![0u32; g.out_channels * g.time_steps * positions];
        for job in self.jobs.iter().filter(|j| j.last_group) {
            for lane in job.lanes.clone() {
                let base = (job.out_channel * g.time_steps + lane) * positions;
                match job.kind {
                    JobKind::Conv3x3 => {
                        for y in (0..g.full_h).step_by(g.stride) {
                            for x in job.spatial.clone().filter(|x| x % g.stride == 0 && *x < g.full_w) {
                                hits[base + (y / g.stride) * g.out_w + x / g.stride] += 1;
                            }
                        }
                    }
                    _ => {
                        for p in job.spatial.clone() {
                            hits[base + p] += 1;
                        }
                    }
                }
            }
        }
        match hits.iter().position(|&h| h != 1) {
            None => Ok(()),
            Some(i) => {
                Err(Error::InvalidValue(format!("{}: output element {i} covered {} times", self.label, hits[i])))
            }
        }
    }
}

/// Padded 3x3 convolution over `in_ch` channels of `h x w`, optionally on
/// 8 bitplanes of an 8-bit image.
#[allow(clippy::too_many_arguments)]
pub fn plan_conv3x3(
    label: impl Into<String>,
    in_ch: usize,
    out_ch: usize,
    h: usize,
    w: usize,
    stride: usize,
    encoding: bool,
    sched: &Schedule,
    cfg: &AccelConfig,
) -> LayerPlan {
    let t = sched.time_steps();
    let group = cfg.conv3x3_group();
    let groups: Vec<Range<usize>> = (0..in_ch).step_by(group).map(|s| s..(s + group).min(in_ch)).collect();
    let strips: Vec<usize> = (0..w).step_by(LANES).collect();
    let planes: Vec<Option<u8>> = if encoding { (0..8).map(Some).collect() } else { vec![None] };
    let mut jobs = Vec::new();
    let mut fetch_words = 0u64;
    for lanes in sched.lane_batches() {
        for oc in 0..out_ch {
            for (gi, g) in groups.iter().enumerate() {
                fetch_words += (g.len() * 9) as u64;
                for (pi, &plane) in planes.iter().enumerate() {
                    for (si, &x0) in strips.iter().enumerate() {
                        let last_group = gi + 1 == groups.len() && pi + 1 == planes.len();
                        jobs.push(TileJob {
                            kind: JobKind::Conv3x3,
                            out_channel: oc,
                            channels: g.clone(),
                            lanes: lanes.clone(),
                            spatial: x0..x0 + LANES,
                            bitplane: plane,
                            fetch_weights: pi == 0 && si == 0,
                            first_group: gi == 0 && pi == 0,
                            last_group,
                            release: last_group && si + 1 == strips.len(),
                            cycles: h as u64 + FILL_CYCLES,
                            fill_cycles: FILL_CYCLES,
                        });
                    }
                }
            }
        }
    }
    let (out_h, out_w) = ((h - 1) / stride + 1, (w - 1) / stride + 1);
    let geometry =
        Geometry { out_channels: out_ch, reduction: in_ch, time_steps: t, full_h: h, full_w: w, stride, out_h, out_w };
    let lanes_per_batch = sched.lane_batches()[0].len();
    LayerPlan {
        label: label.into(),
        kind: PlanKind::Pe(JobKind::Conv3x3),
        geometry: Some(geometry),
        jobs,
        vector_cycles: 0,
        weight_fetch_words: fetch_words,
        weight_words: (out_ch * in_ch * 9) as u64,
        temp_footprint_words: lanes_per_batch * out_h * out_w,
        membrane_words: if sched.is_parallel() { 0 } else { geometry.neurons() },
        membrane_base: 0,
        fires: true,
        encoding,
    }
}

/// 1x1 convolution, linear layer, or spike matmul: `out_ch` outputs over
/// `positions`, reducing `reduction` elements.
#[allow(clippy::too_many_arguments)]
pub fn plan_pointwise(
    label: impl Into<String>,
    kind: JobKind,
    reduction: usize,
    out_ch: usize,
    positions: usize,
    weights_in_sram: bool,
    fires: bool,
    sched: &Schedule,
    cfg: &AccelConfig,
) -> LayerPlan {
    let t = sched.time_steps();
    let group = cfg.pointwise_group();
    let groups: Vec<Range<usize>> = (0..reduction).step_by(group).map(|s| s..(s + group).min(reduction)).collect();
    let chunks: Vec<Range<usize>> =
        (0..positions).step_by(POINTWISE_CHUNK).map(|s| s..(s + POINTWISE_CHUNK).min(positions)).collect();
    let mut jobs = Vec::new();
    let mut fetch_words = 0u64;
    for lanes in sched.lane_batches() {
        for oc in 0..out_ch {
            for (gi, g) in groups.iter().enumerate() {
                if weights_in_sram {
                    fetch_words += g.len() as u64;
                }
                for (ci, chunk) in chunks.iter().enumerate() {
                    let last_group = gi + 1 == groups.len();
                    jobs.push(TileJob {
                        kind,
                        out_channel: oc,
                        channels: g.clone(),
                        lanes: lanes.clone(),
                        spatial: chunk.clone(),
                        bitplane: None,
                        fetch_weights: ci == 0,
                        first_group: gi == 0,
                        last_group,
                        release: last_group && ci + 1 == chunks.len(),
                        cycles: chunk.len().div_ceil(LANES) as u64,
                        fill_cycles: 0,
                    });
                }
            }
        }
    }
    let geometry = Geometry {
        out_channels: out_ch,
        reduction,
        time_steps: t,
        full_h: 1,
        full_w: positions,
        stride: 1,
        out_h: 1,
        out_w: positions,
    };
    let lanes_per_batch = sched.lane_batches()[0].len();
    LayerPlan {
        label: label.into(),
        kind: PlanKind::Pe(kind),
        geometry: Some(geometry),
        jobs,
        vector_cycles: 0,
        weight_fetch_words: fetch_words,
        weight_words: if weights_in_sram { (out_ch * reduction) as u64 } else { 0 },
        temp_footprint_words: lanes_per_batch * positions,
        membrane_words: if sched.is_parallel() || !fires { 0 } else { geometry.neurons() },
        membrane_base: 0,
        fires,
        encoding: false,
    }
}
