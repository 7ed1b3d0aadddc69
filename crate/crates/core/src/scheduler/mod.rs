// SPDX-License-Identifier: Apache-2.0

//! Model -> layer plans -> simulated execution, and serial/parallel comparison.

mod schedule;

pub use schedule::Schedule;

use serde::Serialize;

use crate::accel::exec::{
    bool_bits, exec_conv3x3, exec_head, exec_iand, exec_maxpool, exec_pointwise, tokens_major, ConvInput, LayerCtx,
    WeightSrc,
};
use crate::accel::plan::{plan_conv3x3, plan_pointwise, JobKind, LayerPlan, PlanKind};
use crate::accel::{AccelConfig, CycleStats};
use crate::error::{Error, Result};
use crate::memory::{BankSet, SramBudget, TrafficReport};
use crate::reference::lif::LifParams;
use crate::reference::model::{Activation, LayerSpec, LayerTrace, ModelConfig};
use crate::reference::ssa::{SsaOutput, SsaSpec};
use crate::tensor::{sparsity, AccTensor, ByteImage, SpikeTensor};

fn fused_lif<'a>(layers: &'a [LayerSpec], i: usize, label: &str) -> Result<&'a LifParams> {
    match layers.get(i + 1) {
        Some(LayerSpec::Lif(p)) => Ok(p),
        _ => Err(Error::Unsupported(format!("{label}: PE layer must be followed by a LIF"))),
    }
}

struct Compiler<'a> {
    accel: &'a AccelConfig,
    sched: &'a Schedule,
    t: usize,
    plans: Vec<LayerPlan>,
}

impl Compiler<'_> {
    fn token_layers(&mut self, layers: &[LayerSpec], prefix: &str, n: usize, d: usize) -> Result<()> {
        let mut i = 0;
        while i < layers.len() {
            let label = format!("{prefix}.{i}.{}", layers[i].kind());
            match &layers[i] {
                LayerSpec::Linear { in_dim, out_dim, .. } => {
                    fused_lif(layers, i, &label)?;
                    self.plans.push(plan_pointwise(
                        label,
                        JobKind::MatMul,
                        *in_dim,
                        *out_dim,
                        n,
                        true,
                        true,
                        self.sched,
                        self.accel,
                    ));
                    i += 2;
                    continue;
                }
                LayerSpec::Ssa(spec) => self.ssa(spec, &label, n),
                LayerSpec::IandResidual { inner } => {
                    self.token_layers(inner, &label, n, d)?;
                    self.plans.push(LayerPlan::vector(label, self.t * n * d, self.accel));
                }
                l => return Err(Error::Unsupported(format!("{label}: {} on tokens", l.kind()))),
            }
            i += 1;
        }
        Ok(())
    }

    fn ssa(&mut self, spec: &SsaSpec, label: &str, n: usize) {
        let (d, dh) = (spec.dim, spec.head_dim());
        for name in ["q", "k", "v"] {
            self.plans.push(plan_pointwise(
                format!("{label}.{name}"),
                JobKind::MatMul,
                d,
                d,
                n,
                true,
                true,
                self.sched,
                self.accel,
            ));
        }
        for h in 0..spec.heads {
            self.plans.push(plan_pointwise(
                format!("{label}.h{h}.kv"),
                JobKind::MatMul,
                n,
                dh,
                dh,
                false,
                false,
                self.sched,
                self.accel,
            ));
            let mut p = plan_pointwise(
                format!("{label}.h{h}.qkv"),
                JobKind::MatMul,
                dh,
                dh,
                n,
                false,
                true,
                self.sched,
                self.accel,
            );
            p.membrane_base = if self.sched.is_parallel() { 0 } else { h * dh * n };
            self.plans.push(p);
        }
        self.plans.push(plan_pointwise(
            format!("{label}.proj"),
            JobKind::MatMul,
            d,
            d,
            n,
            true,
            true,
            self.sched,
            self.accel,
        ));
    }
}

/// Compiles a model into per-layer plans. PE layers are fused with the LIF
/// that follows them; attention expands into projection and per-head plans.
pub fn compile(cfg: &ModelConfig, accel: &AccelConfig, sched: &Schedule) -> Result<Vec<LayerPlan>> {
    accel.validate()?;
    cfg.validate()?;
    sched.validate(cfg.time_steps)?;
    let t = cfg.time_steps;
    let mut c = Compiler { accel, sched, t, plans: Vec::new() };
    let [mut ch, mut h, mut w] = cfg.input;
    let tok = &cfg.tokenizer;
    let mut i = 0;
    while i < tok.len() {
        let label = format!("tok.{i}.{}", tok[i].kind());
        match &tok[i] {
            LayerSpec::ConvBn3x3 { in_ch, out_ch, stride, .. } => {
                fused_lif(tok, i, &label)?;
                let p = plan_conv3x3(label, *in_ch, *out_ch, h, w, *stride, i == 0, sched, accel);
                let g = p.geometry.expect("PE plan");
                (ch, h, w) = (*out_ch, g.out_h, g.out_w);
                c.plans.push(p);
                i += 2;
                continue;
            }
            LayerSpec::ConvBn1x1 { in_ch, out_ch, .. } => {
                fused_lif(tok, i, &label)?;
                c.plans.push(plan_pointwise(label, JobKind::Conv1x1, *in_ch, *out_ch, h * w, true, true, sched, accel));
                ch = *out_ch;
                i += 2;
                continue;
            }
            LayerSpec::MaxPool2x2 => {
                (h, w) = (h / 2, w / 2);
                c.plans.push(LayerPlan::vector(label, t * ch * h * w, accel));
            }
            l => return Err(Error::Unsupported(format!("{label}: {} in the tokenizer", l.kind()))),
        }
        i += 1;
    }
    let (n, d) = (h * w, ch);
    for (b, block) in cfg.blocks.iter().enumerate() {
        c.token_layers(std::slice::from_ref(&block.attn), &format!("block{b}.attn"), n, d)?;
        c.token_layers(std::slice::from_ref(&block.mlp), &format!("block{b}.mlp"), n, d)?;
    }
    c.plans.push(LayerPlan::vector("head", t * n * d + cfg.head.classes * d, accel));
    Ok(c.plans)
}

/// Membrane words the serial schedule needs (largest single layer).
pub fn membrane_words(plans: &[LayerPlan]) -> usize {
    plans.iter().map(|p| p.membrane_base + p.membrane_words).max().unwrap_or(0)
}

/// Membrane storage the serial schedule spills, summed over layers.
pub fn membrane_bytes_total(plans: &[LayerPlan]) -> u64 {
    plans.iter().map(|p| 4 * p.membrane_words as u64).sum()
}

/// Fresh banks sized for `plans`.
pub fn banks_for(plans: &[LayerPlan], budget: &SramBudget) -> BankSet {
    BankSet::new(budget, 4 * membrane_words(plans))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerReport {
    pub label: String,
    pub kind: PlanKind,
    pub jobs: usize,
    pub cycles: u64,
    pub fill_cycles: u64,
    pub drain_cycles: u64,
    pub vector_cycles: u64,
    pub pe_active_ops: u64,
    pub utilization: f64,
    pub weight_words: u64,
    pub weight_sram_reads: u64,
    pub membrane_reads: u64,
    pub membrane_writes: u64,
    /// Fraction of zero output spikes, for firing layers.
    pub output_sparsity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schedule: Schedule,
    pub clock_hz: u64,
    pub total: CycleStats,
    /// Total cycles if accumulator drain were not overlapped.
    pub cycles_without_overlap: u64,
    pub frames_per_second: f64,
    pub utilization: f64,
    pub layers: Vec<LayerReport>,
    pub traffic: TrafficReport,
}

impl RunReport {
    pub fn layer(&self, label: &str) -> Option<&LayerReport> {
        self.layers.iter().find(|l| l.label == label)
    }

    /// Weight-SRAM reads of time-stepped PE layers (head excluded).
    pub fn pe_weight_reads(&self) -> u64 {
        self.layers.iter().filter(|l| matches!(l.kind, PlanKind::Pe(_))).map(|l| l.weight_sram_reads).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Execution {
    pub logits: AccTensor,
    pub report: RunReport,
    /// Same labels and order as the reference trace.
    pub trace: LayerTrace,
}

struct Runner<'a, 'p> {
    ctx: LayerCtx<'a>,
    plans: std::slice::Iter<'p, LayerPlan>,
    t: usize,
    trace: LayerTrace,
    layers: Vec<LayerReport>,
    before: TrafficReport,
}

impl<'p> Runner<'_, 'p> {
    fn next_plan(&mut self, label: &str) -> Result<&'p LayerPlan> {
        let p = self.plans.next().ok_or_else(|| Error::ConfigMismatch(format!("no plan left for {label}")))?;
        if p.label != label {
            return Err(Error::ConfigMismatch(format!("plan {} where {label} was expected", p.label)));
        }
        self.before = self.ctx.banks.traffic();
        Ok(p)
    }

    fn record(&mut self, plan: &LayerPlan, stats: &CycleStats, out: Option<&SpikeTensor>) {
        let tr = self.ctx.banks.traffic().since(&self.before);
        let bank = |n: &str| tr.bank(n).cloned().unwrap_or_default();
        self.layers.push(LayerReport {
            label: plan.label.clone(),
            kind: plan.kind,
            jobs: plan.jobs.len(),
            cycles: stats.cycles,
            fill_cycles: stats.fill_cycles,
            drain_cycles: stats.drain_cycles,
            vector_cycles: stats.vector_cycles,
            pe_active_ops: stats.pe_active_ops,
            utilization: stats.utilization(self.ctx.cfg),
            weight_words: plan.weight_words,
            weight_sram_reads: bank("weight").reads,
            membrane_reads: bank("membrane").reads,
            membrane_writes: bank("membrane").writes,
            output_sparsity: out.map(sparsity),
        });
    }

    fn total(&self) -> CycleStats {
        let mut s = CycleStats::default();
        for l in &self.layers {
            s.add(&CycleStats {
                cycles: l.cycles,
                pe_active_ops: l.pe_active_ops,
                fill_cycles: l.fill_cycles,
                drain_cycles: l.drain_cycles,
                hidden_drain_cycles: 0,
                vector_cycles: l.vector_cycles,
            });
        }
        s
    }

    /// Token-major `[T, N, out]` tensors from a pointwise run.
    fn pointwise_tokens(
        &mut self,
        plan: &LayerPlan,
        input: &dyn Fn(usize, usize, usize) -> bool,
        weights: WeightSrc,
        bias: &AccTensor,
        lif: &LifParams,
        n: usize,
    ) -> Result<(AccTensor, SpikeTensor)> {
        let g = plan.geometry.expect("PE plan");
        let o = exec_pointwise(&mut self.ctx, plan, input, weights, bias.data(), 0, Some(lif))?;
        let (cur, sp) = tokens_major(&o, self.t, g.out_channels, n);
        let shape = [self.t, n, g.out_channels];
        let spikes = SpikeTensor::from_bits(&shape, &bool_bits(&sp))?;
        self.record(plan, &o.stats, Some(&spikes));
        Ok((AccTensor::new(&shape, cur, bias.scale_exp())?, spikes))
    }

    fn tokenizer(&mut self, cfg: &ModelConfig, img: &ByteImage) -> Result<SpikeTensor> {
        let tok = &cfg.tokenizer;
        let mut x: Option<SpikeTensor> = None;
        let mut i = 0;
        while i < tok.len() {
            let label = format!("tok.{i}.{}", tok[i].kind());
            let plan = self.next_plan(&label)?;
            match &tok[i] {
                LayerSpec::ConvBn3x3 { out_ch, weights, bias, .. } => {
                    let lif = fused_lif(tok, i, &label)?;
                    let input = match &x {
                        None => ConvInput::Image(img),
                        Some(s) => ConvInput::Spikes(s),
                    };
                    let o = exec_conv3x3(&mut self.ctx, plan, input, weights, bias, lif)?;
                    let g = plan.geometry.expect("PE plan");
                    let shape = [self.t, *out_ch, g.out_h, g.out_w];
                    let spikes = SpikeTensor::from_bits(&shape, &bool_bits(o.spikes.as_deref().unwrap_or(&[])))?;
                    self.record(plan, &o.stats, Some(&spikes));
                    self.trace.push(label, Activation::Currents(AccTensor::new(&shape, o.currents, bias.scale_exp())?));
                    self.trace.push(format!("tok.{}.lif", i + 1), Activation::Spikes(spikes.clone()));
                    x = Some(spikes);
                    i += 2;
                }
                LayerSpec::ConvBn1x1 { in_ch, out_ch, weights, bias } => {
                    let lif = fused_lif(tok, i, &label)?;
                    let s = x.as_ref().ok_or_else(|| Error::Unsupported(format!("{label}: needs spikes")))?;
                    let [_, _, h, w] = match *s.shape() {
                        [a, b, c, d] => [a, b, c, d],
                        ref sh => return Err(Error::shape(format!("{label}: {sh:?}"))),
                    };
                    let hw = h * w;
                    let get = |tt: usize, p: usize, r: usize| s.bit((tt * in_ch + r) * hw + p);
                    let o =
                        exec_pointwise(&mut self.ctx, plan, &get, WeightSrc::Sram(weights), bias.data(), 0, Some(lif))?;
                    let shape = [self.t, *out_ch, h, w];
                    let spikes = SpikeTensor::from_bits(&shape, &bool_bits(o.spikes.as_deref().unwrap_or(&[])))?;
                    self.record(plan, &o.stats, Some(&spikes));
                    self.trace.push(label, Activation::Currents(AccTensor::new(&shape, o.currents, bias.scale_exp())?));
                    self.trace.push(format!("tok.{}.lif", i + 1), Activation::Spikes(spikes.clone()));
                    x = Some(spikes);
                    i += 2;
                }
                LayerSpec::MaxPool2x2 => {
                    let s = x.as_ref().ok_or_else(|| Error::Unsupported(format!("{label}: needs spikes")))?;
                    let (out, stats) = exec_maxpool(&mut self.ctx, plan, s)?;
                    self.record(plan, &stats, Some(&out));
                    self.trace.push(label, Activation::Spikes(out.clone()));
                    x = Some(out);
                    i += 1;
                }
                l => return Err(Error::Unsupported(format!("{label}: {}", l.kind()))),
            }
        }
        let x = x.ok_or_else(|| Error::Config("empty tokenizer".into()))?;
        crate::reference::to_tokens(&x)
    }

    fn token_layers(&mut self, layers: &[LayerSpec], prefix: &str, mut x: SpikeTensor) -> Result<SpikeTensor> {
        let mut i = 0;
        while i < layers.len() {
            let label = format!("{prefix}.{i}.{}", layers[i].kind());
            let [_, n, d] = match *x.shape() {
                [a, b, c] => [a, b, c],
                ref s => return Err(Error::shape(format!("{label}: {s:?}"))),
            };
            match &layers[i] {
                LayerSpec::Linear { weights, bias, .. } => {
                    let lif = fused_lif(layers, i, &label)?;
                    let plan = self.next_plan(&label)?;
                    let get = |tt: usize, p: usize, r: usize| x.bit((tt * n + p) * d + r);
                    let (cur, sp) = self.pointwise_tokens(plan, &get, WeightSrc::Sram(weights), bias, lif, n)?;
                    self.trace.push(label, Activation::Currents(cur));
                    self.trace.push(format!("{prefix}.{}.lif", i + 1), Activation::Spikes(sp.clone()));
                    x = sp;
                    i += 2;
                    continue;
                }
                LayerSpec::Ssa(spec) => {
                    let o = self.ssa(spec, &label, &x)?;
                    self.trace.push_ssa(&label, &o);
                    x = o.out;
                }
                LayerSpec::IandResidual { inner } => {
                    let y = self.token_layers(inner, &label, x.clone())?;
                    let plan = self.next_plan(&label)?;
                    let (out, stats) = exec_iand(&mut self.ctx, plan, &x, &y)?;
                    self.record(plan, &stats, Some(&out));
                    self.trace.push(label, Activation::Spikes(out.clone()));
                    x = out;
                }
                l => return Err(Error::Unsupported(format!("{label}: {} on tokens", l.kind()))),
            }
            i += 1;
        }
        Ok(x)
    }

    /// Attention as `Q (K^T V)`: per head, `K^T V` lands in the temp bank and
    /// then serves as the stationary operand for `Q`.
    fn ssa(&mut self, spec: &SsaSpec, label: &str, x: &SpikeTensor) -> Result<SsaOutput> {
        let [t, n, d] = match *x.shape() {
            [a, b, c] => [a, b, c],
            ref s => return Err(Error::shape(format!("{label}: {s:?}"))),
        };
        let dh = spec.head_dim();
        let get = |tt: usize, p: usize, r: usize| x.bit((tt * n + p) * d + r);
        let proj = |r: &mut Self,
                    name: &str,
                    p: &crate::reference::ssa::Projection,
                    src: &dyn Fn(usize, usize, usize) -> bool| {
            let plan = r.next_plan(&format!("{label}.{name}"))?;
            r.pointwise_tokens(plan, src, WeightSrc::Sram(&p.weights), &p.bias, &p.lif, n)
        };
        let (q_currents, q) = proj(self, "q", &spec.q, &get)?;
        let (k_currents, k) = proj(self, "k", &spec.k, &get)?;
        let (v_currents, v) = proj(self, "v", &spec.v, &get)?;

        let m_words = t * dh * dh;
        let temp_words = self.ctx.banks.temp.capacity_words();
        let m_base = temp_words.checked_sub(m_words).ok_or_else(|| Error::Capacity {
            bank: "temp".into(),
            addr: 0,
            end: m_words,
            capacity: temp_words,
        })?;
        let mut attn_cur = vec![0i32; t * n * d];
        let mut attn_bits = vec![false; t * n * d];
        for h in 0..spec.heads {
            let base = h * dh;
            let plan = self.next_plan(&format!("{label}.h{h}.kv"))?;
            let v_in = |tt: usize, j: usize, m: usize| v.bit((tt * n + m) * d + base + j);
            let k_op = |tt: usize, i: usize, m: usize| k.bit((tt * n + m) * d + base + i);
            let o = exec_pointwise(&mut self.ctx, plan, &v_in, WeightSrc::Spikes(&k_op), &[], 0, None)?;
            // o.currents is [t][i][j] = (K^T V)[i][j]
            for (a, val) in o.currents.iter().enumerate() {
                self.ctx.banks.temp.write_i32(m_base + a, *val)?;
            }
            self.record(plan, &o.stats, None);

            let plan = self.next_plan(&format!("{label}.h{h}.qkv"))?;
            if plan.temp_footprint_words > m_base {
                return Err(Error::Capacity {
                    bank: "temp".into(),
                    addr: m_base,
                    end: plan.temp_footprint_words,
                    capacity: temp_words,
                });
            }
            let q_in = |tt: usize, p: usize, i: usize| q.bit((tt * n + p) * d + base + i);
            let o = exec_pointwise(
                &mut self.ctx,
                plan,
                &q_in,
                WeightSrc::Temp { base: m_base },
                &[],
                spec.scale_shift,
                Some(&spec.attn_lif),
            )?;
            let (cur, sp) = tokens_major(&o, t, dh, n);
            for tt in 0..t {
                for p in 0..n {
                    for j in 0..dh {
                        attn_cur[(tt * n + p) * d + base + j] = cur[(tt * n + p) * dh + j];
                        attn_bits[(tt * n + p) * d + base + j] = sp[(tt * n + p) * dh + j];
                    }
                }
            }
            let head_spikes = SpikeTensor::from_bits(&[t, n, dh], &bool_bits(&sp))?;
            self.record(plan, &o.stats, Some(&head_spikes));
        }
        let attn_currents = AccTensor::new(&[t, n, d], attn_cur, 0)?;
        let attn = SpikeTensor::from_bits(&[t, n, d], &bool_bits(&attn_bits))?;
        let a_in = |tt: usize, p: usize, r: usize| attn.bit((tt * n + p) * d + r);
        let (proj_currents, out) = proj(self, "proj", &spec.proj, &a_in)?;
        Ok(SsaOutput { q_currents, q, k_currents, k, v_currents, v, attn_currents, attn, proj_currents, out })
    }
}

/// Runs compiled plans for `cfg` on `img`. Values must match the reference
/// under any schedule; only the counters differ.
pub fn execute(
    cfg: &ModelConfig,
    plans: &[LayerPlan],
    img: &ByteImage,
    accel: &AccelConfig,
    sched: &Schedule,
    banks: &mut BankSet,
) -> Result<Execution> {
    sched.validate(cfg.time_steps)?;
    if img.shape() != cfg.input {
        return Err(Error::shape(format!("image {:?} but model expects {:?}", img.shape(), cfg.input)));
    }
    let before = banks.traffic();
    let mut r = Runner {
        ctx: LayerCtx { cfg: accel, sched, banks },
        plans: plans.iter(),
        t: cfg.time_steps,
        trace: LayerTrace::default(),
        layers: Vec::new(),
        before: TrafficReport::default(),
    };
    let mut x = r.tokenizer(cfg, img)?;
    for (b, block) in cfg.blocks.iter().enumerate() {
        x = r.token_layers(std::slice::from_ref(&block.attn), &format!("block{b}.attn"), x)?;
        x = r.token_layers(std::slice::from_ref(&block.mlp), &format!("block{b}.mlp"), x)?;
    }
    let plan = r.next_plan("head")?;
    let (logits, stats) = exec_head(&mut r.ctx, plan, &x, &cfg.head.weights, &cfg.head.bias)?;
    r.record(plan, &stats, None);
    r.trace.push("head", Activation::Currents(logits.clone()));
    if let Some(p) = r.plans.next() {
        return Err(Error::ConfigMismatch(format!("plan {} left unexecuted", p.label)));
    }
    let total = r.total();
    let hidden: u64 = plans.iter().filter(|_| accel.overlap_drain).map(|p| p.drain_cycles()).sum();
    let report = RunReport {
        schedule: *sched,
        clock_hz: accel.clock_hz,
        cycles_without_overlap: total.cycles + hidden,
        frames_per_second: if total.cycles > 0 { accel.clock_hz as f64 / total.cycles as f64 } else { 0.0 },
        utilization: total.utilization(accel),
        total,
        layers: r.layers,
        traffic: r.ctx.banks.traffic().since(&before),
    };
    Ok(Execution { logits, report, trace: r.trace })
}

/// Compiles, sizes fresh banks and executes.
pub fn simulate(
    cfg: &ModelConfig,
    img: &ByteImage,
    accel: &AccelConfig,
    sched: &Schedule,
    budget: &SramBudget,
) -> Result<Execution> {
    let plans = compile(cfg, accel, sched)?;
    let mut banks = banks_for(&plans, budget);
    execute(cfg, &plans, img, accel, sched, &mut banks)
}

/// Cycle total of compiled plans, without running them.
pub fn planned_cycles(plans: &[LayerPlan], accel: &AccelConfig) -> u64 {
    plans.iter().map(|p| p.cycles(accel)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerComparison {
    pub label: String,
    pub serial_weight_reads: u64,
    pub parallel_weight_reads: u64,
    pub serial_cycles: u64,
    pub parallel_cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleSummary {
    pub cycles: u64,
    pub fill_cycles: u64,
    pub vector_cycles: u64,
    pub weight_sram_reads: u64,
    pub pe_weight_sram_reads: u64,
    pub membrane_reads: u64,
    pub membrane_writes: u64,
    pub membrane_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub time_steps: usize,
    pub serial: ScheduleSummary,
    pub parallel: ScheduleSummary,
    /// `1 - parallel / serial` over time-stepped PE layers, in percent.
    pub weight_access_reduction_pct: f64,
    /// Expected value `1 - 1/T`, in percent.
    pub expected_reduction_pct: f64,
    /// Parallel cycles over serial cycles.
    pub latency_ratio: f64,
    /// Same ratio over PE compute only (vector unit excluded).
    pub pe_latency_ratio: f64,
    pub logits_match: bool,
    pub layers: Vec<LayerComparison>,
}

fn summary(e: &Execution, plans: &[LayerPlan]) -> ScheduleSummary {
    let r = &e.report;
    let mem = r.traffic.bank("membrane").cloned().unwrap_or_default();
    ScheduleSummary {
        cycles: r.total.cycles,
        fill_cycles: r.total.fill_cycles,
        vector_cycles: r.total.vector_cycles,
        weight_sram_reads: r.traffic.bank("weight").map_or(0, |b| b.reads),
        pe_weight_sram_reads: r.pe_weight_reads(),
        membrane_reads: mem.reads,
        membrane_writes: mem.writes,
        membrane_bytes: membrane_bytes_total(plans),
    }
}

/// Runs both schedules on the same input and reports the cost differences.
pub fn compare_schedules(
    cfg: &ModelConfig,
    accel: &AccelConfig,
    img: &ByteImage,
    budget: &SramBudget,
) -> Result<Comparison> {
    let t = cfg.time_steps;
    let ser_sched = Schedule::serial(t);
    let par_sched = Schedule::parallel(t)?;
    let ser_plans = compile(cfg, accel, &ser_sched)?;
    let par_plans = compile(cfg, accel, &par_sched)?;
    let ser = execute(cfg, &ser_plans, img, accel, &ser_sched, &mut banks_for(&ser_plans, budget))?;
    let par = execute(cfg, &par_plans, img, accel, &par_sched, &mut banks_for(&par_plans, budget))?;
    let (s, p) = (summary(&ser, &ser_plans), summary(&par, &par_plans));
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let pe = |x: &ScheduleSummary| x.cycles - x.vector_cycles;
    let layers = ser
        .report
        .layers
        .iter()
        .zip(&par.report.layers)
        .map(|(a, b)| LayerComparison {
            label: a.label.clone(),
            serial_weight_reads: a.weight_sram_reads,
            parallel_weight_reads: b.weight_sram_reads,
            serial_cycles: a.cycles,
            parallel_cycles: b.cycles,
        })
        .collect();
    Ok(Comparison {
        time_steps: t,
        weight_access_reduction_pct: 100.0 * (1.0 - ratio(p.pe_weight_sram_reads, s.pe_weight_sram_reads)),
        expected_reduction_pct: 100.0 * (1.0 - 1.0 / t as f64),
        latency_ratio: ratio(p.cycles, s.cycles),
        pe_latency_ratio: ratio(pe(&p), pe(&s)),
        logits_match: ser.logits == par.logits,
        serial: s,
        parallel: ScheduleSummary { membrane_bytes: 0, ..p },
        layers,
    })
}
