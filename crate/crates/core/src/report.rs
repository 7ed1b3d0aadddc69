// SPDX-License-Identifier: Apache-2.0

//! JSON run, comparison and stats reports. Field names are stable.

use serde::Serialize;

use crate::accel::plan::PlanKind;
use crate::accel::{AccelConfig, CycleStats};
use crate::memory::{energy_report, EnergyModel, EnergyReport, SramBudget, TrafficReport};
use crate::reference::model::ModelConfig;
use crate::scheduler::{planned_cycles, Comparison, Execution, LayerReport, Schedule};
use crate::verify::VerifyReport;

/// Frames per second published for a model of roughly the `paper-384` shape.
pub const PUBLISHED_FRAMES_PER_SECOND: f64 = 46.72;
/// Weight-access reduction published against an external baseline design.
pub const PUBLISHED_WEIGHT_ACCESS_REDUCTION_PCT: f64 = 43.2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSection {
    pub name: String,
    pub time_steps: usize,
    pub input: [usize; 3],
    pub blocks: usize,
    pub weight_words: usize,
    pub total_pes: usize,
    pub peak_gsops: f64,
    pub clock_hz: u64,
}

impl ModelSection {
    pub fn new(cfg: &ModelConfig, accel: &AccelConfig) -> Self {
        Self {
            name: cfg.name.clone(),
            time_steps: cfg.time_steps,
            input: cfg.input,
            blocks: cfg.blocks.len(),
            weight_words: cfg.weight_words(),
            total_pes: accel.total_pes(),
            peak_gsops: accel.peak_gsops(),
            clock_hz: accel.clock_hz,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CyclesSection {
    pub total: u64,
    pub fill: u64,
    pub drain: u64,
    pub hidden_drain: u64,
    pub vector: u64,
    pub without_overlap: u64,
    pub pe_active_ops: u64,
    pub utilization: f64,
    pub frames_per_second: f64,
    pub per_layer: Vec<LayerReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerSparsity {
    pub label: String,
    pub sparsity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparsitySection {
    /// Mean over firing layers of the fraction of zero output spikes.
    pub mean: f64,
    pub per_layer: Vec<LayerSparsity>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergySection {
    #[serde(flatten)]
    pub report: EnergyReport,
    pub per_inference_pj: f64,
    pub note: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunDocument {
    pub model: ModelSection,
    pub schedule: Schedule,
    pub cycles: CyclesSection,
    pub traffic: TrafficReport,
    pub energy: EnergySection,
    pub sparsity: SparsitySection,
    pub verification: Option<VerifyReport>,
    pub logits: Vec<i32>,
}

pub const ENERGY_NOTE: &str =
    "placeholder per-access coefficients; useful for relative comparison only, not comparable to silicon measurements";

pub fn run_document(
    cfg: &ModelConfig,
    accel: &AccelConfig,
    energy: &EnergyModel,
    exec: &Execution,
    verification: Option<VerifyReport>,
) -> RunDocument {
    let r = &exec.report;
    let t: &CycleStats = &r.total;
    let per_layer: Vec<LayerSparsity> = r
        .layers
        .iter()
        .filter_map(|l| l.output_sparsity.map(|s| LayerSparsity { label: l.label.clone(), sparsity: s }))
        .collect();
    let mean = if per_layer.is_empty() {
        0.0
    } else {
        per_layer.iter().map(|l| l.sparsity).sum::<f64>() / per_layer.len() as f64
    };
    let e = energy_report(&r.traffic, t, energy);
    RunDocument {
        model: ModelSection::new(cfg, accel),
        schedule: r.schedule,
        cycles: CyclesSection {
            total: t.cycles,
            fill: t.fill_cycles,
            drain: t.drain_cycles,
            hidden_drain: r.cycles_without_overlap - t.cycles,
            vector: t.vector_cycles,
            without_overlap: r.cycles_without_overlap,
            pe_active_ops: t.pe_active_ops,
            utilization: r.utilization,
            frames_per_second: r.frames_per_second,
            per_layer: r.layers.clone(),
        },
        traffic: r.traffic.clone(),
        energy: EnergySection { per_inference_pj: e.total_pj, report: e, note: ENERGY_NOTE },
        sparsity: SparsitySection { mean, per_layer },
        verification,
        logits: exec.logits.data().to_vec(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonDocument {
    pub model: ModelSection,
    #[serde(flatten)]
    pub comparison: Comparison,
    pub published_weight_access_reduction_pct: f64,
    pub published_note: &'static str,
}

pub fn comparison_document(cfg: &ModelConfig, accel: &AccelConfig, c: Comparison) -> ComparisonDocument {
    ComparisonDocument {
        model: ModelSection::new(cfg, accel),
        comparison: c,
        published_weight_access_reduction_pct: PUBLISHED_WEIGHT_ACCESS_REDUCTION_PCT,
        published_note: "measured against an external design whose access pattern is unpublished; \
                         reported only, the reduction above is against the serial re-fetch baseline",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlanLayerStats {
    pub label: String,
    pub kind: PlanKind,
    pub jobs: usize,
    pub cycles: u64,
    pub weight_words: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsDocument {
    pub model: ModelSection,
    pub schedule: Schedule,
    pub sram_budget_bytes: usize,
    pub sram_budget_kb: f64,
    pub cycles_per_frame: u64,
    pub pe_cycles: u64,
    pub fill_cycles: u64,
    pub vector_cycles: u64,
    pub frames_per_second: f64,
    pub published_frames_per_second: f64,
    /// Cycles per frame the published rate implies at this clock.
    pub published_cycles_per_frame: u64,
    pub published_ratio: f64,
    pub published_note: String,
    pub layers: Vec<PlanLayerStats>,
}

/// Architecture and planned-cycle statistics; nothing is executed.
pub fn stats_document(
    cfg: &ModelConfig,
    accel: &AccelConfig,
    sched: &Schedule,
    budget: &SramBudget,
) -> crate::Result<StatsDocument> {
    let plans = crate::scheduler::compile(cfg, accel, sched)?;
    let cycles = planned_cycles(&plans, accel);
    let fps = if cycles == 0 { 0.0 } else { accel.clock_hz as f64 / cycles as f64 };
    let vector: u64 = plans.iter().map(|p| p.vector_cycles).sum();
    let fill: u64 = plans.iter().map(|p| p.fill_cycles()).sum();
    let published_cycles = (accel.clock_hz as f64 / PUBLISHED_FRAMES_PER_SECOND).round() as u64;
    Ok(StatsDocument {
        model: ModelSection::new(cfg, accel),
        schedule: *sched,
        sram_budget_bytes: budget.total_bytes(),
        sram_budget_kb: budget.total_bytes() as f64 / 1024.0,
        cycles_per_frame: cycles,
        pe_cycles: cycles - vector,
        fill_cycles: fill,
        vector_cycles: vector,
        frames_per_second: fps,
        published_frames_per_second: PUBLISHED_FRAMES_PER_SECOND,
        published_cycles_per_frame: published_cycles,
        published_ratio: fps / PUBLISHED_FRAMES_PER_SECOND,
        published_note: format!(
            "informational, not a gate: the published rate implies {published_cycles} cycles/frame at {} MHz, \
             this model plans {cycles} ({:.2}x). The published model's exact dimensions, input size and layer \
             mix are not given, so this shape-alike config is not expected to match. The plan also assumes \
             off-chip transfers and accumulator drain overlap compute, with a vector unit of {} lanes",
            accel.clock_hz / 1_000_000,
            published_cycles as f64 / cycles.max(1) as f64,
            accel.vector_lanes
        ),
        layers: plans
            .iter()
            .map(|p| PlanLayerStats {
                label: p.label.clone(),
                kind: p.kind,
                jobs: p.jobs.len(),
                cycles: p.cycles(accel),
                weight_words: p.weight_words,
            })
            .collect(),
    })
}

pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("report serializes");
    s.push('\n');
    s
}
