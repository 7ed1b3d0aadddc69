// SPDX-License-Identifier: Apache-2.0

//! Cycle-level model of the compute fabric: 12 PE blocks, each four 8x9 PE
//! arrays (one per time-step lane), a 12-channel accumulator backed by the
//! temp SRAM, and reconfigurable unrolled LIF units.

pub mod accumulate;
pub mod exec;
pub mod lif_unit;
pub mod plan;
pub mod tile;

use serde::{Deserialize, Serialize};

pub use accumulate::{accumulate_group, BlockOutput, GroupFlags, PartialSumStore};
pub use exec::{run_layer, LayerCtx, LayerRun};
pub use lif_unit::{unrolled_lif, LifUnitOutput, Selectors, UnrolledLifUnit};
pub use plan::{JobKind, LayerPlan, TileJob};
pub use tile::{conv3x3_tile, matmul_tile, Conv3x3Array, MatmulArray, TileResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccelConfig {
    pub pe_rows: usize,
    pub pe_cols: usize,
    pub arrays_per_block: usize,
    pub num_blocks: usize,
    pub clock_hz: u64,
    /// A spike MAC counts as two operations.
    pub ops_per_pe_cycle: u64,
    /// Overlap accumulator drain with the next job's compute.
    pub overlap_drain: bool,
    /// Count a PE as active only when its input spike is 1.
    pub sparsity_gating: bool,
    /// Lanes of the elementwise vector unit (IAND, pooling, head reduction).
    pub vector_lanes: usize,
}

impl Default for AccelConfig {
    fn default() -> Self {
        Self {
            pe_rows: 8,
            pe_cols: 9,
            arrays_per_block: 4,
            num_blocks: 12,
            clock_hz: 500_000_000,
            ops_per_pe_cycle: 2,
            overlap_drain: true,
            sparsity_gating: true,
            vector_lanes: 8,
        }
    }
}

impl AccelConfig {
    pub fn total_pes(&self) -> usize {
        self.pe_rows * self.pe_cols * self.arrays_per_block * self.num_blocks
    }

    /// Peak spike operations per second.
    pub fn peak_sops(&self) -> u64 {
        self.ops_per_pe_cycle * self.total_pes() as u64 * self.clock_hz
    }

    pub fn peak_gsops(&self) -> f64 {
        self.peak_sops() as f64 / 1e9
    }

    /// Input channels one 3x3 job reduces (one per PE block).
    pub fn conv3x3_group(&self) -> usize {
        self.num_blocks
    }

    /// Reduction elements one 1x1/matmul job covers (9 columns per block).
    pub fn pointwise_group(&self) -> usize {
        self.num_blocks * self.pe_cols
    }

    pub fn validate(&self) -> crate::Result<()> {
        // the tile dataflows are written for the 8x9 array and four lanes
        if self.pe_rows != 8 || self.pe_cols != 9 || self.arrays_per_block != 4 {
            return Err(crate::Error::Config(format!(
                "PE array must be 8x9 with 4 arrays per block (got {}x{}x{})",
                self.pe_rows, self.pe_cols, self.arrays_per_block
            )));
        }
        if self.num_blocks == 0 || self.vector_lanes == 0 || self.clock_hz == 0 {
            return Err(crate::Error::Config("blocks, vector lanes and clock must be nonzero".into()));
        }
        Ok(())
    }
}

/// Cycle and activity counters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleStats {
    pub cycles: u64,
    pub pe_active_ops: u64,
    /// Pipeline-fill cycles included in `cycles`.
    pub fill_cycles: u64,
    /// Accumulator drain cycles included in `cycles` (zero with overlap).
    pub drain_cycles: u64,
    /// Drain cycles that overlap hides; added to `cycles` when overlap is off.
    pub hidden_drain_cycles: u64,
    /// Elementwise vector unit cycles included in `cycles`.
    pub vector_cycles: u64,
}

impl CycleStats {
    pub fn utilization(&self, cfg: &AccelConfig) -> f64 {
        if self.cycles == 0 {
            return 0.0;
        }
        self.pe_active_ops as f64 / (self.cycles as f64 * cfg.total_pes() as f64 * cfg.ops_per_pe_cycle as f64)
    }

    pub fn add(&mut self, o: &CycleStats) {
        self.cycles += o.cycles;
        self.pe_active_ops += o.pe_active_ops;
        self.fill_cycles += o.fill_cycles;
        self.drain_cycles += o.drain_cycles;
        self.hidden_drain_cycles += o.hidden_drain_cycles;
        self.vector_cycles += o.vector_cycles;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_constants() {
        let c = AccelConfig::default();
        assert_eq!(c.total_pes(), 3456);
        assert_eq!(c.peak_sops(), 3_456_000_000_000);
        assert_eq!(c.peak_gsops(), 3456.0);
        assert_eq!(c.pointwise_group(), 108);
    }

    #[test]
    fn utilization_bounds() {
        let c = AccelConfig::default();
        let s = CycleStats { cycles: 10, pe_active_ops: 10 * 3456 * 2, ..Default::default() };
        assert_eq!(s.utilization(&c), 1.0);
        assert_eq!(CycleStats::default().utilization(&c), 0.0);
    }
}
