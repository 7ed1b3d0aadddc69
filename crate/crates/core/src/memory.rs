// SPDX-License-Identifier: Apache-2.0

//! Counted on-chip SRAM banks, off-chip traffic, and a linear energy model.

use serde::{Deserialize, Serialize};

use crate::accel::CycleStats;
use crate::error::{Error, Result};

/// Word-addressed SRAM with read/write counters. Accesses past capacity fail.
#[derive(Clone, Debug)]
pub struct SramBank {
    name: String,
    capacity_bytes: usize,
    word_bits: u32,
    data: Vec<u64>,
    reads: u64,
    writes: u64,
}

impl SramBank {
    pub fn new(name: impl Into<String>, capacity_bytes: usize, word_bits: u32) -> Self {
        assert!((1..=64).contains(&word_bits), "word width {word_bits} not in 1..=64");
        let words = capacity_bytes * 8 / word_bits as usize;
        Self { name: name.into(), capacity_bytes, word_bits, data: vec![0; words], reads: 0, writes: 0 }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn capacity_bytes(&self) -> usize {
        self.capacity_bytes
    }

    pub fn capacity_words(&self) -> usize {
        self.data.len()
    }

    pub fn word_bits(&self) -> u32 {
        self.word_bits
    }

    pub fn reads(&self) -> u64 {
        self.reads
    }

    pub fn writes(&self) -> u64 {
        self.writes
    }

    fn check(&self, addr: usize, n: usize) -> Result<()> {
        let end = addr.saturating_add(n);
        if end > self.data.len() {
            return Err(Error::Capacity { bank: self.name.clone(), addr, end, capacity: self.data.len() });
        }
        Ok(())
    }

    fn mask(&self) -> u64 {
        if self.word_bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.word_bits) - 1
        }
    }

    pub fn write(&mut self, addr: usize, words: &[u64]) -> Result<()> {
        self.check(addr, words.len())?;
        let mask = self.mask();
        for (slot, w) in self.data[addr..addr + words.len()].iter_mut().zip(words) {
            *slot = w & mask;
        }
        self.writes += words.len() as u64;
        Ok(())
    }

    pub fn read(&mut self, addr: usize, n: usize) -> Result<Vec<u64>> {
        self.check(addr, n)?;
        self.reads += n as u64;
        Ok(self.data[addr..addr + n].to_vec())
    }

    pub fn write_word(&mut self, addr: usize, word: u64) -> Result<()> {
        self.check(addr, 1)?;
        self.data[addr] = word & self.mask();
        self.writes += 1;
        Ok(())
    }

    pub fn read_word(&mut self, addr: usize) -> Result<u64> {
        self.check(addr, 1)?;
        self.reads += 1;
        Ok(self.data[addr])
    }

    /// Signed 32-bit view for accumulator banks.
    pub fn write_i32(&mut self, addr: usize, v: i32) -> Result<()> {
        self.write_word(addr, v as u32 as u64)
    }

    pub fn read_i32(&mut self, addr: usize) -> Result<i32> {
        Ok(self.read_word(addr)? as u32 as i32)
    }

    /// Counts an access of `n` words without moving data.
    pub fn touch_read(&mut self, addr: usize, n: usize) -> Result<()> {
        self.check(addr, n)?;
        self.reads += n as u64;
        Ok(())
    }

    pub fn touch_write(&mut self, addr: usize, n: usize) -> Result<()> {
        self.check(addr, n)?;
        self.writes += n as u64;
        Ok(())
    }

    /// Counts `n` words streamed through the bank as a ring buffer.
    pub fn stream_read(&mut self, n: u64) {
        self.reads += n;
    }

    pub fn stream_write(&mut self, n: u64) {
        self.writes += n;
    }

    pub fn traffic(&self) -> BankTraffic {
        let bytes = |n: u64| n * self.word_bits as u64 / 8;
        BankTraffic {
            name: self.name.clone(),
            capacity_bytes: self.capacity_bytes,
            word_bits: self.word_bits,
            reads: self.reads,
            writes: self.writes,
            read_bytes: bytes(self.reads),
            write_bytes: bytes(self.writes),
        }
    }
}

/// Per-bank capacities. The default split sums to 139.25 KB.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SramBudget {
    pub weight_bytes: usize,
    pub spike_in_bytes: usize,
    pub temp_bytes: usize,
    pub spike_temp_bytes: usize,
}

impl Default for SramBudget {
    fn default() -> Self {
        Self {
            weight_bytes: 64 * 1024,
            spike_in_bytes: 32 * 1024,
            temp_bytes: 32 * 1024,
            spike_temp_bytes: 11 * 1024 + 256,
        }
    }
}

impl SramBudget {
    pub fn total_bytes(&self) -> usize {
        self.weight_bytes + self.spike_in_bytes + self.temp_bytes + self.spike_temp_bytes
    }
}

pub const WEIGHT_WORD_BITS: u32 = 8;
pub const SPIKE_WORD_BITS: u32 = 64;
pub const ACC_WORD_BITS: u32 = 32;

/// The accelerator's banks plus off-chip transfer counters.
#[derive(Clone, Debug)]
pub struct BankSet {
    pub weight: SramBank,
    pub spike_in: SramBank,
    pub temp: SramBank,
    pub spike_temp: SramBank,
    /// Only present for the serial baseline; sits outside the budget.
    pub membrane: SramBank,
    pub offchip_read_bytes: u64,
    pub offchip_write_bytes: u64,
}

impl BankSet {
    pub fn new(budget: &SramBudget, membrane_bytes: usize) -> Self {
        Self {
            weight: SramBank::new("weight", budget.weight_bytes, WEIGHT_WORD_BITS),
            spike_in: SramBank::new("spike_in", budget.spike_in_bytes, SPIKE_WORD_BITS),
            temp: SramBank::new("temp", budget.temp_bytes, ACC_WORD_BITS),
            spike_temp: SramBank::new("spike_temp", budget.spike_temp_bytes, SPIKE_WORD_BITS),
            membrane: SramBank::new("membrane", membrane_bytes, ACC_WORD_BITS),
            offchip_read_bytes: 0,
            offchip_write_bytes: 0,
        }
    }

    /// On-chip capacity inside the budget (membrane bank excluded).
    pub fn budget_bytes(&self) -> usize {
        self.weight.capacity_bytes()
            + self.spike_in.capacity_bytes()
            + self.temp.capacity_bytes()
            + self.spike_temp.capacity_bytes()
    }

    pub fn banks(&self) -> [&SramBank; 5] {
        [&self.weight, &self.spike_in, &self.temp, &self.spike_temp, &self.membrane]
    }

    pub fn traffic(&self) -> TrafficReport {
        TrafficReport::new(
            self.banks().iter().map(|b| b.traffic()).collect(),
            self.offchip_read_bytes,
            self.offchip_write_bytes,
        )
    }
}

/// Default bank partition for the accelerator; no membrane storage.
pub fn default_budget() -> BankSet {
    BankSet::new(&SramBudget::default(), 0)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankTraffic {
    pub name: String,
    pub capacity_bytes: usize,
    pub word_bits: u32,
    pub reads: u64,
    pub writes: u64,
    pub read_bytes: u64,
    pub write_bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub banks: Vec<BankTraffic>,
    pub offchip_read_bytes: u64,
    pub offchip_write_bytes: u64,
    pub total_reads: u64,
    pub total_writes: u64,
    pub total_bytes: u64,
}

impl TrafficReport {
    pub fn new(banks: Vec<BankTraffic>, offchip_read_bytes: u64, offchip_write_bytes: u64) -> Self {
        let total_reads = banks.iter().map(|b| b.reads).sum();
        let total_writes = banks.iter().map(|b| b.writes).sum();
        let total_bytes = banks.iter().map(|b| b.read_bytes + b.write_bytes).sum();
        Self { banks, offchip_read_bytes, offchip_write_bytes, total_reads, total_writes, total_bytes }
    }

    pub fn bank(&self, name: &str) -> Option<&BankTraffic> {
        self.banks.iter().find(|b| b.name == name)
    }

    /// Counter-wise difference `self - earlier`, for per-layer logs.
    pub fn since(&self, earlier: &TrafficReport) -> TrafficReport {
        let banks = self
            .banks
            .iter()
            .map(|b| {
                let e = earlier.bank(&b.name).cloned().unwrap_or_default();
                BankTraffic {
                    reads: b.reads - e.reads,
                    writes: b.writes - e.writes,
                    read_bytes: b.read_bytes - e.read_bytes,
                    write_bytes: b.write_bytes - e.write_bytes,
                    ..b.clone()
                }
            })
            .collect();
        TrafficReport::new(
            banks,
            self.offchip_read_bytes - earlier.offchip_read_bytes,
            self.offchip_write_bytes - earlier.offchip_write_bytes,
        )
    }
}

/// Read/write energy of one bank, in pJ per 64-bit word.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessEnergy {
    pub read_pj: f64,
    pub write_pj: f64,
}

impl Default for AccessEnergy {
    fn default() -> Self {
        Self { read_pj: 1.0, write_pj: 1.2 }
    }
}

/// Per-access energy coefficients. Placeholders for relative comparison only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    pub weight: AccessEnergy,
    pub spike_in: AccessEnergy,
    pub temp: AccessEnergy,
    pub spike_temp: AccessEnergy,
    pub membrane: AccessEnergy,
    pub spike_op_pj: f64,
    /// Per 64-bit off-chip word.
    pub offchip_pj: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            weight: AccessEnergy::default(),
            spike_in: AccessEnergy::default(),
            temp: AccessEnergy::default(),
            spike_temp: AccessEnergy::default(),
            membrane: AccessEnergy::default(),
            spike_op_pj: 0.05,
            offchip_pj: 100.0,
        }
    }
}

impl EnergyModel {
    pub fn zero() -> Self {
        let z = AccessEnergy { read_pj: 0.0, write_pj: 0.0 };
        Self { weight: z, spike_in: z, temp: z, spike_temp: z, membrane: z, spike_op_pj: 0.0, offchip_pj: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            self.weight.read_pj,
            self.weight.write_pj,
            self.spike_in.read_pj,
            self.spike_in.write_pj,
            self.temp.read_pj,
            self.temp.write_pj,
            self.spike_temp.read_pj,
            self.spike_temp.write_pj,
            self.membrane.read_pj,
            self.membrane.write_pj,
            self.spike_op_pj,
            self.offchip_pj,
        ];
        if coeffs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Config("energy coefficients must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn bank(&self, name: &str) -> AccessEnergy {
        match name {
            "weight" => self.weight,
            "spike_in" => self.spike_in,
            "temp" => self.temp,
            "spike_temp" => self.spike_temp,
            "membrane" => self.membrane,
            _ => AccessEnergy { read_pj: 0.0, write_pj: 0.0 },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BankEnergy {
    pub name: String,
    pub pj: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total_pj: f64,
    pub sram_pj: f64,
    pub offchip_pj: f64,
    pub logic_pj: f64,
    pub memory_fraction: f64,
    pub per_bank: Vec<BankEnergy>,
    /// Always true: coefficients are placeholders, not silicon measurements.
    pub non_comparable: bool,
}

/// Linear energy estimate from counters.
pub fn energy_report(traffic: &TrafficReport, ops: &CycleStats, model: &EnergyModel) -> EnergyReport {
    let per_bank: Vec<BankEnergy> = traffic
        .banks
        .iter()
        .map(|b| {
            let e = model.bank(&b.name);
            let scale = b.word_bits as f64 / 64.0;
            BankEnergy { name: b.name.clone(), pj: (b.reads as f64 * e.read_pj + b.writes as f64 * e.write_pj) * scale }
        })
        .collect();
    let sram_pj: f64 = per_bank.iter().map(|b| b.pj).sum();
    let offchip_pj = (traffic.offchip_read_bytes + traffic.offchip_write_bytes) as f64 / 8.0 * model.offchip_pj;
    let logic_pj = ops.pe_active_ops as f64 * model.spike_op_pj;
    let total_pj = sram_pj + offchip_pj + logic_pj;
    EnergyReport {
        total_pj,
        sram_pj,
        offchip_pj,
        logic_pj,
        memory_fraction: if total_pj > 0.0 { (sram_pj + offchip_pj) / total_pj } else { 0.0 },
        per_bank,
        non_comparable: true,
    }
}
