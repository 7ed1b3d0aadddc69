// SPDX-License-Identifier: Apache-2.0

//! Reconfigurable unrolled LIF neuron.
//!
//! Four LIF stages evaluate four time-step lanes combinationally. Three muxes
//! (left to right: between stages 1-2, 2-3, 3-4) either forward the previous
//! stage's post-reset membrane or cut the chain with 0.

use crate::error::{Error, Result};
use crate::reference::lif::LifParams;

/// Mux selector bits, leftmost bit controls the stage 1 -> 2 link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selectors(u8);

impl Selectors {
    pub const T4: Selectors = Selectors(0b111);
    pub const T2: Selectors = Selectors(0b101);
    pub const T1: Selectors = Selectors(0b000);

    /// Only the three documented patterns are accepted.
    pub fn new(bits: u8) -> Result<Self> {
        match bits {
            0b111 | 0b101 | 0b000 => Ok(Selectors(bits)),
            other => Err(Error::Selector(other)),
        }
    }

    pub fn for_time_steps(t: usize) -> Result<Self> {
        match t {
            4 => Ok(Self::T4),
            2 => Ok(Self::T2),
            1 => Ok(Self::T1),
            _ => Err(Error::InvalidValue(format!("no selector pattern for T={t}"))),
        }
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// Chain length this pattern realizes.
    pub fn time_steps(self) -> usize {
        match self.0 {
            0b111 => 4,
            0b101 => 2,
            _ => 1,
        }
    }

    /// Whether stage `k` (0-based, 1..=3) receives stage `k-1`'s membrane.
    #[inline]
    pub fn links(self, k: usize) -> bool {
        debug_assert!((1..4).contains(&k));
        (self.0 >> (3 - k)) & 1 == 1
    }

    pub fn as_str(self) -> &'static str {
        match self.0 {
            0b111 => "111",
            0b101 => "101",
            _ => "000",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnrolledLifUnit {
    pub params: LifParams,
    pub selectors: Selectors,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct LifUnitOutput {
    pub spikes: [bool; 4],
    /// Post-reset membrane leaving each stage.
    pub membranes: [i32; 4],
}

/// Evaluates all four stages for one cycle.
pub fn unrolled_lif(currents: [i32; 4], unit: &UnrolledLifUnit) -> Result<LifUnitOutput> {
    let mut out = LifUnitOutput::default();
    let mut chain = 0i32;
    for k in 0..4 {
        let chain_in = if k == 0 || !unit.selectors.links(k) { 0 } else { chain };
        let (s, m) = unit.params.step(chain_in, currents[k])?;
        out.spikes[k] = s;
        out.membranes[k] = m;
        chain = m;
    }
    Ok(out)
}
