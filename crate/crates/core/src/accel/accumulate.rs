// SPDX-License-Identifier: Apache-2.0

//! 12-channel accumulator and the temp-SRAM partial-sum store.
//!
//! Each time-step lane owns its own region of the store; block outputs carry
//! their lane tag and are rejected if lanes would mix.

use crate::error::{add_i32, Error, Result};
use crate::memory::SramBank;

use super::tile::LANES;

/// One PE array's 8-lane partial sums, tagged with its time-step lane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockOutput {
    pub lane: usize,
    pub sums: [i32; LANES],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GroupFlags {
    /// First channel group of this output: initialize with bias instead of reading.
    pub first: bool,
    /// Last channel group: currents are complete after this update.
    pub last: bool,
}

/// Layout of one output channel's partial sums in the temp bank.
#[derive(Clone, Debug)]
pub struct PartialSumStore {
    lanes: usize,
    positions: usize,
    initialized: Vec<bool>,
}

impl PartialSumStore {
    pub fn new(temp: &SramBank, lanes: usize, positions: usize) -> Result<Self> {
        let words = lanes * positions;
        if words > temp.capacity_words() {
            return Err(Error::Capacity {
                bank: temp.name().to_string(),
                addr: 0,
                end: words,
                capacity: temp.capacity_words(),
            });
        }
        Ok(Self { lanes, positions, initialized: vec![false; words] })
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    fn addr(&self, lane: usize, pos: usize) -> usize {
        lane * self.positions + pos
    }

    /// Reads out one lane's finished currents and clears its init state.
    pub fn release(&mut self, temp: &mut SramBank, lane: usize) -> Result<Vec<i32>> {
        let mut out = Vec::with_capacity(self.positions);
        for pos in 0..self.positions {
            let a = self.addr(lane, pos);
            if !self.initialized[a] {
                return Err(Error::InvalidValue(format!(
                    "partial sum lane {lane} position {pos} released before initialization"
                )));
            }
            self.initialized[a] = false;
            out.push(temp.read_i32(a)?);
        }
        Ok(out)
    }
}

/// Reduces a channel group's block outputs for one lane and folds them into
/// the temp store at `positions` (one entry per vector lane; `None` marks
/// padding or decimated positions). `shift` weights bitplane contributions.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_group(
    store: &mut PartialSumStore,
    temp: &mut SramBank,
    lane: usize,
    positions: &[Option<usize>; LANES],
    blocks: &[BlockOutput],
    bias: i32,
    shift: u32,
    flags: GroupFlags,
) -> Result<()> {
    if lane >= store.lanes {
        return Err(Error::InvalidValue(format!("lane {lane} of {}", store.lanes)));
    }
    if let Some(b) = blocks.iter().find(|b| b.lane != lane) {
        return Err(Error::ConfigMismatch(format!("time-step lane {} mixed into lane {lane}", b.lane)));
    }
    for (l, pos) in positions.iter().enumerate() {
        let Some(pos) = *pos else { continue };
        let mut sum = 0i32;
        for b in blocks {
            sum = add_i32(sum, b.sums[l], "channel accumulation")?;
        }
        let sum = sum.checked_mul(1i32 << shift).ok_or(Error::Overflow("bitplane shift"))?;
        let a = store.addr(lane, pos);
        let value = if flags.first {
            store.initialized[a] = true;
            add_i32(bias, sum, "bias add")?
        } else {
            if !store.initialized[a] {
                return Err(Error::InvalidValue(format!(
                    "missing first-group initialization at lane {lane} position {pos}"
                )));
            }
            add_i32(temp.read_i32(a)?, sum, "temp accumulation")?
        };
        temp.write_i32(a, value)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (PartialSumStore, SramBank) {
        let temp = SramBank::new("temp", 1024, 32);
        (PartialSumStore::new(&temp, 4, 8).unwrap(), temp)
    }

    fn all_pos() -> [Option<usize>; LANES] {
        std::array::from_fn(Some)
    }

    fn twelve_ones(lane: usize) -> Vec<BlockOutput> {
        vec![BlockOutput { lane, sums: [1; LANES] }; 12]
    }

    #[test]
    fn one_group_of_twelve() {
        let (mut store, mut temp) = setup();
        for lane in 0..4 {
            let flags = GroupFlags { first: true, last: true };
            accumulate_group(&mut store, &mut temp, lane, &all_pos(), &twelve_ones(lane), 0, 0, flags).unwrap();
        }
        for lane in 0..4 {
            assert_eq!(store.release(&mut temp, lane).unwrap(), vec![12; 8]);
        }
    }

    #[test]
    fn second_group_doubles() {
        let (mut store, mut temp) = setup();
        let first = GroupFlags { first: true, last: false };
        let last = GroupFlags { first: false, last: true };
        accumulate_group(&mut store, &mut temp, 2, &all_pos(), &twelve_ones(2), 0, 0, first).unwrap();
        accumulate_group(&mut store, &mut temp, 2, &all_pos(), &twelve_ones(2), 0, 0, last).unwrap();
        assert_eq!(store.release(&mut temp, 2).unwrap(), vec![24; 8]);
    }

    #[test]
    fn missing_initialization_is_an_error() {
        let (mut store, mut temp) = setup();
        let flags = GroupFlags { first: false, last: true };
        assert!(accumulate_group(&mut store, &mut temp, 0, &all_pos(), &twelve_ones(0), 0, 0, flags).is_err());
        assert!(store.release(&mut temp, 1).is_err());
    }

    #[test]
    fn lanes_never_mix() {
        let (mut store, mut temp) = setup();
        let mut blocks = twelve_ones(1);
        blocks[5].lane = 2;
        let flags = GroupFlags { first: true, last: true };
        assert!(matches!(
            accumulate_group(&mut store, &mut temp, 1, &all_pos(), &blocks, 0, 0, flags),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn bias_and_shift() {
        let (mut store, mut temp) = setup();
        let flags = GroupFlags { first: true, last: true };
        let blocks = [BlockOutput { lane: 0, sums: [3; LANES] }];
        let mut pos = [None; LANES];
        pos[0] = Some(5);
        accumulate_group(&mut store, &mut temp, 0, &pos, &blocks, -1, 2, flags).unwrap();
        assert_eq!(temp.read_i32(5).unwrap(), 11);
    }

    #[test]
    fn store_capacity_checked() {
        let temp = SramBank::new("temp", 64, 32);
        assert!(PartialSumStore::new(&temp, 4, 5).is_err());
    }
}
