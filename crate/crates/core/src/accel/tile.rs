// SPDX-License-Identifier: Apache-2.0

//! One 8x9 PE array and its two dataflows.
//!
//! 3x3 convolution: the array is three 8x3 sub-arrays, one per kernel row.
//! Each cycle one input row enters as 8 lanes at three horizontal offsets;
//! PE (ky, kx, lane) gates `w[ky][kx]` by its spike, and partial sums move
//! diagonally to the next kernel row on the next cycle. After two fill
//! cycles a full output row segment (8 lanes) leaves every cycle.
//!
//! 1x1 convolution / matmul: each of the 9 columns holds a different input
//! channel (reduction element); sums accumulate horizontally so 8 outputs
//! leave every cycle with no fill.

use std::ops::Range;

use crate::error::{add_i32, Error, Result};

pub const LANES: usize = 8;
pub const COLS: usize = 9;
pub const FILL_CYCLES: u64 = 2;

#[derive(Clone, Debug)]
pub struct Conv3x3Array {
    weights: [i32; 9],
    stage: [[i32; LANES]; 2],
    steps: u64,
}

impl Conv3x3Array {
    /// `weights` in row-major `[ky][kx]` order.
    pub fn new(weights: [i32; 9]) -> Self {
        Self { weights, stage: [[0; LANES]; 2], steps: 0 }
    }

    /// One clock. `taps[kx][lane]` is the input at column `x0 + lane + kx - 1`
    /// of the current row. Returns the completed row of the row two cycles
    /// back (once the pipeline is full) and the number of gated-on PEs.
    pub fn step(&mut self, taps: &[[bool; LANES]; 3]) -> Result<(Option<[i32; LANES]>, u64)> {
        let mut row_sum = [[0i32; LANES]; 3];
        let mut active = 0u64;
        for (kx, lanes) in taps.iter().enumerate() {
            for (lane, &spike) in lanes.iter().enumerate() {
                if spike {
                    active += 3;
                    for (ky, rs) in row_sum.iter_mut().enumerate() {
                        rs[lane] = add_i32(rs[lane], self.weights[ky * 3 + kx], "PE row sum")?;
                    }
                }
            }
        }
        let mut done = [0i32; LANES];
        let mut next1 = [0i32; LANES];
        for lane in 0..LANES {
            done[lane] = add_i32(self.stage[1][lane], row_sum[2][lane], "diagonal psum")?;
            next1[lane] = add_i32(self.stage[0][lane], row_sum[1][lane], "diagonal psum")?;
        }
        self.stage = [row_sum[0], next1];
        self.steps += 1;
        let emitted = (self.steps > FILL_CYCLES).then_some(done);
        Ok((emitted, active))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TileResult {
    /// One 8-lane vector per emitting cycle.
    pub outputs: Vec<[i32; LANES]>,
    pub cycles: u64,
    pub fill_cycles: u64,
    /// Gated-on PE count summed over cycles.
    pub active_pes: u64,
}

/// Streams a full column strip through one array.
///
/// `input(y, x)` is the spike at row `y`, column `x` (signed; out-of-range
/// positions are zero padding handled by the caller's closure). Produces
/// `height` rows of 8 partial sums for output columns `x0..x0+8`.
pub fn conv3x3_tile(
    input: &dyn Fn(isize, isize) -> bool,
    height: usize,
    x0: usize,
    weights: [i32; 9],
) -> Result<TileResult> {
    if height == 0 {
        return Err(Error::shape("empty conv tile"));
    }
    let mut array = Conv3x3Array::new(weights);
    let mut res = TileResult::default();
    for r in -1..=(height as isize) {
        let mut taps = [[false; LANES]; 3];
        for (kx, lanes) in taps.iter_mut().enumerate() {
            for (lane, t) in lanes.iter_mut().enumerate() {
                *t = input(r, (x0 + lane + kx) as isize - 1);
            }
        }
        let (out, active) = array.step(&taps)?;
        res.cycles += 1;
        res.active_pes += active;
        match out {
            Some(v) => res.outputs.push(v),
            None => res.fill_cycles += 1,
        }
    }
    debug_assert_eq!(res.outputs.len(), height);
    Ok(res)
}

#[derive(Clone, Debug)]
pub struct MatmulArray {
    weights: [i32; COLS],
}

impl MatmulArray {
    pub fn new(weights: &[i32]) -> Result<Self> {
        if weights.len() > COLS {
            return Err(Error::shape(format!("{} reduction columns, array has {COLS}", weights.len())));
        }
        let mut w = [0; COLS];
        w[..weights.len()].copy_from_slice(weights);
        Ok(Self { weights: w })
    }

    /// One clock: `columns[j][lane]` is reduction element `j` for output lane.
    pub fn step(&self, columns: &[[bool; LANES]; COLS]) -> Result<([i32; LANES], u64)> {
        let mut out = [0i32; LANES];
        let mut active = 0u64;
        for (j, col) in columns.iter().enumerate() {
            for (lane, &spike) in col.iter().enumerate() {
                if spike {
                    active += 1;
                    out[lane] = add_i32(out[lane], self.weights[j], "PE row sum")?;
                }
            }
        }
        Ok((out, active))
    }
}

/// Runs positions `positions` in chunks of 8 lanes, one chunk per cycle.
///
/// `input(p, j)` is reduction element `j` at position `p`; `weights` has at
/// most 9 entries.
pub fn matmul_tile(
    input: &dyn Fn(usize, usize) -> bool,
    positions: Range<usize>,
    weights: &[i32],
) -> Result<TileResult> {
    let array = MatmulArray::new(weights)?;
    let mut res = TileResult::default();
    let mut p = positions.start;
    while p < positions.end {
        let mut cols = [[false; LANES]; COLS];
        for (j, col) in cols.iter_mut().enumerate().take(weights.len()) {
            for (lane, c) in col.iter_mut().enumerate() {
                let pos = p + lane;
                *c = pos < positions.end && input(pos, j);
            }
        }
        let (out, active) = array.step(&cols)?;
        res.outputs.push(out);
        res.cycles += 1;
        res.active_pes += active;
        p += LANES;
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_by_eight_emits_eight_per_cycle() {
        let ones = |y: isize, x: isize| (0..8).contains(&y) && (0..8).contains(&x);
        let r = conv3x3_tile(&ones, 8, 0, [1; 9]).unwrap();
        assert_eq!(r.outputs.len(), 8);
        assert_eq!(r.cycles - r.fill_cycles, 8);
        assert_eq!(r.fill_cycles, FILL_CYCLES);
        assert_eq!(r.outputs.iter().map(|v| v.len()).sum::<usize>(), 64);
        // interior sees all nine, corners four
        assert_eq!(r.outputs[3][3], 9);
        assert_eq!(r.outputs[0][0], 4);
        assert_eq!(r.outputs[7][7], 4);
        assert_eq!(r.outputs[0][4], 6);
    }

    #[test]
    fn zero_input_is_zero_and_inactive() {
        let r = conv3x3_tile(&|_, _| false, 5, 0, [7; 9]).unwrap();
        assert!(r.outputs.iter().all(|v| *v == [0; 8]));
        assert_eq!(r.active_pes, 0);
    }

    #[test]
    fn one_by_one_group_takes_eight_cycles() {
        let input = |p: usize, j: usize| (p + j).is_multiple_of(2);
        let r = matmul_tile(&input, 0..64, &[1; 9]).unwrap();
        assert_eq!(r.cycles, 8);
        assert_eq!(r.fill_cycles, 0);
        assert_eq!(r.outputs.len(), 8);
    }

    #[test]
    fn selector_weight_copies_channel() {
        let input = |p: usize, j: usize| j == 4 && p.is_multiple_of(3);
        let mut w = [0; 9];
        w[4] = 1;
        let r = matmul_tile(&input, 0..16, &w).unwrap();
        let flat: Vec<i32> = r.outputs.iter().flatten().copied().collect();
        let expect: Vec<i32> = (0..16).map(|p| (p % 3 == 0) as i32).collect();
        assert_eq!(flat, expect);
    }

    #[test]
    fn too_many_columns() {
        assert!(matmul_tile(&|_, _| true, 0..8, &[1; 10]).is_err());
    }
}
