// SPDX-License-Identifier: Apache-2.0

//! Tensor types shared by the reference model and the simulator.
//!
//! Spike tensors are bit-packed, LSB-first within each `u64` word, words in
//! row-major element order. Padding bits in the final word are always zero.

use crate::error::{Error, Result};

/// Time-step counts the model and the hardware support.
pub const SUPPORTED_TIME_STEPS: [usize; 3] = [1, 2, 4];

pub fn check_time_steps(t: usize) -> Result<()> {
    if SUPPORTED_TIME_STEPS.contains(&t) {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!("time steps must be one of 1, 2, 4 (got {t})")))
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn flat_index(shape: &[usize], index: &[usize]) -> Result<usize> {
    if index.len() != shape.len() || index.iter().zip(shape).any(|(i, d)| i >= d) {
        return Err(Error::IndexOutOfRange { index: index.to_vec(), shape: shape.to_vec() });
    }
    Ok(index.iter().zip(shape).fold(0usize, |acc, (i, d)| acc * d + i))
}

/// Binary activation tensor. The first dimension is the time step.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpikeTensor {
    shape: Vec<usize>,
    words: Vec<u64>,
    len: usize,
}

impl SpikeTensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let t = *shape.first().ok_or_else(|| Error::shape("spike tensor needs a time dimension"))?;
        check_time_steps(t)?;
        let len = numel(shape);
        Ok(Self { shape: shape.to_vec(), words: vec![0; len.div_ceil(64)], len })
    }

    /// Builds a tensor from one value per element; any nonzero value is a spike.
    pub fn from_bits(shape: &[usize], bits: &[u8]) -> Result<Self> {
        let mut s = Self::zeros(shape)?;
        if bits.len() != s.len {
            return Err(Error::shape(format!("{} values for shape {shape:?}", bits.len())));
        }
        for (i, &b) in bits.iter().enumerate() {
            if b != 0 {
                s.words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(s)
    }

    /// Rebuilds a tensor from packed words, rejecting nonzero padding.
    pub fn from_words(shape: &[usize], words: Vec<u64>) -> Result<Self> {
        let mut s = Self::zeros(shape)?;
        if words.len() != s.words.len() {
            return Err(Error::shape(format!("{} words for {} elements", words.len(), s.len)));
        }
        let tail = s.len % 64;
        if tail != 0 && words[words.len() - 1] >> tail != 0 {
            return Err(Error::InvalidValue("nonzero padding bits".into()));
        }
        s.words = words;
        Ok(s)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn time_steps(&self) -> usize {
        self.shape[0]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Number of elements in one time step.
    pub fn step_len(&self) -> usize {
        self.len / self.shape[0]
    }

    pub fn get(&self, index: &[usize]) -> Result<bool> {
        let i = flat_index(&self.shape, index)?;
        Ok(self.bit(i))
    }

    pub fn set(&mut self, index: &[usize], value: bool) -> Result<()> {
        let i = flat_index(&self.shape, index)?;
        self.set_bit(i, value);
        Ok(())
    }

    /// Flat (row-major) element access. Panics past `len()`.
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len, "spike index {i} past {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set_bit(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "spike index {i} past {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        // padding bits are zero, so a plain popcount is exact
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count_zeros(&self) -> usize {
        self.len - self.count_ones()
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| self.bit(i) as u8).collect()
    }

    /// Elementwise `self AND NOT other`, computed on packed words.
    pub fn and_not(&self, other: &SpikeTensor) -> Result<SpikeTensor> {
        if self.shape != other.shape {
            return Err(Error::shape(format!("iand operands {:?} vs {:?}", self.shape, other.shape)));
        }
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a & !b).collect();
        Ok(SpikeTensor { shape: self.shape.clone(), words, len: self.len })
    }

    /// Same elements under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<SpikeTensor> {
        if numel(shape) != self.len || shape.first() != self.shape.first() {
            return Err(Error::shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        Ok(SpikeTensor { shape: shape.to_vec(), words: self.words.clone(), len: self.len })
    }

    /// Packed bytes, LSB-first, `ceil(len / 8)` long.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn from_bytes(shape: &[usize], bytes: &[u8]) -> Result<Self> {
        let len = numel(shape);
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::shape(format!("{} payload bytes for {len} spike elements", bytes.len())));
        }
        let words = bytes
            .chunks(8)
            .map(|c| {
                let mut b = [0u8; 8];
                b[..c.len()].copy_from_slice(c);
                u64::from_le_bytes(b)
            })
            .collect();
        Self::from_words(shape, words)
    }
}

/// Fraction of zero elements, padding excluded.
pub fn sparsity(s: &SpikeTensor) -> f64 {
    if s.is_empty() {
        return 1.0;
    }
    s.count_zeros() as f64 / s.len() as f64
}

pub fn density(s: &SpikeTensor) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    s.count_ones() as f64 / s.len() as f64
}

/// 8-bit signed weights with a power-of-two scale: value = data * 2^scale_exp.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QTensor {
    shape: Vec<usize>,
    data: Vec<i8>,
    scale_exp: i8,
}

impl QTensor {
    pub fn new(shape: &[usize], data: Vec<i8>, scale_exp: i8) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::shape(format!("{} weights for shape {shape:?}", data.len())));
        }
        if !(-16..=0).contains(&scale_exp) {
            return Err(Error::InvalidValue(format!("weight scale_exp {scale_exp} outside [-16, 0]")));
        }
        Ok(Self { shape: shape.to_vec(), data, scale_exp })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [i8] {
        &mut self.data
    }

    pub fn scale_exp(&self) -> i8 {
        self.scale_exp
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// 32-bit integer accumulator tensor (currents, membranes, logits).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccTensor {
    shape: Vec<usize>,
    data: Vec<i32>,
    scale_exp: i8,
}

impl AccTensor {
    pub fn new(shape: &[usize], data: Vec<i32>, scale_exp: i8) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::shape(format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(Self { shape: shape.to_vec(), data, scale_exp })
    }

    pub fn zeros(shape: &[usize], scale_exp: i8) -> Self {
        Self { shape: shape.to_vec(), data: vec![0; numel(shape)], scale_exp }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [i32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<i32> {
        self.data
    }

    pub fn scale_exp(&self) -> i8 {
        self.scale_exp
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, index: &[usize]) -> Result<i32> {
        Ok(self.data[flat_index(&self.shape, index)?])
    }
}

/// 8-bit image, `[channels, height, width]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ByteImage {
    shape: [usize; 3],
    data: Vec<u8>,
}

impl ByteImage {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if channels * height * width != data.len() {
            return Err(Error::shape(format!("{} pixels for image {channels}x{height}x{width}", data.len())));
        }
        Ok(Self { shape: [channels, height, width], data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { shape: [channels, height, width], data: vec![0; channels * height * width] }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Splits an image into 8 single-time-step spike planes; plane `b` holds bit `b`.
pub fn bitplane_decompose(img: &ByteImage) -> Vec<SpikeTensor> {
    let [c, h, w] = img.shape;
    (0..8)
        .map(|b| {
            let bits: Vec<u8> = img.data.iter().map(|&p| (p >> b) & 1).collect();
            SpikeTensor::from_bits(&[1, c, h, w], &bits).expect("plane shape matches image")
        })
        .collect()
}

pub fn bitplane_recompose(planes: &[SpikeTensor]) -> Result<ByteImage> {
    if planes.len() != 8 {
        return Err(Error::shape(format!("{} bitplanes, need 8", planes.len())));
    }
    let shape = planes[0].shape().to_vec();
    if shape.len() != 4 || shape[0] != 1 {
        return Err(Error::shape(format!("bitplane shape {shape:?}")));
    }
    if planes.iter().any(|p| p.shape() != shape.as_slice()) {
        return Err(Error::shape("bitplanes differ in shape"));
    }
    let n = planes[0].len();
    let data =
        (0..n).map(|i| planes.iter().enumerate().fold(0u8, |acc, (b, p)| acc | ((p.bit(i) as u8) << b))).collect();
    ByteImage::new(shape[1], shape[2], shape[3], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitplanes_of_181() {
        let img = ByteImage::new(1, 1, 1, vec![181]).unwrap();
        let planes = bitplane_decompose(&img);
        let bits: Vec<u8> = planes.iter().map(|p| p.bit(0) as u8).collect();
        assert_eq!(bits, [1, 0, 1, 0, 1, 1, 0, 1]);
        assert_eq!(bitplane_recompose(&planes).unwrap(), img);
    }

    #[test]
    fn bitplanes_edge_values() {
        let img = ByteImage::new(1, 2, 2, vec![0, 0, 255, 0]).unwrap();
        let planes = bitplane_decompose(&img);
        for p in &planes {
            assert_eq!(p.to_bits(), [0, 0, 1, 0]);
        }
        let ones: Vec<_> = (0..8).map(|_| SpikeTensor::from_bits(&[1, 1, 1, 3], &[1, 1, 1]).unwrap()).collect();
        assert_eq!(bitplane_recompose(&ones).unwrap().data(), &[255, 255, 255]);
    }

    #[test]
    fn recompose_rejects_mismatched_planes() {
        let mut planes = bitplane_decompose(&ByteImage::zeros(1, 2, 2));
        planes[3] = SpikeTensor::zeros(&[1, 1, 2, 3]).unwrap();
        assert!(bitplane_recompose(&planes).is_err());
        assert!(bitplane_recompose(&planes[..7]).is_err());
    }

    #[test]
    fn sparsity_counts() {
        let zeros = SpikeTensor::zeros(&[1, 70]).unwrap();
        assert_eq!(sparsity(&zeros), 1.0);
        let ones = SpikeTensor::from_bits(&[1, 70], &[1; 70]).unwrap();
        assert_eq!(sparsity(&ones), 0.0);
        let mut bits = [0u8; 64];
        bits[..16].fill(1);
        let s = SpikeTensor::from_bits(&[1, 64], &bits).unwrap();
        assert_eq!(sparsity(&s), 0.75);
        assert_eq!(s.count_zeros() + s.count_ones(), s.len());
    }

    #[test]
    fn get_set_and_bounds() {
        let mut s = SpikeTensor::zeros(&[2, 3, 5]).unwrap();
        assert!(!s.get(&[1, 2, 4]).unwrap());
        s.set(&[1, 2, 4], true).unwrap();
        assert!(s.get(&[1, 2, 4]).unwrap());
        assert!(matches!(s.get(&[1, 3, 0]), Err(Error::IndexOutOfRange { .. })));
        assert!(s.get(&[0, 0]).is_err());
        assert!(s.set(&[2, 0, 0], true).is_err());
    }

    #[test]
    fn rejects_bad_time_steps_and_padding() {
        assert!(SpikeTensor::zeros(&[3, 4]).is_err());
        assert!(SpikeTensor::from_words(&[1, 3], vec![0b1000]).is_err());
        assert!(SpikeTensor::from_words(&[1, 3], vec![0b0101]).is_ok());
    }

    #[test]
    fn qtensor_scale_range() {
        assert!(QTensor::new(&[2], vec![1, 2], 1).is_err());
        assert!(QTensor::new(&[2], vec![1, 2], -17).is_err());
        assert!(QTensor::new(&[3], vec![1, 2], -3).is_err());
        assert!(QTensor::new(&[2], vec![-128, 127], -16).is_ok());
    }

    #[test]
    fn and_not_truth_table() {
        let x = SpikeTensor::from_bits(&[1, 4], &[1, 1, 0, 0]).unwrap();
        let y = SpikeTensor::from_bits(&[1, 4], &[1, 0, 1, 0]).unwrap();
        assert_eq!(x.and_not(&y).unwrap().to_bits(), [0, 1, 0, 0]);
        let z = SpikeTensor::zeros(&[1, 5]).unwrap();
        assert!(x.and_not(&z).is_err());
    }

    #[test]
    fn byte_round_trip_keeps_padding_clear() {
        let bits: Vec<u8> = (0..77).map(|i| (i % 3 == 0) as u8).collect();
        let s = SpikeTensor::from_bits(&[1, 77], &bits).unwrap();
        let bytes = s.to_bytes();
        assert_eq!(bytes.len(), 10);
        assert_eq!(SpikeTensor::from_bytes(&[1, 77], &bytes).unwrap(), s);
    }
}
