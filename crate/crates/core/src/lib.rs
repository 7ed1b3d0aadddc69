// SPDX-License-Identifier: Apache-2.0

//! Bit-exact reference model of an all-spike vision transformer and a
//! cycle-level simulator of its tick-batching accelerator.

pub mod accel;
pub mod cli;
pub mod config;
pub mod error;
pub mod gen;
pub mod memory;
pub mod reference;
pub mod report;
pub mod scheduler;
pub mod siaf;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
