// SPDX-License-Identifier: Apache-2.0

use std::ops::Range;

use serde::{Serialize, Serializer};

use crate::accel::Selectors;
use crate::error::{Error, Result};
use crate::tensor::check_time_steps;

/// Tick-batching order of time steps within a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// One time step at a time; membranes spill to and fill from SRAM.
    Serial { time_steps: usize },
    /// All time steps on parallel arrays; unrolled LIF units chain them.
    Parallel { time_steps: usize, selectors: Selectors },
}

impl Schedule {
    pub fn serial(time_steps: usize) -> Self {
        Schedule::Serial { time_steps }
    }

    pub fn parallel(time_steps: usize) -> Result<Self> {
        Ok(Schedule::Parallel { time_steps, selectors: Selectors::for_time_steps(time_steps)? })
    }

    pub fn by_name(name: &str, time_steps: usize) -> Result<Self> {
        match name {
            "serial" => Ok(Self::serial(time_steps)),
            "parallel" => Self::parallel(time_steps),
            other => Err(Error::Config(format!("unknown schedule {other:?} (serial|parallel)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Serial { .. } => "serial",
            Schedule::Parallel { .. } => "parallel",
        }
    }

    pub fn time_steps(&self) -> usize {
        match *self {
            Schedule::Serial { time_steps } | Schedule::Parallel { time_steps, .. } => time_steps,
        }
    }

    pub fn is_parallel(&self) -> bool {
        matches!(self, Schedule::Parallel { .. })
    }

    pub fn selectors(&self) -> Option<Selectors> {
        match *self {
            Schedule::Parallel { selectors, .. } => Some(selectors),
            Schedule::Serial { .. } => None,
        }
    }

    /// Groups of time steps issued together.
    pub fn lane_batches(&self) -> Vec<Range<usize>> {
        match *self {
            Schedule::Serial { time_steps } => (0..time_steps).map(|t| t..t + 1).collect(),
            Schedule::Parallel { time_steps, .. } => vec![0..time_steps],
        }
    }

    /// Checks T and the selector pattern, and that T matches the model's.
    pub fn validate(&self, model_time_steps: usize) -> Result<()> {
        let t = self.time_steps();
        check_time_steps(t)?;
        if let Schedule::Parallel { selectors, .. } = self {
            if selectors.time_steps() != t {
                return Err(Error::ConfigMismatch(format!(
                    "selector pattern {} realizes T={}, schedule has T={t}",
                    selectors.as_str(),
                    selectors.time_steps()
                )));
            }
        }
        if t != model_time_steps {
            return Err(Error::ConfigMismatch(format!("schedule T={t} but model T={model_time_steps}")));
        }
        Ok(())
    }
}

impl Serialize for Schedule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Schedule", 3)?;
        st.serialize_field("kind", self.name())?;
        st.serialize_field("time_steps", &self.time_steps())?;
        st.serialize_field("selectors", &self.selectors().map(|s| s.as_str()))?;
        st.end()
    }
}
