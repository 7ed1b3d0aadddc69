// SPDX-License-Identifier: Apache-2.0

//! Layer-by-layer comparison of reference and simulator traces.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::reference::model::{model_forward, Activation, LayerTrace, ModelConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub layer: String,
    /// Time step of the differing element, when the entry is time-major.
    pub time_step: Option<usize>,
    /// Flat index within the entry.
    pub index: usize,
    pub expected: Option<i32>,
    pub actual: Option<i32>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub entries_compared: usize,
    pub logits_equal: bool,
    pub first_mismatch: Option<Mismatch>,
}

fn is_time_major(label: &str, a: &Activation) -> bool {
    label != "head" && a.shape().len() >= 2
}

fn mismatch(layer: &str, reason: impl Into<String>) -> Mismatch {
    Mismatch {
        layer: layer.to_string(),
        time_step: None,
        index: 0,
        expected: None,
        actual: None,
        reason: reason.into(),
    }
}

/// First entry where `actual` departs from `expected`, in trace order.
pub fn first_mismatch(expected: &LayerTrace, actual: &LayerTrace) -> Option<Mismatch> {
    for (e, a) in expected.entries.iter().zip(&actual.entries) {
        if e.label != a.label {
            return Some(mismatch(&e.label, format!("simulator produced {} here", a.label)));
        }
        let (es, as_) = (e.value.shape(), a.value.shape());
        if es != as_ {
            return Some(mismatch(&e.label, format!("shape {as_:?}, expected {es:?}")));
        }
        if let Some(i) = (0..e.value.len()).find(|&i| e.value.value(i) != a.value.value(i)) {
            let per_step = e.value.len() / es[0].max(1);
            return Some(Mismatch {
                layer: e.label.clone(),
                time_step: is_time_major(&e.label, &e.value).then(|| i / per_step.max(1)),
                index: i,
                expected: Some(e.value.value(i)),
                actual: Some(a.value.value(i)),
                reason: "value differs".into(),
            });
        }
    }
    match expected.len().cmp(&actual.len()) {
        std::cmp::Ordering::Equal => None,
        std::cmp::Ordering::Greater => {
            Some(mismatch(&expected.entries[actual.len()].label, "missing from simulator trace"))
        }
        std::cmp::Ordering::Less => {
            Some(mismatch(&actual.entries[expected.len()].label, "extra entry in simulator trace"))
        }
    }
}

pub fn compare_traces(expected: &LayerTrace, actual: &LayerTrace) -> VerifyReport {
    let first = first_mismatch(expected, actual);
    VerifyReport {
        passed: first.is_none(),
        entries_compared: expected.len().min(actual.len()),
        logits_equal: expected.get("head") == actual.get("head"),
        first_mismatch: first,
    }
}

/// Reference trace of `cfg` on `img`.
pub fn reference_trace(cfg: &ModelConfig, img: &crate::tensor::ByteImage) -> Result<LayerTrace> {
    Ok(model_forward(img, cfg)?.1)
}

/// Flips the sign of the first nonzero weight of the layer labelled `label`.
pub fn inject_fault(cfg: &mut ModelConfig, label: &str) -> Result<()> {
    let w = if label == "head" {
        &mut cfg.head.weights
    } else {
        cfg.weights_mut(label).ok_or_else(|| Error::Config(format!("no weighted layer labelled {label:?}")))?
    };
    let v = w
        .data_mut()
        .iter_mut()
        .find(|v| **v != 0)
        .ok_or_else(|| Error::Config(format!("layer {label:?} has no nonzero weight")))?;
    *v = v.checked_neg().unwrap_or(i8::MAX);
    Ok(())
}
