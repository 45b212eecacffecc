//! Report building blocks: per-circuit cost counts, scaling-error summaries,
//! and accuracy curves.

use serde::Serialize;
use std::collections::BTreeMap;

use crate::gadget::OpStats;
use crate::nn::{ScalingErrorRecord, TrainOutcome};

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct CircuitCount {
    pub circuit: String,
    pub lookups: u64,
    pub linear_ops: u64,
    /// Fraction of all lookups spent in this circuit.
    pub lookup_share: f64,
}

/// Per-circuit counts with lookup shares; shares sum to 1 up to rounding.
pub fn circuit_counts(circuits: &[(String, OpStats)]) -> Vec<CircuitCount> {
    let total: u64 = circuits.iter().map(|(_, s)| s.lookups).sum();
    circuits
        .iter()
        .map(|(name, s)| CircuitCount {
            circuit: name.clone(),
            lookups: s.lookups,
            linear_ops: s.linear_ops,
            lookup_share: if total == 0 {
                0.0
            } else {
                s.lookups as f64 / total as f64
            },
        })
        .collect()
}

#[derive(Serialize, Clone, Debug)]
pub struct LayerScalingError {
    pub layer: usize,
    pub calls: usize,
    pub mean_abs: f64,
    pub max_abs: i64,
}

#[derive(Serialize, Clone, Debug)]
pub struct ScalingErrorSummary {
    pub per_layer: Vec<LayerScalingError>,
    pub overall_mean_abs: f64,
    pub overall_max_abs: i64,
    /// Overall mean relative to the half activation range 2^(gamma-1).
    pub relative_mean: f64,
}

pub fn summarize_scaling_errors(records: &[ScalingErrorRecord], gamma: u8) -> ScalingErrorSummary {
    let mut per_layer: BTreeMap<usize, (usize, f64, i64, usize)> = BTreeMap::new();
    for r in records {
        let e = per_layer.entry(r.layer).or_insert((0, 0.0, 0, 0));
        e.0 += 1;
        e.1 += r.mean_abs * r.elements as f64;
        e.2 = e.2.max(r.max_abs);
        e.3 += r.elements;
    }
    let mut layers = Vec::new();
    let mut total_sum = 0.0;
    let mut total_elems = 0usize;
    let mut overall_max = 0i64;
    for (layer, (calls, sum, max, elems)) in per_layer {
        layers.push(LayerScalingError {
            layer,
            calls,
            mean_abs: if elems == 0 { 0.0 } else { sum / elems as f64 },
            max_abs: max,
        });
        total_sum += sum;
        total_elems += elems;
        overall_max = overall_max.max(max);
    }
    let overall_mean = if total_elems == 0 {
        0.0
    } else {
        total_sum / total_elems as f64
    };
    ScalingErrorSummary {
        per_layer: layers,
        overall_mean_abs: overall_mean,
        overall_max_abs: overall_max,
        relative_mean: overall_mean / (1u64 << (gamma - 1)) as f64,
    }
}

#[derive(Serialize, Clone, Debug)]
pub struct TrainCurve {
    pub train_accuracy: Vec<f64>,
    pub test_accuracy: Vec<f64>,
    pub best_test_accuracy: f64,
    /// 1-based epoch of the best test accuracy; 0 means the initial model.
    pub best_epoch: usize,
}

impl TrainCurve {
    pub fn from_outcome(outcome: &TrainOutcome) -> Self {
        TrainCurve {
            train_accuracy: outcome.epochs.iter().map(|e| e.train_accuracy).collect(),
            test_accuracy: outcome.epochs.iter().map(|e| e.test_accuracy).collect(),
            best_test_accuracy: outcome.best_test_accuracy,
            best_epoch: outcome.best_epoch,
        }
    }
}
