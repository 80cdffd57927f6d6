//! Dataset evaluation with either decoding rule.

use serde::{Deserialize, Serialize};

use crate::data::{EncodedDataset, InputEncoding};
use crate::error::Result;
use crate::exec;
use crate::matrix::Matrix;
use crate::snn::{forward_pass, single_spike_decode, spike_count_decode, NetworkTopology};

/// Classification rule applied to output records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeRule {
    /// Argmax of accumulated output spikes (lowest index on ties).
    SpikeCount,
    /// Exactly one output neuron fires in a single step; anything else is
    /// a no-decision, which counts as incorrect.
    SingleSpike,
}

/// Accuracy plus a confusion matrix. `confusion[actual][predicted]`, with
/// one extra trailing column counting no-decisions per actual class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalResult {
    pub total: usize,
    pub correct: usize,
    pub no_decision: usize,
    pub confusion: Vec<Vec<usize>>,
}

impl EvalResult {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn empty(classes: usize) -> Self {
        Self {
            total: 0,
            correct: 0,
            no_decision: 0,
            confusion: vec![vec![0; classes + 1]; classes],
        }
    }

    fn merge(mut self, other: EvalResult) -> EvalResult {
        self.total += other.total;
        self.correct += other.correct;
        self.no_decision += other.no_decision;
        for (a, b) in self.confusion.iter_mut().zip(&other.confusion) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }
}

fn eval_chunk(
    idx: &[usize],
    topology: &NetworkTopology,
    weights: &[&Matrix],
    data: &EncodedDataset,
    encoding: InputEncoding,
    decode: DecodeRule,
) -> Result<EvalResult> {
    let classes = data.num_classes;
    let mut acc = EvalResult::empty(classes);
    for &i in idx {
        let input = data.materialize(i, encoding);
        let (spikes, _) = forward_pass(topology, weights, &input)?;
        let predicted = match decode {
            DecodeRule::SpikeCount => Some(spike_count_decode(spikes.output())),
            DecodeRule::SingleSpike => single_spike_decode(spikes.output()),
        };
        let actual = data.labels[i];
        acc.total += 1;
        match predicted {
            Some(p) => {
                acc.confusion[actual][p] += 1;
                if p == actual {
                    acc.correct += 1;
                }
            }
            None => {
                acc.confusion[actual][classes] += 1;
                acc.no_decision += 1;
            }
        }
    }
    Ok(acc)
}

const EVAL_CHUNK: usize = 64;

/// Evaluate the whole dataset; parallel when the `parallel` feature is on.
/// All counters are integers, so the result is scheduling-independent.
pub fn evaluate(
    topology: &NetworkTopology,
    weights: &[&Matrix],
    data: &EncodedDataset,
    encoding: InputEncoding,
    decode: DecodeRule,
) -> Result<EvalResult> {
    let idx: Vec<usize> = (0..data.len()).collect();
    exec::chunked_reduce(
        &idx,
        EVAL_CHUNK,
        |c| eval_chunk(c, topology, weights, data, encoding, decode),
        |a, b| Ok(a?.merge(b?)),
    )
    .unwrap_or_else(|| Ok(EvalResult::empty(data.num_classes)))
}

/// Always-sequential twin of [`evaluate`]; the benchmark baseline.
pub fn evaluate_seq(
    topology: &NetworkTopology,
    weights: &[&Matrix],
    data: &EncodedDataset,
    encoding: InputEncoding,
    decode: DecodeRule,
) -> Result<EvalResult> {
    let idx: Vec<usize> = (0..data.len()).collect();
    exec::chunked_reduce_seq(
        &idx,
        EVAL_CHUNK,
        |c| eval_chunk(c, topology, weights, data, encoding, decode),
        |a, b| Ok(a?.merge(b?)),
    )
    .unwrap_or_else(|| Ok(EvalResult::empty(data.num_classes)))
}
