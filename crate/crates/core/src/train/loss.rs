//! Cross-entropy losses over membrane potentials and spike outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snn::{MembraneRecord, SpikeRecord, TimeSeries};

/// Mixing weights for the hybrid objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_spike: f64,
    pub w_mem: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.w_spike < 0.0 || self.w_mem < 0.0 {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Which objective drives training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LossSpec {
    /// Per-step cross-entropy over output membrane potentials, summed over
    /// all timesteps.
    Mem,
    /// Cross-entropy over accumulated output spike counts.
    Spike,
    /// `w_spike * spike + w_mem * mem`.
    Hybrid(LossWeights),
}

impl LossSpec {
    /// The standard hybrid mix for the chip profile.
    pub fn chip_hybrid() -> Self {
        LossSpec::Hybrid(LossWeights {
            w_spike: 0.6,
            w_mem: 0.4,
        })
    }

    pub fn weights(&self) -> LossWeights {
        match self {
            LossSpec::Mem => LossWeights {
                w_spike: 0.0,
                w_mem: 1.0,
            },
            LossSpec::Spike => LossWeights {
                w_spike: 1.0,
                w_mem: 0.0,
            },
            LossSpec::Hybrid(w) => *w,
        }
    }
}

/// Numerically stabilized softmax (max subtraction).
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn cross_entropy(values: &[f64], target: usize) -> f64 {
    let p = softmax(values);
    -p[target].max(f64::MIN_POSITIVE).ln()
}

/// Membrane loss: per-step cross-entropy over output potentials, summed
/// over the whole window.
pub fn mem_loss(output_potentials: &TimeSeries, target: usize) -> Result<f64> {
    check_target(output_potentials, target)?;
    Ok(output_potentials
        .iter()
        .map(|u| cross_entropy(u, target))
        .sum())
}

/// Spike loss: cross-entropy over total output spike counts. For a
/// single-step window this coincides with the per-step form.
pub fn spike_loss(output_spikes: &TimeSeries, target: usize) -> Result<f64> {
    check_target(output_spikes, target)?;
    let n = output_spikes[0].len();
    let mut counts = vec![0.0; n];
    for step in output_spikes {
        for (c, s) in counts.iter_mut().zip(step) {
            *c += s;
        }
    }
    Ok(cross_entropy(&counts, target))
}

/// Total loss of one sample's records under `spec`.
pub fn sample_loss(
    spec: &LossSpec,
    spikes: &SpikeRecord,
    membranes: &MembraneRecord,
    target: usize,
) -> Result<f64> {
    let w = spec.weights();
    let mut total = 0.0;
    if w.w_mem != 0.0 {
        total += w.w_mem * mem_loss(membranes.output(), target)?;
    }
    if w.w_spike != 0.0 {
        total += w.w_spike * spike_loss(spikes.output(), target)?;
    }
    Ok(total)
}

fn check_target(series: &TimeSeries, target: usize) -> Result<()> {
    let classes = series.first().map_or(0, |s| s.len());
    if target >= classes {
        return Err(Error::Topology(format!(
            "target {target} out of range for {classes} classes"
        )));
    }
    Ok(())
}
