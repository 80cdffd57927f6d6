//! Run metrics: weight-matrix statistics, per-stage accuracy, and the
//! aggregate report the CLI writes out.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// Ternary composition of one layer's weight matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightLayerStats {
    pub name: String,
    pub size: usize,
    pub active_neurons: usize,
    pub total_neurons: usize,
    pub pos: usize,
    pub neg: usize,
    pub zero: usize,
    pub pos_pct: f64,
    pub neg_pct: f64,
    pub zero_pct: f64,
}

/// Compose stats for a stack of ternary matrices. A neuron counts as
/// active when it has at least one excitatory incoming weight and (for
/// hidden layers) at least one nonzero outgoing weight.
pub fn weight_statistics(ternary: &[&Matrix], names: &[String]) -> Vec<WeightLayerStats> {
    let mut out = Vec::with_capacity(ternary.len());
    for (l, m) in ternary.iter().enumerate() {
        let size = m.rows() * m.cols();
        let mut pos = 0;
        let mut neg = 0;
        for &v in m.as_slice() {
            if v == 1.0 {
                pos += 1;
            } else if v == -1.0 {
                neg += 1;
            }
        }
        let zero = size - pos - neg;
        let mut active = 0;
        for r in 0..m.rows() {
            let has_excitatory = m.row(r).iter().any(|&w| w == 1.0);
            let has_outgoing = match ternary.get(l + 1) {
                Some(next) => (0..next.rows()).any(|j| next.get(j, r) != 0.0),
                None => true,
            };
            if has_excitatory && has_outgoing {
                active += 1;
            }
        }
        let pct = |n: usize| 100.0 * n as f64 / size.max(1) as f64;
        out.push(WeightLayerStats {
            name: names.get(l).cloned().unwrap_or_else(|| format!("layer{l}")),
            size,
            active_neurons: active,
            total_neurons: m.rows(),
            pos,
            neg,
            zero,
            pos_pct: pct(pos),
            neg_pct: pct(neg),
            zero_pct: pct(zero),
        });
    }
    out
}

/// Best accuracy and the per-epoch trace of one pipeline stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub name: String,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub best_accuracy: Option<f64>,
    pub epoch_accuracies: Vec<f64>,
}

/// Everything a run reports. Serialized as `metrics.json` in the run
/// directory; the `report` command renders it as tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub profile: String,
    pub class_digits: Vec<u8>,
    pub master_seed: u64,
    pub stages: Vec<StageMetrics>,
    pub final_accuracy: f64,
    pub final_confusion: Vec<Vec<usize>>,
    pub no_decision: usize,
    pub weight_stats: Vec<WeightLayerStats>,
    pub active_hidden_neurons: Option<usize>,
    /// Full resolved configuration, echoed for provenance.
    pub config_echo: serde_json::Value,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_count_signs_and_percentages() {
        let w0 = Matrix::from_rows(&[&[1.0, -1.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 0.0]]).unwrap();
        let w1 = Matrix::from_rows(&[&[1.0, 1.0]]).unwrap();
        let stats = weight_statistics(&[&w0, &w1], &["hidden0".into(), "output".into()]);
        assert_eq!(stats[0].pos, 1);
        assert_eq!(stats[0].neg, 1);
        assert_eq!(stats[0].zero, 6);
        assert!((stats[0].pos_pct + stats[0].neg_pct + stats[0].zero_pct - 100.0).abs() < 1e-9);
        // Neuron 1 has no excitatory input: inactive.
        assert_eq!(stats[0].active_neurons, 1);
        assert_eq!(stats[1].active_neurons, 1);
    }
}
