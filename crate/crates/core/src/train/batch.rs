//! Mini-batch loss and gradient accumulation.
//!
//! Per-sample work is pure, so batches fan out across threads. Chunks of
//! [`GRAD_CHUNK`] samples are folded sequentially and the partial sums are
//! combined in chunk order, which fixes the floating point reduction order:
//! the parallel and sequential paths agree bit for bit.

use crate::error::Result;
use crate::exec;
use crate::matrix::Matrix;
use crate::snn::{forward_pass, NetworkTopology};
use crate::train::bptt::{backward_bptt, GradientSet};
use crate::train::loss::{sample_loss, LossSpec};
use crate::train::surrogate::SurrogateConfig;

/// Samples folded per reduction chunk. Part of the determinism contract.
pub const GRAD_CHUNK: usize = 16;

/// Mean loss and mean gradient of one mini-batch.
#[derive(Clone, Debug)]
pub struct BatchResult {
    pub mean_loss: f64,
    pub grads: GradientSet,
}

type Partial = (f64, GradientSet);

fn fold_chunk(
    idx: &[usize],
    topology: &NetworkTopology,
    weights: &[&Matrix],
    inputs: &[Vec<f64>],
    targets: &[usize],
    spec: &LossSpec,
    surrogate: SurrogateConfig,
) -> Result<Partial> {
    let mut loss = 0.0;
    let mut grads = GradientSet::zeros_like(weights);
    for &i in idx {
        let (s, m) = forward_pass(topology, weights, &inputs[i])?;
        loss += sample_loss(spec, &s, &m, targets[i])?;
        let g = backward_bptt(topology, weights, &s, &m, &inputs[i], spec, targets[i], surrogate)?;
        grads.add_assign(&g);
    }
    Ok((loss, grads))
}

fn merge(a: Result<Partial>, b: Result<Partial>) -> Result<Partial> {
    let (la, mut ga) = a?;
    let (lb, gb) = b?;
    ga.add_assign(&gb);
    Ok((la + lb, ga))
}

fn finish(partial: Option<Result<Partial>>, n: usize) -> Result<BatchResult> {
    let (loss, mut grads) = partial.expect("non-empty batch")?;
    let scale = 1.0 / n as f64;
    grads.scale(scale);
    Ok(BatchResult {
        mean_loss: loss * scale,
        grads,
    })
}

/// Mean loss/gradient over the batch; parallel when the `parallel` feature
/// is enabled.
pub fn batch_gradients(
    topology: &NetworkTopology,
    weights: &[&Matrix],
    inputs: &[Vec<f64>],
    targets: &[usize],
    spec: &LossSpec,
    surrogate: SurrogateConfig,
) -> Result<BatchResult> {
    assert_eq!(inputs.len(), targets.len());
    assert!(!inputs.is_empty(), "empty batch");
    let idx: Vec<usize> = (0..inputs.len()).collect();
    let partial = exec::chunked_reduce(
        &idx,
        GRAD_CHUNK,
        |c| fold_chunk(c, topology, weights, inputs, targets, spec, surrogate),
        merge,
    );
    finish(partial, inputs.len())
}

/// Always-sequential twin of [`batch_gradients`] with identical chunking.
pub fn batch_gradients_seq(
    topology: &NetworkTopology,
    weights: &[&Matrix],
    inputs: &[Vec<f64>],
    targets: &[usize],
    spec: &LossSpec,
    surrogate: SurrogateConfig,
) -> Result<BatchResult> {
    assert_eq!(inputs.len(), targets.len());
    assert!(!inputs.is_empty(), "empty batch");
    let idx: Vec<usize> = (0..inputs.len()).collect();
    let partial = exec::chunked_reduce_seq(
        &idx,
        GRAD_CHUNK,
        |c| fold_chunk(c, topology, weights, inputs, targets, spec, surrogate),
        merge,
    );
    finish(partial, inputs.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{InputPolicy, LifParams};

    fn setup() -> (NetworkTopology, Matrix, Vec<Vec<f64>>, Vec<usize>) {
        let topology = NetworkTopology::uniform(
            vec![3, 2],
            LifParams::default(),
            InputPolicy::RepeatEachStep,
            3,
        );
        let w = Matrix::from_rows(&[&[0.5, -0.2, 0.8], &[0.1, 0.6, -0.4]]).unwrap();
        let inputs: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                vec![
                    f64::from(i % 2 == 0),
                    f64::from(i % 3 == 0),
                    f64::from(i % 5 != 0),
                ]
            })
            .collect();
        let targets: Vec<usize> = (0..40).map(|i| i % 2).collect();
        (topology, w, inputs, targets)
    }

    #[test]
    fn parallel_and_sequential_batches_are_bit_identical() {
        let (topology, w, inputs, targets) = setup();
        let a = batch_gradients(
            &topology,
            &[&w],
            &inputs,
            &targets,
            &LossSpec::Mem,
            SurrogateConfig::Arctangent,
        )
        .unwrap();
        let b = batch_gradients_seq(
            &topology,
            &[&w],
            &inputs,
            &targets,
            &LossSpec::Mem,
            SurrogateConfig::Arctangent,
        )
        .unwrap();
        assert_eq!(a.mean_loss.to_bits(), b.mean_loss.to_bits());
        assert_eq!(a.grads, b.grads);
    }

    #[test]
    fn batch_mean_matches_manual_average() {
        let (topology, w, inputs, targets) = setup();
        let r = batch_gradients(
            &topology,
            &[&w],
            &inputs[..4],
            &targets[..4],
            &LossSpec::Mem,
            SurrogateConfig::Arctangent,
        )
        .unwrap();
        let mut manual = 0.0;
        for i in 0..4 {
            let (s, m) = forward_pass(&topology, &[&w], &inputs[i]).unwrap();
            manual += sample_loss(&LossSpec::Mem, &s, &m, targets[i]).unwrap();
        }
        assert!((r.mean_loss - manual / 4.0).abs() < 1e-12);
    }
}
