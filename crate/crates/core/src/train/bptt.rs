//! Backpropagation through the unrolled spiking network.
//!
//! Gradients are accumulated over all timesteps. Three paths carry signal
//! backward:
//!
//! * the membrane decay chain, `dU[t] += beta * dU[t+1]`;
//! * the inter-layer spike path, `dS_l[t] = W_{l+1}^T dU_{l+1}[t]`, taken
//!   through the arctangent surrogate at the spike node;
//! * the loss terms themselves — the membrane loss feeds output potentials
//!   directly (bypassing the spike nonlinearity), the spike loss feeds
//!   output spikes through the surrogate.
//!
//! The after-spike reset term is treated as a constant during the backward
//! pass (the convention of the reference training framework), so away from
//! threshold crossings a single-weight-layer gradient is exact.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::snn::{input_at, MembraneRecord, NetworkTopology, SpikeRecord};
use crate::train::loss::{softmax, LossSpec};
use crate::train::surrogate::{surrogate_derivative, SurrogateConfig};

/// Per-layer gradient matrices matching the weight shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Matrix>,
}

impl GradientSet {
    pub fn zeros_like(weights: &[&Matrix]) -> Self {
        Self {
            layers: weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in &mut self.layers {
            m.scale(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|m| m.is_finite())
    }
}

/// `grad += g ⊗ x`, skipping zero entries of `x`.
fn outer_add(grad: &mut Matrix, g: &[f64], x: &[f64]) {
    for (j, gj) in g.iter().enumerate() {
        if *gj == 0.0 {
            continue;
        }
        let row = grad.row_mut(j);
        for (i, xi) in x.iter().enumerate() {
            if *xi != 0.0 {
                row[i] += gj * xi;
            }
        }
    }
}

/// Gradient of the sample loss with respect to every weight, summed across
/// all timesteps of the recorded pass.
#[allow(clippy::too_many_arguments)]
pub fn backward_bptt(
    topology: &NetworkTopology,
    weights: &[&Matrix],
    spikes: &SpikeRecord,
    membranes: &MembraneRecord,
    input: &[f64],
    spec: &LossSpec,
    target: usize,
    _surrogate: SurrogateConfig,
) -> Result<GradientSet> {
    let num_layers = topology.num_weight_layers();
    let t_steps = topology.timesteps;
    if spikes.layers.len() != num_layers || membranes.layers.len() != num_layers {
        return Err(Error::Topology(
            "records do not match the network's layer count".into(),
        ));
    }
    for l in 0..num_layers {
        if spikes.layers[l].len() != t_steps || membranes.layers[l].len() != t_steps {
            return Err(Error::Topology(format!(
                "layer {l} records cover {} steps, expected {t_steps}",
                spikes.layers[l].len()
            )));
        }
    }
    if input.len() != topology.input_dim() {
        return Err(Error::Topology("input does not match the recorded pass".into()));
    }
    let classes = topology.output_dim();
    if target >= classes {
        return Err(Error::Topology(format!(
            "target {target} out of range for {classes} classes"
        )));
    }

    let w = spec.weights();
    // Spike-loss gradient over accumulated counts, shared by every step.
    let count_grad: Option<Vec<f64>> = if w.w_spike != 0.0 {
        let counts = spikes.output_counts();
        let p = softmax(&counts);
        Some(
            p.iter()
                .enumerate()
                .map(|(i, pi)| w.w_spike * (pi - if i == target { 1.0 } else { 0.0 }))
                .collect(),
        )
    } else {
        None
    };

    let mut grads = GradientSet::zeros_like(weights);
    let mut du_next: Vec<Vec<f64>> = (1..=num_layers)
        .map(|l| vec![0.0; topology.layer_sizes[l]])
        .collect();
    let mut du_curr = du_next.clone();
    // Under a repeated presentation, the layer-0 input is constant over
    // time, so its gradient is one outer product with the summed dU.
    let mut du0_sum = vec![0.0; topology.layer_sizes[1]];

    for t in (0..t_steps).rev() {
        for l in (0..num_layers).rev() {
            let params = &topology.lif[l];
            let n = topology.layer_sizes[l + 1];
            let mut g = vec![0.0; n];

            if l == num_layers - 1 && w.w_mem != 0.0 {
                let p = softmax(&membranes.layers[l][t]);
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += w.w_mem * (p[i] - if i == target { 1.0 } else { 0.0 });
                }
            }
            if t + 1 < t_steps {
                for (gi, du) in g.iter_mut().zip(&du_next[l]) {
                    *gi += params.beta * du;
                }
            }

            // Everything that depends on this layer's spikes at step t.
            let mut ds = vec![0.0; n];
            let mut any_ds = false;
            if l + 1 < num_layers {
                weights[l + 1].matvec_t_add(&du_curr[l + 1], 1.0, &mut ds);
                any_ds = true;
            }
            if l == num_layers - 1 {
                if let Some(cg) = &count_grad {
                    for (d, c) in ds.iter_mut().zip(cg) {
                        *d += c;
                    }
                    any_ds = true;
                }
            }
            if any_ds {
                let u_t = &membranes.layers[l][t];
                for i in 0..n {
                    if ds[i] != 0.0 {
                        g[i] += surrogate_derivative(u_t[i], params.u_thr) * ds[i];
                    }
                }
            }

            if l == 0 {
                match input_at(topology.input_policy, input, t) {
                    Some(x) => {
                        if topology.input_policy == crate::snn::InputPolicy::RepeatEachStep {
                            for (s, gi) in du0_sum.iter_mut().zip(&g) {
                                *s += gi;
                            }
                        } else {
                            outer_add(&mut grads.layers[0], &g, x);
                        }
                    }
                    None => {} // absent presentation contributes nothing
                }
            } else {
                outer_add(&mut grads.layers[l], &g, &spikes.layers[l - 1][t]);
            }
            du_curr[l] = g;
        }
        std::mem::swap(&mut du_next, &mut du_curr);
    }

    if topology.input_policy == crate::snn::InputPolicy::RepeatEachStep {
        outer_add(&mut grads.layers[0], &du0_sum, input);
    }
    Ok(grads)
}
