//! Leaky integrate-and-fire dynamics and feedforward spiking inference.
//!
//! The membrane of each neuron decays by `beta` per step, integrates the
//! weighted input current, is reduced after its own previous spike, and
//! fires when it strictly exceeds the threshold:
//!
//! ```text
//! U[t+1] = beta * U[t] + W * X[t+1] - S[t] * u_thr
//! S[t]   = 1  if U[t] > u_thr, else 0
//! ```
//!
//! Within one timestep, layers cascade: layer `l` consumes the spikes its
//! predecessor emitted at the same step, so a `T = 1` pass is a pure
//! thresholded feedforward sweep. That single-pass case is exactly what the
//! chip simulator reproduces in hardware form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Membrane reset behavior after a spike.
///
/// `Subtract` is the normative rule (the `- S[t] * u_thr` term above).
/// `ToZero` clears the decayed potential instead; it is provided as a
/// config switch only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResetMode {
    Subtract,
    ToZero,
}

/// Per-layer LIF parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    /// Membrane decay constant, `0 < beta < 1`.
    pub beta: f64,
    /// Firing threshold, `> 0`. Spikes require `U > u_thr` strictly.
    pub u_thr: f64,
    pub reset: ResetMode,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            beta: 0.95,
            u_thr: 1.0,
            reset: ResetMode::Subtract,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!(
                "beta must be in (0, 1), got {}",
                self.beta
            )));
        }
        if !(self.u_thr > 0.0) {
            return Err(Error::Config(format!(
                "u_thr must be > 0, got {}",
                self.u_thr
            )));
        }
        Ok(())
    }
}

/// How the input sample is presented over the simulation window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputPolicy {
    /// The same input vector is presented at every timestep.
    RepeatEachStep,
    /// The input is presented at the first timestep only.
    SinglePass,
}

/// Layer sizes, per-layer LIF parameters, and the simulation window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    /// Neuron counts, input first. At least two entries.
    pub layer_sizes: Vec<usize>,
    /// One parameter set per weight layer (`layer_sizes.len() - 1`).
    pub lif: Vec<LifParams>,
    pub input_policy: InputPolicy,
    /// Simulation timesteps, `T >= 1`.
    pub timesteps: usize,
}

impl NetworkTopology {
    /// Uniform LIF parameters across all weight layers.
    pub fn uniform(layer_sizes: Vec<usize>, lif: LifParams, policy: InputPolicy, timesteps: usize) -> Self {
        let n = layer_sizes.len().saturating_sub(1);
        Self {
            layer_sizes,
            lif: vec![lif; n],
            input_policy: policy,
            timesteps,
        }
    }

    /// Number of weight layers.
    pub fn num_weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config("topology needs at least 2 layers".into()));
        }
        if self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if self.timesteps < 1 {
            return Err(Error::Config("timesteps must be >= 1".into()));
        }
        if self.lif.len() != self.num_weight_layers() {
            return Err(Error::Config(format!(
                "expected {} LIF parameter sets, got {}",
                self.num_weight_layers(),
                self.lif.len()
            )));
        }
        for p in &self.lif {
            p.validate()?;
        }
        Ok(())
    }
}

/// Whether a weight matrix holds latent reals or committed ternary values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    LatentReal,
    Ternary,
}

/// A weight matrix tagged with its mode. In ternary mode every entry is
/// exactly `+1`, `-1`, or `0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    matrix: Matrix,
    mode: WeightMode,
}

impl LayerWeights {
    pub fn latent(matrix: Matrix) -> Self {
        Self {
            matrix,
            mode: WeightMode::LatentReal,
        }
    }

    pub fn ternary(matrix: Matrix) -> Result<Self> {
        if let Some(bad) = matrix
            .as_slice()
            .iter()
            .find(|v| **v != 1.0 && **v != -1.0 && **v != 0.0)
        {
            return Err(Error::Config(format!(
                "ternary weights must be in {{+1, -1, 0}}, found {bad}"
            )));
        }
        Ok(Self {
            matrix,
            mode: WeightMode::Ternary,
        })
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }
}

/// A topology with its weights; the unit of inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub topology: NetworkTopology,
    pub layers: Vec<LayerWeights>,
}

impl Network {
    pub fn new(topology: NetworkTopology, layers: Vec<LayerWeights>) -> Result<Self> {
        topology.validate()?;
        if layers.len() != topology.num_weight_layers() {
            return Err(Error::Topology(format!(
                "expected {} weight layers, got {}",
                topology.num_weight_layers(),
                layers.len()
            )));
        }
        for (l, w) in layers.iter().enumerate() {
            let (rows, cols) = (topology.layer_sizes[l + 1], topology.layer_sizes[l]);
            if w.matrix().rows() != rows || w.matrix().cols() != cols {
                return Err(Error::Topology(format!(
                    "layer {l} weights are {}x{}, topology wants {rows}x{cols}",
                    w.matrix().rows(),
                    w.matrix().cols()
                )));
            }
        }
        Ok(Self { topology, layers })
    }

    pub fn weight_matrices(&self) -> Vec<&Matrix> {
        self.layers.iter().map(|l| l.matrix()).collect()
    }

    pub fn is_ternary(&self) -> bool {
        self.layers.iter().all(|l| l.mode() == WeightMode::Ternary)
    }
}

/// Membrane potentials of one layer at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct MembraneState {
    pub potentials: Vec<f64>,
}

impl MembraneState {
    pub fn zeros(n: usize) -> Self {
        Self {
            potentials: vec![0.0; n],
        }
    }
}

/// `[t][neuron]` series for one layer.
pub type TimeSeries = Vec<Vec<f64>>;

/// Binary spike history for every layer: `layer[l][t][neuron]`, entries 0/1.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeRecord {
    pub layers: Vec<TimeSeries>,
}

impl SpikeRecord {
    /// Output-layer series.
    pub fn output(&self) -> &TimeSeries {
        self.layers.last().expect("record has layers")
    }

    /// Total spike count per output neuron.
    pub fn output_counts(&self) -> Vec<f64> {
        let out = self.output();
        let n = out.first().map_or(0, |row| row.len());
        let mut counts = vec![0.0; n];
        for step in out {
            for (c, s) in counts.iter_mut().zip(step) {
                *c += s;
            }
        }
        counts
    }
}

/// Membrane potential history for every layer: `layer[l][t][neuron]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MembraneRecord {
    pub layers: Vec<TimeSeries>,
}

impl MembraneRecord {
    pub fn output(&self) -> &TimeSeries {
        self.layers.last().expect("record has layers")
    }
}

/// Synaptic current `I = W · X`. Pure; checks dimensions.
pub fn integrate_inputs(weights: &Matrix, spikes_in: &[f64]) -> Result<Vec<f64>> {
    if spikes_in.len() != weights.cols() {
        return Err(Error::Topology(format!(
            "input length {} does not match fan-in {}",
            spikes_in.len(),
            weights.cols()
        )));
    }
    let mut out = vec![0.0; weights.rows()];
    weights.matvec(spikes_in, &mut out);
    Ok(out)
}

/// One LIF update: decay, integrate, reset, then threshold.
///
/// Returns the new membrane state and the spikes it emits.
pub fn lif_step(
    state: &MembraneState,
    current: &[f64],
    prev_spikes: &[f64],
    params: &LifParams,
) -> Result<(MembraneState, Vec<f64>)> {
    let n = state.potentials.len();
    if current.len() != n || prev_spikes.len() != n {
        return Err(Error::Topology(format!(
            "lif_step dimension mismatch: state {n}, current {}, prev_spikes {}",
            current.len(),
            prev_spikes.len()
        )));
    }
    if current.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite synaptic current".into()));
    }
    let mut next = vec![0.0; n];
    let mut spikes = vec![0.0; n];
    for i in 0..n {
        let u = match params.reset {
            ResetMode::Subtract => {
                params.beta * state.potentials[i] + current[i] - prev_spikes[i] * params.u_thr
            }
            ResetMode::ToZero => {
                params.beta * state.potentials[i] * (1.0 - prev_spikes[i]) + current[i]
            }
        };
        next[i] = u;
        spikes[i] = if u > params.u_thr { 1.0 } else { 0.0 };
    }
    Ok((MembraneState { potentials: next }, spikes))
}

/// The input vector presented at step `t` under the topology's policy.
/// Returns `None` when the input is absent (all-zero presentation).
#[inline]
pub(crate) fn input_at<'a>(policy: InputPolicy, input: &'a [f64], t: usize) -> Option<&'a [f64]> {
    match policy {
        InputPolicy::RepeatEachStep => Some(input),
        InputPolicy::SinglePass => (t == 0).then_some(input),
    }
}

fn is_binary(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0 || x == 1.0)
}

/// Current from a binary source vector: sums the active columns. Produces
/// bit-identical results to the dense product because the dense path only
/// adds exact zeros for inactive entries.
fn sparse_current(weights: &Matrix, active: &[usize], out: &mut [f64]) {
    for (r, acc) in out.iter_mut().enumerate() {
        let row = weights.row(r);
        let mut sum = 0.0;
        for &i in active {
            sum += row[i];
        }
        *acc = sum;
    }
}

/// Full unrolled forward pass. Records every layer's potentials and spikes
/// at every timestep; deterministic given weights and input.
pub fn forward_pass(
    topology: &NetworkTopology,
    weights: &[&Matrix],
    input: &[f64],
) -> Result<(SpikeRecord, MembraneRecord)> {
    topology.validate()?;
    if weights.len() != topology.num_weight_layers() {
        return Err(Error::Topology(format!(
            "expected {} weight matrices, got {}",
            topology.num_weight_layers(),
            weights.len()
        )));
    }
    if input.len() != topology.input_dim() {
        return Err(Error::Topology(format!(
            "input length {} does not match input layer {}",
            input.len(),
            topology.input_dim()
        )));
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite input".into()));
    }

    let num_layers = topology.num_weight_layers();
    let t_steps = topology.timesteps;
    let binary_input = is_binary(input);
    let input_active: Vec<usize> = if binary_input {
        input
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(i, _)| i)
            .collect()
    } else {
        Vec::new()
    };

    // With a repeated presentation the layer-0 current is the same every
    // step; hoist it out of the time loop.
    let hoisted_input_current = if topology.input_policy == InputPolicy::RepeatEachStep {
        let mut c = vec![0.0; weights[0].rows()];
        if binary_input {
            sparse_current(weights[0], &input_active, &mut c);
        } else {
            weights[0].matvec(input, &mut c);
        }
        Some(c)
    } else {
        None
    };

    let mut states: Vec<MembraneState> = (1..=num_layers)
        .map(|l| MembraneState::zeros(topology.layer_sizes[l]))
        .collect();
    let mut prev_spikes: Vec<Vec<f64>> = (1..=num_layers)
        .map(|l| vec![0.0; topology.layer_sizes[l]])
        .collect();

    let mut spike_layers: Vec<TimeSeries> = vec![Vec::with_capacity(t_steps); num_layers];
    let mut mem_layers: Vec<TimeSeries> = vec![Vec::with_capacity(t_steps); num_layers];
    let mut scratch_active: Vec<usize> = Vec::new();

    for t in 0..t_steps {
        for l in 0..num_layers {
            let mut current = vec![0.0; topology.layer_sizes[l + 1]];
            if l == 0 {
                match (&hoisted_input_current, input_at(topology.input_policy, input, t)) {
                    (Some(c), _) => current.copy_from_slice(c),
                    (None, Some(x)) => {
                        if binary_input {
                            sparse_current(weights[0], &input_active, &mut current);
                            debug_assert_eq!(x.len(), input.len());
                        } else {
                            weights[0].matvec(x, &mut current);
                        }
                    }
                    (None, None) => {} // absent presentation: zero current
                }
            } else {
                // Spikes from the previous layer at this same timestep.
                let src = spike_layers[l - 1].last().expect("previous layer stepped");
                scratch_active.clear();
                scratch_active.extend(
                    src.iter()
                        .enumerate()
                        .filter(|(_, &v)| v == 1.0)
                        .map(|(i, _)| i),
                );
                sparse_current(weights[l], &scratch_active, &mut current);
            }

            let (next, spikes) = lif_step(&states[l], &current, &prev_spikes[l], &topology.lif[l])?;
            mem_layers[l].push(next.potentials.clone());
            spike_layers[l].push(spikes.clone());
            states[l] = next;
            prev_spikes[l] = spikes;
        }
    }

    Ok((
        SpikeRecord {
            layers: spike_layers,
        },
        MembraneRecord { layers: mem_layers },
    ))
}

/// Forward pass for a [`Network`].
pub fn forward_network(net: &Network, input: &[f64]) -> Result<(SpikeRecord, MembraneRecord)> {
    let mats = net.weight_matrices();
    forward_pass(&net.topology, &mats, input)
}

/// Class with the highest total spike count; ties go to the lowest index.
pub fn spike_count_decode(output: &TimeSeries) -> usize {
    let n = output.first().map_or(0, |row| row.len());
    let mut counts = vec![0.0; n];
    for step in output {
        for (c, s) in counts.iter_mut().zip(step) {
            *c += s;
        }
    }
    argmax_lowest(&counts)
}

/// Single-shot decoding for `T = 1` records: the decision is the class of
/// the unique firing neuron, or `None` when zero or multiple fired.
pub fn single_spike_decode(output: &TimeSeries) -> Option<usize> {
    debug_assert_eq!(output.len(), 1, "single-spike decoding expects T = 1");
    let step = output.first()?;
    let mut winner = None;
    for (i, &s) in step.iter().enumerate() {
        if s == 1.0 {
            if winner.is_some() {
                return None;
            }
            winner = Some(i);
        }
    }
    winner
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
