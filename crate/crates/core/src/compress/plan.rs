//! Declarative multi-stage train/quantize/prune pipeline.
//!
//! A [`StagePlan`] is an ordered list of [`Stage`]s. Each stage fixes its
//! loss, input encoding, per-layer quantization flags, per-layer prune
//! schedules, clamping, and optional sign budgets, then trains for a fixed
//! number of epochs. After every epoch the full test split is evaluated
//! with the plan's decoding rule; the best-scoring epoch whose structural
//! state is final (all prune schedules exhausted) is what the stage hands
//! to its successor.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::compress::prune::{apply_magnitude_mask, prune_target, Mask, PruneSchedule};
use crate::compress::quant::{quantize_ternary, sign_budget_mask, SignBudget, ThetaRule};
use crate::data::{EncodedDataset, InputEncoding};
use crate::error::{Error, Result};
use crate::eval::{evaluate, DecodeRule, EvalResult};
use crate::matrix::Matrix;
use crate::rng::SeedTree;
use crate::snn::NetworkTopology;
use crate::train::{
    adamw_step, batch_gradients, AdamWConfig, LossSpec, OptimizerState, SurrogateConfig,
};

/// When prune schedules advance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PruneCadence {
    PerEpoch,
    PerBatch,
}

/// One pipeline stage.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub epochs: usize,
    pub encoding: InputEncoding,
    pub loss: LossSpec,
    /// Quantization-aware forward per weight layer.
    pub quantize: Vec<bool>,
    pub theta: ThetaRule,
    /// Latent clamp bounds, applied after every optimizer step.
    pub clamp: Option<(f64, f64)>,
    /// Gradual pruning schedule per weight layer.
    pub prune: Vec<Option<PruneSchedule>>,
    pub prune_cadence: PruneCadence,
    /// When set, pruning targets this excitatory/inhibitory structure:
    /// each step's connection target is split between positive and
    /// negative entries in the budget's proportion.
    pub prune_sign_split: Option<SignBudget>,
    /// Stage-local multiplier on the plan's learning rate.
    pub lr_scale: f64,
    /// Stage-local firing thresholds per weight layer; `None` uses the
    /// topology's values. Lets early stages train in an easier firing
    /// regime and later stages anneal up to the deployment thresholds.
    pub thresholds: Option<Vec<f64>>,
    /// Per-epoch linear threshold ramp; supersedes `thresholds`. Each
    /// epoch moves the firing bar a little so retraining keeps pace.
    pub threshold_ramp: Option<ThresholdRamp>,
    /// Per-neuron sign budget per weight layer, projected at stage start
    /// and after every epoch. Requires quantization on that layer.
    pub sign_budget: Vec<Option<SignBudget>>,
    /// Cap on how many sinks one source may feed (nonzero ternary entries
    /// per weight column); the hardware routing limit.
    pub max_source_fanout: Option<usize>,
    /// Soft row projection applied inside the quantized forward pass:
    /// entries beyond the budget (ranked by latent magnitude) read as zero
    /// while their latents keep training, so the structure can re-select
    /// itself batch to batch.
    pub sign_projection: Option<SignBudget>,
    /// Soft column projection partner of `sign_projection`.
    pub fanout_projection: Option<usize>,
}

/// Linear per-epoch interpolation of firing thresholds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdRamp {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    /// Epochs to travel from `from` to `to`; later epochs hold `to`.
    pub epochs: usize,
}

impl Stage {
    /// A plain training stage: no quantization, pruning, or clamping.
    pub fn plain(name: &str, epochs: usize, encoding: InputEncoding, loss: LossSpec, layers: usize) -> Self {
        Self {
            name: name.into(),
            epochs,
            encoding,
            loss,
            quantize: vec![false; layers],
            theta: ThetaRule::Fixed(0.5),
            clamp: None,
            prune: vec![None; layers],
            prune_cadence: PruneCadence::PerEpoch,
            prune_sign_split: None,
            lr_scale: 1.0,
            thresholds: None,
            threshold_ramp: None,
            sign_projection: None,
            fanout_projection: None,
            sign_budget: vec![None; layers],
            max_source_fanout: None,
        }
    }

    fn has_pruning(&self) -> bool {
        self.prune.iter().any(Option::is_some)
    }

    fn has_budget(&self) -> bool {
        self.sign_budget.iter().any(Option::is_some) || self.max_source_fanout.is_some()
    }

    /// Epoch index from which the structural state is final. Per-batch
    /// schedules convert step counts into whole epochs.
    fn structure_final_epoch(&self, batches_per_epoch: usize) -> usize {
        let steps = self
            .prune
            .iter()
            .flatten()
            .map(|s| s.total_steps)
            .max()
            .unwrap_or(0);
        match self.prune_cadence {
            PruneCadence::PerEpoch => steps.saturating_sub(1),
            PruneCadence::PerBatch => steps.saturating_sub(1) / batches_per_epoch.max(1),
        }
    }
}

/// The full pipeline description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub surrogate: SurrogateConfig,
    pub decode: DecodeRule,
}

impl StagePlan {
    pub fn validate(&self, topology: &NetworkTopology) -> Result<()> {
        let layers = topology.num_weight_layers();
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        for (i, st) in self.stages.iter().enumerate() {
            for (what, len) in [
                ("quantize", st.quantize.len()),
                ("prune", st.prune.len()),
                ("sign_budget", st.sign_budget.len()),
            ] {
                if len != layers {
                    return Err(Error::Config(format!(
                        "stage {i} ({}): {what} lists {len} layers, topology has {layers}",
                        st.name
                    )));
                }
            }
            for (l, sched) in st.prune.iter().enumerate() {
                if let Some(s) = sched {
                    let fan_in = topology.layer_sizes[l];
                    if s.c_init > fan_in {
                        return Err(Error::Config(format!(
                            "stage {i} ({}): layer {l} schedule starts at {} > fan-in {fan_in}",
                            st.name, s.c_init
                        )));
                    }
                }
            }
            for (l, b) in st.sign_budget.iter().enumerate() {
                if let Some(budget) = b {
                    budget.validate()?;
                    if !st.quantize[l] {
                        return Err(Error::Config(format!(
                            "stage {i} ({}): sign budget on layer {l} requires quantization",
                            st.name
                        )));
                    }
                }
            }
            if !(st.lr_scale > 0.0) || !st.lr_scale.is_finite() {
                return Err(Error::Config(format!(
                    "stage {i} ({}): lr_scale must be positive, got {}",
                    st.name, st.lr_scale
                )));
            }
            if let Some(thr) = &st.thresholds {
                if thr.len() != layers {
                    return Err(Error::Config(format!(
                        "stage {i} ({}): {} thresholds for {layers} layers",
                        st.name,
                        thr.len()
                    )));
                }
                if thr.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::Config(format!(
                        "stage {i} ({}): thresholds must be > 0",
                        st.name
                    )));
                }
            }
            if let Some(ramp) = &st.threshold_ramp {
                if ramp.from.len() != layers || ramp.to.len() != layers {
                    return Err(Error::Config(format!(
                        "stage {i} ({}): ramp thresholds must list {layers} layers",
                        st.name
                    )));
                }
                if ramp.epochs == 0 || ramp.epochs > st.epochs.max(1) {
                    return Err(Error::Config(format!(
                        "stage {i} ({}): ramp epochs {} outside 1..={}",
                        st.name, ramp.epochs, st.epochs
                    )));
                }
                if ramp.from.iter().chain(&ramp.to).any(|v| !(*v > 0.0)) {
                    return Err(Error::Config(format!(
                        "stage {i} ({}): ramp thresholds must be > 0",
                        st.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Mutable trainer state: latent weights and keep/drop masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub latent: Vec<Matrix>,
    pub masks: Vec<Mask>,
}

impl TrainState {
    /// Fresh state with uniform `±1/sqrt(fan_in)` initialization.
    pub fn init(topology: &NetworkTopology, seeds: &SeedTree) -> Self {
        Self::init_structured(topology, seeds, None)
    }

    /// Fresh state whose connectivity starts from `structure` (when given):
    /// masked-out entries begin pruned and each row's initialization bound
    /// follows its actual fan-in.
    pub fn init_structured(
        topology: &NetworkTopology,
        seeds: &SeedTree,
        structure: Option<&[Mask]>,
    ) -> Self {
        use rand::Rng;
        let mut rng = seeds.rng("weight-init", 0);
        let mut latent = Vec::new();
        let mut masks = Vec::new();
        for l in 0..topology.num_weight_layers() {
            let rows = topology.layer_sizes[l + 1];
            let cols = topology.layer_sizes[l];
            let mask = match structure.and_then(|s| s.get(l)) {
                Some(m) => m.clone(),
                None => Mask::all_ones(rows, cols),
            };
            let mut m = Matrix::zeros(rows, cols);
            for r in 0..rows {
                let fan_in = mask.kept_in_row(r).max(1);
                let bound = 1.0 / (fan_in as f64).sqrt();
                for c in 0..cols {
                    // Draw for every entry to keep the stream layout fixed.
                    let v = rng.gen_range(-bound..bound);
                    if mask.get(r, c) {
                        m.set(r, c, v);
                    }
                }
            }
            latent.push(m);
            masks.push(mask);
        }
        Self { latent, masks }
    }

    /// Effective forward weights for a stage: masked latents, quantized
    /// where the stage says so, with any soft structural projections
    /// applied on top. Also returns each quantized layer's resolved
    /// threshold.
    pub fn effective_weights(&self, stage: &Stage) -> (Vec<Matrix>, Vec<Option<f64>>) {
        let mut weights = Vec::with_capacity(self.latent.len());
        let mut thetas = Vec::with_capacity(self.latent.len());
        for (l, latent) in self.latent.iter().enumerate() {
            let mut m = latent.clone();
            self.masks[l].apply(&mut m);
            if stage.quantize[l] {
                let theta = stage.theta.resolve(&m, &self.masks[l]);
                let masked_latent = m.clone();
                m = quantize_ternary(&m, theta);
                self.masks[l].apply(&mut m);
                if let Some(budget) = &stage.sign_projection {
                    sign_budget_mask(&mut m, &masked_latent, budget);
                }
                if let Some(cap) = stage.fanout_projection {
                    project_column_fanout(&mut m, &masked_latent, cap);
                }
                thetas.push(Some(theta));
            } else {
                thetas.push(None);
            }
            weights.push(m);
        }
        (weights, thetas)
    }
}

/// Outcome of one stage.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageResult {
    pub name: String,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_accuracy: Option<f64>,
    pub epoch_accuracies: Vec<f64>,
    /// Resolved quantizer thresholds at stage end.
    pub thetas: Vec<Option<f64>>,
    /// Trainer state the stage handed onward.
    pub state: TrainState,
}

/// Outcome of the whole pipeline.
#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub stages: Vec<StageResult>,
    pub state: TrainState,
    /// Committed ternary weights per layer under the last stage's flags.
    pub ternary: Vec<Option<Matrix>>,
    pub thetas: Vec<Option<f64>>,
    pub final_eval: EvalResult,
}

fn apply_budgets(
    stage: &Stage,
    state: &mut TrainState,
) -> Result<()> {
    for l in 0..state.latent.len() {
        if let Some(budget) = &stage.sign_budget[l] {
            let mut masked = state.latent[l].clone();
            state.masks[l].apply(&mut masked);
            let theta = stage.theta.resolve(&masked, &state.masks[l]);
            let mut tern = quantize_ternary(&masked, theta);
            state.masks[l].apply(&mut tern);
            let keep = sign_budget_mask(&mut tern, &masked, budget);
            state.masks[l].intersect(&keep);
            state.masks[l].apply(&mut state.latent[l]);
        }
    }
    if let Some(cap) = stage.max_source_fanout {
        for l in 0..state.latent.len() {
            cap_column_fanout(cap, &mut state.masks[l], &state.latent[l]);
            state.masks[l].apply(&mut state.latent[l]);
        }
    }
    Ok(())
}

/// Zero a ternary matrix's column entries beyond `cap`, ranked by latent
/// magnitude with lower row index winning ties. The soft twin of
/// [`cap_column_fanout`].
fn project_column_fanout(tern: &mut Matrix, latent: &Matrix, cap: usize) {
    for c in 0..tern.cols() {
        let mut rows: Vec<usize> = (0..tern.rows()).filter(|&r| tern.get(r, c) != 0.0).collect();
        if rows.len() <= cap {
            continue;
        }
        rows.sort_by(|&a, &b| {
            latent
                .get(b, c)
                .abs()
                .partial_cmp(&latent.get(a, c).abs())
                .expect("finite weights")
                .then(a.cmp(&b))
        });
        for &r in &rows[cap..] {
            tern.set(r, c, 0.0);
        }
    }
}

/// Keep at most `cap` unmasked entries per column (a source's sink count),
/// ranked by latent magnitude with lower row index winning ties.
fn cap_column_fanout(cap: usize, mask: &mut Mask, latent: &Matrix) {
    for c in 0..latent.cols() {
        let mut rows: Vec<usize> = (0..latent.rows()).filter(|&r| mask.get(r, c)).collect();
        if rows.len() <= cap {
            continue;
        }
        rows.sort_by(|&a, &b| {
            latent
                .get(b, c)
                .abs()
                .partial_cmp(&latent.get(a, c).abs())
                .expect("finite weights")
                .then(a.cmp(&b))
        });
        for &r in &rows[cap..] {
            mask.set(r, c, false);
        }
    }
}

/// Topology with the stage's threshold overrides applied for one epoch.
fn stage_topology(base: &NetworkTopology, stage: &Stage, epoch: usize) -> NetworkTopology {
    let mut t = base.clone();
    if let Some(ramp) = &stage.threshold_ramp {
        let frac = ((epoch + 1) as f64 / ramp.epochs as f64).min(1.0);
        for (l, lif) in t.lif.iter_mut().enumerate() {
            lif.u_thr = ramp.from[l] + (ramp.to[l] - ramp.from[l]) * frac;
        }
        return t;
    }
    if let Some(thr) = &stage.thresholds {
        for (lif, &u) in t.lif.iter_mut().zip(thr) {
            lif.u_thr = u;
        }
    }
    t
}

/// Per-layer structural counts at stage entry; anneals start from here.
struct StageStartCounts {
    /// Largest kept positive/negative count over rows, per layer.
    sign: Vec<(usize, usize)>,
    /// Largest kept column usage, per layer.
    fanout: Vec<usize>,
}

fn stage_start_counts(state: &TrainState) -> StageStartCounts {
    let mut sign = Vec::with_capacity(state.latent.len());
    let mut fanout = Vec::with_capacity(state.latent.len());
    for (l, latent) in state.latent.iter().enumerate() {
        let mask = &state.masks[l];
        let mut max_pos = 0;
        let mut max_neg = 0;
        for r in 0..latent.rows() {
            let row = latent.row(r);
            let pos = (0..row.len()).filter(|&c| mask.get(r, c) && row[c] > 0.0).count();
            let neg = (0..row.len()).filter(|&c| mask.get(r, c) && row[c] < 0.0).count();
            max_pos = max_pos.max(pos);
            max_neg = max_neg.max(neg);
        }
        sign.push((max_pos, max_neg));
        let max_use = (0..latent.cols())
            .map(|c| (0..latent.rows()).filter(|&r| mask.get(r, c)).count())
            .max()
            .unwrap_or(0);
        fanout.push(max_use);
    }
    StageStartCounts { sign, fanout }
}

fn advance_pruning(
    stage: &Stage,
    step: usize,
    state: &mut TrainState,
    start: &StageStartCounts,
) -> Result<()> {
    for l in 0..state.latent.len() {
        if let Some(sched) = &stage.prune[l] {
            let clamped = sched.at_step(step.min(sched.total_steps - 1));
            let target = prune_target(&clamped).min(state.latent[l].cols());
            let mut masked = state.latent[l].clone();
            state.masks[l].apply(&mut masked);
            let (_, keep) = apply_magnitude_mask(&masked, target)?;
            state.masks[l].intersect(&keep);

            // Per-sign caps anneal from the stage-entry row mix down to
            // the final budget on the same step counter.
            if let Some(split) = stage.prune_sign_split {
                let (start_pos, start_neg) = start.sign[l];
                let cap_pos = prune_target(
                    &PruneSchedule::new(start_pos.max(split.max_pos), split.max_pos, sched.total_steps)?
                        .at_step(clamped.step),
                );
                let cap_neg = prune_target(
                    &PruneSchedule::new(start_neg.max(split.max_neg), split.max_neg, sched.total_steps)?
                        .at_step(clamped.step),
                );
                state.masks[l].apply(&mut masked);
                let (_, keep_signs) =
                    crate::compress::prune::apply_sign_aware_mask(&masked, cap_pos, cap_neg);
                state.masks[l].intersect(&keep_signs);
            }
            state.masks[l].apply(&mut state.latent[l]);
        }
    }

    // The source fan-out limit anneals from the stage-entry maximum along
    // the longest row schedule.
    if let Some(cap_final) = stage.max_source_fanout {
        if stage.has_pruning() {
            let total_steps = stage
                .prune
                .iter()
                .flatten()
                .map(|s| s.total_steps)
                .max()
                .unwrap_or(1);
            for l in 0..state.latent.len() {
                if stage.prune[l].is_none() {
                    continue;
                }
                let cap = prune_target(
                    &PruneSchedule::new(start.fanout[l].max(cap_final), cap_final, total_steps)?
                        .at_step(step.min(total_steps - 1)),
                );
                cap_column_fanout(cap, &mut state.masks[l], &state.latent[l]);
                state.masks[l].apply(&mut state.latent[l]);
            }
        }
    }
    Ok(())
}

/// Run the plan `restarts` times from independently seeded initial states
/// and keep the run with the best final accuracy. Restart seeds derive
/// deterministically from `seeds`, so the selection is reproducible.
///
/// `init_state` builds the starting state for a given restart's seed tree.
pub fn run_stage_plan_restarts(
    topology: &NetworkTopology,
    plan: &StagePlan,
    train_data: &EncodedDataset,
    test_data: &EncodedDataset,
    seeds: &SeedTree,
    restarts: usize,
    init_state: impl Fn(&SeedTree) -> TrainState,
) -> Result<PipelineResult> {
    let restarts = restarts.max(1);
    let mut best: Option<PipelineResult> = None;
    for k in 0..restarts {
        let sub = SeedTree::new(seeds.derive("restart", k as u64));
        let result = run_stage_plan(
            topology,
            plan,
            train_data,
            test_data,
            &sub,
            Some(init_state(&sub)),
        )?;
        let acc = result.final_eval.accuracy();
        log::info!("restart {k}: final accuracy {acc:.4}");
        if best
            .as_ref()
            .map_or(true, |b| acc > b.final_eval.accuracy())
        {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Execute every stage in order. `resume` continues from an existing
/// trainer state instead of a fresh initialization.
pub fn run_stage_plan(
    topology: &NetworkTopology,
    plan: &StagePlan,
    train_data: &EncodedDataset,
    test_data: &EncodedDataset,
    seeds: &SeedTree,
    resume: Option<TrainState>,
) -> Result<PipelineResult> {
    topology.validate()?;
    plan.validate(topology)?;
    if train_data.dim != topology.input_dim() || test_data.dim != topology.input_dim() {
        return Err(Error::Config(format!(
            "dataset dim {} does not match input layer {}",
            train_data.dim,
            topology.input_dim()
        )));
    }
    if train_data.num_classes != topology.output_dim() {
        return Err(Error::Config(format!(
            "dataset has {} classes, output layer has {}",
            train_data.num_classes,
            topology.output_dim()
        )));
    }

    let mut state = resume.unwrap_or_else(|| TrainState::init(topology, seeds));
    let mut results: Vec<StageResult> = Vec::new();

    for (stage_idx, stage) in plan.stages.iter().enumerate() {
        log::info!("stage {stage_idx} ({}): {} epochs", stage.name, stage.epochs);

        if let Some((lo, hi)) = stage.clamp {
            for m in &mut state.latent {
                crate::compress::quant::clamp_weights(m, lo, hi);
            }
        }
        if stage.has_budget() && !stage.has_pruning() {
            apply_budgets(stage, &mut state)?;
        }

        let mut stage_optimizer = plan.optimizer;
        stage_optimizer.learning_rate *= stage.lr_scale;
        let shapes: Vec<&Matrix> = state.latent.iter().collect();
        let mut opt = OptimizerState::new(stage_optimizer, &shapes);
        drop(shapes);

        let mut best: Option<(usize, f64, TrainState)> = None;
        let mut epoch_accuracies = Vec::with_capacity(stage.epochs);
        let num_batches = train_data.len().div_ceil(plan.batch_size);
        let mut structure_final_from = stage.structure_final_epoch(num_batches);
        if let Some(ramp) = &stage.threshold_ramp {
            structure_final_from = structure_final_from.max(ramp.epochs.saturating_sub(1));
        }
        let start_counts = stage_start_counts(&state);

        for epoch in 0..stage.epochs {
            let epoch_topology = stage_topology(topology, stage, epoch);
            let topology = &epoch_topology;
            if stage.has_pruning() && stage.prune_cadence == PruneCadence::PerEpoch {
                advance_pruning(stage, epoch, &mut state, &start_counts)?;
            }

            let mut order: Vec<usize> = (0..train_data.len()).collect();
            order.shuffle(&mut seeds.rng("shuffle", (stage_idx as u64) << 32 | epoch as u64));

            for (b, batch) in order.chunks(plan.batch_size).enumerate() {
                if stage.has_pruning() && stage.prune_cadence == PruneCadence::PerBatch {
                    advance_pruning(stage, epoch * num_batches + b, &mut state, &start_counts)?;
                }
                let inputs: Vec<Vec<f64>> = batch
                    .iter()
                    .map(|&i| train_data.materialize(i, stage.encoding))
                    .collect();
                let targets: Vec<usize> = batch.iter().map(|&i| train_data.labels[i]).collect();

                let (eff, _) = state.effective_weights(stage);
                let eff_refs: Vec<&Matrix> = eff.iter().collect();
                let mut batch_out = batch_gradients(
                    topology,
                    &eff_refs,
                    &inputs,
                    &targets,
                    &stage.loss,
                    plan.surrogate,
                )?;
                if !batch_out.mean_loss.is_finite() {
                    return Err(Error::Training(format!(
                        "loss diverged in stage {} epoch {epoch} batch {b}",
                        stage.name
                    )));
                }

                // Straight-through: gradients w.r.t. the effective weights
                // pass to the latents unchanged inside the clamp bounds and
                // are zeroed outside them and on masked entries.
                for l in 0..state.latent.len() {
                    let g = batch_out.grads.layers[l].as_mut_slice();
                    let latent = state.latent[l].as_slice();
                    let cols = state.latent[l].cols();
                    for (i, gv) in g.iter_mut().enumerate() {
                        if !state.masks[l].get(i / cols, i % cols) {
                            *gv = 0.0;
                            continue;
                        }
                        if let Some((lo, hi)) = stage.clamp {
                            if latent[i] < lo || latent[i] > hi {
                                *gv = 0.0;
                            }
                        }
                    }
                }

                adamw_step(&mut state.latent, &batch_out.grads, &mut opt)?;
                if let Some((lo, hi)) = stage.clamp {
                    for m in &mut state.latent {
                        crate::compress::quant::clamp_weights(m, lo, hi);
                    }
                }
                for l in 0..state.latent.len() {
                    state.masks[l].apply(&mut state.latent[l]);
                }
            }

            if stage.has_budget() && !stage.has_pruning() {
                apply_budgets(stage, &mut state)?;
            }

            let (eff, _) = state.effective_weights(stage);
            let eff_refs: Vec<&Matrix> = eff.iter().collect();
            let eval = evaluate(topology, &eff_refs, test_data, stage.encoding, plan.decode)?;
            let acc = eval.accuracy();
            epoch_accuracies.push(acc);
            log::info!(
                "stage {} epoch {epoch}: test accuracy {:.4}",
                stage.name,
                acc
            );

            let structure_final = epoch >= structure_final_from;
            if structure_final && best.as_ref().map_or(true, |(_, b, _)| acc > *b) {
                best = Some((epoch, acc, state.clone()));
            }
        }

        // Hand the best structural-final epoch onward.
        if let Some((_, _, ref snap)) = best {
            state = snap.clone();
        }
        let (_, thetas) = state.effective_weights(stage);
        results.push(StageResult {
            name: stage.name.clone(),
            epochs_run: stage.epochs,
            best_epoch: best.as_ref().map(|(e, _, _)| *e),
            best_accuracy: best.as_ref().map(|(_, a, _)| *a),
            epoch_accuracies,
            thetas,
            state: state.clone(),
        });
    }

    // Commit ternary weights under the last stage's flags and evaluate.
    let last_stage = plan
        .stages
        .last()
        .ok_or_else(|| Error::Config("plan has no stages".into()))?;
    let (eff, thetas) = state.effective_weights(last_stage);
    let eff_refs: Vec<&Matrix> = eff.iter().collect();
    let final_eval = evaluate(
        topology,
        &eff_refs,
        test_data,
        last_stage.encoding,
        plan.decode,
    )?;
    let ternary: Vec<Option<Matrix>> = eff
        .iter()
        .zip(&last_stage.quantize)
        .map(|(m, &q)| q.then(|| m.clone()))
        .collect();

    Ok(PipelineResult {
        stages: results,
        state,
        ternary,
        thetas,
        final_eval,
    })
}
