//! Canonical pipeline profiles.
//!
//! `complete` — the 784-128-96-96-10 spike-count network over 25 timesteps:
//! unrestricted float training, input binarization, layer-by-layer
//! quantization, then gradual pruning to a fan-in of 64 under QAT.
//!
//! `chip` — the 49-24-3 single-pass network for the die: training on
//! downsampled binary inputs with the hybrid loss, weight clamping, gradual
//! pruning, quantization-aware training, and a final pruning stage that
//! projects every neuron onto six positive plus two negative connections
//! and caps source fan-out at the routing limit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::compress::{Mask, PruneCadence, PruneSchedule, SignBudget, Stage, StagePlan, ThetaRule, ThresholdRamp};
use crate::data::{InputEncoding, PreprocConfig, PreprocMode, SubsetSpec};
use crate::error::{Error, Result};
use crate::eval::DecodeRule;
use crate::snn::{InputPolicy, LifParams, NetworkTopology, ResetMode};
use crate::train::{AdamWConfig, LossSpec, LossWeights};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    Complete,
    Chip,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Complete => "complete",
            Profile::Chip => "chip",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Profile::Complete),
            "chip" => Ok(Profile::Chip),
            other => Err(Error::Config(format!(
                "unknown profile '{other}' (expected 'complete' or 'chip')"
            ))),
        }
    }
}

/// Tunables accepted by the profile builders. Everything has a default;
/// the chip profile rejects overrides that would break hardware realism.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileOptions {
    pub profile: Profile,
    pub digits: SubsetSpec,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    /// Per-stage epoch overrides by stage name.
    pub epochs: BTreeMap<String, usize>,
    /// Simulation window; `complete` only.
    pub timesteps: Option<usize>,
    pub membrane_decay: Option<f64>,
    pub firing_threshold: Option<f64>,
    /// Input binarization threshold for the `complete` profile stages.
    pub binarize_threshold: f64,
    /// Hybrid loss mix for the chip profile.
    pub loss_weights: LossWeights,
    /// Final fan-in of the complete profile's pruning stage.
    pub complete_fan_in: usize,
    /// Sign budget of the chip profile's final projection.
    pub sign_budget: SignBudget,
    /// Source fan-out cap of the chip profile (the routing limit).
    pub max_source_fanout: usize,
    /// Independent training restarts; the best final network wins.
    pub restarts: usize,
}

impl ProfileOptions {
    pub fn new(profile: Profile, digits: SubsetSpec) -> Self {
        Self {
            profile,
            digits,
            batch_size: 128,
            optimizer: AdamWConfig::default(),
            epochs: BTreeMap::new(),
            timesteps: None,
            membrane_decay: None,
            firing_threshold: None,
            binarize_threshold: 0.5,
            loss_weights: LossWeights {
                w_spike: 0.6,
                w_mem: 0.4,
            },
            complete_fan_in: 64,
            sign_budget: SignBudget::chip_default(),
            max_source_fanout: 9,
            restarts: match profile {
                Profile::Complete => 1,
                Profile::Chip => 3,
            },
        }
    }
}

/// A fully assembled profile: topology, plan, preprocessing, decoding.
#[derive(Clone, Debug)]
pub struct BuiltProfile {
    pub name: String,
    pub topology: NetworkTopology,
    pub plan: StagePlan,
    pub preproc: PreprocConfig,
    /// Encoding the final network is evaluated and deployed with.
    pub eval_encoding: InputEncoding,
    /// Initial connectivity (local receptive fields for the chip profile);
    /// `None` starts fully connected.
    pub initial_structure: Option<Vec<Mask>>,
    /// Independent training restarts; the best final network wins.
    pub restarts: usize,
}

impl BuiltProfile {
    /// Fresh trainer state honoring the profile's initial connectivity.
    pub fn init_state(&self, seeds: &crate::rng::SeedTree) -> crate::compress::TrainState {
        crate::compress::TrainState::init_structured(
            &self.topology,
            seeds,
            self.initial_structure.as_deref(),
        )
    }
}

/// 3×3 receptive-field masks for the chip's hidden layer: one patch per
/// neuron, centers tiling the 7×7 grid row-major. Interior pixels land in
/// at most nine patches, which matches the routing fan-out limit.
fn local_patch_masks(hidden: usize, out: usize) -> Vec<Mask> {
    let side = 7usize;
    let centers: Vec<(usize, usize)> = (1..side - 1)
        .flat_map(|y| (1..side - 1).map(move |x| (y, x)))
        .collect();
    let mut m0 = Mask::all_ones(hidden, side * side);
    for r in 0..hidden {
        let (cy, cx) = centers[r % centers.len()];
        for c in 0..side * side {
            let (y, x) = (c / side, c % side);
            let inside = y + 1 >= cy && y <= cy + 1 && x + 1 >= cx && x <= cx + 1;
            if !inside {
                m0.set(r, c, false);
            }
        }
    }
    vec![m0, Mask::all_ones(out, hidden)]
}

fn epochs_of(overrides: &BTreeMap<String, usize>, name: &str, default: usize) -> usize {
    overrides.get(name).copied().unwrap_or(default)
}

pub fn build_profile(opts: &ProfileOptions) -> Result<BuiltProfile> {
    match opts.profile {
        Profile::Complete => build_complete(opts),
        Profile::Chip => build_chip(opts),
    }
}

fn build_complete(opts: &ProfileOptions) -> Result<BuiltProfile> {
    let lif = LifParams {
        beta: opts.membrane_decay.unwrap_or(0.95),
        u_thr: opts.firing_threshold.unwrap_or(1.0),
        reset: ResetMode::Subtract,
    };
    let timesteps = opts.timesteps.unwrap_or(25);
    let topology = NetworkTopology::uniform(
        vec![784, 128, 96, 96, opts.digits.num_classes()],
        lif,
        InputPolicy::RepeatEachStep,
        timesteps,
    );
    let layers = topology.num_weight_layers();
    let real = InputEncoding::Real;
    let binz = InputEncoding::Binarized {
        threshold: opts.binarize_threshold,
    };
    let theta = ThetaRule::MeanAbsFraction(0.5);
    let ov = &opts.epochs;

    let mut stages = Vec::new();
    stages.push(Stage::plain(
        "unrestricted",
        epochs_of(ov, "unrestricted", 8),
        real,
        LossSpec::Mem,
        layers,
    ));
    stages.push(Stage::plain(
        "binarize",
        epochs_of(ov, "binarize", 4),
        binz,
        LossSpec::Mem,
        layers,
    ));
    // Quantize one more layer per sub-stage, input side first.
    for l in 0..layers {
        let name = format!("quantize-l{l}");
        let mut st = Stage::plain(&name, epochs_of(ov, &name, 3), binz, LossSpec::Mem, layers);
        for q in 0..=l {
            st.quantize[q] = true;
        }
        st.theta = theta;
        stages.push(st);
    }
    // Gradual pruning on all layers simultaneously under full QAT.
    let fan_in = opts.complete_fan_in;
    let schedules: Vec<PruneSchedule> = vec![
        PruneSchedule::new(784, fan_in, 60)?,
        PruneSchedule::new(128, fan_in, 16)?,
        PruneSchedule::new(96, fan_in, 8)?,
        PruneSchedule::new(96, fan_in, 8)?,
    ];
    let prune_epochs = epochs_of(ov, "prune", 60 + 6);
    let mut prune = Stage::plain("prune", prune_epochs, binz, LossSpec::Mem, layers);
    prune.quantize = vec![true; layers];
    prune.theta = theta;
    prune.prune = schedules.into_iter().map(Some).collect();
    prune.prune_cadence = PruneCadence::PerEpoch;
    stages.push(prune);

    let mut validate = Stage::plain("validate", 0, binz, LossSpec::Mem, layers);
    validate.quantize = vec![true; layers];
    validate.theta = theta;
    stages.push(validate);

    Ok(BuiltProfile {
        name: "complete".into(),
        topology,
        plan: StagePlan {
            stages,
            batch_size: opts.batch_size,
            optimizer: opts.optimizer,
            surrogate: Default::default(),
            decode: DecodeRule::SpikeCount,
        },
        preproc: PreprocConfig {
            mode: PreprocMode::Flatten,
        },
        eval_encoding: binz,
        initial_structure: None,
        restarts: opts.restarts,
    })
}

fn build_chip(opts: &ProfileOptions) -> Result<BuiltProfile> {
    if let Some(t) = opts.timesteps {
        if t != 1 {
            return Err(Error::Config(format!(
                "chip profile requires a single forward pass (timesteps = 1, got {t})"
            )));
        }
    }
    if opts.digits.num_classes() > 3 {
        return Err(Error::Config(format!(
            "chip profile supports at most 3 classes ({} requested)",
            opts.digits.num_classes()
        )));
    }
    let lif = LifParams {
        beta: opts.membrane_decay.unwrap_or(0.95),
        // Any threshold in (1, 2] maps to the same two-pulse firing rule
        // once currents are integer sums of ternary weights; 1.1 is the
        // gentlest float-phase shaping that still lands there.
        u_thr: opts.firing_threshold.unwrap_or(1.1),
        reset: ResetMode::Subtract,
    };
    let topology = NetworkTopology::uniform(
        vec![49, 24, opts.digits.num_classes()],
        lif,
        InputPolicy::SinglePass,
        1,
    );
    let layers = topology.num_weight_layers();
    // Downsampled inputs are already binary; Real presents them as 0/1.
    let enc = InputEncoding::Real;
    let loss = LossSpec::Hybrid(opts.loss_weights);
    let theta = ThetaRule::Fixed(0.5);
    let clamp = Some((-1.0, 1.0));
    let ov = &opts.epochs;
    let budget = opts.sign_budget;
    let target_fan_in = budget.max_pos + budget.max_neg;

    // Early stages run in an easier 1-pulse firing regime; the threshold
    // then rises to the deployment value with retraining in between, which
    // carries the pruned structure into the conjunction-style features the
    // uniform cell budget can express.
    let warm = Some(vec![0.5; layers]);

    let mut stages = Vec::new();
    let mut binarize = Stage::plain("binarize", epochs_of(ov, "binarize", 40), enc, loss, layers);
    binarize.thresholds = warm.clone();
    stages.push(binarize);

    let mut clamp_stage = Stage::plain("clamp", epochs_of(ov, "clamp", 30), enc, loss, layers);
    clamp_stage.clamp = clamp;
    clamp_stage.thresholds = warm.clone();
    stages.push(clamp_stage);

    // Pruning and the threshold rise together: the firing bar crosses its
    // hardest region while rows still hold plenty of redundant taps, so
    // multi-tap features form under pressure and the later cuts keep their
    // members. Arriving at the final fan-in with a low threshold (or at the
    // final threshold with dense rows) both fail.
    let final_thr = lif.u_thr;
    let warm_thr = 0.5;
    let prune_epochs = epochs_of(ov, "prune", 50);
    let sched_steps = (prune_epochs * 7 / 10).max(1);
    let mut prune = Stage::plain("prune", prune_epochs, enc, loss, layers);
    prune.clamp = clamp;
    prune.prune = vec![
        Some(PruneSchedule::new(9, target_fan_in, sched_steps)?),
        Some(PruneSchedule::new(24, target_fan_in, sched_steps)?),
    ];
    prune.threshold_ramp = Some(ThresholdRamp {
        from: vec![warm_thr; layers],
        to: vec![final_thr; layers],
        epochs: sched_steps,
    });
    stages.push(prune);

    let mut qat = Stage::plain("quantize", epochs_of(ov, "quantize", 40), enc, loss, layers);
    qat.clamp = clamp;
    qat.quantize = vec![true; layers];
    qat.theta = theta;
    qat.lr_scale = 0.3;
    qat.sign_projection = Some(budget);
    qat.fanout_projection = Some(opts.max_source_fanout);
    stages.push(qat);

    // Final pruning: the cell budget and routing limit ride inside the
    // quantized forward as soft projections, so every batch trains the
    // network exactly as the hardware will read it while the latents stay
    // free to re-select which synapses survive. The validate stage at the
    // end hardens the winning selection into permanent masks.
    let mut signs = Stage::plain("prune-signs", epochs_of(ov, "prune-signs", 40), enc, loss, layers);
    signs.clamp = clamp;
    signs.quantize = vec![true; layers];
    signs.theta = theta;
    signs.lr_scale = 0.3;
    signs.sign_projection = Some(budget);
    signs.fanout_projection = Some(opts.max_source_fanout);
    stages.push(signs);

    let mut validate = Stage::plain("validate", 0, enc, loss, layers);
    validate.quantize = vec![true; layers];
    validate.theta = theta;
    validate.sign_budget = vec![Some(budget); layers];
    validate.max_source_fanout = Some(opts.max_source_fanout);
    stages.push(validate);

    Ok(BuiltProfile {
        name: "chip".into(),
        topology,
        plan: StagePlan {
            stages,
            batch_size: opts.batch_size,
            optimizer: opts.optimizer,
            surrogate: Default::default(),
            decode: DecodeRule::SingleSpike,
        },
        preproc: PreprocConfig {
            mode: PreprocMode::BlockDownsample {
                block: 4,
                threshold: 0.3,
            },
        },
        eval_encoding: enc,
        initial_structure: Some(local_patch_masks(24, opts.digits.num_classes())),
        restarts: opts.restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chip_profile_is_single_pass_49_inputs() {
        let opts = ProfileOptions::new(Profile::Chip, SubsetSpec::new(vec![2, 3, 4]).unwrap());
        let built = build_profile(&opts).unwrap();
        assert_eq!(built.topology.timesteps, 1);
        assert_eq!(built.topology.input_dim(), 49);
        assert_eq!(built.topology.output_dim(), 3);
        assert_eq!(built.plan.decode, DecodeRule::SingleSpike);
        built.plan.validate(&built.topology).unwrap();
        // Stage order: binarize, clamp, prune, quantize, prune-signs, validate.
        let names: Vec<&str> = built.plan.stages.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            vec!["binarize", "clamp", "prune", "quantize", "prune-signs", "validate"]
        );
    }

    #[test]
    fn chip_profile_rejects_multi_step_window() {
        let mut opts = ProfileOptions::new(Profile::Chip, SubsetSpec::new(vec![2, 3, 4]).unwrap());
        opts.timesteps = Some(25);
        assert!(build_profile(&opts).is_err());
    }

    #[test]
    fn complete_profile_matches_reference_shape() {
        let opts = ProfileOptions::new(Profile::Complete, SubsetSpec::all_digits());
        let built = build_profile(&opts).unwrap();
        assert_eq!(built.topology.layer_sizes, vec![784, 128, 96, 96, 10]);
        assert_eq!(built.topology.timesteps, 25);
        assert_eq!(built.plan.decode, DecodeRule::SpikeCount);
        built.plan.validate(&built.topology).unwrap();
        let prune = built.plan.stages.iter().find(|s| s.name == "prune").unwrap();
        let s0 = prune.prune[0].unwrap();
        assert_eq!((s0.c_init, s0.c_final, s0.total_steps), (784, 64, 60));
    }

    #[test]
    fn epoch_overrides_apply_by_stage_name() {
        let mut opts = ProfileOptions::new(Profile::Chip, SubsetSpec::new(vec![0, 1]).unwrap());
        opts.epochs.insert("quantize".into(), 3);
        let built = build_profile(&opts).unwrap();
        let qat = built.plan.stages.iter().find(|s| s.name == "quantize").unwrap();
        assert_eq!(qat.epochs, 3);
    }
}
