//! Hardware-aware compression: gradual magnitude pruning, ternary
//! quantization-aware training, sign budgets, dead-neuron elimination, and
//! the staged pipeline runner.

mod dead;
mod plan;
mod prune;
mod quant;

pub use dead::{eliminate_dead_neurons, DeadNeuronReport};
pub use plan::{
    run_stage_plan, run_stage_plan_restarts, PipelineResult, PruneCadence, Stage, StagePlan,
    StageResult, ThresholdRamp, TrainState,
};
pub use prune::{apply_magnitude_mask, apply_sign_aware_mask, prune_target, Mask, PruneSchedule};
pub use quant::{
    apply_sign_constraint, clamp_weights, quantize_ternary, sign_budget_mask, QuantConfig,
    SignBudget, ThetaRule,
};
