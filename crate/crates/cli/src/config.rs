//! Run configuration: TOML file merged with command-line overrides.
//!
//! Every value has a default; the fully resolved configuration is echoed
//! into the metrics report so a run's provenance is self-contained.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use spikechip_core::chipsim::{CellCost, ClockTopology, ResourceModel, TimingParams};
use spikechip_core::data::SubsetSpec;
use spikechip_core::error::{Error, Result};
use spikechip_core::profiles::{Profile, ProfileOptions};
use spikechip_core::train::{AdamWConfig, LossWeights};

/// Optional keys accepted in the TOML config file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub profile: Option<String>,
    pub digits: Option<Vec<u8>>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainSection,
    /// Per-stage epoch overrides by stage name.
    #[serde(default)]
    pub epochs: BTreeMap<String, usize>,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub timing: TimingSection,
    #[serde(default)]
    pub resources: ResourceSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub weight_decay: Option<f64>,
    pub restarts: Option<usize>,
    pub loss_spike_weight: Option<f64>,
    pub loss_mem_weight: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub timesteps: Option<usize>,
    pub membrane_decay: Option<f64>,
    pub firing_threshold: Option<f64>,
    pub binarize_threshold: Option<f64>,
    pub max_positive: Option<usize>,
    pub max_negative: Option<usize>,
    pub max_source_fanout: Option<usize>,
    pub complete_fan_in: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSection {
    pub spl_delay_ps: Option<f64>,
    pub dff_clk_to_q_ps: Option<f64>,
    pub ptl_link_ps: Option<f64>,
    pub neuron_sync_ps: Option<f64>,
    pub shift_register_path_ps: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSection {
    pub ic_amps: Option<f64>,
    /// Per-kind cost overrides, e.g. `[resources.costs.NEURON]`.
    #[serde(default)]
    pub costs: BTreeMap<String, CellCost>,
}

/// Command-line values that override the file.
#[derive(Clone, Debug, Default)]
pub struct CliOverrides {
    pub profile: Option<String>,
    pub digits: Option<Vec<u8>>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub digits: Vec<u8>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data_dir: PathBuf,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub restarts: usize,
    pub loss_weights: LossWeights,
    pub epochs: BTreeMap<String, usize>,
    pub timesteps: Option<usize>,
    pub membrane_decay: Option<f64>,
    pub firing_threshold: Option<f64>,
    pub binarize_threshold: f64,
    pub max_positive: usize,
    pub max_negative: usize,
    pub max_source_fanout: usize,
    pub complete_fan_in: usize,
    pub timing: TimingParams,
    pub resources: ResourceModel,
}

impl RunConfig {
    pub fn load(file: Option<&Path>, cli: &CliOverrides) -> Result<Self> {
        let file_cfg: FileConfig = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("config {}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };

        let profile_name = cli
            .profile
            .clone()
            .or(file_cfg.profile)
            .unwrap_or_else(|| "chip".into());
        let profile = Profile::parse(&profile_name)?;
        let digits = cli.digits.clone().or(file_cfg.digits).unwrap_or_else(|| {
            match profile {
                Profile::Complete => (0..10).collect(),
                Profile::Chip => vec![2, 3, 4],
            }
        });
        SubsetSpec::new(digits.clone())?;

        let defaults = ProfileOptions::new(profile, SubsetSpec::new(digits.clone())?);
        let t = &file_cfg.train;
        let optimizer = AdamWConfig {
            learning_rate: t.learning_rate.unwrap_or(defaults.optimizer.learning_rate),
            beta1: t.beta1.unwrap_or(defaults.optimizer.beta1),
            beta2: t.beta2.unwrap_or(defaults.optimizer.beta2),
            epsilon: t.epsilon.unwrap_or(defaults.optimizer.epsilon),
            weight_decay: t.weight_decay.unwrap_or(defaults.optimizer.weight_decay),
        };
        let n = &file_cfg.network;

        let mut timing = TimingParams::default();
        let ts = &file_cfg.timing;
        if let Some(v) = ts.spl_delay_ps {
            timing.spl_delay_ps = v;
        }
        if let Some(v) = ts.dff_clk_to_q_ps {
            timing.dff_clk_to_q_ps = v;
        }
        if let Some(v) = ts.ptl_link_ps {
            timing.ptl_link_ps = v;
        }
        if let Some(v) = ts.neuron_sync_ps {
            timing.neuron_sync_ps = v;
        }
        if let Some(v) = ts.shift_register_path_ps {
            timing.shift_register_path_ps = v;
        }
        timing.validate()?;

        let mut resources = ResourceModel::default();
        if let Some(v) = file_cfg.resources.ic_amps {
            resources.ic_amps = v;
        }
        for (kind, cost) in &file_cfg.resources.costs {
            if !resources.costs.contains_key(kind) {
                return Err(Error::Config(format!("unknown cell kind '{kind}' in [resources.costs]")));
            }
            resources.costs.insert(kind.clone(), *cost);
        }

        let cfg = Self {
            profile,
            digits,
            seed: cli.seed.or(file_cfg.seed).unwrap_or(7),
            out_dir: cli
                .out_dir
                .clone()
                .or(file_cfg.out_dir)
                .unwrap_or_else(|| PathBuf::from("runs/latest")),
            data_dir: cli
                .data_dir
                .clone()
                .or(file_cfg.data_dir)
                .unwrap_or_else(|| PathBuf::from("data/mnist")),
            batch_size: t.batch_size.unwrap_or(defaults.batch_size),
            optimizer,
            restarts: t.restarts.unwrap_or(defaults.restarts),
            loss_weights: LossWeights {
                w_spike: t.loss_spike_weight.unwrap_or(defaults.loss_weights.w_spike),
                w_mem: t.loss_mem_weight.unwrap_or(defaults.loss_weights.w_mem),
            },
            epochs: file_cfg.epochs,
            timesteps: n.timesteps.or(defaults.timesteps),
            membrane_decay: n.membrane_decay,
            firing_threshold: n.firing_threshold,
            binarize_threshold: n.binarize_threshold.unwrap_or(defaults.binarize_threshold),
            max_positive: n.max_positive.unwrap_or(defaults.sign_budget.max_pos),
            max_negative: n.max_negative.unwrap_or(defaults.sign_budget.max_neg),
            max_source_fanout: n.max_source_fanout.unwrap_or(defaults.max_source_fanout),
            complete_fan_in: n.complete_fan_in.unwrap_or(defaults.complete_fan_in),
            timing,
            resources,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.profile == Profile::Chip {
            if let Some(t) = self.timesteps {
                if t != 1 {
                    return Err(Error::Config(format!(
                        "chip profile requires timesteps = 1, got {t}"
                    )));
                }
            }
            if self.digits.len() > 3 {
                return Err(Error::Config(format!(
                    "chip profile supports at most 3 digits, got {}",
                    self.digits.len()
                )));
            }
        }
        Ok(())
    }

    /// Profile-builder options for this configuration.
    pub fn profile_options(&self) -> Result<ProfileOptions> {
        let mut opts = ProfileOptions::new(self.profile, SubsetSpec::new(self.digits.clone())?);
        opts.batch_size = self.batch_size;
        opts.optimizer = self.optimizer;
        opts.epochs = self.epochs.clone();
        opts.timesteps = self.timesteps;
        opts.membrane_decay = self.membrane_decay;
        opts.firing_threshold = self.firing_threshold;
        opts.binarize_threshold = self.binarize_threshold;
        opts.loss_weights = self.loss_weights;
        opts.complete_fan_in = self.complete_fan_in;
        opts.sign_budget = spikechip_core::compress::SignBudget {
            max_pos: self.max_positive,
            max_neg: self.max_negative,
        };
        opts.max_source_fanout = self.max_source_fanout;
        opts.restarts = self.restarts;
        Ok(opts)
    }

    pub fn echo_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }

    /// Compile options consistent with this configuration.
    pub fn compile_options(&self, clock: ClockTopology) -> spikechip_core::chipsim::CompileOptions {
        spikechip_core::chipsim::CompileOptions {
            budget: spikechip_core::compress::SignBudget {
                max_pos: self.max_positive,
                max_neg: self.max_negative,
            },
            max_fanout: self.max_source_fanout,
            clock,
            ..Default::default()
        }
    }
}
