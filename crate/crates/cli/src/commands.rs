//! Command implementations.

use std::path::{Path, PathBuf};

use spikechip_core::checkpoint::{Checkpoint, StageMeta, CHECKPOINT_VERSION};
use spikechip_core::chipsim::{
    check_equivalence, compile_network, estimate_energy, estimate_resources, estimate_timing,
    ClockTopology, Netlist, SimOptions,
};
use spikechip_core::compress::{
    eliminate_dead_neurons, run_stage_plan, run_stage_plan_restarts, PipelineResult, TrainState,
};
use spikechip_core::data::{load_split, EncodedDataset, Split, SubsetSpec};
use spikechip_core::error::{Error, Result};
use spikechip_core::eval::{evaluate, DecodeRule};
use spikechip_core::matrix::Matrix;
use spikechip_core::metrics::{weight_statistics, MetricsReport, StageMetrics};
use spikechip_core::profiles::{build_profile, BuiltProfile};
use spikechip_core::rng::SeedTree;
use spikechip_core::snn::Network;

use crate::config::RunConfig;
use crate::report;

fn load_datasets(cfg: &RunConfig, built: &BuiltProfile) -> Result<(EncodedDataset, EncodedDataset)> {
    let spec = SubsetSpec::new(cfg.digits.clone())?;
    let train = load_split(&cfg.data_dir, Split::Train)?;
    let test = load_split(&cfg.data_dir, Split::Test)?;
    Ok((
        EncodedDataset::build(&train, &spec, &built.preproc)?,
        EncodedDataset::build(&test, &spec, &built.preproc)?,
    ))
}

fn checkpoint_from_state(
    cfg: &RunConfig,
    built: &BuiltProfile,
    state: &TrainState,
    ternary: &[Option<Matrix>],
    thetas: &[Option<f64>],
    meta: StageMeta,
) -> Checkpoint {
    Checkpoint {
        format_version: CHECKPOINT_VERSION,
        profile: built.name.clone(),
        topology: built.topology.clone(),
        latent: state.latent.clone(),
        masks: state.masks.clone(),
        ternary: ternary.to_vec(),
        theta: thetas.to_vec(),
        class_digits: cfg.digits.clone(),
        preproc: built.preproc,
        eval_encoding: built.eval_encoding,
        decode: built.plan.decode,
        master_seed: cfg.seed,
        stage: meta,
    }
}

fn write_metrics(cfg: &RunConfig, built: &BuiltProfile, result: &PipelineResult) -> Result<MetricsReport> {
    let stages: Vec<StageMetrics> = result
        .stages
        .iter()
        .map(|s| StageMetrics {
            name: s.name.clone(),
            epochs: s.epochs_run,
            best_epoch: s.best_epoch,
            best_accuracy: s.best_accuracy,
            epoch_accuracies: s.epoch_accuracies.clone(),
        })
        .collect();

    let ternary_refs: Vec<&Matrix> = result.ternary.iter().flatten().collect();
    let names: Vec<String> = (0..ternary_refs.len())
        .map(|l| {
            if l + 1 == ternary_refs.len() {
                "output".into()
            } else {
                format!("hidden{l}")
            }
        })
        .collect();
    let weight_stats = if ternary_refs.len() == result.ternary.len() {
        weight_statistics(&ternary_refs, &names)
    } else {
        Vec::new()
    };

    let active_hidden = result
        .ternary
        .iter()
        .map(|t| t.as_ref())
        .collect::<Option<Vec<_>>>()
        .and_then(|mats| {
            let layers: Result<Vec<_>> = mats
                .iter()
                .map(|m| spikechip_core::snn::LayerWeights::ternary((*m).clone()))
                .collect();
            let net = Network::new(built.topology.clone(), layers.ok()?).ok()?;
            let (reduced, _) = eliminate_dead_neurons(&net).ok()?;
            Some(reduced.topology.layer_sizes[1])
        });

    let report = MetricsReport {
        profile: built.name.clone(),
        class_digits: cfg.digits.clone(),
        master_seed: cfg.seed,
        stages,
        final_accuracy: result.final_eval.accuracy(),
        final_confusion: result.final_eval.confusion.clone(),
        no_decision: result.final_eval.no_decision,
        weight_stats,
        active_hidden_neurons: active_hidden,
        config_echo: cfg.echo_json(),
    };

    std::fs::create_dir_all(&cfg.out_dir)?;
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(cfg.out_dir.join("metrics.json"), json)?;

    // Plot-ready per-epoch accuracy trace.
    let mut csv = String::from("stage,epoch,test_accuracy\n");
    for s in &report.stages {
        for (e, a) in s.epoch_accuracies.iter().enumerate() {
            csv.push_str(&format!("{},{},{}\n", s.name, e, a));
        }
    }
    std::fs::write(cfg.out_dir.join("accuracy_per_epoch.csv"), csv)?;
    Ok(report)
}

/// `train`: run the profile's staged pipeline, writing per-stage
/// checkpoints, the final checkpoint, and the metrics report.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let opts = cfg.profile_options()?;
    let built = build_profile(&opts)?;
    let (train_data, test_data) = load_datasets(cfg, &built)?;
    log::info!(
        "profile {}: {} train / {} test samples, {} restarts",
        built.name,
        train_data.len(),
        test_data.len(),
        built.restarts
    );

    let seeds = SeedTree::new(cfg.seed);
    let result = run_stage_plan_restarts(
        &built.topology,
        &built.plan,
        &train_data,
        &test_data,
        &seeds,
        built.restarts,
        |s| built.init_state(s),
    )?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    for (i, st) in result.stages.iter().enumerate() {
        let (_, thetas) = st.state.effective_weights(&built.plan.stages[i]);
        let tern: Vec<Option<Matrix>> = if i + 1 == result.stages.len() {
            result.ternary.clone()
        } else {
            let (eff, _) = st.state.effective_weights(&built.plan.stages[i]);
            eff.into_iter()
                .zip(&built.plan.stages[i].quantize)
                .map(|(m, &q)| q.then_some(m))
                .collect()
        };
        let ckpt = checkpoint_from_state(
            cfg,
            &built,
            &st.state,
            &tern,
            &thetas,
            StageMeta {
                stage_index: i,
                stage_name: st.name.clone(),
                best_epoch: st.best_epoch,
                best_accuracy: st.best_accuracy,
            },
        );
        ckpt.save(&cfg.out_dir.join(format!("checkpoint_stage{i}_{}.json", st.name)))?;
    }

    let final_meta = StageMeta {
        stage_index: result.stages.len().saturating_sub(1),
        stage_name: "final".into(),
        best_epoch: None,
        best_accuracy: Some(result.final_eval.accuracy()),
    };
    let final_ckpt = checkpoint_from_state(
        cfg,
        &built,
        &result.state,
        &result.ternary,
        &result.thetas,
        final_meta,
    );
    let ckpt_path = cfg.out_dir.join("checkpoint_final.json");
    final_ckpt.save(&ckpt_path)?;

    let metrics = write_metrics(cfg, &built, &result)?;
    println!(
        "final test accuracy {:.2}% ({} samples, {} no-decision)",
        100.0 * metrics.final_accuracy,
        result.final_eval.total,
        result.final_eval.no_decision
    );
    println!("checkpoint: {}", ckpt_path.display());
    println!("metrics:    {}", cfg.out_dir.join("metrics.json").display());
    Ok(())
}

/// `eval`: accuracy and confusion matrix of a checkpoint on a split.
pub fn cmd_eval(
    checkpoint: &Path,
    data_dir: &Path,
    split: Split,
    decode_override: Option<DecodeRule>,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let net = ckpt.effective_network()?;
    let spec = SubsetSpec::new(ckpt.class_digits.clone())?;
    let raw = load_split(data_dir, split)?;
    let data = EncodedDataset::build(&raw, &spec, &ckpt.preproc)?;
    if data.is_empty() {
        return Err(Error::Data("evaluation dataset is empty".into()));
    }
    let decode = match decode_override {
        Some(d) => {
            if d != ckpt.decode {
                log::warn!(
                    "decode rule {:?} overrides the checkpoint's {:?}",
                    d,
                    ckpt.decode
                );
            }
            d
        }
        None => ckpt.decode,
    };
    let mats = net.weight_matrices();
    let result = evaluate(&net.topology, &mats, &data, ckpt.eval_encoding, decode)?;
    println!(
        "accuracy {:.2}% on {} samples ({} no-decision)",
        100.0 * result.accuracy(),
        result.total,
        result.no_decision
    );
    println!("{}", report::render_confusion(&ckpt.class_digits, &result.confusion));
    Ok(())
}

/// `compress`: resume the staged pipeline from a checkpoint, optionally
/// running only the named stages.
pub fn cmd_compress(cfg: &RunConfig, checkpoint: &Path, stages: Option<Vec<String>>) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let opts = cfg.profile_options()?;
    let mut built = build_profile(&opts)?;
    if ckpt.topology != built.topology {
        return Err(Error::Config(
            "checkpoint topology does not match the configured profile".into(),
        ));
    }
    if let Some(names) = &stages {
        for n in names {
            if !built.plan.stages.iter().any(|s| &s.name == n) {
                let known: Vec<&str> = built.plan.stages.iter().map(|s| s.name.as_str()).collect();
                return Err(Error::Config(format!(
                    "unknown stage '{n}'; profile stages are {known:?}"
                )));
            }
        }
        built.plan.stages.retain(|s| names.contains(&s.name));
    }
    let (train_data, test_data) = load_datasets(cfg, &built)?;
    let resume = TrainState {
        latent: ckpt.latent.clone(),
        masks: ckpt.masks.clone(),
    };
    let seeds = SeedTree::new(cfg.seed);
    let result = run_stage_plan(
        &built.topology,
        &built.plan,
        &train_data,
        &test_data,
        &seeds,
        Some(resume),
    )?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    let final_ckpt = checkpoint_from_state(
        cfg,
        &built,
        &result.state,
        &result.ternary,
        &result.thetas,
        StageMeta {
            stage_index: result.stages.len().saturating_sub(1),
            stage_name: "compress".into(),
            best_epoch: None,
            best_accuracy: Some(result.final_eval.accuracy()),
        },
    );
    let path = cfg.out_dir.join("checkpoint_compressed.json");
    final_ckpt.save(&path)?;
    write_metrics(cfg, &built, &result)?;
    println!(
        "final test accuracy {:.2}%; checkpoint: {}",
        100.0 * result.final_eval.accuracy(),
        path.display()
    );
    Ok(())
}

/// `compile`: lower a ternary checkpoint onto the behavioral netlist.
pub fn cmd_compile(cfg: &RunConfig, checkpoint: &Path, netlist_out: &Path, clock: ClockTopology) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let net = ckpt.ternary_network()?;
    let (reduced, dead) = eliminate_dead_neurons(&net)?;
    let nl = compile_network(&reduced, &cfg.compile_options(clock))?;
    nl.save_json(netlist_out)?;

    let resources = estimate_resources(&nl, &cfg.resources)?;
    let timing = estimate_timing(&nl, &cfg.timing)?;
    println!(
        "netlist: {} cells, {} nets -> {}",
        nl.cells.len(),
        nl.nets.len(),
        netlist_out.display()
    );
    println!(
        "active hidden neurons {}/{} (removed: {:?})",
        reduced.topology.layer_sizes[1],
        net.topology.layer_sizes[1],
        dead.removed.first().map(Vec::as_slice).unwrap_or(&[])
    );
    print!("{}", report::render_resources(&resources));
    print!("{}", report::render_timing(&timing));
    Ok(())
}

/// `simulate`: run a netlist over the test subset, check equivalence
/// against a checkpoint when given, and report estimates.
pub fn cmd_simulate(
    cfg: &RunConfig,
    netlist_path: &Path,
    checkpoint: Option<&Path>,
    trace_out: Option<&Path>,
) -> Result<()> {
    let nl = Netlist::load_json(netlist_path)?;
    let digits = match checkpoint {
        Some(p) => Checkpoint::load(p)?.class_digits,
        None => cfg.digits.clone(),
    };
    let spec = SubsetSpec::new(digits.clone())?;
    let raw = load_split(&cfg.data_dir, Split::Test)?;
    let opts_profile = cfg.profile_options()?;
    let built = build_profile(&opts_profile)?;
    let data = EncodedDataset::build(&raw, &spec, &built.preproc)?;
    let opts = SimOptions::default();

    // Functional sweep with accuracy from the simulated output bits.
    let mut correct = 0usize;
    let mut no_decision = 0usize;
    let mut switches_total = 0u64;
    let mut cycles = 0u32;
    for i in 0..data.len() {
        let input = data.materialize(i, built.eval_encoding);
        let out = spikechip_core::chipsim::simulate(&nl, &input, &opts)?;
        cycles = out.cycles;
        switches_total += out.total_switches();
        let fired: Vec<usize> = out
            .output_bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| k)
            .collect();
        match fired.as_slice() {
            [single] => {
                if *single == data.labels[i] {
                    correct += 1;
                }
            }
            _ => no_decision += 1,
        }
    }
    println!(
        "simulated {} samples: accuracy {:.2}% ({} no-decision), {} cycles per prediction",
        data.len(),
        100.0 * correct as f64 / data.len().max(1) as f64,
        no_decision,
        cycles
    );

    if let Some(ckpt_path) = checkpoint {
        let ckpt = Checkpoint::load(ckpt_path)?;
        let net = ckpt.ternary_network()?;
        let (reduced, _) = eliminate_dead_neurons(&net)?;
        let rep = check_equivalence(&nl, &reduced, &data, built.eval_encoding)?;
        if rep.empty {
            log::warn!("equivalence check ran on an empty dataset");
        }
        println!("{}", report::render_equivalence(&rep));
        if !rep.passed() {
            return Err(Error::Equivalence(format!(
                "{} of {} samples diverged",
                rep.mismatches, rep.total
            )));
        }
    }

    // Estimates on a representative sample plus the sweep mean.
    let resources = estimate_resources(&nl, &cfg.resources)?;
    let timing = estimate_timing(&nl, &cfg.timing)?;
    print!("{}", report::render_resources(&resources));
    print!("{}", report::render_timing(&timing));
    if data.len() > 0 {
        let input = data.materialize(0, built.eval_encoding);
        let sim0 = spikechip_core::chipsim::simulate(&nl, &input, &opts)?;
        let energy = estimate_energy(&sim0, &nl, &cfg.resources)?;
        let mean_switches = switches_total as f64 / data.len() as f64;
        print!("{}", report::render_energy(&energy, mean_switches));
    }

    if let Some(path) = trace_out {
        let input = data.materialize(0, built.eval_encoding);
        let traced = spikechip_core::chipsim::simulate(
            &nl,
            &input,
            &SimOptions {
                record_trace: true,
                ..opts
            },
        )?;
        let lines = traced.trace.unwrap_or_default();
        std::fs::write(path, lines.join("\n") + "\n")?;
        println!("trace (sample 0): {}", path.display());
    }
    Ok(())
}

/// `report`: render the tables for a finished run directory.
pub fn cmd_report(run_dir: &Path) -> Result<()> {
    let path = run_dir.join("metrics.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let metrics: MetricsReport = serde_json::from_str(&text)?;
    print!("{}", report::render_metrics(&metrics));
    Ok(())
}

/// Resolve an output path inside the run directory unless absolute.
pub fn in_out_dir(cfg: &RunConfig, name: &str, explicit: Option<PathBuf>) -> PathBuf {
    match explicit {
        Some(p) => p,
        None => cfg.out_dir.join(name),
    }
}
