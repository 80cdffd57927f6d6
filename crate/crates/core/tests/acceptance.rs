//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]`/`[FAIL]` line.
//!
//! Criteria 3 and 8 train real chip pipelines on MNIST; the IDX files are
//! looked up under `$MNIST_DIR` or `<workspace>/data/mnist`. Criterion 4
//! (the full ten-digit network) runs for hours and is `#[ignore]`d from the
//! fast suite:
//!
//! ```text
//! cargo test -p spikechip-core --release --test acceptance -- --ignored complete_network
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spikechip_core::chipsim::{
    check_equivalence, compile_network, estimate_energy, estimate_resources, estimate_timing,
    reference, simulate, CellKind, CompileOptions, LayerRef, ResourceModel, SimOptions,
    TimingParams,
};
use spikechip_core::compress::{
    eliminate_dead_neurons, prune_target, run_stage_plan_restarts, PipelineResult, PruneSchedule,
};
use spikechip_core::data::{load_split, EncodedDataset, InputEncoding, Split, SubsetSpec};
use spikechip_core::matrix::Matrix;
use spikechip_core::profiles::{build_profile, BuiltProfile, Profile, ProfileOptions};
use spikechip_core::rng::SeedTree;
use spikechip_core::snn::{
    forward_pass, InputPolicy, LayerWeights, LifParams, Network, NetworkTopology, ResetMode,
};
use spikechip_core::train::{backward_bptt, sample_loss, LossSpec, SurrogateConfig};

fn mnist_dir() -> PathBuf {
    if let Ok(d) = std::env::var("MNIST_DIR") {
        return PathBuf::from(d);
    }
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn load_mnist(digits: &[u8], preproc: &spikechip_core::data::PreprocConfig) -> (EncodedDataset, EncodedDataset) {
    let dir = mnist_dir();
    let spec = SubsetSpec::new(digits.to_vec()).unwrap();
    let train = load_split(&dir, Split::Train).unwrap_or_else(|e| {
        panic!(
            "MNIST not found under {} (set MNIST_DIR or place the four IDX files there): {e}",
            dir.display()
        )
    });
    let test = load_split(&dir, Split::Test).unwrap();
    (
        EncodedDataset::build(&train, &spec, preproc).unwrap(),
        EncodedDataset::build(&test, &spec, preproc).unwrap(),
    )
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "[{}] {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {detail}");
}

// ---------------------------------------------------------------------
// Criterion 1: BPTT gradients of the membrane loss match central finite
// differences on >= 20 random small networks kept 1e-3 away from the
// firing threshold, max relative error < 1e-4.
// ---------------------------------------------------------------------
#[test]
fn criterion_1_gradient_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE97);
    let mut accepted = 0usize;
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    let margin = 1e-3;

    'outer: while accepted < 20 {
        let n_in = rng.gen_range(2..=10);
        let n_out = rng.gen_range(2..=10);
        let t_steps = rng.gen_range(1..=5);
        let beta = rng.gen_range(0.5..0.95);
        // Alternate quiet and spiking regimes.
        let scale = if accepted % 2 == 0 { 0.12 } else { 0.55 };
        let topology = NetworkTopology::uniform(
            vec![n_in, n_out],
            LifParams {
                beta,
                u_thr: 1.0,
                reset: ResetMode::Subtract,
            },
            InputPolicy::RepeatEachStep,
            t_steps,
        );
        let mut w = Matrix::zeros(n_out, n_in);
        for v in w.as_mut_slice() {
            *v = rng.gen_range(-scale..scale);
        }
        let input: Vec<f64> = (0..n_in).map(|_| f64::from(rng.gen_bool(0.6))).collect();
        let target = rng.gen_range(0..n_out);

        let (spikes, mems) = forward_pass(&topology, &[&w], &input).unwrap();
        // Margin check: every potential stays clear of the threshold so the
        // spike pattern is locally constant under the probe step.
        for step in &mems.layers[0] {
            for &u in step {
                if (u - 1.0).abs() <= margin {
                    continue 'outer; // resample
                }
            }
        }

        let grads = backward_bptt(
            &topology,
            &[&w],
            &spikes,
            &mems,
            &input,
            &LossSpec::Mem,
            target,
            SurrogateConfig::Arctangent,
        )
        .unwrap();

        let loss_of = |wm: &Matrix| {
            let (s, m) = forward_pass(&topology, &[wm], &input).unwrap();
            sample_loss(&LossSpec::Mem, &s, &m, target).unwrap()
        };
        for r in 0..n_out {
            for c in 0..n_in {
                let mut wp = w.clone();
                wp.set(r, c, w.get(r, c) + h);
                let mut wm = w.clone();
                wm.set(r, c, w.get(r, c) - h);
                let fd = (loss_of(&wp) - loss_of(&wm)) / (2.0 * h);
                let an = grads.layers[0].get(r, c);
                let denom = fd.abs().max(an.abs());
                if denom > 1e-9 {
                    worst = worst.max((fd - an).abs() / denom);
                }
            }
        }
        accepted += 1;
    }
    report(
        "criterion 1 (gradient correctness)",
        worst < 1e-4,
        &format!("{accepted} networks, max relative error {worst:.3e} (< 1e-4)"),
    );
}

// ---------------------------------------------------------------------
// Criterion 2: the pruning schedule reproduces the published endpoints
// exactly and is non-increasing for 1,000 random (C_i, C_f, S) triples.
// ---------------------------------------------------------------------
#[test]
fn criterion_2_pruning_schedule() {
    let sched = PruneSchedule::new(784, 64, 60).unwrap();
    let first = prune_target(&sched.at_step(0));
    let last = prune_target(&sched.at_step(59));
    let endpoints_ok = first == 772 && last == 64;

    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE98);
    let mut monotone = true;
    for _ in 0..1000 {
        let cf = rng.gen_range(1..=512);
        let ci = cf + rng.gen_range(0..=1024);
        let steps = rng.gen_range(1..=128);
        let s = PruneSchedule::new(ci, cf, steps).unwrap();
        let mut prev = usize::MAX;
        for k in 0..steps {
            let t = prune_target(&s.at_step(k));
            if t > prev {
                monotone = false;
            }
            prev = t;
        }
        if prev != cf {
            monotone = false;
        }
    }
    report(
        "criterion 2 (pruning schedule)",
        endpoints_ok && monotone,
        &format!("endpoints s=0 -> {first}, s=59 -> {last}; 1000 random schedules non-increasing: {monotone}"),
    );
}

// ---------------------------------------------------------------------
// Criteria 3 and 8 share full chip-pipeline runs.
// ---------------------------------------------------------------------
struct ChipRun {
    built: BuiltProfile,
    result: PipelineResult,
    test_data: EncodedDataset,
}

fn run_chip_pipeline(digits: &[u8], seed: u64) -> ChipRun {
    let opts = ProfileOptions::new(Profile::Chip, SubsetSpec::new(digits.to_vec()).unwrap());
    let built = build_profile(&opts).unwrap();
    let (train_data, test_data) = load_mnist(digits, &built.preproc);
    let seeds = SeedTree::new(seed);
    let result = run_stage_plan_restarts(
        &built.topology,
        &built.plan,
        &train_data,
        &test_data,
        &seeds,
        built.restarts,
        |s| built.init_state(s),
    )
    .unwrap();
    ChipRun {
        built,
        result,
        test_data,
    }
}

fn chip_run_234() -> &'static ChipRun {
    static RUN: OnceLock<ChipRun> = OnceLock::new();
    RUN.get_or_init(|| run_chip_pipeline(&[2, 3, 4], 7))
}

fn assert_chip_accuracy(digits: &[u8], seed: u64, floor: f64, paper: f64) {
    let run;
    let shared;
    let r: &ChipRun = if digits == [2, 3, 4] {
        shared = chip_run_234();
        shared
    } else {
        run = run_chip_pipeline(digits, seed);
        &run
    };
    let acc = r.result.final_eval.accuracy();
    report(
        &format!("criterion 3 (chip accuracy {digits:?})"),
        acc >= floor,
        &format!(
            "single-spike accuracy {:.2}% (floor {:.0}%, published {:.2}%), no-decision {}",
            100.0 * acc,
            100.0 * floor,
            100.0 * paper,
            r.result.final_eval.no_decision
        ),
    );
}

#[test]
fn criterion_3_chip_accuracy_012() {
    assert_chip_accuracy(&[0, 1, 2], 7, 0.81, 0.8620);
}

#[test]
fn criterion_3_chip_accuracy_234() {
    assert_chip_accuracy(&[2, 3, 4], 7, 0.75, 0.8007);
}

#[test]
fn criterion_3_chip_accuracy_345() {
    assert_chip_accuracy(&[3, 4, 5], 7, 0.67, 0.7234);
}

#[test]
fn criterion_3_chip_accuracy_567() {
    assert_chip_accuracy(&[5, 6, 7], 7, 0.70, 0.7507);
}

// ---------------------------------------------------------------------
// Criterion 4: complete-network pipeline on all ten digits with 64-wide
// ternary fan-in reaches >= 94%. Compute-heavy; excluded from the fast
// suite but required for release.
// ---------------------------------------------------------------------
#[test]
#[ignore = "multi-hour training run; see module docs"]
fn criterion_4_complete_network_accuracy() {
    let opts = ProfileOptions::new(Profile::Complete, SubsetSpec::all_digits());
    let built = build_profile(&opts).unwrap();
    let (train_data, test_data) = load_mnist(&(0..10).collect::<Vec<_>>(), &built.preproc);
    let seeds = SeedTree::new(7);
    let result = run_stage_plan_restarts(
        &built.topology,
        &built.plan,
        &train_data,
        &test_data,
        &seeds,
        built.restarts,
        |s| built.init_state(s),
    )
    .unwrap();
    let acc = result.final_eval.accuracy();
    report(
        "criterion 4 (complete-network accuracy)",
        acc >= 0.94,
        &format!(
            "spike-count accuracy {:.2}% (floor 94%, published 96.47%)",
            100.0 * acc
        ),
    );
}

fn reduced_ternary_network(run: &ChipRun) -> Network {
    let layers: Vec<LayerWeights> = run
        .result
        .ternary
        .iter()
        .map(|t| LayerWeights::ternary(t.clone().expect("chip pipeline commits ternary")).unwrap())
        .collect();
    let net = Network::new(run.built.topology.clone(), layers).unwrap();
    let (reduced, _) = eliminate_dead_neurons(&net).unwrap();
    reduced
}

// ---------------------------------------------------------------------
// Criterion 5: the compiled netlist equals the software single-pass
// forward on 100% of the test subset, and an injected sign flip is
// caught.
// ---------------------------------------------------------------------
#[test]
fn criterion_5_simulator_oracle_equivalence() {
    let run = chip_run_234();
    let reduced = reduced_ternary_network(run);
    let nl = compile_network(&reduced, &CompileOptions::default()).unwrap();
    let rep = check_equivalence(&nl, &reduced, &run.test_data, InputEncoding::Real).unwrap();
    let clean = rep.passed() && rep.total == run.test_data.len();

    let mut faulty = nl.clone();
    faulty.flip_synapse_sign(LayerRef::Hidden, 0, 0).unwrap();
    let bad = check_equivalence(&faulty, &reduced, &run.test_data, InputEncoding::Real).unwrap();
    let detected = bad.mismatches >= 1;

    report(
        "criterion 5 (simulator/oracle equivalence)",
        clean && detected,
        &format!(
            "{}/{} samples equivalent; injected sign flip produced {} mismatches",
            rep.total - rep.mismatches,
            rep.total,
            bad.mismatches
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 6: prediction latency is exactly 10 cycles (7 load + 2
// propagate + 1 readout) for every sample.
// ---------------------------------------------------------------------
#[test]
fn criterion_6_cycle_budget() {
    let run = chip_run_234();
    let reduced = reduced_ternary_network(run);
    let nl = compile_network(&reduced, &CompileOptions::default()).unwrap();
    let opts = SimOptions::default();
    let mut all_ten = true;
    for i in 0..run.test_data.len() {
        let input = run.test_data.materialize(i, InputEncoding::Real);
        let out = simulate(&nl, &input, &opts).unwrap();
        if out.cycles != 10
            || (out.load_cycles, out.propagate_cycles, out.readout_cycles) != (7, 2, 1)
        {
            all_ten = false;
            break;
        }
    }
    report(
        "criterion 6 (cycle budget)",
        all_ten,
        &format!(
            "{} samples, every prediction in exactly 10 cycles (7+2+1)",
            run.test_data.len()
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 7: structural and timing anchors, exact.
// ---------------------------------------------------------------------
#[test]
fn criterion_7_structural_timing_anchors() {
    // A source with the maximum fan-out of nine.
    let mut w0 = Matrix::zeros(9, 49);
    for h in 0..9 {
        w0.set(h, 24, 1.0);
    }
    let mut w1 = Matrix::zeros(3, 9);
    for k in 0..3 {
        w1.set(k, 3 * k, 1.0);
    }
    let topo = NetworkTopology::uniform(
        vec![49, 9, 3],
        LifParams {
            beta: 0.95,
            u_thr: 0.5,
            reset: ResetMode::Subtract,
        },
        InputPolicy::SinglePass,
        1,
    );
    let net = Network::new(
        topo,
        vec![
            LayerWeights::ternary(w0).unwrap(),
            LayerWeights::ternary(w1).unwrap(),
        ],
    )
    .unwrap();
    let nl = compile_network(&net, &CompileOptions::default()).unwrap();

    let dffs = nl.cell_count(CellKind::Dff);
    let chains_ok = nl.registers.len() == 7 && nl.registers.iter().all(|r| r.len() == 7);
    let spl_9 = nl.input_trees[24].spl_cells.len();
    let timing = estimate_timing(&nl, &TimingParams::default()).unwrap();

    let ok = dffs == 49 && chains_ok && spl_9 == 8 && (timing.fanout_delay_ps - 24.8).abs() < 1e-12;
    report(
        "criterion 7 (structural/timing anchors)",
        ok,
        &format!(
            "{dffs} input DFFs in 7x7 chains; 9-sink source uses {spl_9} splitters; fan-out delay {} ps",
            timing.fanout_delay_ps
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 8: after the chip pipeline every row is ternary and within
// the (6, 2) budget; active hidden neurons <= 24 (the published 18/24 is
// reported, not asserted).
// ---------------------------------------------------------------------
#[test]
fn criterion_8_constraint_satisfaction() {
    let run = chip_run_234();
    let mut ok = true;
    let mut detail = String::new();
    for (l, t) in run.result.ternary.iter().enumerate() {
        let Some(t) = t else {
            ok = false;
            detail = format!("layer {l} not quantized");
            break;
        };
        for r in 0..t.rows() {
            let pos = t.row(r).iter().filter(|&&v| v == 1.0).count();
            let neg = t.row(r).iter().filter(|&&v| v == -1.0).count();
            if pos > 6 || neg > 2 {
                ok = false;
                detail = format!("layer {l} neuron {r}: {pos} pos / {neg} neg");
            }
            if t.row(r).iter().any(|&v| v != 0.0 && v != 1.0 && v != -1.0) {
                ok = false;
                detail = format!("layer {l} neuron {r}: non-ternary weight");
            }
        }
    }
    let reduced = reduced_ternary_network(run);
    let active = reduced.topology.layer_sizes[1];
    if active > 24 {
        ok = false;
        detail = format!("{active} active hidden neurons");
    }
    if detail.is_empty() {
        detail = format!(
            "all rows within (6, 2), all weights ternary; active hidden neurons {active}/24 (published 18/24)"
        );
    }
    report("criterion 8 (constraint satisfaction)", ok, &detail);
}

// ---------------------------------------------------------------------
// Criterion 9: resource and energy reports carry the published reference
// deltas; the single-DFF = 3 JJ anchor is exact.
// ---------------------------------------------------------------------
#[test]
fn criterion_9_resource_energy_reporting() {
    let run = chip_run_234();
    let reduced = reduced_ternary_network(run);
    let nl = compile_network(&reduced, &CompileOptions::default()).unwrap();
    let rm = ResourceModel::default();

    let dff_anchor = rm.cost(CellKind::Dff).unwrap().jj == 3;
    let resources = estimate_resources(&nl, &rm).unwrap();
    let input = run.test_data.materialize(0, InputEncoding::Real);
    let sim = simulate(&nl, &input, &SimOptions::default()).unwrap();
    let energy = estimate_energy(&sim, &nl, &rm).unwrap();

    let refs_ok = resources.reference_jj == reference::CHIP_JJ_COUNT
        && (resources.reference_static_power_w - reference::CHIP_STATIC_POWER_W).abs() < 1e-12
        && (energy.reference_energy_j - reference::CHIP_ENERGY_PER_INFERENCE_J).abs() < 1e-30;
    // Informational deltas, never asserted against the published totals.
    println!(
        "  resources: {} JJs (published {}, delta {}), {:.3} mW static (published {:.2} mW)",
        resources.jj_total,
        resources.reference_jj,
        resources.jj_delta,
        resources.static_power_w * 1e3,
        resources.reference_static_power_w * 1e3
    );
    println!(
        "  energy: {:.3} fJ on sample 0 (published {:.2} fJ per inference)",
        energy.energy_fj,
        energy.reference_energy_j * 1e15
    );
    report(
        "criterion 9 (resource/energy reporting)",
        dff_anchor && refs_ok,
        "DFF = 3 JJs exact; reports carry published reference deltas",
    );
}

// ---------------------------------------------------------------------
// Shared-run epoch map sanity: stage names the overrides can target.
// ---------------------------------------------------------------------
#[test]
fn chip_stage_names_are_stable() {
    let opts = ProfileOptions::new(Profile::Chip, SubsetSpec::new(vec![2, 3, 4]).unwrap());
    let built = build_profile(&opts).unwrap();
    let names: Vec<String> = built.plan.stages.iter().map(|s| s.name.clone()).collect();
    let mut epochs: BTreeMap<String, usize> = BTreeMap::new();
    for s in &built.plan.stages {
        epochs.insert(s.name.clone(), s.epochs);
    }
    assert_eq!(names.len(), 6);
    assert!(epochs.contains_key("prune-signs"));
}
