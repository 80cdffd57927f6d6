//! Behavioral SFQ chip model: netlist compilation, cycle-driven
//! simulation, equivalence checking against the software forward pass, and
//! timing/resource/energy estimation.

mod compile;
mod estimate;
mod netlist;
mod sim;

pub use compile::{compile_network, pulse_threshold, CompileOptions};
pub use estimate::{
    estimate_energy, estimate_resources, estimate_timing, reference, CellCost, EnergyReport,
    KindTotals, ResourceModel, ResourceReport, TimingParams, TimingReport, FLUX_QUANTUM_WB,
};
pub use netlist::{
    Branch, Cell, CellId, CellKind, ClockTopology, FanoutTree, LayerRef, Net, Netlist,
    NetlistMeta, NeuronCell, PortRef, NETLIST_SCHEMA_VERSION,
};
pub use sim::{check_equivalence, simulate, EquivalenceReport, Mismatch, SimOptions, SimResult};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EncodedDataset, PreprocConfig, PreprocMode, RawDataset, Split, SubsetSpec};
    use crate::matrix::Matrix;
    use crate::snn::{
        forward_network, InputPolicy, LayerWeights, LifParams, Network, NetworkTopology, ResetMode,
    };

    fn chip_network(w0: Matrix, w1: Matrix) -> Network {
        let topo = NetworkTopology::uniform(
            vec![49, w0.rows(), w1.rows()],
            LifParams {
                beta: 0.95,
                u_thr: 0.5,
                reset: ResetMode::Subtract,
            },
            InputPolicy::SinglePass,
            1,
        );
        Network::new(
            topo,
            vec![
                LayerWeights::ternary(w0).unwrap(),
                LayerWeights::ternary(w1).unwrap(),
            ],
        )
        .unwrap()
    }

    fn demo_network() -> Network {
        let mut w0 = Matrix::zeros(5, 49);
        // Neuron h: positive taps on a diagonal band, one negative tap.
        for h in 0..5 {
            for j in 0..4 {
                w0.set(h, (h * 9 + j * 2) % 49, 1.0);
            }
            w0.set(h, (h * 9 + 8) % 49, -1.0);
        }
        let mut w1 = Matrix::zeros(3, 5);
        w1.set(0, 0, 1.0);
        w1.set(0, 3, 1.0);
        w1.set(1, 1, 1.0);
        w1.set(1, 4, 1.0);
        w1.set(2, 2, 1.0);
        w1.set(2, 3, -1.0);
        chip_network(w0, w1)
    }

    fn binary_inputs(n: usize) -> Vec<Vec<f64>> {
        // Deterministic pseudo-random binary 49-vectors.
        (0..n)
            .map(|i| {
                (0..49)
                    .map(|p| f64::from((i * 31 + p * 17 + (i * p) % 13) % 5 < 2))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn all_zero_input_is_silent_in_ten_cycles() {
        let nl = compile_network(&demo_network(), &CompileOptions::default()).unwrap();
        let out = simulate(&nl, &vec![0.0; 49], &SimOptions::default()).unwrap();
        assert_eq!(out.output_bits, vec![false, false, false]);
        assert_eq!(out.cycles, 10);
        assert_eq!(
            (out.load_cycles, out.propagate_cycles, out.readout_cycles),
            (7, 2, 1)
        );
        // Only the clock switched.
        let clk = nl.clksrc as usize;
        for (i, &s) in out.switching.iter().enumerate() {
            if i == clk {
                assert_eq!(s, 10);
            } else {
                assert_eq!(s, 0, "cell {} switched on silence", nl.label(i as CellId));
            }
        }
    }

    #[test]
    fn simulation_matches_software_forward_pass() {
        let net = demo_network();
        let nl = compile_network(&net, &CompileOptions::default()).unwrap();
        for input in binary_inputs(200) {
            let (spikes, _) = forward_network(&net, &input).unwrap();
            let sw: Vec<bool> = spikes.output()[0].iter().map(|&s| s == 1.0).collect();
            let hw = simulate(&nl, &input, &SimOptions::default()).unwrap();
            assert_eq!(hw.output_bits, sw);
            assert_eq!(hw.cycles, 10);
        }
    }

    #[test]
    fn simulation_is_deterministic_including_switching() {
        let net = demo_network();
        let nl = compile_network(&net, &CompileOptions::default()).unwrap();
        let input = &binary_inputs(3)[2];
        let a = simulate(&nl, input, &SimOptions::default()).unwrap();
        let b = simulate(&nl, input, &SimOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sign_flip_fault_is_detected() {
        let net = demo_network();
        let mut nl = compile_network(&net, &CompileOptions::default()).unwrap();
        nl.flip_synapse_sign(LayerRef::Hidden, 0, 0).unwrap();
        let mut found = false;
        for input in binary_inputs(200) {
            let (spikes, _) = forward_network(&net, &input).unwrap();
            let sw: Vec<bool> = spikes.output()[0].iter().map(|&s| s == 1.0).collect();
            let hw = simulate(&nl, &input, &SimOptions::default()).unwrap();
            if hw.output_bits != sw {
                found = true;
                break;
            }
        }
        assert!(found, "sign flip never changed an output");
    }

    #[test]
    fn dead_cell_fault_silences_downstream() {
        let net = demo_network();
        let mut nl = compile_network(&net, &CompileOptions::default()).unwrap();
        let victim = nl.hidden_neurons[1].cell;
        nl.kill_cell(victim).unwrap();
        for input in binary_inputs(50) {
            let hw = simulate(&nl, &input, &SimOptions::default()).unwrap();
            assert_eq!(hw.switching[victim as usize], 0);
        }
    }

    #[test]
    fn equivalence_checker_counts_and_locates() {
        let net = demo_network();
        let nl = compile_network(&net, &CompileOptions::default()).unwrap();

        // Build a small binary dataset in the encoded format.
        let inputs = binary_inputs(40);
        let mut pixels = Vec::new();
        for v in &inputs {
            pixels.extend(v.iter().map(|&b| (b as u8) * 255));
        }
        let raw = RawDataset {
            split: Split::Test,
            rows: 7,
            cols: 7,
            pixels,
            labels: (0..40).map(|i| (i % 3) as u8).collect(),
        };
        let spec = SubsetSpec::new(vec![0, 1, 2]).unwrap();
        let data = EncodedDataset::build(
            &raw,
            &spec,
            &PreprocConfig {
                mode: PreprocMode::Flatten,
            },
        )
        .unwrap();
        let enc = crate::data::InputEncoding::Binarized { threshold: 0.5 };

        let clean = check_equivalence(&nl, &net, &data, enc).unwrap();
        assert!(clean.passed());
        assert_eq!(clean.total, 40);

        let mut faulty = nl.clone();
        faulty.flip_synapse_sign(LayerRef::Hidden, 0, 0).unwrap();
        let bad = check_equivalence(&faulty, &net, &data, enc).unwrap();
        assert!(bad.mismatches >= 1);
        let first = bad.first_mismatch.unwrap();
        assert!(first.sample_index < 40);
        assert_ne!(first.software_bits, first.hardware_bits);
    }

    #[test]
    fn netlist_json_round_trips() {
        let nl = compile_network(&demo_network(), &CompileOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("netlist.json");
        nl.save_json(&p).unwrap();
        let loaded = Netlist::load_json(&p).unwrap();
        assert_eq!(loaded, nl);
        // Stable bytes on re-save.
        let p2 = dir.path().join("netlist2.json");
        loaded.save_json(&p2).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn fanout_delay_matches_cascade_depth() {
        // 9 sinks -> 8 splitters -> 24.8 ps at the default 3.1 ps.
        let mut w0 = Matrix::zeros(9, 49);
        for h in 0..9 {
            w0.set(h, 0, 1.0);
        }
        let mut w1 = Matrix::zeros(3, 9);
        for k in 0..3 {
            w1.set(k, 3 * k, 1.0);
        }
        let nl = compile_network(&chip_network(w0, w1), &CompileOptions::default()).unwrap();
        let t = estimate_timing(&nl, &TimingParams::default()).unwrap();
        assert_eq!(t.max_fanout_depth, 8);
        assert!((t.fanout_delay_ps - 24.8).abs() < 1e-12);
        // Serial clock: the 433 ps register path dominates.
        assert!((t.critical_path_ps - 433.0).abs() < 1e-12);
        let ghz = t.max_throughput_ghz.unwrap();
        assert!((ghz - 1000.0 / 433.0).abs() < 1e-9);
    }

    #[test]
    fn zero_delay_model_is_flagged_degenerate() {
        let nl = compile_network(&demo_network(), &CompileOptions::default()).unwrap();
        let tp = TimingParams {
            spl_delay_ps: 0.0,
            dff_clk_to_q_ps: 0.0,
            ptl_link_ps: 0.0,
            neuron_sync_ps: 0.0,
            shift_register_path_ps: 0.0,
        };
        let t = estimate_timing(&nl, &tp).unwrap();
        assert!(t.degenerate);
        assert!(t.max_throughput_ghz.is_none());
    }

    #[test]
    fn resource_totals_are_additive() {
        let nl = compile_network(&demo_network(), &CompileOptions::default()).unwrap();
        let rm = ResourceModel::default();
        let rep = estimate_resources(&nl, &rm).unwrap();
        let from_kinds: u64 = rep.per_kind.values().map(|k| k.jj).sum();
        assert_eq!(rep.jj_total, from_kinds);
        // One DFF costs exactly 3 junctions in the default model.
        let dff = &rep.per_kind["DFF"];
        assert_eq!(dff.jj, 3 * dff.cells as u64);
        assert_eq!(dff.cells, 49);
    }

    #[test]
    fn energy_zero_when_nothing_switches() {
        let net = demo_network();
        let nl = compile_network(&net, &CompileOptions::default()).unwrap();
        let mut out = simulate(&nl, &vec![0.0; 49], &SimOptions::default()).unwrap();
        // Null out the clock events to model a fully idle inference.
        out.switching[nl.clksrc as usize] = 0;
        let e = estimate_energy(&out, &nl, &ResourceModel::default()).unwrap();
        assert_eq!(e.pulse_events, 0);
        assert_eq!(e.energy_j, 0.0);
    }

    #[test]
    fn unknown_cell_kind_in_model_is_an_error() {
        let nl = compile_network(&demo_network(), &CompileOptions::default()).unwrap();
        let mut rm = ResourceModel::default();
        rm.costs.remove("NEURON");
        assert!(estimate_resources(&nl, &rm).is_err());
    }
}
