//! Compile a compressed ternary network onto the behavioral netlist.
//!
//! The input layer becomes 7 serial shift registers of 7 DFFs (49 total).
//! Every nonzero weight column becomes a fan-out requirement on its source;
//! sources with more than one sink get a cascade of fan-out-two splitters
//! (k sinks -> k-1 splitters). Each stage-crossing link runs over one PTL
//! cell. Hidden and output rows become neuron cells whose synapse ports
//! carry the weight signs; output spikes leave through DC converters.

use std::collections::BTreeSet;

use crate::chipsim::netlist::{
    Branch, Cell, CellId, CellKind, ClockTopology, FanoutTree, LayerRef, Net, Netlist,
    NetlistMeta, NeuronCell, PortRef, NETLIST_SCHEMA_VERSION,
};
use crate::compress::SignBudget;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::snn::Network;

/// Hardware capacity limits and clocking for compilation.
#[derive(Clone, Copy, Debug)]
pub struct CompileOptions {
    /// Shift-register grid side (7 registers of 7 DFFs).
    pub register_side: usize,
    /// Largest sink count any single source may feed.
    pub max_fanout: usize,
    /// Per-neuron sign budget every row must already satisfy.
    pub budget: SignBudget,
    /// Total neuron capacity of the die.
    pub max_neurons: usize,
    /// Data pin count (one per register).
    pub max_input_pins: usize,
    pub max_output_pins: usize,
    pub clock: ClockTopology,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            register_side: 7,
            max_fanout: 9,
            budget: SignBudget::chip_default(),
            max_neurons: 25,
            max_input_pins: 7,
            max_output_pins: 3,
            clock: ClockTopology::Serial,
        }
    }
}

/// Smallest integer strictly greater than the membrane threshold: the
/// pulse-count firing rule equivalent to `sum > u_thr` for integer sums.
pub fn pulse_threshold(u_thr: f64) -> i32 {
    u_thr.floor() as i32 + 1
}

struct Builder {
    cells: Vec<Cell>,
    nets: Vec<Net>,
}

impl Builder {
    fn add(&mut self, kind: CellKind, label: String) -> CellId {
        let id = self.cells.len() as CellId;
        self.cells.push(Cell { id, kind, label });
        id
    }

    fn connect(&mut self, from: (CellId, u8), to: (CellId, u8)) {
        self.nets.push(Net {
            from: PortRef {
                cell: from.0,
                port: from.1,
            },
            to: PortRef {
                cell: to.0,
                port: to.1,
            },
        });
    }
}

fn column_sinks(w: &Matrix, col: usize) -> Vec<(u32, i8)> {
    (0..w.rows())
        .filter_map(|r| {
            let v = w.get(r, col);
            if v == 1.0 {
                Some((r as u32, 1i8))
            } else if v == -1.0 {
                Some((r as u32, -1i8))
            } else {
                None
            }
        })
        .collect()
}

/// Build the splitter cascade and PTL links for one source.
fn build_tree(
    b: &mut Builder,
    source: (CellId, u8),
    prefix: &str,
    sinks: &[(u32, i8)],
    target_layer: LayerRef,
    neuron_cell_of: &dyn Fn(u32) -> CellId,
    synapse_port: &mut [u8],
) -> FanoutTree {
    let k = sinks.len();
    let mut tree = FanoutTree::default();
    if k == 0 {
        return tree;
    }
    // Splitter cascade: splitter i feeds sink i on out0 and the next
    // splitter on out1; the last splitter feeds the final two sinks.
    for i in 0..k.saturating_sub(1) {
        let spl = b.add(CellKind::Spl, format!("{prefix}_spl{i}"));
        tree.spl_cells.push(spl);
    }
    for (i, &spl) in tree.spl_cells.iter().enumerate() {
        let from = if i == 0 { source } else { (tree.spl_cells[i - 1], 1) };
        b.connect(from, (spl, 0));
    }
    for (j, &(target, sign)) in sinks.iter().enumerate() {
        let ptl = b.add(CellKind::Ptl, format!("{prefix}_ptl{j}"));
        let drive = match k {
            1 => source,
            _ => {
                // Sink j hangs off splitter j's out0, except the final sink
                // which takes the last splitter's out1.
                if j < k - 1 {
                    (tree.spl_cells[j], 0)
                } else {
                    (tree.spl_cells[k - 2], 1)
                }
            }
        };
        b.connect(drive, (ptl, 0));
        let ncell = neuron_cell_of(target);
        let port = synapse_port[target as usize];
        synapse_port[target as usize] += 1;
        b.connect((ptl, 0), (ncell, port));
        tree.branches.push(Branch {
            ptl,
            target_layer,
            target,
            sign,
        });
    }
    tree
}

/// Compile a reduced ternary chip network into a [`Netlist`].
///
/// Preconditions (each checked): ternary weights, a 3-layer topology whose
/// input matches the register grid, rows within the sign budget, and no
/// source exceeding the fan-out limit.
pub fn compile_network(net: &Network, opts: &CompileOptions) -> Result<Netlist> {
    if !net.is_ternary() {
        return Err(Error::Compile("network must be ternary".into()));
    }
    let sizes = &net.topology.layer_sizes;
    if sizes.len() != 3 {
        return Err(Error::Compile(format!(
            "chip netlist wants input-hidden-output, got {} layers",
            sizes.len()
        )));
    }
    let side = opts.register_side;
    let n_pixels = side * side;
    if sizes[0] != n_pixels {
        return Err(Error::Compile(format!(
            "input layer is {}, register grid holds {n_pixels}",
            sizes[0]
        )));
    }
    let n_hidden = sizes[1];
    let n_out = sizes[2];
    if n_hidden + n_out > opts.max_neurons {
        return Err(Error::Compile(format!(
            "{n_hidden} hidden + {n_out} output neurons exceed die capacity {}",
            opts.max_neurons
        )));
    }
    if n_out > opts.max_output_pins {
        return Err(Error::Compile(format!(
            "{n_out} output neurons exceed {} output pins",
            opts.max_output_pins
        )));
    }
    if side > opts.max_input_pins {
        return Err(Error::Compile(format!(
            "{side} registers exceed {} input pins",
            opts.max_input_pins
        )));
    }

    let w_hidden = net.layers[0].matrix();
    let w_out = net.layers[1].matrix();

    // Sign budgets per row.
    for (layer_name, w) in [("hidden", w_hidden), ("output", w_out)] {
        for r in 0..w.rows() {
            let pos = w.row(r).iter().filter(|&&v| v == 1.0).count();
            let neg = w.row(r).iter().filter(|&&v| v == -1.0).count();
            if pos > opts.budget.max_pos || neg > opts.budget.max_neg {
                return Err(Error::Compile(format!(
                    "{layer_name} neuron {r} has {pos} positive / {neg} negative weights, budget is ({}, {})",
                    opts.budget.max_pos, opts.budget.max_neg
                )));
            }
        }
    }
    // Fan-out limits per source.
    for c in 0..w_hidden.cols() {
        let k = column_sinks(w_hidden, c).len();
        if k > opts.max_fanout {
            return Err(Error::Compile(format!(
                "pixel r{}c{} fans out to {k} sinks, limit is {}",
                c / side,
                c % side,
                opts.max_fanout
            )));
        }
    }
    for c in 0..w_out.cols() {
        let k = column_sinks(w_out, c).len();
        if k > opts.max_fanout {
            return Err(Error::Compile(format!(
                "hidden neuron {c} fans out to {k} sinks, limit is {}",
                opts.max_fanout
            )));
        }
    }

    let mut b = Builder {
        cells: Vec::new(),
        nets: Vec::new(),
    };
    let clksrc = b.add(CellKind::Clksrc, "clk".into());

    // Shift registers: row r is one chain; position c holds pixel (r, c)
    // after loading. The clock chains serially through each register.
    let mut registers: Vec<Vec<CellId>> = Vec::with_capacity(side);
    for r in 0..side {
        let mut chain = Vec::with_capacity(side);
        for c in 0..side {
            let dff = b.add(CellKind::Dff, format!("dff_r{r}_c{c}"));
            chain.push(dff);
        }
        // Chain data ports: head receives the pin, q0 feeds the next DFF.
        for c in 0..side - 1 {
            b.connect((chain[c], 0), (chain[c + 1], 0));
        }
        b.connect((clksrc, 0), (chain[0], 1));
        registers.push(chain);
    }

    let hidden_thr = pulse_threshold(net.topology.lif[0].u_thr);
    let out_thr = pulse_threshold(net.topology.lif[1].u_thr);

    let hidden_neurons: Vec<NeuronCell> = (0..n_hidden)
        .map(|h| NeuronCell {
            cell: b.add(CellKind::Neuron, format!("neuron_h{h}")),
            source_index: h as u32,
            fire_threshold: hidden_thr,
        })
        .collect();
    let output_neurons: Vec<NeuronCell> = (0..n_out)
        .map(|k| NeuronCell {
            cell: b.add(CellKind::Neuron, format!("neuron_o{k}")),
            source_index: k as u32,
            fire_threshold: out_thr,
        })
        .collect();

    let mut hidden_ports = vec![0u8; n_hidden];
    let mut input_trees = Vec::with_capacity(n_pixels);
    let mut input_endpoints = 0usize;
    let mut max_fanout_seen = 0usize;
    for p in 0..n_pixels {
        let sinks = column_sinks(w_hidden, p);
        input_endpoints += sinks.len();
        max_fanout_seen = max_fanout_seen.max(sinks.len());
        let dff = registers[p / side][p % side];
        let tree = build_tree(
            &mut b,
            (dff, 1),
            &format!("px{}_{}", p / side, p % side),
            &sinks,
            LayerRef::Hidden,
            &|t| hidden_neurons[t as usize].cell,
            &mut hidden_ports,
        );
        input_trees.push(tree);
    }

    let mut out_ports = vec![0u8; n_out];
    let mut hidden_trees = Vec::with_capacity(n_hidden);
    let mut hidden_endpoints = 0usize;
    for h in 0..n_hidden {
        let sinks = column_sinks(w_out, h);
        hidden_endpoints += sinks.len();
        max_fanout_seen = max_fanout_seen.max(sinks.len());
        let tree = build_tree(
            &mut b,
            (hidden_neurons[h].cell, 0),
            &format!("h{h}"),
            &sinks,
            LayerRef::Output,
            &|t| output_neurons[t as usize].cell,
            &mut out_ports,
        );
        hidden_trees.push(tree);
    }

    let dcout: Vec<CellId> = (0..n_out)
        .map(|k| {
            let id = b.add(CellKind::Dcout, format!("dcout{k}"));
            b.connect((output_neurons[k].cell, 0), (id, 0));
            id
        })
        .collect();

    Ok(Netlist {
        schema_version: NETLIST_SCHEMA_VERSION,
        clock: opts.clock,
        cells: b.cells,
        nets: b.nets,
        clksrc,
        registers,
        input_trees,
        hidden_neurons,
        hidden_trees,
        output_neurons,
        dcout,
        dead_cells: BTreeSet::new(),
        meta: NetlistMeta {
            input_pins: side as u8,
            output_pins: n_out as u8,
            input_stage_endpoints: input_endpoints,
            hidden_stage_endpoints: hidden_endpoints,
            max_observed_fanout: max_fanout_seen,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{InputPolicy, LayerWeights, LifParams, NetworkTopology, ResetMode};

    pub(crate) fn chip_network(w0: Matrix, w1: Matrix) -> Network {
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

    fn simple_weights(hidden: usize) -> (Matrix, Matrix) {
        let mut w0 = Matrix::zeros(hidden, 49);
        for h in 0..hidden {
            for j in 0..6 {
                w0.set(h, (h * 7 + j) % 49, 1.0);
            }
            w0.set(h, (h * 7 + 6) % 49, -1.0);
        }
        let mut w1 = Matrix::zeros(3, hidden);
        for k in 0..3 {
            for h in 0..hidden {
                if h % 3 == k {
                    w1.set(k, h, 1.0);
                }
            }
        }
        (w0, w1)
    }

    #[test]
    fn input_layer_is_49_dffs_in_7_chains() {
        let (w0, w1) = simple_weights(6);
        let nl = compile_network(&chip_network(w0, w1), &CompileOptions::default()).unwrap();
        assert_eq!(nl.cell_count(CellKind::Dff), 49);
        assert_eq!(nl.registers.len(), 7);
        assert!(nl.registers.iter().all(|r| r.len() == 7));
    }

    #[test]
    fn nine_sinks_make_eight_cascaded_splitters() {
        // One pixel feeding 9 hidden neurons (one synapse each).
        let mut w0 = Matrix::zeros(9, 49);
        for h in 0..9 {
            w0.set(h, 0, 1.0);
        }
        let mut w1 = Matrix::zeros(3, 9);
        for k in 0..3 {
            w1.set(k, 3 * k, 1.0);
        }
        let nl = compile_network(&chip_network(w0, w1), &CompileOptions::default()).unwrap();
        assert_eq!(nl.input_trees[0].spl_cells.len(), 8);
        assert_eq!(nl.input_trees[0].branches.len(), 9);
        // Single-sink sources insert no splitters.
        for tree in &nl.hidden_trees {
            assert_eq!(tree.spl_cells.len(), 0);
            assert!(tree.branches.len() <= 1);
        }
    }

    #[test]
    fn splitter_count_is_sinks_minus_one_per_source() {
        let (w0, w1) = simple_weights(8);
        let net = chip_network(w0.clone(), w1.clone());
        let nl = compile_network(&net, &CompileOptions::default()).unwrap();
        for p in 0..49 {
            let sinks = (0..w0.rows()).filter(|&h| w0.get(h, p) != 0.0).count();
            assert_eq!(
                nl.input_trees[p].spl_cells.len(),
                sinks.saturating_sub(1),
                "pixel {p}"
            );
        }
        let expected_endpoints: usize = w0.as_slice().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nl.meta.input_stage_endpoints, expected_endpoints);
    }

    #[test]
    fn fanout_over_limit_names_the_source() {
        let mut w0 = Matrix::zeros(10, 49);
        for h in 0..10 {
            w0.set(h, 13, 1.0); // pixel r1c6 feeds 10 sinks
        }
        let w1 = Matrix::from_vec(3, 10, {
            let mut v = vec![0.0; 30];
            v[0] = 1.0;
            v[11] = 1.0;
            v[22] = 1.0;
            v
        })
        .unwrap();
        let err = compile_network(&chip_network(w0, w1), &CompileOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("r1c6"), "got: {msg}");
    }

    #[test]
    fn sign_budget_violation_is_a_compile_error() {
        let mut w0 = Matrix::zeros(4, 49);
        for j in 0..7 {
            w0.set(0, j, 1.0); // 7 positives on neuron 0
        }
        for h in 1..4 {
            w0.set(h, h, 1.0);
        }
        let w1 = Matrix::from_vec(3, 4, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let err = compile_network(&chip_network(w0, w1), &CompileOptions::default()).unwrap_err();
        assert!(err.to_string().contains("hidden neuron 0"));
    }

    #[test]
    fn pulse_threshold_mapping() {
        assert_eq!(pulse_threshold(0.5), 1);
        assert_eq!(pulse_threshold(1.0), 2);
        assert_eq!(pulse_threshold(1.5), 2);
        assert_eq!(pulse_threshold(2.0), 3);
    }
}
