//! Deterministic cycle-driven simulation of a compiled netlist.
//!
//! The per-sample protocol is fixed: seven load cycles shift one bit per
//! register per cycle (next-layer biasing disabled, so nothing downstream
//! moves), a fixed two-cycle propagate window releases the registers
//! through the fan-out trees and fires the neurons, and one readout cycle
//! drives the DC converters. Ten cycles per prediction.
//!
//! Switching counts tally emitted pulses per cell (for neurons: arrivals
//! plus the fire pulse; for the clock source: one per cycle). They feed
//! the energy estimator and nothing else.

use serde::{Deserialize, Serialize};

use crate::chipsim::netlist::{FanoutTree, Netlist, NeuronCell};
use crate::data::{EncodedDataset, InputEncoding};
use crate::error::{Error, Result};
use crate::exec;
use crate::snn::{forward_network, Network};

/// Cycle-budget knobs; the defaults give the documented 7 + 2 + 1 protocol.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SimOptions {
    /// Fixed pipeline latency between load completion and output-neuron
    /// firing (the clock-routing constraint).
    pub propagate_cycles: u32,
    pub readout_cycles: u32,
    pub record_trace: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            propagate_cycles: 2,
            readout_cycles: 1,
            record_trace: false,
        }
    }
}

/// Output bits, latency, and per-cell switching counts of one inference.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimResult {
    /// Per output neuron, in class order.
    pub output_bits: Vec<bool>,
    pub cycles: u32,
    pub load_cycles: u32,
    pub propagate_cycles: u32,
    pub readout_cycles: u32,
    /// Indexed by cell id.
    pub switching: Vec<u64>,
    pub trace: Option<Vec<String>>,
}

impl SimResult {
    pub fn total_switches(&self) -> u64 {
        self.switching.iter().sum()
    }
}

struct Tracer {
    lines: Option<Vec<String>>,
}

impl Tracer {
    fn log(&mut self, f: impl FnOnce() -> String) {
        if let Some(lines) = &mut self.lines {
            lines.push(f());
        }
    }
}

/// Deliver one pulse through a fan-out tree, tallying splitter and PTL
/// events, honoring dead cells, and accumulating signed arrivals.
fn deliver(
    nl: &Netlist,
    tree: &FanoutTree,
    switching: &mut [u64],
    arrivals: &mut [(i32, i32)],
    neurons: &[NeuronCell],
    tracer: &mut Tracer,
) {
    // A pulse to branch j passes cascade splitters 0..=min(j, len-1); a
    // dead splitter cuts off every later branch.
    let mut dead_from = usize::MAX;
    for (i, &spl) in tree.spl_cells.iter().enumerate() {
        if nl.dead_cells.contains(&spl) {
            dead_from = i;
            break;
        }
    }
    for (i, &spl) in tree.spl_cells.iter().enumerate() {
        if i >= dead_from {
            break;
        }
        switching[spl as usize] += 1;
    }
    for (j, branch) in tree.branches.iter().enumerate() {
        // Branch j needs splitters 0..=j-? — every branch except the last
        // hangs off splitter j; the last shares the final splitter.
        let needed = j.min(tree.spl_cells.len().saturating_sub(1));
        if !tree.spl_cells.is_empty() && needed >= dead_from {
            continue;
        }
        if nl.dead_cells.contains(&branch.ptl) {
            continue;
        }
        switching[branch.ptl as usize] += 1;
        let ncell = neurons[branch.target as usize].cell;
        if nl.dead_cells.contains(&ncell) {
            continue;
        }
        // Synchronization DFF inside the neuron clocks the arrival in.
        switching[ncell as usize] += 1;
        if branch.sign > 0 {
            arrivals[branch.target as usize].0 += 1;
        } else {
            arrivals[branch.target as usize].1 += 1;
        }
        tracer.log(|| {
            format!(
                "arrive {} sign={:+} via {}",
                nl.label(ncell),
                branch.sign,
                nl.label(branch.ptl)
            )
        });
    }
}

fn fire_layer(
    nl: &Netlist,
    neurons: &[NeuronCell],
    arrivals: &[(i32, i32)],
    switching: &mut [u64],
    tracer: &mut Tracer,
) -> Vec<bool> {
    neurons
        .iter()
        .enumerate()
        .map(|(i, n)| {
            if nl.dead_cells.contains(&n.cell) {
                return false;
            }
            let (pos, neg) = arrivals[i];
            let fired = pos - neg >= n.fire_threshold;
            if fired {
                switching[n.cell as usize] += 1;
                tracer.log(|| {
                    format!(
                        "fire {} net={} thr={}",
                        nl.label(n.cell),
                        pos - neg,
                        n.fire_threshold
                    )
                });
            }
            fired
        })
        .collect()
}

/// Run one 49-bit sample through the netlist.
pub fn simulate(nl: &Netlist, input: &[f64], opts: &SimOptions) -> Result<SimResult> {
    let side = nl.registers.len();
    let n_pixels = side * nl.registers.first().map_or(0, Vec::len);
    if input.len() != n_pixels {
        return Err(Error::Topology(format!(
            "sample has {} bits, registers hold {n_pixels}",
            input.len()
        )));
    }
    if input.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Numeric("chip input must be binary".into()));
    }

    let mut tracer = Tracer {
        lines: opts.record_trace.then(Vec::new),
    };
    let mut switching = vec![0u64; nl.cells.len()];
    let load_cycles = side as u32;

    // Load phase: registers[r][c] ends up holding pixel (r, c). The pin
    // feeds the highest column first; each cycle every live DFF emits its
    // stored bit down the chain.
    let mut state: Vec<Vec<bool>> = vec![vec![false; side]; side];
    for cycle in 0..side {
        switching[nl.clksrc as usize] += 1;
        for r in 0..side {
            let pin_bit = input[r * side + (side - 1 - cycle)] == 1.0;
            // Shift tail-first so each bit moves one position per cycle.
            for c in (0..side).rev() {
                let incoming = if c == 0 { pin_bit } else { state[r][c - 1] };
                let dff = nl.registers[r][c];
                let dead = nl.dead_cells.contains(&dff);
                if state[r][c] && !dead {
                    // Destructive readout pulse down the chain (the data
                    // path stays unbiased until loading completes).
                    switching[dff as usize] += 1;
                }
                state[r][c] = incoming && !dead;
            }
            tracer.log(|| format!("cycle {} load r{} pin={}", cycle + 1, r, u8::from(pin_bit)));
        }
    }

    // Propagate phase: bias enables, registers release into the fan-out
    // trees, hidden then output neurons evaluate. Functionally this is one
    // sweep; the cycle cost is the configured pipeline constant.
    for _ in 0..opts.propagate_cycles {
        switching[nl.clksrc as usize] += 1;
    }
    let mut hidden_arrivals = vec![(0i32, 0i32); nl.hidden_neurons.len()];
    for p in 0..n_pixels {
        let (r, c) = (p / side, p % side);
        let dff = nl.registers[r][c];
        if !state[r][c] || nl.dead_cells.contains(&dff) {
            continue;
        }
        switching[dff as usize] += 1; // release pulse into the tree
        deliver(
            nl,
            &nl.input_trees[p],
            &mut switching,
            &mut hidden_arrivals,
            &nl.hidden_neurons,
            &mut tracer,
        );
    }
    let hidden_fired = fire_layer(nl, &nl.hidden_neurons, &hidden_arrivals, &mut switching, &mut tracer);

    let mut out_arrivals = vec![(0i32, 0i32); nl.output_neurons.len()];
    for (h, fired) in hidden_fired.iter().enumerate() {
        if !fired {
            continue;
        }
        deliver(
            nl,
            &nl.hidden_trees[h],
            &mut switching,
            &mut out_arrivals,
            &nl.output_neurons,
            &mut tracer,
        );
    }
    let output_fired = fire_layer(nl, &nl.output_neurons, &out_arrivals, &mut switching, &mut tracer);

    // Readout: fired outputs drive their DC converters.
    for _ in 0..opts.readout_cycles {
        switching[nl.clksrc as usize] += 1;
    }
    let mut output_bits = vec![false; nl.output_neurons.len()];
    for (k, fired) in output_fired.iter().enumerate() {
        let dc = nl.dcout[k];
        if *fired && !nl.dead_cells.contains(&dc) {
            switching[dc as usize] += 1;
            output_bits[k] = true;
            tracer.log(|| format!("readout {}=1", nl.label(dc)));
        }
    }

    Ok(SimResult {
        output_bits,
        cycles: load_cycles + opts.propagate_cycles + opts.readout_cycles,
        load_cycles,
        propagate_cycles: opts.propagate_cycles,
        readout_cycles: opts.readout_cycles,
        switching,
        trace: tracer.lines,
    })
}

/// First sample where hardware and software disagreed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub sample_index: usize,
    pub label: usize,
    pub software_bits: Vec<bool>,
    pub hardware_bits: Vec<bool>,
}

/// Outcome of a full-dataset equivalence sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub total: usize,
    pub mismatches: usize,
    pub first_mismatch: Option<Mismatch>,
    /// True when the dataset was empty (trivially equivalent).
    pub empty: bool,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

/// Run every sample through both the netlist and the software single-pass
/// forward and compare output bits.
pub fn check_equivalence(
    nl: &Netlist,
    net: &Network,
    data: &EncodedDataset,
    encoding: InputEncoding,
) -> Result<EquivalenceReport> {
    if data.is_empty() {
        return Ok(EquivalenceReport {
            total: 0,
            mismatches: 0,
            first_mismatch: None,
            empty: true,
        });
    }
    let opts = SimOptions::default();
    let idx: Vec<usize> = (0..data.len()).collect();
    let merged = exec::chunked_reduce(
        &idx,
        64,
        |chunk| -> Result<(usize, usize, Option<Mismatch>)> {
            let mut mismatches = 0;
            let mut first: Option<Mismatch> = None;
            for &i in chunk {
                let input = data.materialize(i, encoding);
                let (spikes, _) = forward_network(net, &input)?;
                let sw: Vec<bool> = spikes.output()[0].iter().map(|&s| s == 1.0).collect();
                let hw = simulate(nl, &input, &opts)?.output_bits;
                if sw != hw {
                    mismatches += 1;
                    if first.is_none() {
                        first = Some(Mismatch {
                            sample_index: i,
                            label: data.labels[i],
                            software_bits: sw,
                            hardware_bits: hw,
                        });
                    }
                }
            }
            Ok((chunk.len(), mismatches, first))
        },
        |a, b| {
            let (na, ma, fa) = a?;
            let (nb, mb, fb) = b?;
            // Chunks merge in index order, so the first mismatch wins.
            Ok((na + nb, ma + mb, fa.or(fb)))
        },
    )
    .expect("non-empty dataset")?;

    Ok(EquivalenceReport {
        total: merged.0,
        mismatches: merged.1,
        first_mismatch: merged.2,
        empty: false,
    })
}
