//! Behavioral SFQ netlist: cell records, point-to-point nets, shift
//! registers, fan-out trees, and neuron cells.
//!
//! The netlist keeps two synchronized views: a flat `cells`/`nets` listing
//! (for export, diffing, and resource accounting) and structured tables
//! (registers, fan-out trees, neuron lists) that drive the cycle simulator.
//! All containers are vectors or ordered maps, so serialization order is
//! stable.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NETLIST_SCHEMA_VERSION: u32 = 1;

pub type CellId = u32;

/// Behavioral cell kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellKind {
    /// Clock source (one per netlist).
    Clksrc,
    /// Destructive-readout D flip-flop.
    Dff,
    /// Fan-out-two splitter.
    Spl,
    /// Passive transmission line (driver/receiver pair as one cell).
    Ptl,
    /// Josephson transmission line segment.
    Jtl,
    /// High fan-in neuron with signed synapse ports.
    Neuron,
    /// SFQ-to-DC output converter.
    Dcout,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Clksrc => "CLKSRC",
            CellKind::Dff => "DFF",
            CellKind::Spl => "SPL",
            CellKind::Ptl => "PTL",
            CellKind::Jtl => "JTL",
            CellKind::Neuron => "NEURON",
            CellKind::Dcout => "DCOUT",
        }
    }

    pub fn all() -> [CellKind; 7] {
        [
            CellKind::Clksrc,
            CellKind::Dff,
            CellKind::Spl,
            CellKind::Ptl,
            CellKind::Jtl,
            CellKind::Neuron,
            CellKind::Dcout,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub kind: CellKind,
    pub label: String,
}

/// One endpoint of a net: cell plus port index. Port conventions:
/// DFF q0 = chain output, q1 = data output; SPL out0/out1; NEURON input
/// port = synapse index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortRef {
    pub cell: CellId,
    pub port: u8,
}

/// Single-driver point-to-point net.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Net {
    pub from: PortRef,
    pub to: PortRef,
}

/// Which neuron layer a fan-out branch lands in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerRef {
    Hidden,
    Output,
}

/// One leaf of a fan-out tree: the PTL link and the signed synapse it
/// feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub ptl: CellId,
    pub target_layer: LayerRef,
    /// Position within the target layer's neuron list.
    pub target: u32,
    /// +1 excitatory, -1 inhibitory.
    pub sign: i8,
}

/// Cascaded fan-out-two tree: `spl_cells.len() == max(branches - 1, 0)`.
/// A pulse reaching branch `j` passes splitters `0..=min(j, len-1)` of the
/// cascade.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FanoutTree {
    pub spl_cells: Vec<CellId>,
    pub branches: Vec<Branch>,
}

/// A neuron cell plus its firing rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronCell {
    pub cell: CellId,
    /// Index of this neuron in the network the netlist was compiled from.
    pub source_index: u32,
    /// Fires when (positive pulses - negative pulses) >= this.
    pub fire_threshold: i32,
}

/// Serial chained clock vs balanced tree; affects timing estimates only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClockTopology {
    Serial,
    HTree,
}

/// Counts summarizing the compiled structure.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetlistMeta {
    pub input_pins: u8,
    pub output_pins: u8,
    /// Synaptic endpoints the input stage fans out to.
    pub input_stage_endpoints: usize,
    /// Synaptic endpoints the hidden stage fans out to.
    pub hidden_stage_endpoints: usize,
    pub max_observed_fanout: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    pub schema_version: u32,
    pub clock: ClockTopology,
    pub cells: Vec<Cell>,
    pub nets: Vec<Net>,
    pub clksrc: CellId,
    /// `registers[r][c]` is the DFF holding pixel `(r, c)` once loading
    /// completes; `registers[r][0]` is the pin-fed head of chain `r`.
    pub registers: Vec<Vec<CellId>>,
    /// Indexed by pixel `r * 7 + c`.
    pub input_trees: Vec<FanoutTree>,
    pub hidden_neurons: Vec<NeuronCell>,
    pub hidden_trees: Vec<FanoutTree>,
    pub output_neurons: Vec<NeuronCell>,
    /// One converter per output neuron, in class order.
    pub dcout: Vec<CellId>,
    /// Cells disabled by fault injection.
    pub dead_cells: BTreeSet<CellId>,
    pub meta: NetlistMeta,
}

impl Netlist {
    pub fn cell_count(&self, kind: CellKind) -> usize {
        self.cells.iter().filter(|c| c.kind == kind).count()
    }

    pub fn label(&self, id: CellId) -> &str {
        &self.cells[id as usize].label
    }

    /// Trees by source layer.
    pub fn trees(&self, layer: LayerRef) -> &[FanoutTree] {
        match layer {
            LayerRef::Hidden => &self.input_trees,
            LayerRef::Output => &self.hidden_trees,
        }
    }

    /// Flip the sign of the `synapse_idx`-th synapse arriving at a neuron
    /// (tree-then-branch order). A fault-injection hook for testing the
    /// equivalence checker.
    pub fn flip_synapse_sign(
        &mut self,
        layer: LayerRef,
        neuron_pos: usize,
        synapse_idx: usize,
    ) -> Result<()> {
        let trees = match layer {
            LayerRef::Hidden => &mut self.input_trees,
            LayerRef::Output => &mut self.hidden_trees,
        };
        let mut seen = 0usize;
        for tree in trees {
            for branch in &mut tree.branches {
                if branch.target_layer == layer && branch.target as usize == neuron_pos {
                    if seen == synapse_idx {
                        branch.sign = -branch.sign;
                        return Ok(());
                    }
                    seen += 1;
                }
            }
        }
        Err(Error::Config(format!(
            "neuron {neuron_pos} has only {seen} synapses; cannot flip #{synapse_idx}"
        )))
    }

    /// Mark a cell dead: pulses through it are dropped. A fault-injection
    /// hook for testing the equivalence checker.
    pub fn kill_cell(&mut self, id: CellId) -> Result<()> {
        if id as usize >= self.cells.len() {
            return Err(Error::Config(format!("no cell with id {id}")));
        }
        self.dead_cells.insert(id);
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, json.as_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Data(format!("cannot read netlist {}: {e}", path.display())))?;
        let nl: Netlist = serde_json::from_slice(&bytes)?;
        if nl.schema_version != NETLIST_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "netlist schema {} unsupported (expected {NETLIST_SCHEMA_VERSION})",
                nl.schema_version
            )));
        }
        Ok(nl)
    }
}
