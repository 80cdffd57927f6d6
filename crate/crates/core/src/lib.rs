//! Spiking-network training, hardware-aware compression, and behavioral
//! SFQ chip simulation.
//!
//! The crate is organized around the lifecycle of a network headed for a
//! superconducting chip:
//!
//! 1. [`data`] — MNIST ingestion, binarization, 7×7 block downsampling,
//!    class-subset selection.
//! 2. [`snn`] — leaky integrate-and-fire dynamics and feedforward spiking
//!    inference; the software oracle for everything downstream.
//! 3. [`train`] — surrogate-gradient backpropagation through time, the
//!    membrane/spike losses and their hybrid, and the AdamW optimizer.
//! 4. [`compress`] — ternary quantization-aware training, gradual magnitude
//!    pruning, sign budgets, dead-neuron elimination, and the staged
//!    pipeline runner.
//! 5. [`chipsim`] — compilation of a compressed network onto a behavioral
//!    SFQ netlist (shift registers, splitter trees, neuron cells) and a
//!    cycle-driven simulator with timing/resource/energy estimates.
//!
//! Batch-level loops (mini-batch gradients, dataset evaluation, netlist
//! sweeps) run on rayon when the default `parallel` feature is enabled and
//! fall back to equivalent sequential code otherwise. Both paths reduce in
//! a fixed order, so results are identical bit for bit.

pub mod chipsim;
pub mod checkpoint;
pub mod compress;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod matrix;
pub mod metrics;
pub mod profiles;
pub mod rng;
pub mod snn;
pub mod train;

pub use error::{Error, Result};
