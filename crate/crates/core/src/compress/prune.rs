//! Gradual magnitude pruning.
//!
//! The per-neuron connection budget interpolates linearly from the initial
//! fan-in down to the final target over a fixed number of steps:
//!
//! ```text
//! C_t = C_i - (C_i - C_f) * (s + 1) / S
//! ```
//!
//! rounded to the nearest integer and never below `C_f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Linear connection-count schedule for one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneSchedule {
    /// Initial connections per neuron (the fully connected fan-in).
    pub c_init: usize,
    /// Final connections per neuron.
    pub c_final: usize,
    /// Total pruning steps.
    pub total_steps: usize,
    /// Current step, `0 <= step < total_steps`.
    pub step: usize,
}

impl PruneSchedule {
    pub fn new(c_init: usize, c_final: usize, total_steps: usize) -> Result<Self> {
        if c_final < 1 || c_init < c_final {
            return Err(Error::Config(format!(
                "schedule wants c_init >= c_final >= 1, got {c_init} -> {c_final}"
            )));
        }
        if total_steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        Ok(Self {
            c_init,
            c_final,
            total_steps,
            step: 0,
        })
    }

    pub fn at_step(&self, step: usize) -> Self {
        Self { step, ..*self }
    }

    pub fn finished(&self) -> bool {
        self.step + 1 >= self.total_steps
    }
}

/// Connection target for the schedule's current step.
pub fn prune_target(sched: &PruneSchedule) -> usize {
    let ci = sched.c_init as f64;
    let cf = sched.c_final as f64;
    let s = sched.step.min(sched.total_steps - 1) as f64;
    let steps = sched.total_steps as f64;
    let target = ci - (ci - cf) * (s + 1.0) / steps;
    (target.round() as usize).max(sched.c_final)
}

/// Per-entry keep/drop bits for one weight matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn all_ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    pub fn count_kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn kept_in_row(&self, r: usize) -> usize {
        self.row(r).iter().filter(|&&b| b).count()
    }

    /// `self &= other`.
    pub fn intersect(&mut self, other: &Mask) {
        debug_assert_eq!(self.bits.len(), other.bits.len());
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a = *a && *b;
        }
    }

    /// Zero out dropped entries of `m`.
    pub fn apply(&self, m: &mut Matrix) {
        debug_assert_eq!(m.rows(), self.rows);
        debug_assert_eq!(m.cols(), self.cols);
        for (v, &b) in m.as_mut_slice().iter_mut().zip(&self.bits) {
            if !b {
                *v = 0.0;
            }
        }
    }
}

/// Sign-aware variant of the magnitude mask: every row keeps its
/// `keep_pos` largest-magnitude positive entries and `keep_neg` largest
/// negative ones (fewer when the row has fewer of that sign). Ties break
/// toward the lower column index. Used when pruning targets a fixed
/// excitatory/inhibitory structure.
pub fn apply_sign_aware_mask(weights: &Matrix, keep_pos: usize, keep_neg: usize) -> (Matrix, Mask) {
    let mut masked = weights.clone();
    let mut mask = Mask::all_ones(weights.rows(), weights.cols());
    let mut order: Vec<usize> = Vec::with_capacity(weights.cols());
    for r in 0..weights.rows() {
        let row = weights.row(r);
        for (sign_pos, cap) in [(true, keep_pos), (false, keep_neg)] {
            order.clear();
            order.extend((0..row.len()).filter(|&c| {
                if sign_pos {
                    row[c] > 0.0
                } else {
                    row[c] < 0.0
                }
            }));
            if order.len() <= cap {
                continue;
            }
            order.sort_by(|&a, &b| {
                row[b]
                    .abs()
                    .partial_cmp(&row[a].abs())
                    .expect("finite weights")
                    .then(a.cmp(&b))
            });
            for &c in &order[cap..] {
                mask.set(r, c, false);
                masked.set(r, c, 0.0);
            }
        }
    }
    (masked, mask)
}

/// Keep the `keep` largest-magnitude entries of every row, zeroing the
/// rest. Ties break toward the lower column index. Returns the masked copy
/// and the mask itself.
pub fn apply_magnitude_mask(weights: &Matrix, keep: usize) -> Result<(Matrix, Mask)> {
    if keep > weights.cols() {
        return Err(Error::Config(format!(
            "keep {keep} exceeds fan-in {}",
            weights.cols()
        )));
    }
    let mut masked = weights.clone();
    let mut mask = Mask::all_ones(weights.rows(), weights.cols());
    let mut order: Vec<usize> = Vec::with_capacity(weights.cols());
    for r in 0..weights.rows() {
        let row = weights.row(r);
        order.clear();
        order.extend(0..row.len());
        // Sort by magnitude descending; equal magnitudes resolve to the
        // lower column index.
        order.sort_by(|&a, &b| {
            row[b]
                .abs()
                .partial_cmp(&row[a].abs())
                .expect("finite weights")
                .then(a.cmp(&b))
        });
        for &c in &order[keep..] {
            mask.set(r, c, false);
            masked.set(r, c, 0.0);
        }
    }
    Ok((masked, mask))
}
