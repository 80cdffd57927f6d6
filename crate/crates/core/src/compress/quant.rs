//! Ternary quantization, weight clamping, and per-neuron sign budgets.

use serde::{Deserialize, Serialize};

use crate::compress::prune::Mask;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// How the ternary threshold is chosen for a layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ThetaRule {
    /// One fixed threshold; the natural choice once weights are clamped to
    /// [-1, 1].
    Fixed(f64),
    /// `theta = fraction * mean(|w|)` over the layer's unmasked entries.
    /// Keeps the quantizer meaningful for unclamped layers whose weights
    /// live at a much smaller scale.
    MeanAbsFraction(f64),
}

impl ThetaRule {
    pub fn resolve(&self, latent: &Matrix, mask: &Mask) -> f64 {
        match *self {
            ThetaRule::Fixed(theta) => theta,
            ThetaRule::MeanAbsFraction(frac) => {
                let mut sum = 0.0;
                let mut n = 0usize;
                for r in 0..latent.rows() {
                    for (c, v) in latent.row(r).iter().enumerate() {
                        if mask.get(r, c) {
                            sum += v.abs();
                            n += 1;
                        }
                    }
                }
                if n == 0 {
                    return f64::INFINITY;
                }
                frac * sum / n as f64
            }
        }
    }
}

/// Quantizer settings: threshold rule plus latent clamp bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub theta: ThetaRule,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            theta: ThetaRule::Fixed(0.5),
            clamp_lo: -1.0,
            clamp_hi: 1.0,
        }
    }
}

impl QuantConfig {
    pub fn validate(&self) -> Result<()> {
        let (ThetaRule::Fixed(t) | ThetaRule::MeanAbsFraction(t)) = self.theta;
        if !(t > 0.0) {
            return Err(Error::Config(format!("theta must be > 0, got {t}")));
        }
        if self.clamp_lo >= self.clamp_hi {
            return Err(Error::Config(format!(
                "clamp bounds must satisfy lo < hi, got [{}, {}]",
                self.clamp_lo, self.clamp_hi
            )));
        }
        Ok(())
    }
}

/// Map latent weights onto `{+1, -1, 0}`: `+1` above `theta`, `-1` below
/// `-theta`, `0` in between.
pub fn quantize_ternary(latent: &Matrix, theta: f64) -> Matrix {
    let mut out = Matrix::zeros(latent.rows(), latent.cols());
    for (o, &w) in out.as_mut_slice().iter_mut().zip(latent.as_slice()) {
        *o = if w > theta {
            1.0
        } else if w < -theta {
            -1.0
        } else {
            0.0
        };
    }
    out
}

/// Elementwise clamp to `[lo, hi]`; idempotent.
pub fn clamp_weights(latent: &mut Matrix, lo: f64, hi: f64) {
    for v in latent.as_mut_slice() {
        *v = v.clamp(lo, hi);
    }
}

/// Per-neuron cap on positive and negative connections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignBudget {
    pub max_pos: usize,
    pub max_neg: usize,
}

impl SignBudget {
    /// The uniform neuron shape of the chip: six excitatory, two inhibitory.
    pub fn chip_default() -> Self {
        Self {
            max_pos: 6,
            max_neg: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_pos + self.max_neg < 1 {
            return Err(Error::Config("sign budget must allow >= 1 connection".into()));
        }
        Ok(())
    }
}

/// Enforce the sign budget on one ternary row. Of the entries sharing a
/// sign, the ones with the largest latent magnitude survive; ties break
/// toward the lower column index. Dropped entries are zeroed in the row.
/// Returns the dropped column indices.
pub fn apply_sign_constraint(
    ternary_row: &mut [f64],
    latent_row: &[f64],
    budget: &SignBudget,
) -> Vec<usize> {
    debug_assert_eq!(ternary_row.len(), latent_row.len());
    let mut dropped = Vec::new();
    for (sign, cap) in [(1.0, budget.max_pos), (-1.0, budget.max_neg)] {
        let mut idx: Vec<usize> = ternary_row
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == sign)
            .map(|(i, _)| i)
            .collect();
        if idx.len() <= cap {
            continue;
        }
        idx.sort_by(|&a, &b| {
            latent_row[b]
                .abs()
                .partial_cmp(&latent_row[a].abs())
                .expect("finite weights")
                .then(a.cmp(&b))
        });
        for &c in &idx[cap..] {
            ternary_row[c] = 0.0;
            dropped.push(c);
        }
    }
    dropped.sort_unstable();
    dropped
}

/// Apply the sign budget to every row of a ternary matrix and return the
/// surviving-entry mask.
pub fn sign_budget_mask(ternary: &mut Matrix, latent: &Matrix, budget: &SignBudget) -> Mask {
    let mut mask = Mask::all_ones(ternary.rows(), ternary.cols());
    for r in 0..ternary.rows() {
        let latent_row: Vec<f64> = latent.row(r).to_vec();
        let dropped = apply_sign_constraint(ternary.row_mut(r), &latent_row, budget);
        for c in dropped {
            mask.set(r, c, false);
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantizer_hand_case() {
        let w = Matrix::from_rows(&[&[0.7, -0.2, -0.8]]).unwrap();
        let q = quantize_ternary(&w, 0.5);
        assert_eq!(q.row(0), &[1.0, 0.0, -1.0]);
    }

    #[test]
    fn zero_latent_quantizes_to_zero() {
        let q = quantize_ternary(&Matrix::zeros(3, 4), 0.5);
        assert!(q.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clamp_hand_case_and_idempotence() {
        let mut w = Matrix::from_rows(&[&[1.5, -2.0, 0.3]]).unwrap();
        clamp_weights(&mut w, -1.0, 1.0);
        assert_eq!(w.row(0), &[1.0, -1.0, 0.3]);
        let before = w.clone();
        clamp_weights(&mut w, -1.0, 1.0);
        assert_eq!(w, before);
    }

    #[test]
    fn sign_constraint_keeps_largest_latents() {
        // 8 positives with distinct latent magnitudes; budget (6, 2).
        let latent = [0.9, 0.8, 0.95, 0.7, 0.6, 0.85, 0.75, 0.65];
        let mut tern = [1.0; 8];
        let dropped = apply_sign_constraint(&mut tern, &latent, &SignBudget::chip_default());
        // The two smallest latents (0.6 at col 4, 0.65 at col 7) drop out.
        assert_eq!(dropped, vec![4, 7]);
        assert_eq!(tern.iter().filter(|&&v| v == 1.0).count(), 6);
    }

    #[test]
    fn row_within_budget_is_unchanged() {
        let latent = [0.9, -0.8, 0.0, 0.7];
        let mut tern = [1.0, -1.0, 0.0, 1.0];
        let before = tern;
        let dropped = apply_sign_constraint(&mut tern, &latent, &SignBudget::chip_default());
        assert!(dropped.is_empty());
        assert_eq!(tern, before);
    }

    #[test]
    fn mean_abs_theta_tracks_the_layer_scale() {
        let w = Matrix::from_rows(&[&[0.1, -0.3], &[0.2, 0.0]]).unwrap();
        let mask = Mask::all_ones(2, 2);
        let theta = ThetaRule::MeanAbsFraction(0.5).resolve(&w, &mask);
        assert!((theta - 0.5 * 0.15).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn quantizer_range_is_ternary(vals in proptest::collection::vec(-3.0f64..3.0, 1..60), theta in 0.01f64..2.0) {
            let n = vals.len();
            let w = Matrix::from_vec(1, n, vals).unwrap();
            let q = quantize_ternary(&w, theta);
            for &v in q.as_slice() {
                prop_assert!(v == 1.0 || v == -1.0 || v == 0.0);
            }
        }

        #[test]
        fn clamp_is_idempotent_on_random_vectors(vals in proptest::collection::vec(-5.0f64..5.0, 1..60)) {
            let n = vals.len();
            let mut w = Matrix::from_vec(1, n, vals).unwrap();
            clamp_weights(&mut w, -1.0, 1.0);
            let once = w.clone();
            clamp_weights(&mut w, -1.0, 1.0);
            prop_assert_eq!(once, w);
        }

        #[test]
        fn sign_survivors_match_bruteforce_topk(latents in proptest::collection::vec(-1.0f64..1.0, 10..40)) {
            let budget = SignBudget { max_pos: 3, max_neg: 2 };
            let mut tern: Vec<f64> = latents.iter().map(|&w| {
                if w > 0.2 { 1.0 } else if w < -0.2 { -1.0 } else { 0.0 }
            }).collect();
            let orig = tern.clone();
            apply_sign_constraint(&mut tern, &latents, &budget);

            for (sign, cap) in [(1.0, 3usize), (-1.0, 2usize)] {
                // Brute force: rank that sign's entries by |latent| with
                // index tie-break, keep the top `cap`.
                let mut idx: Vec<usize> = (0..orig.len()).filter(|&i| orig[i] == sign).collect();
                idx.sort_by(|&a, &b| latents[b].abs().partial_cmp(&latents[a].abs()).unwrap().then(a.cmp(&b)));
                let keep: Vec<usize> = idx.iter().copied().take(cap).collect();
                for i in 0..orig.len() {
                    if orig[i] == sign {
                        let expect = if keep.contains(&i) { sign } else { 0.0 };
                        prop_assert_eq!(tern[i], expect, "index {}", i);
                    }
                }
            }
        }
    }
}
