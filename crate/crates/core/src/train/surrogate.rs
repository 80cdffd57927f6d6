//! Smooth stand-in derivative for the Heaviside spike function.

use serde::{Deserialize, Serialize};

/// Surrogate shape used in the backward pass.
///
/// Only the arctangent form is calibrated against the reference training
/// setup; it has no free parameters and peaks at the firing threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurrogateConfig {
    #[default]
    Arctangent,
}

/// Derivative of the arctangent spike surrogate at membrane potential `u`,
/// centered on the threshold:
///
/// ```text
/// d/du S~ = 1 / [ pi * (1 + ((u - u_thr) * pi)^2) ]
/// ```
///
/// Strictly positive, even around `u_thr`, bounded by `1/pi`.
pub fn surrogate_derivative(u: f64, u_thr: f64) -> f64 {
    use std::f64::consts::PI;
    let x = (u - u_thr) * PI;
    1.0 / (PI * (1.0 + x * x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn peaks_at_threshold() {
        let v = surrogate_derivative(1.0, 1.0);
        assert!((v - 1.0 / PI).abs() < 1e-15);
        assert!((v - 0.31831).abs() < 1e-5);
    }

    #[test]
    fn unit_offset_value() {
        // 1 / [pi (1 + pi^2)] evaluated numerically: 0.0292844...
        let v = surrogate_derivative(2.0, 1.0);
        assert!((v - 1.0 / (PI * (1.0 + PI * PI))).abs() < 1e-15);
        assert!((v - 0.0292844).abs() < 1e-6);
    }

    #[test]
    fn even_positive_and_bounded() {
        for i in 0..200 {
            let off = (i as f64) * 0.05;
            // Exactly even in the offset from threshold.
            let plus = surrogate_derivative(off, 0.0);
            let minus = surrogate_derivative(-off, 0.0);
            assert_eq!(plus.to_bits(), minus.to_bits());
            let v = surrogate_derivative(1.0 + off, 1.0);
            assert!(v > 0.0);
            assert!(v <= 1.0 / PI + f64::EPSILON);
        }
    }
}
