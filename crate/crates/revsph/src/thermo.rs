//! Kinetic-theory diagnostics: speed histograms, the 2D Maxwell-Boltzmann
//! reference distribution, and a reduced Boltzmann entropy computed from the
//! sampled speed distribution.
//!
//! Units put the Boltzmann constant at 1, so temperature carries the
//! dimensions of energy.

use serde::{Deserialize, Serialize};

use crate::math::Vec2;

/// Normalized speed histogram with uniform bins on [0, v_max].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityHistogram {
    pub bin_width: f64,
    /// Probability density per bin: count / (N * bin_width). Integrates to 1.
    pub densities: Vec<f64>,
    pub sample_count: usize,
}

impl VelocityHistogram {
    /// Bin the speeds |v| of the given velocities. `v_max` fixes the range;
    /// speeds at or above it land in the last bin.
    pub fn from_velocities(velocities: &[Vec2], bins: usize, v_max: f64) -> Option<VelocityHistogram> {
        if bins == 0 || !(v_max > 0.0) || velocities.is_empty() {
            return None;
        }
        let bin_width = v_max / bins as f64;
        let mut counts = vec![0usize; bins];
        for v in velocities {
            let speed = v.norm();
            let idx = ((speed / bin_width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        let n = velocities.len();
        let densities = counts
            .iter()
            .map(|&c| c as f64 / (n as f64 * bin_width))
            .collect();
        Some(VelocityHistogram {
            bin_width,
            densities,
            sample_count: n,
        })
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width
    }

    /// Reduced entropy -∫ f ln(f/v) dv by the midpoint rule over the
    /// non-empty bins. Returns `None` when the histogram is degenerate
    /// (all mass in one bin), where the estimator is meaningless.
    pub fn reduced_entropy(&self) -> Option<f64> {
        let occupied = self.densities.iter().filter(|&&f| f > 0.0).count();
        if occupied < 2 {
            return None;
        }
        let mut s = 0.0;
        for (i, &f) in self.densities.iter().enumerate() {
            if f > 0.0 {
                let v = self.bin_center(i);
                s -= f * (f / v).ln() * self.bin_width;
            }
        }
        Some(s)
    }
}

/// Kinetic temperature of a 2D ideal gas: T = Σ ½ m v² / N (two quadratic
/// degrees of freedom, k_B = 1).
pub fn fit_temperature(velocities: &[Vec2], masses: &[f64]) -> Option<f64> {
    if velocities.is_empty() {
        return None;
    }
    let kinetic: f64 = velocities
        .iter()
        .zip(masses)
        .map(|(v, &m)| 0.5 * m * v.norm_squared())
        .sum();
    Some(kinetic / velocities.len() as f64)
}

/// Equilibrium (Maxwell-Boltzmann) speed density in 2D:
/// f(v) = (m/T) v exp(-m v² / 2T).
pub fn maxwell_boltzmann_density(temperature: f64, mass: f64, v: f64) -> f64 {
    debug_assert!(temperature > 0.0 && mass > 0.0 && v >= 0.0);
    mass / temperature * v * (-mass * v * v / (2.0 * temperature)).exp()
}

/// Reduced entropy of the equilibrium distribution at temperature T:
/// S_eq = 1 + ln(T/m).
pub fn equilibrium_entropy(temperature: f64, mass: f64) -> f64 {
    debug_assert!(temperature > 0.0 && mass > 0.0);
    1.0 + (temperature / mass).ln()
}

/// Equilibrium entropy expressed through the conserved kinetic energy of the
/// thermalized state: T = E/N, so S_eq = 1 + ln(E/(N m)).
pub fn equilibrium_entropy_from_energy(kinetic_energy: f64, n: usize, mass: f64) -> Option<f64> {
    if n == 0 || !(kinetic_energy > 0.0) || !(mass > 0.0) {
        return None;
    }
    Some(1.0 + (kinetic_energy / (n as f64 * mass)).ln())
}
