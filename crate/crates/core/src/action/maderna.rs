//! Uniform upper bounds for the action potentials.
//!
//! `phi(x, y, T) <= C1 l^2 / T + C2 T / l` and, for energies up to `h_max`,
//! `phi_h(x, y) <= mu(l) = sqrt(alpha l + beta l^2)` with `alpha = 4 C1 C2`,
//! `beta = 4 C1 h_max`. The constants exist but are not explicit, so they are
//! fitted on sampled potentials.

use serde::{Deserialize, Serialize};

use crate::error::{JmError, Result};

/// Safety factor applied on top of the tightest constants that bound the
/// calibration samples.
pub const FIT_MARGIN: f64 = 1.25;

/// `mu(r) = sqrt(alpha r + beta r^2)`.
pub fn maderna_mu(alpha: f64, beta: f64, r: f64) -> f64 {
    (alpha * r + beta * r * r).max(0.0).sqrt()
}

/// One calibration sample: distance `l`, duration `T` and `phi(x, y, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSample {
    pub l: f64,
    pub t: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MadernaFit {
    pub c1: f64,
    pub c2: f64,
    pub h_max: f64,
    /// Largest ratio `phi / (C1 l^2/T + C2 T/l)` on the calibration set before
    /// the margin was applied.
    pub worst_ratio: f64,
}

impl MadernaFit {
    pub fn alpha(&self) -> f64 {
        4.0 * self.c1 * self.c2
    }

    pub fn beta(&self) -> f64 {
        4.0 * self.c1 * self.h_max
    }

    pub fn mu(&self, r: f64) -> f64 {
        maderna_mu(self.alpha(), self.beta(), r)
    }

    pub fn bound(&self, l: f64, t: f64) -> f64 {
        self.c1 * l * l / t + self.c2 * t / l
    }
}

/// Least-squares fit of `(C1, C2) >= 0`, rescaled so every sample satisfies
/// the bound, then inflated by [`FIT_MARGIN`].
pub fn fit_maderna(samples: &[BoundSample], h_max: f64) -> Result<MadernaFit> {
    if samples.len() < 2 {
        return Err(JmError::Precondition("need at least two samples".into()));
    }
    if !(h_max > 0.0) {
        return Err(JmError::Precondition("h_max must be positive".into()));
    }
    let rows: Vec<(f64, f64, f64)> = samples
        .iter()
        .filter(|s| s.l > 0.0 && s.t > 0.0 && s.phi.is_finite())
        .map(|s| (s.l * s.l / s.t, s.t / s.l, s.phi))
        .collect();
    if rows.len() < 2 {
        return Err(JmError::Precondition("no usable samples".into()));
    }
    // relative least squares: rows scaled by 1 / phi
    let (mut saa, mut sab, mut sbb, mut sa1, mut sb1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(a, b, p) in &rows {
        let (a, b) = (a / p, b / p);
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        sa1 += a;
        sb1 += b;
    }
    let det = saa * sbb - sab * sab;
    let (mut c1, mut c2) = if det.abs() > 1e-300 {
        ((sa1 * sbb - sb1 * sab) / det, (saa * sb1 - sab * sa1) / det)
    } else {
        (0.0, 0.0)
    };
    // fall back to one-term fits when the unconstrained solution leaves the cone
    if !(c1 > 0.0) || !(c2 > 0.0) {
        c1 = c1.max(sa1 / saa).max(0.5);
        c2 = c2.max(1e-3);
    }
    let worst = rows
        .iter()
        .map(|&(a, b, p)| p / (c1 * a + c2 * b))
        .fold(0.0, f64::max);
    let scale = worst.max(1e-12) * FIT_MARGIN;
    Ok(MadernaFit {
        c1: c1 * scale,
        c2: c2 * scale,
        h_max,
        worst_ratio: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mu_closed_form() {
        assert_eq!(maderna_mu(2.0, 3.0, 0.0), 0.0);
        let r: f64 = 1e8;
        assert_relative_eq!(maderna_mu(2.0, 3.0, r) / r, 3f64.sqrt(), max_relative = 1e-7);
        assert_relative_eq!(maderna_mu(2.0, 3.0, 2.0), (4.0f64 + 12.0).sqrt());
    }

    #[test]
    fn mu_is_the_minimum_over_durations() {
        let fit = MadernaFit {
            c1: 0.7,
            c2: 1.3,
            h_max: 0.4,
            worst_ratio: 1.0,
        };
        for l in [0.1, 1.0, 7.0] {
            let brute = (0..100_000)
                .map(|k| {
                    let t = (-12.0 + 2e-4 * k as f64).exp();
                    fit.bound(l, t) + fit.h_max * t
                })
                .fold(f64::INFINITY, f64::min);
            assert_relative_eq!(brute, fit.mu(l), max_relative = 1e-6);
        }
        assert_relative_eq!(fit.alpha(), 4.0 * 0.7 * 1.3);
        assert_relative_eq!(fit.beta(), 4.0 * 0.7 * 0.4);
    }

    #[test]
    fn fit_bounds_its_samples() {
        let samples: Vec<BoundSample> = (1..20)
            .map(|k| {
                let l = 0.2 * k as f64;
                let t = 0.3 + 0.1 * k as f64;
                BoundSample {
                    l,
                    t,
                    phi: 0.5 * l * l / t + 0.8 * t / l * (1.0 + 0.1 * (k as f64).sin()),
                }
            })
            .collect();
        let fit = fit_maderna(&samples, 1.0).unwrap();
        for s in &samples {
            assert!(s.phi * FIT_MARGIN <= fit.bound(s.l, s.t) * (1.0 + 1e-12));
        }
        assert!(fit.worst_ratio >= 1.0 - 1e-9);
    }
}
