//! Frozen hardware imperfections of a fabricated chip.
//!
//! Effective phases are `Ω·(Γ ⊙ Φ) + Φ_b (mod 2π)`: a multiplicative tuning
//! drift per phase shifter, linear crosstalk from neighboring devices and a
//! fixed fabrication bias.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{wrap_phase, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation of the γ drift around 1.
    pub sigma_gamma: f64,
    /// Crosstalk coupling between adjacent devices.
    pub omega: f64,
    /// Uniform `[0, 2π)` phase bias per device.
    pub bias_on: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_gamma: 0.002,
            omega: 0.005,
            bias_on: true,
        }
    }
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig {
        sigma_gamma: 0.0,
        omega: 0.0,
        bias_on: false,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_gamma >= 0.0 && self.sigma_gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma_gamma must be >= 0, got {}",
                self.sigma_gamma
            )));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidConfig(format!("omega must be >= 0, got {}", self.omega)));
        }
        Ok(())
    }
}

/// One realization of the imperfections, indexed by global phase-shifter index.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub gamma: Vec<f64>,
    /// `(source, target, ω)`: `target` picks up `ω` times the drifted phase of `source`.
    pub crosstalk: Vec<(usize, usize, f64)>,
    pub phase_bias: Vec<f64>,
    pub seed: u64,
}

impl NoiseModel {
    pub fn identity(n_phases: usize) -> Self {
        Self {
            gamma: vec![1.0; n_phases],
            crosstalk: Vec::new(),
            phase_bias: vec![0.0; n_phases],
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.gamma.iter().all(|&g| g == 1.0)
            && self.crosstalk.iter().all(|&(_, _, w)| w == 0.0)
            && self.phase_bias.iter().all(|&b| b == 0.0)
    }

    /// Apply the model to commanded phases, writing into `out`.
    pub(crate) fn apply_into(&self, commanded: &[f64], out: &mut [f64]) {
        for ((o, &p), &g) in out.iter_mut().zip(commanded).zip(&self.gamma) {
            *o = g * p;
        }
        if !self.crosstalk.is_empty() {
            let drifted = out.to_vec();
            for &(src, dst, w) in &self.crosstalk {
                out[dst] += w * drifted[src];
            }
        }
        for (o, &b) in out.iter_mut().zip(&self.phase_bias) {
            *o = wrap_phase(*o + b);
        }
    }
}

/// Sample a frozen noise model.
///
/// `neighbors` lists unordered pairs of physically adjacent phase shifters;
/// each pair is coupled in both directions with coefficient `omega`.
pub fn sample_noise(n_phases: usize, cfg: &NoiseConfig, neighbors: &[(usize, usize)], seed: u64) -> Result<NoiseModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = if cfg.sigma_gamma > 0.0 {
        let dist = Normal::new(1.0, cfg.sigma_gamma).expect("validated std");
        (0..n_phases).map(|_| dist.sample(&mut rng)).collect()
    } else {
        vec![1.0; n_phases]
    };
    let phase_bias = if cfg.bias_on {
        (0..n_phases).map(|_| rng.random_range(0.0..TAU)).collect()
    } else {
        vec![0.0; n_phases]
    };
    let mut crosstalk = Vec::new();
    if cfg.omega > 0.0 {
        for &(a, b) in neighbors {
            if a >= n_phases || b >= n_phases {
                return Err(Error::DimensionMismatch {
                    context: "crosstalk neighbor index",
                    expected: n_phases,
                    actual: a.max(b),
                });
            }
            crosstalk.push((a, b, cfg.omega));
            crosstalk.push((b, a, cfg.omega));
        }
    }
    Ok(NoiseModel {
        gamma,
        crosstalk,
        phase_bias,
        seed,
    })
}

/// `Ω·(Γ ⊙ Φ) + Φ_b`, reduced mod 2π.
pub fn effective_phases(commanded: &[f64], noise: &NoiseModel) -> Result<Vec<f64>> {
    if commanded.len() != noise.len() {
        return Err(Error::DimensionMismatch {
            context: "effective_phases",
            expected: noise.len(),
            actual: commanded.len(),
        });
    }
    let mut out = vec![0.0; commanded.len()];
    noise.apply_into(commanded, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_config_gives_identity_model() {
        let m = sample_noise(50, &NoiseConfig::NONE, &[(0, 1)], 7).unwrap();
        assert!(m.is_identity());
        let phases: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        assert_eq!(effective_phases(&phases, &m).unwrap(), phases);
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = NoiseConfig::default();
        let a = sample_noise(100, &cfg, &[(0, 1), (2, 3)], 5).unwrap();
        let b = sample_noise(100, &cfg, &[(0, 1), (2, 3)], 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_noise(100, &cfg, &[(0, 1), (2, 3)], 6).unwrap());
    }

    #[test]
    fn gamma_mean_is_one() {
        let cfg = NoiseConfig {
            sigma_gamma: 0.002,
            omega: 0.0,
            bias_on: false,
        };
        let n = 100_000;
        let m = sample_noise(n, &cfg, &[], 1).unwrap();
        let mean = m.gamma.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() <= 3.0 * 0.002 / (n as f64).sqrt());
    }

    #[test]
    fn bias_is_uniform_range() {
        let m = sample_noise(1000, &NoiseConfig::default(), &[], 3).unwrap();
        assert!(m.phase_bias.iter().all(|&b| (0.0..TAU).contains(&b)));
        let mean = m.phase_bias.iter().sum::<f64>() / 1000.0;
        assert!((mean - std::f64::consts::PI).abs() < 0.3);
    }

    #[test]
    fn crosstalk_formula() {
        let mut m = NoiseModel::identity(4);
        m.crosstalk.push((0, 1, 0.1));
        let out = effective_phases(&[1.0, 0.0, 0.0, 0.0], &m).unwrap();
        assert_eq!(out[0], 1.0);
        assert!((out[1] - 0.1).abs() < 1e-15);
        assert_eq!(out[2], 0.0);
    }

    #[test]
    fn result_is_reduced_and_pure() {
        let m = sample_noise(20, &NoiseConfig::default(), &[(0, 1), (4, 5)], 9).unwrap();
        let phases: Vec<f64> = (0..20).map(|i| i as f64 * 0.33).collect();
        let a = effective_phases(&phases, &m).unwrap();
        assert!(a.iter().all(|&p| (0.0..TAU).contains(&p)));
        assert_eq!(a, effective_phases(&phases, &m).unwrap());
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(effective_phases(&[0.0; 3], &NoiseModel::identity(4)).is_err());
    }

    #[test]
    fn negative_magnitudes_rejected() {
        let bad = NoiseConfig {
            sigma_gamma: -1.0,
            ..NoiseConfig::NONE
        };
        assert!(sample_noise(3, &bad, &[], 0).is_err());
    }
}
