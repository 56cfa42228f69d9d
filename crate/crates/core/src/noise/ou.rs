//! Exact Ornstein–Uhlenbeck sampling of the regularized stochastic
//! convolution, one independent OU process per mode:
//! `dΨ_k = −λ_k Ψ_k dt + e^{−ε_n λ_k} dβ_k`.

use std::sync::Arc;

use rayon::prelude::*;

use super::rng::NoiseKey;
use crate::error::{usage, Error, Result};
use crate::hermite::{Field, FieldPath, SpectralBasis};

/// `ε_n = 2^{−n}`.
pub fn epsilon(level: u32) -> f64 {
    0.5f64.powi(level as i32)
}

/// Noise level, stream key and time grid of a sampling run.
///
/// The generator advances on a fine grid of `dt / substeps`; runs that
/// share the fine step see the same Brownian increments whatever their
/// `dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub level: u32,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub substeps: u32,
}

impl NoiseConfig {
    pub fn new(level: u32, seed: u64, dt: f64, horizon: f64) -> Self {
        Self {
            level,
            seed,
            dt,
            horizon,
            substeps: 1,
        }
    }

    pub fn with_substeps(mut self, substeps: u32) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Domain(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon >= self.dt) {
            return Err(Error::Domain(format!(
                "horizon {} must be at least dt {}",
                self.horizon, self.dt
            )));
        }
        if self.substeps == 0 {
            return Err(usage("substeps must be at least 1"));
        }
        let ratio = self.horizon / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(usage(format!(
                "horizon {} is not a whole number of steps {}",
                self.horizon, self.dt
            )));
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        epsilon(self.level)
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn fine_dt(&self) -> f64 {
        self.dt / self.substeps as f64
    }
}

/// A sampled path of `Ψ⁽ⁿ⁾` with the configuration that produced it.
#[derive(Clone, Debug)]
pub struct StochConvPath {
    pub config: NoiseConfig,
    pub replica: u64,
    pub path: FieldPath,
}

/// Per-mode exact OU recursion on the fine grid.
#[derive(Clone, Debug)]
pub struct OuSampler {
    basis: Arc<SpectralBasis>,
    config: NoiseConfig,
    decay: Vec<f64>,
    scale: Vec<f64>,
}

impl OuSampler {
    pub fn new(basis: &Arc<SpectralBasis>, config: NoiseConfig) -> Result<Self> {
        config.validate()?;
        let h = config.fine_dt();
        let eps = config.epsilon();
        let decay = basis
            .eigenvalues()
            .iter()
            .map(|&l| (-l * h).exp())
            .collect();
        let scale = basis
            .eigenvalues()
            .iter()
            .map(|&l| (-eps * l).exp() * (-(-2.0 * l * h).exp_m1() / (2.0 * l)).sqrt())
            .collect();
        Ok(Self {
            basis: basis.clone(),
            config,
            decay,
            scale,
        })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.config
    }

    /// Coefficients of `Ψ` at the requested coarse steps (sorted, `≤ steps`).
    pub fn sample_at(&self, replica: u64, steps: &[usize]) -> Result<Vec<Vec<f64>>> {
        if steps.windows(2).any(|w| w[1] < w[0]) {
            return Err(usage("recorded steps must be sorted"));
        }
        if let Some(&last) = steps.last() {
            if last > self.config.steps() {
                return Err(usage(format!(
                    "step {last} beyond the horizon of {} steps",
                    self.config.steps()
                )));
            }
        }
        let k = self.basis.len();
        let key = NoiseKey::new(self.config.seed, replica);
        let sub = self.config.substeps as usize;
        let mut out = vec![vec![0.0; k]; steps.len()];
        for (m, mode) in self.basis.modes().iter().enumerate() {
            let mut stream = key.stream(mode, 0);
            let (a, s) = (self.decay[m], self.scale[m]);
            let mut psi = 0.0;
            let mut at = 0usize;
            for (slot, &target) in steps.iter().enumerate() {
                while at < target {
                    for _ in 0..sub {
                        psi = a * psi + s * stream.next_normal();
                    }
                    at += 1;
                }
                out[slot][m] = psi;
            }
        }
        Ok(out)
    }

    /// The whole path on the coarse grid, `Ψ_0 = 0`.
    pub fn sample_path(&self, replica: u64) -> Result<StochConvPath> {
        let steps: Vec<usize> = (0..=self.config.steps()).collect();
        let rows = self.sample_at(replica, &steps)?;
        let fields = rows
            .into_iter()
            .map(|c| Field::from_coeffs(&self.basis, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(StochConvPath {
            config: self.config,
            replica,
            path: FieldPath::new(0.0, self.config.dt, fields)?,
        })
    }

    /// `sample_at` over replicas `0..count`, in parallel, in replica order.
    pub fn ensemble_at(&self, count: u64, steps: &[usize]) -> Result<Vec<Vec<Vec<f64>>>> {
        (0..count)
            .into_par_iter()
            .map(|r| self.sample_at(r, steps))
            .collect()
    }
}

/// `sample_stoch_conv(config)` for one replica.
pub fn sample_stoch_conv(
    basis: &Arc<SpectralBasis>,
    config: NoiseConfig,
    replica: u64,
) -> Result<StochConvPath> {
    OuSampler::new(basis, config)?.sample_path(replica)
}

/// `Var Ψ_k(t) = e^{−2ελ}(1 − e^{−2λt})/(2λ)`.
pub fn ou_variance(level: u32, lambda: f64, t: f64) -> f64 {
    (-2.0 * epsilon(level) * lambda).exp() * -(-2.0 * lambda * t).exp_m1() / (2.0 * lambda)
}

/// `E[(Ψ⁽ⁿ⁾_t(x) − Ψ⁽ᵐ⁾_t(x))²]` for paths driven by the same Brownian motions.
pub fn coupled_difference_variance(
    basis: &SpectralBasis,
    n: u32,
    m: u32,
    t: f64,
    x: &[f64],
) -> f64 {
    let (en, em) = (epsilon(n), epsilon(m));
    basis
        .eval_all(x)
        .iter()
        .zip(basis.eigenvalues())
        .map(|(p, &l)| {
            let d = (-en * l).exp() - (-em * l).exp();
            d * d * p * p * -(-2.0 * l * t).exp_m1() / (2.0 * l)
        })
        .sum()
}
