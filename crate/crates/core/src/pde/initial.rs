use super::Field1D;
use crate::math::SeededRng;
use crate::{Error, Result};

/// Truncated Fourier series `Σ_{k=1..K} (a_k cos kz + b_k sin kz) / k`
/// with `a_k, b_k ~ U[-s, s]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialConditionConfig {
    pub max_mode: usize,
    pub amplitude_scale: f64,
}

impl Default for InitialConditionConfig {
    fn default() -> Self {
        Self {
            max_mode: 5,
            amplitude_scale: 1.0,
        }
    }
}

impl InitialConditionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_mode == 0 {
            return Err(Error::InvalidArgument("max_mode must be at least 1".into()));
        }
        if !(self.amplitude_scale > 0.0 && self.amplitude_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "amplitude_scale must be positive, got {}",
                self.amplitude_scale
            )));
        }
        Ok(())
    }
}

pub fn sample_initial_condition(
    cfg: &InitialConditionConfig,
    rng: &mut SeededRng,
    grid_size: usize,
) -> Result<Field1D> {
    cfg.validate()?;
    if grid_size < 4 * cfg.max_mode {
        return Err(Error::InvalidArgument(format!(
            "grid of {grid_size} points cannot resolve {} modes (need at least {})",
            cfg.max_mode,
            4 * cfg.max_mode
        )));
    }
    let s = cfg.amplitude_scale;
    let coefficients: Vec<(f64, f64)> = (0..cfg.max_mode)
        .map(|_| {
            let a = rng.uniform(-s, s);
            let b = rng.uniform(-s, s);
            (a, b)
        })
        .collect();
    initial_condition_from_coefficients(&coefficients, grid_size)
}

/// Evaluates the series for explicit `(a_k, b_k)` pairs, `k = 1..`.
pub fn initial_condition_from_coefficients(coefficients: &[(f64, f64)], grid_size: usize) -> Result<Field1D> {
    Field1D::from_fn(grid_size, |z| {
        coefficients
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let k = (i + 1) as f64;
                (a * (k * z).cos() + b * (k * z).sin()) / k
            })
            .sum()
    })
}
