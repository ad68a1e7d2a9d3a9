//! One-step supervised data for the periodic advection and viscous Burgers
//! equations on `z ∈ [0, 2π)`.

pub(crate) mod dataset;
mod initial;
mod solvers;

pub use dataset::{build_dataset, load_dataset, save_dataset, DatasetSpec, Split, TrajectoryDataset};
pub use initial::{initial_condition_from_coefficients, sample_initial_condition, InitialConditionConfig};
pub use solvers::{advect_exact, burgers_solve, ADVECTION_SPEED};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

pub const DOMAIN_LENGTH: f64 = 2.0 * PI;

/// Periodic field sampled at `z_i = 2π i / n`, `i = 0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field1D {
    values: Vec<f64>,
}

impl Field1D {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("field needs at least one grid point".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field values must be finite".into()));
        }
        Ok(Self { values })
    }

    /// Samples `f` on the periodic grid.
    pub fn from_fn(grid_size: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid_points(grid_size).map(f).collect())
    }

    /// Field that may hold the divergence sentinel (`+inf`).
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn domain_length(&self) -> f64 {
        DOMAIN_LENGTH
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Discrete L2 norm `sqrt(Σ v_i² · 2π/n)`.
    pub fn l2_norm(&self) -> f64 {
        let h = DOMAIN_LENGTH / self.values.len() as f64;
        (self.values.iter().map(|v| v * v).sum::<f64>() * h).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Field1D) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

pub fn grid_points(grid_size: usize) -> impl Iterator<Item = f64> {
    (0..grid_size).map(move |i| DOMAIN_LENGTH * i as f64 / grid_size as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Equation {
    Advection,
    Burgers,
}

impl Equation {
    pub fn as_str(self) -> &'static str {
        match self {
            Equation::Advection => "advection",
            Equation::Burgers => "burgers",
        }
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Equation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "advection" => Ok(Equation::Advection),
            "burgers" => Ok(Equation::Burgers),
            other => Err(Error::InvalidArgument(format!("unknown equation '{other}'"))),
        }
    }
}
