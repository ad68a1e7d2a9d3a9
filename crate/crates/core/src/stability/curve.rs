use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::network::{ForecastNet, ForecastResult};
use crate::pde::{DatasetSpec, Field1D, Split, TrajectoryDataset};
use crate::train::prediction_metrics;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastMode {
    Latent,
    Autoregressive,
}

impl ForecastMode {
    /// Latent rollout for implicit networks, autoregressive for baselines.
    pub fn default_for(net: &ForecastNet) -> Self {
        if net.kind().is_implicit() {
            ForecastMode::Latent
        } else {
            ForecastMode::Autoregressive
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ForecastMode::Latent => "latent",
            ForecastMode::Autoregressive => "autoregressive",
        }
    }

    pub fn run(self, net: &ForecastNet, u0: &Field1D, steps: usize, dt: f64) -> Result<ForecastResult> {
        match self {
            ForecastMode::Latent => net.forecast_latent(u0, steps, dt),
            ForecastMode::Autoregressive => net.forecast_autoregressive(u0, steps, dt),
        }
    }
}

impl fmt::Display for ForecastMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ForecastMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent" => Ok(ForecastMode::Latent),
            "autoregressive" => Ok(ForecastMode::Autoregressive),
            other => Err(Error::InvalidArgument(format!("unknown forecast mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub time: f64,
    pub mse: f64,
    pub relative_error_pct: f64,
}

/// Forecast error against the reference solver at every step `1..=steps`,
/// averaged over the forecast samples. Diverged steps report `+inf`.
pub fn error_curve(
    net: &ForecastNet,
    forecast_set: &TrajectoryDataset,
    steps: usize,
    oracle: &DatasetSpec,
    mode: ForecastMode,
) -> Result<Vec<CurvePoint>> {
    if oracle.equation != forecast_set.equation {
        return Err(Error::InvalidArgument(format!(
            "oracle solves {} but the data is {}",
            oracle.equation, forecast_set.equation
        )));
    }
    if forecast_set.split != Split::Forecast {
        return Err(Error::InvalidArgument(format!("expected a forecast split, got {}", forecast_set.split)));
    }
    if forecast_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if forecast_set.grid_size != net.grid_size() {
        return Err(Error::ShapeMismatch {
            expected: format!("data on {} points", net.grid_size()),
            got: format!("{} points", forecast_set.grid_size),
        });
    }
    let dt = forecast_set.dt;
    let runs: Vec<(ForecastResult, Vec<Field1D>)> = forecast_set
        .pairs
        .par_iter()
        .map(|(u0, _)| {
            let pred = mode.run(net, u0, steps, dt)?;
            let mut truth = Vec::with_capacity(steps);
            let mut u = u0.clone();
            for _ in 0..steps {
                u = oracle.evolve(&u, dt)?;
                truth.push(u.clone());
            }
            Ok((pred, truth))
        })
        .collect::<Result<_>>()?;

    (0..steps)
        .map(|n| {
            let pairs: Vec<(&[f64], &[f64])> = runs
                .iter()
                .map(|(p, t)| (p.fields[n].values(), t[n].values()))
                .collect();
            let (mse, rel) = prediction_metrics(&pairs)?;
            let diverged = runs.iter().any(|(p, _)| !p.latent_norms[n].is_finite());
            Ok(CurvePoint {
                step: n + 1,
                time: runs[0].0.times[n],
                mse: if diverged { f64::INFINITY } else { mse },
                relative_error_pct: if diverged { f64::INFINITY } else { rel },
            })
        })
        .collect()
}

pub fn curve_csv(points: &[CurvePoint], model: &str) -> String {
    let mut out = String::from("step,time,mse,relative_error_pct,model\n");
    for p in points {
        let _ = writeln!(out, "{},{:e},{:e},{:e},{model}", p.step, p.time, p.mse, p.relative_error_pct);
    }
    out
}
