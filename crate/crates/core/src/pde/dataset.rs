use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::{advect_exact, burgers_solve, sample_initial_condition, Equation, Field1D, InitialConditionConfig, DOMAIN_LENGTH};
use crate::math::SeededRng;
use crate::{Error, Result};

const HEADER: &str = "#pdecast-dataset v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Forecast,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Forecast => "forecast",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "forecast" => Ok(Split::Forecast),
            other => Err(Error::InvalidArgument(format!("unknown split '{other}'"))),
        }
    }
}

/// Supervised pairs `(u(·, 0), u(·, dt))` for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub equation: Equation,
    pub dt: f64,
    pub grid_size: usize,
    /// Set for Burgers only.
    pub viscosity: Option<f64>,
    pub pairs: Vec<(Field1D, Field1D)>,
    pub split: Split,
    pub seed: u64,
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        match (self.equation, self.viscosity) {
            (Equation::Advection, Some(_)) => {
                return Err(Error::InvalidArgument("advection datasets carry no viscosity".into()))
            }
            (Equation::Burgers, None) => {
                return Err(Error::InvalidArgument("burgers datasets need a viscosity".into()))
            }
            (Equation::Burgers, Some(nu)) if !(nu > 0.0) => {
                return Err(Error::InvalidArgument(format!("viscosity must be positive, got {nu}")))
            }
            _ => {}
        }
        for (i, (u0, u1)) in self.pairs.iter().enumerate() {
            if u0.grid_size() != self.grid_size || u1.grid_size() != self.grid_size {
                return Err(Error::ShapeMismatch {
                    expected: format!("grid of {} points", self.grid_size),
                    got: format!("pair {i} with {} / {} points", u0.grid_size(), u1.grid_size()),
                });
            }
        }
        Ok(())
    }
}

/// Everything needed to generate the three splits for one equation.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub equation: Equation,
    pub n_train: usize,
    pub n_val: usize,
    pub n_forecast: usize,
    pub dt: f64,
    pub grid_size: usize,
    pub viscosity: f64,
    pub substeps: usize,
    pub initial: InitialConditionConfig,
}

impl DatasetSpec {
    pub fn advection() -> Self {
        Self {
            equation: Equation::Advection,
            n_train: 350,
            n_val: 150,
            n_forecast: 50,
            dt: 1.0,
            grid_size: 100,
            viscosity: 1.0,
            substeps: 16,
            initial: InitialConditionConfig::default(),
        }
    }

    pub fn burgers() -> Self {
        Self {
            equation: Equation::Burgers,
            n_train: 120,
            n_val: 30,
            n_forecast: 50,
            dt: 0.0005,
            grid_size: 128,
            viscosity: 1.0,
            substeps: 16,
            initial: InitialConditionConfig::default(),
        }
    }

    pub fn for_equation(equation: Equation) -> Self {
        match equation {
            Equation::Advection => Self::advection(),
            Equation::Burgers => Self::burgers(),
        }
    }

    /// Solver settings matching a stored dataset; sample counts are copied
    /// from `data` for the split it holds and zero elsewhere.
    pub fn matching(data: &TrajectoryDataset, substeps: usize) -> Self {
        let mut spec = Self::for_equation(data.equation);
        spec.dt = data.dt;
        spec.grid_size = data.grid_size;
        spec.viscosity = data.viscosity.unwrap_or(spec.viscosity);
        spec.substeps = substeps;
        let n = data.len();
        (spec.n_train, spec.n_val, spec.n_forecast) = match data.split {
            Split::Train => (n, 0, 0),
            Split::Val => (0, n, 0),
            Split::Forecast => (0, 0, n),
        };
        spec
    }

    /// Advances `u` by `t` with the reference solver for this equation.
    pub fn evolve(&self, u: &Field1D, t: f64) -> Result<Field1D> {
        match self.equation {
            Equation::Advection => advect_exact(u, t),
            Equation::Burgers => burgers_solve(u, t, self.viscosity, self.substeps),
        }
    }
}

/// Generates train / val / forecast splits. Sample `i` (counted across all
/// three splits) draws its initial condition from child stream `i` of `rng`,
/// so the splits are disjoint and generation order does not matter.
pub fn build_dataset(spec: &DatasetSpec, rng: &SeededRng) -> Result<[TrajectoryDataset; 3]> {
    if spec.n_train == 0 || spec.n_val == 0 || spec.n_forecast == 0 {
        return Err(Error::InvalidArgument("every split needs at least one sample".into()));
    }
    if !(spec.dt > 0.0 && spec.dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {}", spec.dt)));
    }
    let total = spec.n_train + spec.n_val + spec.n_forecast;
    let pairs = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut child = rng.child(i as u64);
            let u0 = sample_initial_condition(&spec.initial, &mut child, spec.grid_size)?;
            let u1 = spec.evolve(&u0, spec.dt)?;
            Ok((u0, u1))
        })
        .collect::<Result<Vec<_>>>()?;

    let viscosity = match spec.equation {
        Equation::Advection => None,
        Equation::Burgers => Some(spec.viscosity),
    };
    let make = |split, range: std::ops::Range<usize>| TrajectoryDataset {
        equation: spec.equation,
        dt: spec.dt,
        grid_size: spec.grid_size,
        viscosity,
        pairs: pairs[range].to_vec(),
        split,
        seed: rng.seed(),
    };
    let a = spec.n_train;
    let b = a + spec.n_val;
    Ok([
        make(Split::Train, 0..a),
        make(Split::Val, a..b),
        make(Split::Forecast, b..total),
    ])
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn join_values(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",")
}

pub fn save_dataset(d: &TrajectoryDataset, path: &Path) -> Result<()> {
    d.validate()?;
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    let _ = writeln!(out, "#equation={}", d.equation);
    let _ = writeln!(out, "#dt={}", fmt_f64(d.dt));
    let _ = writeln!(out, "#grid_size={}", d.grid_size);
    let _ = writeln!(out, "#domain_length={}", fmt_f64(DOMAIN_LENGTH));
    if let Some(nu) = d.viscosity {
        let _ = writeln!(out, "#viscosity={}", fmt_f64(nu));
    }
    let _ = writeln!(out, "#split={}", d.split);
    let _ = writeln!(out, "#seed={}", d.seed);
    let _ = writeln!(out, "#count={}", d.pairs.len());
    for (u0, u1) in &d.pairs {
        let _ = writeln!(out, "u0: {}", join_values(u0.values()));
        let _ = writeln!(out, "u1: {}", join_values(u1.values()));
    }
    crate::write_atomic(path, out.as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<TrajectoryDataset> {
    let text = fs::read_to_string(path).map_err(Error::file(path))?;
    parse_dataset(&text, path)
}

fn parse_dataset(text: &str, path: &Path) -> Result<TrajectoryDataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().peekable();
    match lines.next() {
        Some((_, HEADER)) => {}
        _ => return Err(parse_err(1, format!("missing '{HEADER}' header"))),
    }

    let mut equation = None;
    let mut dt = None;
    let mut grid_size = None;
    let mut viscosity = None;
    let mut split = None;
    let mut seed = None;
    let mut count = None;
    while let Some(&(i, line)) = lines.peek() {
        let Some(meta) = line.strip_prefix('#') else { break };
        lines.next();
        let (key, value) = meta
            .split_once('=')
            .ok_or_else(|| parse_err(i + 1, format!("malformed metadata line '{line}'")))?;
        let bad = |e: String| parse_err(i + 1, format!("bad value for {key}: {e}"));
        match key {
            "equation" => equation = Some(value.parse::<Equation>().map_err(|e| bad(e.to_string()))?),
            "dt" => dt = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "grid_size" => grid_size = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "domain_length" => {
                let l = value.parse::<f64>().map_err(|e| bad(e.to_string()))?;
                if l != DOMAIN_LENGTH {
                    return Err(bad(format!("only 2π domains are supported, got {l}")));
                }
            }
            "viscosity" => viscosity = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "split" => split = Some(value.parse::<Split>().map_err(|e| bad(e.to_string()))?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
            "count" => count = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            other => return Err(parse_err(i + 1, format!("unknown metadata key '{other}'"))),
        }
    }
    let missing = |k: &str| parse_err(1, format!("missing metadata key '{k}'"));
    let equation = equation.ok_or_else(|| missing("equation"))?;
    let dt = dt.ok_or_else(|| missing("dt"))?;
    let grid_size = grid_size.ok_or_else(|| missing("grid_size"))?;
    let split = split.ok_or_else(|| missing("split"))?;
    let seed = seed.ok_or_else(|| missing("seed"))?;
    let count = count.ok_or_else(|| missing("count"))?;

    // a file that stops mid-line lost data: its last record is short
    let cut_line = (!text.ends_with('\n')).then(|| text.lines().count() - 1);
    let read_row = |(i, line): (usize, &str), tag: &str| -> Result<Field1D> {
        if cut_line == Some(i) {
            return Err(Error::LengthMismatch {
                path: path.to_path_buf(),
                what: "values per record",
                expected: grid_size,
                found: line.split(',').count().saturating_sub(1),
            });
        }
        let body = line
            .strip_prefix(tag)
            .ok_or_else(|| parse_err(i + 1, format!("expected a '{tag}' record")))?;
        let values = parse_values(body.trim()).map_err(|msg| parse_err(i + 1, msg))?;
        if values.len() != grid_size {
            return Err(Error::LengthMismatch {
                path: path.to_path_buf(),
                what: "values per record",
                expected: grid_size,
                found: values.len(),
            });
        }
        Field1D::new(values).map_err(|e| parse_err(i + 1, e.to_string()))
    };

    let mut pairs = Vec::with_capacity(count);
    loop {
        let Some(first) = lines.next() else { break };
        if first.1.is_empty() && lines.peek().is_none() {
            break;
        }
        let u0 = read_row(first, "u0:")?;
        let Some(second) = lines.next() else {
            return Err(Error::LengthMismatch {
                path: path.to_path_buf(),
                what: "records",
                expected: count,
                found: pairs.len(),
            });
        };
        let u1 = read_row(second, "u1:")?;
        pairs.push((u0, u1));
    }
    if pairs.len() != count {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            what: "records",
            expected: count,
            found: pairs.len(),
        });
    }

    let d = TrajectoryDataset {
        equation,
        dt,
        grid_size,
        viscosity,
        pairs,
        split,
        seed,
    };
    d.validate().map_err(|e| Error::Validation {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(d)
}

pub(crate) fn parse_values(body: &str) -> std::result::Result<Vec<f64>, String> {
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split(',')
        .map(|tok| tok.trim().parse::<f64>().map_err(|e| format!("bad number '{tok}': {e}")))
        .collect()
}
