use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{Optimizer, TrainConfig};
use crate::network::{ModelKind, NetConfig, DEFAULT_BLOCKS};
use crate::pde::Equation;
use crate::{Error, Result};

pub const RUN_CONFIG_KEYS: &[&str] = &[
    "kind",
    "train_data",
    "val_data",
    "latent_dim",
    "blocks",
    "epochs",
    "initial_lr",
    "decay",
    "step_size",
    "batch_size",
    "xavier_gain",
    "delta",
    "seed",
    "optimizer",
];

/// A `key = value` run file. Unset training fields fall back to the preset
/// for the model kind and the dataset's equation; relative paths resolve
/// against the file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: ModelKind,
    pub train_data: PathBuf,
    pub val_data: PathBuf,
    values: BTreeMap<String, (usize, String)>,
    source: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(i + 1, format!("expected 'key = value', got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            if !RUN_CONFIG_KEYS.contains(&k) {
                return Err(err(i + 1, format!("unknown key '{k}'")));
            }
            if v.is_empty() {
                return Err(err(i + 1, format!("empty value for '{k}'")));
            }
            if values.insert(k.to_string(), (i + 1, v.to_string())).is_some() {
                return Err(err(i + 1, format!("duplicate key '{k}'")));
            }
        }
        let base = path.parent().unwrap_or(Path::new(""));
        let required = |k: &str| {
            values
                .get(k)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| err(1, format!("missing required key '{k}'")))
        };
        let kind_line = values.get("kind").map_or(1, |(l, _)| *l);
        let kind = required("kind")?
            .parse::<ModelKind>()
            .map_err(|e| err(kind_line, e.to_string()))?;
        let train_data = base.join(required("train_data")?);
        let val_data = base.join(required("val_data")?);
        let cfg = Self {
            kind,
            train_data,
            val_data,
            values,
            source: path.to_path_buf(),
        };
        // surface malformed numbers before any data is loaded
        cfg.resolve(Equation::Advection, 1)?;
        Ok(cfg)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|e| Error::Parse {
                path: self.source.clone(),
                line: *line,
                msg: format!("bad value for {key}: {e}"),
            }),
        }
    }

    /// Training and architecture settings for a dataset of `equation` on
    /// `grid_size` points.
    pub fn resolve(&self, equation: Equation, grid_size: usize) -> Result<(TrainConfig, NetConfig)> {
        let p = TrainConfig::preset(self.kind, equation);
        let train = TrainConfig {
            epochs: self.get("epochs")?.unwrap_or(p.epochs),
            initial_lr: self.get("initial_lr")?.unwrap_or(p.initial_lr),
            decay: self.get("decay")?.unwrap_or(p.decay),
            step_size: self.get("step_size")?.unwrap_or(p.step_size),
            batch_size: self.get("batch_size")?.unwrap_or(p.batch_size),
            xavier_gain: self.get("xavier_gain")?.unwrap_or(p.xavier_gain),
            delta: self.get("delta")?.unwrap_or(p.delta),
            seed: self.get("seed")?.unwrap_or(p.seed),
            optimizer: self.get::<Optimizer>("optimizer")?.unwrap_or(p.optimizer),
        };
        train.validate()?;
        let net = NetConfig {
            kind: self.kind,
            grid_size,
            latent_dim: self
                .get("latent_dim")?
                .unwrap_or_else(|| ModelKind::default_latent_dim(equation)),
            blocks: self.get("blocks")?.unwrap_or(DEFAULT_BLOCKS),
            xavier_gain: train.xavier_gain,
            delta: train.delta,
            seed: train.seed,
        };
        Ok((train, net))
    }
}
