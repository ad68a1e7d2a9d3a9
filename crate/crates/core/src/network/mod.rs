//! Forecasting models: linear encoder, a stack of residual blocks, linear
//! decoder. The implicit kind uses constrained triangular blocks; the
//! explicit baselines use unconstrained dense residual layers.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::block::{self, explicit_step, Activation, DenseLayer, GateMask, TriangularBlock};
use crate::grad::{self, Differentiable};
use crate::math::{norm_inf, xavier_init, DenseMatrix, SeededRng};
use crate::pde::{Equation, Field1D};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    ImplicitRelu,
    ExplicitRelu,
    ExplicitTanh,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::ImplicitRelu => "implicit_relu",
            ModelKind::ExplicitRelu => "explicit_relu",
            ModelKind::ExplicitTanh => "explicit_tanh",
        }
    }

    pub fn is_implicit(self) -> bool {
        self == ModelKind::ImplicitRelu
    }

    fn activation(self) -> Activation {
        match self {
            ModelKind::ExplicitTanh => Activation::Tanh,
            _ => Activation::Relu,
        }
    }

    /// Default latent width: 50 for advection, 64 for Burgers.
    pub fn default_latent_dim(equation: Equation) -> usize {
        match equation {
            Equation::Advection => 50,
            Equation::Burgers => 64,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implicit_relu" => Ok(ModelKind::ImplicitRelu),
            "explicit_relu" => Ok(ModelKind::ExplicitRelu),
            "explicit_tanh" => Ok(ModelKind::ExplicitTanh),
            other => Err(Error::InvalidArgument(format!("unknown model kind '{other}'"))),
        }
    }
}

pub const DEFAULT_BLOCKS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Blocks {
    Implicit(Vec<TriangularBlock>),
    Explicit(Vec<DenseLayer>),
}

impl Blocks {
    pub fn len(&self) -> usize {
        match self {
            Blocks::Implicit(b) => b.len(),
            Blocks::Explicit(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastNet {
    kind: ModelKind,
    grid_size: usize,
    latent_dim: usize,
    delta: f64,
    seed: u64,
    pub(crate) encoder: DenseMatrix,
    pub(crate) encoder_bias: Vec<f64>,
    pub(crate) blocks: Blocks,
    pub(crate) decoder: DenseMatrix,
    pub(crate) decoder_bias: Vec<f64>,
}

/// Architecture and initialisation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    pub kind: ModelKind,
    pub grid_size: usize,
    pub latent_dim: usize,
    pub blocks: usize,
    pub xavier_gain: f64,
    pub delta: f64,
    pub seed: u64,
}

impl ForecastNet {
    /// Xavier-initialised weights, zero biases; implicit diagonals are
    /// projected into `[-1, -delta]` right away.
    pub fn init(cfg: &NetConfig) -> Result<Self> {
        if cfg.grid_size == 0 || cfg.latent_dim == 0 {
            return Err(Error::InvalidArgument("grid size and latent width must be positive".into()));
        }
        if cfg.kind.is_implicit() && !(cfg.delta > 0.0 && cfg.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", cfg.delta)));
        }
        let (g, m) = (cfg.grid_size, cfg.latent_dim);
        let mut rng = SeededRng::new(cfg.seed);
        let encoder = xavier_init(m, g, cfg.xavier_gain, &mut rng)?;
        let blocks = match cfg.kind {
            ModelKind::ImplicitRelu => Blocks::Implicit(
                (0..cfg.blocks)
                    .map(|_| {
                        let mut w = xavier_init(m, m, cfg.xavier_gain, &mut rng)?;
                        for i in 0..m {
                            let l = (-w.get(i, i)).clamp(cfg.delta, 1.0);
                            w.set(i, i, -l);
                        }
                        TriangularBlock::from_dense_lower(&w, vec![0.0; m])
                    })
                    .collect::<Result<_>>()?,
            ),
            _ => Blocks::Explicit(
                (0..cfg.blocks)
                    .map(|_| DenseLayer::new(xavier_init(m, m, cfg.xavier_gain, &mut rng)?, vec![0.0; m]))
                    .collect::<Result<_>>()?,
            ),
        };
        let decoder = xavier_init(g, m, cfg.xavier_gain, &mut rng)?;
        Ok(Self {
            kind: cfg.kind,
            grid_size: g,
            latent_dim: m,
            delta: cfg.delta,
            seed: cfg.seed,
            encoder,
            encoder_bias: vec![0.0; m],
            blocks,
            decoder,
            decoder_bias: vec![0.0; g],
        })
    }

    /// Assembles a network from explicit parts.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        kind: ModelKind,
        delta: f64,
        seed: u64,
        encoder: DenseMatrix,
        encoder_bias: Vec<f64>,
        blocks: Blocks,
        decoder: DenseMatrix,
        decoder_bias: Vec<f64>,
    ) -> Result<Self> {
        let (m, g) = (encoder.rows(), encoder.cols());
        let shape_err = |what: &str| Error::ShapeMismatch {
            expected: format!("{what} consistent with G = {g}, M = {m}"),
            got: format!(
                "encoder {}x{}, decoder {}x{}, biases {} / {}",
                encoder.rows(),
                encoder.cols(),
                decoder.rows(),
                decoder.cols(),
                encoder_bias.len(),
                decoder_bias.len()
            ),
        };
        if decoder.rows() != g || decoder.cols() != m || encoder_bias.len() != m || decoder_bias.len() != g {
            return Err(shape_err("encoder/decoder"));
        }
        match (&blocks, kind.is_implicit()) {
            (Blocks::Implicit(b), true) => {
                if b.iter().any(|b| b.dim() != m) {
                    return Err(shape_err("blocks"));
                }
                if b.iter().flat_map(|b| b.lambda()).any(|&l| l < delta || l > 1.0) {
                    return Err(Error::HypothesisViolated(format!(
                        "implicit diagonals must lie in [-1, -{delta}]"
                    )));
                }
            }
            (Blocks::Explicit(b), false) => {
                if b.iter().any(|b| b.dim() != m) {
                    return Err(shape_err("blocks"));
                }
            }
            _ => return Err(Error::InvalidArgument(format!("block type does not match kind {kind}"))),
        }
        Ok(Self {
            kind,
            grid_size: g,
            latent_dim: m,
            delta,
            seed,
            encoder,
            encoder_bias,
            blocks,
            decoder,
            decoder_bias,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn blocks(&self) -> &Blocks {
        &self.blocks
    }

    /// Triangular blocks of an implicit network.
    pub fn implicit_blocks(&self) -> Option<&[TriangularBlock]> {
        match &self.blocks {
            Blocks::Implicit(b) => Some(b),
            Blocks::Explicit(_) => None,
        }
    }

    pub fn encoder(&self) -> (&DenseMatrix, &[f64]) {
        (&self.encoder, &self.encoder_bias)
    }

    pub fn decoder(&self) -> (&DenseMatrix, &[f64]) {
        (&self.decoder, &self.decoder_bias)
    }

    pub fn encoder_mut(&mut self) -> (&mut DenseMatrix, &mut Vec<f64>) {
        (&mut self.encoder, &mut self.encoder_bias)
    }

    pub fn decoder_mut(&mut self) -> (&mut DenseMatrix, &mut Vec<f64>) {
        (&mut self.decoder, &mut self.decoder_bias)
    }

    pub fn blocks_mut(&mut self) -> &mut Blocks {
        &mut self.blocks
    }

    fn check_field(&self, u: &Field1D) -> Result<()> {
        if u.grid_size() != self.grid_size {
            return Err(Error::ShapeMismatch {
                expected: format!("field on {} points", self.grid_size),
                got: format!("{} points", u.grid_size()),
            });
        }
        Ok(())
    }

    pub fn encode(&self, u: &[f64]) -> Vec<f64> {
        affine(&self.encoder, &self.encoder_bias, u)
    }

    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        affine(&self.decoder, &self.decoder_bias, z)
    }

    /// One pass through the block stack. Implicit blocks are resolved by the
    /// exact triangular solve; non-finite latents propagate unchanged.
    pub fn advance_latent(&self, z: &[f64]) -> Vec<f64> {
        let mut x = z.to_vec();
        if !x.iter().all(|v| v.is_finite()) {
            return vec![f64::INFINITY; x.len()];
        }
        match &self.blocks {
            Blocks::Implicit(blocks) => {
                for b in blocks {
                    x = block::direct::substitute(b, &x).0;
                }
            }
            Blocks::Explicit(layers) => {
                let act = self.kind.activation();
                for l in layers {
                    x = explicit_step(l, &x, act);
                }
            }
        }
        x
    }

    fn forward_values(&self, u: &[f64]) -> Vec<f64> {
        self.decode(&self.advance_latent(&self.encode(u)))
    }

    pub fn forward_train(&self, u0: &Field1D) -> Result<Field1D> {
        self.check_field(u0)?;
        let out = self.forward_values(u0.values());
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::HypothesisViolated(format!("{} network produced a non-finite output", self.kind)));
        }
        Field1D::new(out)
    }

    /// Encode once, advance the latent `steps` times, decode every step.
    pub fn forecast_latent(&self, u0: &Field1D, steps: usize, dt: f64) -> Result<ForecastResult> {
        self.check_field(u0)?;
        if steps == 0 {
            return Err(Error::InvalidArgument("forecast needs at least one step".into()));
        }
        let z = self.encode(u0.values());
        Ok(self.forecast_latent_from(z, steps, dt).0)
    }

    /// Continues a latent rollout; also returns the final latent state.
    pub fn forecast_latent_from(&self, mut z: Vec<f64>, steps: usize, dt: f64) -> (ForecastResult, Vec<f64>) {
        let mut result = ForecastResult::with_capacity(steps);
        let mut diverged = false;
        for n in 1..=steps {
            if !diverged {
                z = self.advance_latent(&z);
                diverged = !z.iter().all(|v| v.is_finite());
            }
            if diverged {
                z = vec![f64::INFINITY; self.latent_dim];
                result.push_diverged(n as f64 * dt, self.grid_size);
                continue;
            }
            let out = self.decode(&z);
            if out.iter().all(|v| v.is_finite()) {
                result.push(n as f64 * dt, Field1D::from_raw(out), norm_inf(&z));
            } else {
                diverged = true;
                result.push_diverged(n as f64 * dt, self.grid_size);
            }
        }
        (result, z)
    }

    /// Classic rollout: the decoded output of step `n` is the input of `n+1`.
    pub fn forecast_autoregressive(&self, u0: &Field1D, steps: usize, dt: f64) -> Result<ForecastResult> {
        self.check_field(u0)?;
        if steps == 0 {
            return Err(Error::InvalidArgument("forecast needs at least one step".into()));
        }
        let mut result = ForecastResult::with_capacity(steps);
        let mut u = u0.values().to_vec();
        let mut diverged = false;
        for n in 1..=steps {
            if !diverged {
                let z = self.advance_latent(&self.encode(&u));
                let out = self.decode(&z);
                if z.iter().chain(&out).all(|v| v.is_finite()) {
                    result.push(n as f64 * dt, Field1D::from_raw(out.clone()), norm_inf(&z));
                    u = out;
                    continue;
                }
                diverged = true;
            }
            result.push_diverged(n as f64 * dt, self.grid_size);
        }
        Ok(result)
    }

    /// Clamps every implicit `λ` into `[delta, 1]`; returns the number of
    /// clipped entries. Explicit kinds are left untouched.
    pub fn project_weights(&mut self, delta: f64) -> Result<usize> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
        }
        match &mut self.blocks {
            Blocks::Implicit(blocks) => Ok(blocks.iter_mut().map(|b| b.project(delta)).sum()),
            Blocks::Explicit(_) => {
                warn!("project_weights called on a {} network; nothing to project", self.kind);
                Ok(0)
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let blocks: usize = match &self.blocks {
            Blocks::Implicit(b) => b.iter().map(|b| 2 * b.dim() + b.couplings().len()).sum(),
            Blocks::Explicit(b) => b.iter().map(|l| l.weight.entries().len() + l.dim()).sum(),
        };
        self.encoder.entries().len() + self.latent_dim + blocks + self.decoder.entries().len() + self.grid_size
    }

    /// Forward pass keeping what the backward pass needs.
    fn forward_traced(&self, u: &[f64]) -> Trace {
        let z0 = self.encode(u);
        let mut states = Vec::with_capacity(self.blocks.len() + 1);
        let mut masks = Vec::new();
        states.push(z0);
        match &self.blocks {
            Blocks::Implicit(blocks) => {
                for b in blocks {
                    let (next, active) = block::direct::substitute(b, states.last().unwrap());
                    masks.push(GateMask { active });
                    states.push(next);
                }
            }
            Blocks::Explicit(layers) => {
                let act = self.kind.activation();
                for l in layers {
                    let next = explicit_step(l, states.last().unwrap(), act);
                    states.push(next);
                }
            }
        }
        let output = self.decode(states.last().unwrap());
        Trace { states, masks, output }
    }

    /// MSE loss of one sample, accumulating `scale · ∂loss/∂params` into
    /// `grad` (flat layout of [`Differentiable::params`]). Returns the loss
    /// and the input gradient.
    pub fn accumulate_gradient(&self, input: &[f64], target: &[f64], scale: f64, grad: &mut [f64]) -> (f64, Vec<f64>) {
        let trace = self.forward_traced(input);
        let (loss, seed) = grad::mse_and_seed(&trace.output, target);
        let seed: Vec<f64> = seed.into_iter().map(|s| s * scale).collect();
        let mut off = grad.len();

        // decoder (last in the layout)
        let top = trace.states.last().unwrap();
        let g = self.grid_size;
        off -= g;
        for (d, s) in grad[off..off + g].iter_mut().zip(&seed) {
            *d += s;
        }
        let dec_len = self.decoder.entries().len();
        off -= dec_len;
        let m = self.latent_dim;
        for (r, &s) in seed.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for (d, &x) in grad[off + r * m..off + (r + 1) * m].iter_mut().zip(top) {
                *d += s * x;
            }
        }
        let mut up = self.decoder.matvec_transposed(&seed);

        match &self.blocks {
            Blocks::Implicit(blocks) => {
                for (k, b) in blocks.iter().enumerate().rev() {
                    let gb = grad::backward_implicit_unchecked(b, &trace.states[k + 1], &trace.masks[k], &up);
                    let len = 2 * b.dim() + b.couplings().len();
                    off -= len;
                    let slot = &mut grad[off..off + len];
                    let (lam, rest) = slot.split_at_mut(b.dim());
                    let (cpl, bias) = rest.split_at_mut(b.couplings().len());
                    for (d, g) in lam.iter_mut().zip(&gb.d_diag) {
                        *d -= g;
                    }
                    for (d, g) in cpl.iter_mut().zip(&gb.d_couplings) {
                        *d += g;
                    }
                    for (d, g) in bias.iter_mut().zip(&gb.d_bias) {
                        *d += g;
                    }
                    up = gb.d_input;
                }
            }
            Blocks::Explicit(layers) => {
                let act = self.kind.activation();
                for (k, l) in layers.iter().enumerate().rev() {
                    let (dw, db, dx) = grad::backward_explicit(l, &trace.states[k], act, &up);
                    let len = dw.entries().len() + db.len();
                    off -= len;
                    for (d, g) in grad[off..off + len].iter_mut().zip(dw.entries().iter().chain(&db)) {
                        *d += g;
                    }
                    up = dx;
                }
            }
        }

        off -= m;
        for (d, s) in grad[off..off + m].iter_mut().zip(&up) {
            *d += s;
        }
        let cols = self.grid_size;
        off -= self.encoder.entries().len();
        debug_assert_eq!(off, 0);
        for (r, &s) in up.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for (d, &x) in grad[r * cols..(r + 1) * cols].iter_mut().zip(input) {
                *d += s * x;
            }
        }
        let d_input = self.encoder.matvec_transposed(&up);
        (loss, d_input)
    }

    /// Adds `step[i]` to parameter `i` in the flat layout.
    pub fn apply_update(&mut self, step: &[f64]) {
        let mut it = step.iter();
        let mut bump = |xs: &mut [f64]| {
            for x in xs {
                *x += it.next().copied().unwrap_or(0.0);
            }
        };
        self.visit_params_mut(&mut bump);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.encoder.entries_mut());
        f(&mut self.encoder_bias);
        match &mut self.blocks {
            Blocks::Implicit(blocks) => {
                for b in blocks {
                    let (l, c, bias) = b.params_mut();
                    f(l);
                    f(c);
                    f(bias);
                }
            }
            Blocks::Explicit(layers) => {
                for l in layers {
                    f(l.weight.entries_mut());
                    f(&mut l.bias);
                }
            }
        }
        f(self.decoder.entries_mut());
        f(&mut self.decoder_bias);
    }
}

struct Trace {
    /// Latent before each block and after the last one.
    states: Vec<Vec<f64>>,
    masks: Vec<GateMask>,
    output: Vec<f64>,
}

fn affine(w: &DenseMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = w.matvec(x);
    for (y, b) in y.iter_mut().zip(b) {
        *y += b;
    }
    y
}

impl Differentiable for ForecastNet {
    fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(self.encoder.entries());
        out.extend_from_slice(&self.encoder_bias);
        match &self.blocks {
            Blocks::Implicit(blocks) => {
                for b in blocks {
                    out.extend_from_slice(b.lambda());
                    out.extend_from_slice(b.couplings());
                    out.extend_from_slice(b.bias());
                }
            }
            Blocks::Explicit(layers) => {
                for l in layers {
                    out.extend_from_slice(l.weight.entries());
                    out.extend_from_slice(&l.bias);
                }
            }
        }
        out.extend_from_slice(self.decoder.entries());
        out.extend_from_slice(&self.decoder_bias);
        out
    }

    fn set_params(&mut self, params: &[f64]) {
        let mut off = 0;
        self.visit_params_mut(&mut |xs| {
            xs.copy_from_slice(&params[off..off + xs.len()]);
            off += xs.len();
        });
    }

    fn loss_and_grad(&self, input: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        if input.len() != self.grid_size || target.len() != self.grid_size {
            return Err(Error::ShapeMismatch {
                expected: format!("vectors of length {}", self.grid_size),
                got: format!("{} / {}", input.len(), target.len()),
            });
        }
        let mut grad = vec![0.0; self.param_count()];
        let (loss, d_input) = self.accumulate_gradient(input, target, 1.0, &mut grad);
        Ok((loss, grad, d_input))
    }

    fn loss(&self, input: &[f64], target: &[f64]) -> Result<f64> {
        Ok(grad::mse_and_seed(&self.forward_values(input), target).0)
    }

    fn gate_signature(&self, input: &[f64]) -> Result<Vec<bool>> {
        let trace = self.forward_traced(input);
        Ok(match &self.blocks {
            Blocks::Implicit(_) => trace.masks.iter().flat_map(|m| m.active.iter().copied()).collect(),
            Blocks::Explicit(layers) if self.kind == ModelKind::ExplicitRelu => layers
                .iter()
                .zip(&trace.states)
                .flat_map(|(l, x)| l.pre_activation(x).into_iter().map(|z| z > 0.0).collect::<Vec<_>>())
                .collect(),
            Blocks::Explicit(_) => Vec::new(),
        })
    }
}

/// Predictions along a rollout; diverged steps hold `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub times: Vec<f64>,
    pub fields: Vec<Field1D>,
    pub latent_norms: Vec<f64>,
}

impl ForecastResult {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            fields: Vec::with_capacity(n),
            latent_norms: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, field: Field1D, latent_norm: f64) {
        self.times.push(t);
        self.fields.push(field);
        self.latent_norms.push(latent_norm);
    }

    fn push_diverged(&mut self, t: f64, grid_size: usize) {
        self.push(t, Field1D::from_raw(vec![f64::INFINITY; grid_size]), f64::INFINITY);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// First step index (0-based) holding the divergence sentinel.
    pub fn first_diverged(&self) -> Option<usize> {
        self.latent_norms.iter().position(|v| !v.is_finite())
    }
}

#[cfg(test)]
mod tests;
