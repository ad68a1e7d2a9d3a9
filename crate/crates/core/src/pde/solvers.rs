use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Field1D;
use crate::{Error, Result};

/// Transport speed of `ψ_t = -(1/4) ψ_z`.
pub const ADVECTION_SPEED: f64 = 0.25;

struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let wavenumbers = (0..n)
            .map(|j| if 2 * j <= n { j as f64 } else { j as f64 - n as f64 })
            .collect();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            wavenumbers,
        }
    }

    fn is_nyquist(&self, j: usize) -> bool {
        self.n % 2 == 0 && 2 * j == self.n
    }

    fn transform(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    fn inverse_real(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

/// Exact periodic solution of `ψ_t = -(1/4) ψ_z`: every Fourier mode is
/// rotated by `exp(-i k t / 4)`. The Nyquist mode, which carries no sine
/// component on the grid, is scaled by `cos(k t / 4)`.
pub fn advect_exact(u0: &Field1D, t: f64) -> Result<Field1D> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("advection time must be >= 0, got {t}")));
    }
    let sp = Spectral::new(u0.grid_size());
    let mut spectrum = sp.transform(u0.values());
    for (j, c) in spectrum.iter_mut().enumerate() {
        let phase = sp.wavenumbers[j] * ADVECTION_SPEED * t;
        if sp.is_nyquist(j) {
            *c *= phase.cos();
        } else {
            *c *= Complex64::from_polar(1.0, -phase);
        }
    }
    Field1D::new(sp.inverse_real(&spectrum))
}

/// Pseudo-spectral solution of `ψ_t = -(1/2)(ψ²)_z + ν ψ_zz` at time `t`.
///
/// The quadratic term is formed in physical space with 2/3-rule truncation
/// of both the field and the product; diffusion is integrated exactly
/// through an integrating factor and the remainder advanced with classical
/// RK4 using `substeps` equal steps of `t / substeps`.
pub fn burgers_solve(u0: &Field1D, t: f64, viscosity: f64, substeps: usize) -> Result<Field1D> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("burgers time must be >= 0, got {t}")));
    }
    if !(viscosity > 0.0 && viscosity.is_finite()) {
        return Err(Error::InvalidArgument(format!("viscosity must be positive, got {viscosity}")));
    }
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    if t == 0.0 {
        return Ok(u0.clone());
    }

    let sp = Spectral::new(u0.grid_size());
    let n = sp.n;
    let cutoff = n as f64 / 3.0;
    let keep: Vec<bool> = (0..n)
        .map(|j| sp.wavenumbers[j].abs() < cutoff && !sp.is_nyquist(j))
        .collect();

    let h = t / substeps as f64;
    let half: Vec<f64> = sp
        .wavenumbers
        .iter()
        .map(|k| (-viscosity * k * k * h / 2.0).exp())
        .collect();
    let full: Vec<f64> = half.iter().map(|e| e * e).collect();

    let nonlinear = |spec: &[Complex64]| -> Vec<Complex64> {
        let filtered: Vec<Complex64> = spec
            .iter()
            .zip(&keep)
            .map(|(&c, &k)| if k { c } else { Complex64::new(0.0, 0.0) })
            .collect();
        let u = sp.inverse_real(&filtered);
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        let mut out = sp.transform(&sq);
        for (j, c) in out.iter_mut().enumerate() {
            *c = if keep[j] {
                Complex64::new(0.0, -0.5 * sp.wavenumbers[j]) * *c
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        out
    };

    let mut u_hat = sp.transform(u0.values());
    for step in 0..substeps {
        let a = nonlinear(&u_hat);
        let stage: Vec<Complex64> = (0..n).map(|j| half[j] * (u_hat[j] + a[j] * (h / 2.0))).collect();
        let b = nonlinear(&stage);
        let stage: Vec<Complex64> = (0..n).map(|j| half[j] * u_hat[j] + b[j] * (h / 2.0)).collect();
        let c = nonlinear(&stage);
        let stage: Vec<Complex64> = (0..n).map(|j| full[j] * u_hat[j] + c[j] * (h * half[j])).collect();
        let d = nonlinear(&stage);
        for j in 0..n {
            u_hat[j] = full[j] * u_hat[j]
                + (a[j] * full[j] + (b[j] + c[j]) * (2.0 * half[j]) + d[j]) * (h / 6.0);
        }
        if u_hat.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::SolverBlowup {
                time: h * (step + 1) as f64,
            });
        }
    }
    Field1D::new(sp.inverse_real(&u_hat))
}
