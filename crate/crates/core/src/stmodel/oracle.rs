//! Continuum space-time correlation computed from the model's spectral
//! density on a periodic spatial torus.
//!
//! The spectral density is
//! `S(k, ω) ∝ [b^{α_e} (γ_t² ω² + b^{α_s})^{α_t}]⁻¹` with `b = γ_s² + |k|²`.
//! For α_t = 1 the ω integral has the closed form
//! `π / (γ_t c) · exp(−c|h|/γ_t)` with `c = b^{α_s/2}`, so only the spatial
//! integral is discretised, as a sum over the torus wave numbers.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

use super::spec::{to_scale_params, ModelKind, ModelSpec, TemporalRangeConvention};

/// Default number of torus points per axis.
pub const DEFAULT_TORUS_POINTS: usize = 1024;

#[derive(Debug, Clone)]
pub struct SpectralOracle {
    model: ModelSpec,
    side: f64,
    n: usize,
    gamma_s2: f64,
    gamma_t: f64,
}

impl SpectralOracle {
    /// Torus of side `side` discretised with `n` wave numbers per axis.
    pub fn new(model: &ModelSpec, side: f64, n: usize) -> Result<Self> {
        model.validate()?;
        if side < 10.0 * model.range_s {
            return Err(Error::TorusTooSmall {
                side,
                lag: 10.0 * model.range_s / 2.0,
            });
        }
        if n < 8 {
            return Err(Error::InvalidParameter(format!(
                "torus needs at least 8 points, got {n}"
            )));
        }
        let sc = to_scale_params(model, 2);
        let gamma_t = match (model.kind, model.convention) {
            // Time-integrated factor exp(−|h|/γ_t) should follow the builder's convention.
            (ModelKind::Separable102, TemporalRangeConvention::Exponential) => model.range_t,
            (ModelKind::Separable102, TemporalRangeConvention::Matern) => model.range_t / 2.0,
            _ => sc.gamma_t,
        };
        Ok(Self {
            model: *model,
            side,
            n,
            gamma_s2: sc.gamma_s * sc.gamma_s,
            gamma_t,
        })
    }

    /// Torus of side `20·r_s` with [`DEFAULT_TORUS_POINTS`] points.
    pub fn for_model(model: &ModelSpec) -> Result<Self> {
        Self::new(model, 20.0 * model.range_s, DEFAULT_TORUS_POINTS)
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    fn wavenumber(&self, i: usize) -> f64 {
        let j = if i <= self.n / 2 {
            i as f64
        } else {
            i as f64 - self.n as f64
        };
        2.0 * PI * j / self.side
    }

    /// Spectrum integrated over ω, at squared wave number `k2` and time lag `h`.
    fn density(&self, k2: f64, h: f64) -> f64 {
        let (_, a_s, a_e) = self.model.alpha();
        let b = self.gamma_s2 + k2;
        let c = b.powf(a_s / 2.0);
        (-c * h.abs() / self.gamma_t).exp() / (b.powf(a_e) * c)
    }

    fn check_lags(&self, lag_s: f64) -> Result<()> {
        if lag_s.abs() > self.side / 2.0 {
            return Err(Error::TorusTooSmall {
                side: self.side,
                lag: lag_s,
            });
        }
        Ok(())
    }

    /// Unnormalised covariance at spatial lag `lag_s` (along one axis) and time lag `lag_t`.
    pub fn covariance(&self, lag_s: f64, lag_t: f64) -> Result<f64> {
        self.check_lags(lag_s)?;
        let ks: Vec<f64> = (0..self.n).map(|i| self.wavenumber(i)).collect();
        let mut total = 0.0;
        for &kx in &ks {
            let phase = (kx * lag_s).cos();
            let row: f64 = ks
                .iter()
                .map(|&ky| self.density(kx * kx + ky * ky, lag_t))
                .sum();
            total += phase * row;
        }
        Ok(total)
    }

    /// Correlation normalised by the zero-lag value.
    pub fn correlation(&self, lag_s: f64, lag_t: f64) -> Result<f64> {
        Ok(self.covariance(lag_s, lag_t)? / self.covariance(0.0, 0.0)?)
    }

    /// Correlation at every torus spatial lag for time lag `lag_t`, by a 2-D
    /// inverse FFT. Entry `[iy·n + ix]` is the lag `(ix·δ, iy·δ)` with
    /// `δ = side / n` (wrapped).
    pub fn correlation_map(&self, lag_t: f64) -> Vec<f64> {
        let n = self.n;
        let mut grid: Vec<Complex<f64>> = Vec::with_capacity(n * n);
        for iy in 0..n {
            let ky = self.wavenumber(iy);
            for ix in 0..n {
                let kx = self.wavenumber(ix);
                grid.push(Complex::new(self.density(kx * kx + ky * ky, lag_t), 0.0));
            }
        }
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_inverse(n);
        for row in grid.chunks_mut(n) {
            fft.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); n];
        for ix in 0..n {
            for iy in 0..n {
                col[iy] = grid[iy * n + ix];
            }
            fft.process(&mut col);
            for iy in 0..n {
                grid[iy * n + ix] = col[iy];
            }
        }
        let c0 = self
            .covariance(0.0, 0.0)
            .expect("zero lag is always inside the torus");
        grid.into_iter().map(|z| z.re / c0).collect()
    }
}

/// Correlation of `model` at `(lag_s, lag_t)` with the default torus.
pub fn spectral_oracle(model: &ModelSpec, lag_s: f64, lag_t: f64) -> Result<f64> {
    SpectralOracle::for_model(model)?.correlation(lag_s, lag_t)
}
