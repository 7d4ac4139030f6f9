//! Exact spectral form of the discrete models on a Neumann grid.
//!
//! The lumped-mass operator `K` is diagonalised by products of DCT-II
//! vectors, and both space-time precisions are functions of `K` alone. The
//! latent field therefore splits into independent stationary AR(1) chains,
//! one per spatial mode `k`, with stationary variance `v_k` and lag-`dt`
//! coefficient `φ_k`.

use crate::error::Result;
use crate::lattice::LatticeSpec;
use crate::operators::NeumannSpectrum;

use super::precision::temporal_phi;
use super::spec::{to_scale_params, ModelKind, ModelSpec};

#[derive(Debug, Clone)]
pub struct ModalSpectrum {
    pub spectrum: NeumannSpectrum,
    /// Eigenvalues of `K`.
    pub kappa: Vec<f64>,
    pub var: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Unnormalised per-mode variance and AR coefficient.
pub fn mode_weights(kind: ModelKind, kappa: f64, area: f64, a: f64, phi_sep: f64) -> (f64, f64) {
    match kind {
        ModelKind::Separable102 => (area / (kappa * kappa), phi_sep),
        ModelKind::NonSeparable121 => (1.0 / (kappa * kappa * (2.0 * a + kappa)), a / (a + kappa)),
    }
}

/// Marginal variance averaged over the window nodes of `lattice` for a field
/// with independent mode variances `var`.
pub fn window_mean_variance(spectrum: &NeumannSpectrum, lattice: &LatticeSpec, var: &[f64]) -> f64 {
    let b = lattice.buffer;
    spectrum
        .window_mean_square(b, lattice.nx, b, lattice.ny)
        .iter()
        .zip(var)
        .map(|(w, v)| w * v)
        .sum()
}

/// Window-mean marginal variance of the model before σ² scaling.
pub fn unit_window_variance(model: &ModelSpec, lattice: &LatticeSpec) -> f64 {
    let spectrum =
        NeumannSpectrum::new(lattice.full_nx(), lattice.full_ny(), lattice.dx, lattice.dy);
    let scales = to_scale_params(model, 2);
    let area = lattice.cell_area();
    let g2 = scales.gamma_s * scales.gamma_s * area;
    let a = scales.gamma_t * area / lattice.dt;
    let var: Vec<f64> = (0..spectrum.n_modes())
        .map(|k| {
            mode_weights(
                model.kind,
                g2 + spectrum.stiffness_eigenvalue(k),
                area,
                a,
                0.0,
            )
            .0
        })
        .collect();
    window_mean_variance(&spectrum, lattice, &var)
}

impl ModalSpectrum {
    /// Spectrum on the full (buffered) spatial grid of `lattice`, normalised
    /// so the marginal variance averaged over the window equals σ².
    pub fn new(model: &ModelSpec, lattice: &LatticeSpec) -> Result<Self> {
        model.validate()?;
        lattice.validate()?;
        let spectrum =
            NeumannSpectrum::new(lattice.full_nx(), lattice.full_ny(), lattice.dx, lattice.dy);
        Ok(Self::with_spectrum(model, lattice, spectrum))
    }

    pub fn with_spectrum(
        model: &ModelSpec,
        lattice: &LatticeSpec,
        spectrum: NeumannSpectrum,
    ) -> Self {
        let scales = to_scale_params(model, 2);
        let area = lattice.cell_area();
        let g2 = scales.gamma_s * scales.gamma_s * area;
        let a = scales.gamma_t * area / lattice.dt;
        let phi_sep = temporal_phi(model, lattice.dt);
        let nm = spectrum.n_modes();
        let mut kappa = Vec::with_capacity(nm);
        let mut var = Vec::with_capacity(nm);
        let mut phi = Vec::with_capacity(nm);
        for k in 0..nm {
            let kp = g2 + spectrum.stiffness_eigenvalue(k);
            let (v, p) = mode_weights(model.kind, kp, area, a, phi_sep);
            kappa.push(kp);
            var.push(v);
            phi.push(p);
        }
        let scale = model.sigma2 / window_mean_variance(&spectrum, lattice, &var);
        var.iter_mut().for_each(|v| *v *= scale);
        Self {
            spectrum,
            kappa,
            var,
            phi,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.kappa.len()
    }

    /// Covariance between spatial nodes `s1`, `s2` (full-grid indices) at
    /// time lag `lag` steps.
    pub fn covariance(&self, s1: usize, s2: usize, lag: usize) -> f64 {
        (0..self.n_modes())
            .map(|k| {
                self.spectrum.value(k, s1)
                    * self.spectrum.value(k, s2)
                    * self.var[k]
                    * self.phi[k].powi(lag as i32)
            })
            .sum()
    }

    pub fn correlation(&self, s1: usize, s2: usize, lag: usize) -> f64 {
        self.covariance(s1, s2, lag)
            / (self.covariance(s1, s1, 0) * self.covariance(s2, s2, 0)).sqrt()
    }
}
