//! Finite-difference discretisation of `γ² − Δ` on a regular grid.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::scalar::Scalar;
use crate::sparsela::{CsrMatrix, SparseSym};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Reflecting (zero-flux) boundary.
    Neumann,
    /// Wrap-around; used for stationarity checks and Fourier tests.
    Periodic,
}

/// Lumped mass `C`, stiffness `G` and `K = γ²C + G` on an `nx × ny` grid.
#[derive(Debug, Clone)]
pub struct SpatialOperator<T> {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub gamma_s: f64,
    pub boundary: Boundary,
    pub c: SparseSym<T>,
    pub g: SparseSym<T>,
    pub k: SparseSym<T>,
}

/// Operator on the full (buffered) spatial grid of a lattice.
pub fn build_operator<T: Scalar>(spec: &LatticeSpec, gamma_s: f64) -> Result<SpatialOperator<T>> {
    SpatialOperator::on_grid(
        spec.full_nx(),
        spec.full_ny(),
        spec.dx,
        spec.dy,
        gamma_s,
        Boundary::Neumann,
    )
}

/// `K` for `k = 1`, `K C⁻¹ K` for `k = 2`.
pub fn operator_power<T: Scalar>(op: &SpatialOperator<T>, k: u32) -> Result<SparseSym<T>> {
    match k {
        1 => Ok(op.k.clone()),
        2 => op.k_cinv_k(),
        _ => Err(Error::UnsupportedPower(k)),
    }
}

/// Stiffness matrix `G` alone.
pub fn stiffness<T: Scalar>(
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    boundary: Boundary,
) -> Result<SparseSym<T>> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidExtent(format!(
            "grid must be non-empty, got {nx}×{ny}"
        )));
    }
    let n = nx * ny;
    let wx = T::of(dy / dx);
    let wy = T::of(dx / dy);
    let mut diag = vec![T::zero(); n];
    let mut trip = Vec::with_capacity(3 * n);
    let mut link = |a: usize, b: usize, w: T, diag: &mut Vec<T>| {
        diag[a] += w;
        diag[b] += w;
        trip.push((a, b, -w));
    };
    for iy in 0..ny {
        for ix in 0..nx {
            let i = iy * nx + ix;
            if ix + 1 < nx {
                link(i, i + 1, wx, &mut diag);
            } else if boundary == Boundary::Periodic && nx > 1 {
                link(i, iy * nx, wx, &mut diag);
            }
            if iy + 1 < ny {
                link(i, i + nx, wy, &mut diag);
            } else if boundary == Boundary::Periodic && ny > 1 {
                link(i, ix, wy, &mut diag);
            }
        }
    }
    trip.extend(diag.into_iter().enumerate().map(|(i, d)| (i, i, d)));
    SparseSym::from_triplets(n, &trip)
}

impl<T: Scalar> SpatialOperator<T> {
    pub fn on_grid(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        gamma_s: f64,
        boundary: Boundary,
    ) -> Result<Self> {
        if !(gamma_s > 0.0 && gamma_s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma_s must be positive, got {gamma_s}"
            )));
        }
        if !(dx > 0.0 && dy > 0.0) {
            return Err(Error::InvalidExtent(format!(
                "spacings must be positive, got {dx}, {dy}"
            )));
        }
        let g = stiffness(nx, ny, dx, dy, boundary)?;
        let area = dx * dy;
        let c = SparseSym::diagonal(&vec![T::of(area); nx * ny]);
        let k = g.add_scaled(T::one(), &c, T::of(gamma_s * gamma_s))?;
        Ok(Self {
            nx,
            ny,
            dx,
            dy,
            gamma_s,
            boundary,
            c,
            g,
            k,
        })
    }

    pub fn n(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// `K C⁻¹ K`.
    pub fn k_cinv_k(&self) -> Result<SparseSym<T>> {
        let cinv: Vec<T> = self.c.diag().into_iter().map(|c| T::one() / c).collect();
        let k = CsrMatrix::from_sym(&self.k);
        let trip: Vec<_> = k.iter().map(|(r, c, v)| (r, c, v * cinv[r])).collect();
        let cinv_k = CsrMatrix::from_triplets(self.n(), self.n(), &trip)?;
        k.matmul(&cinv_k)?.to_sym_lower()
    }
}

/// Eigen-decomposition of the Neumann stiffness along one axis: the
/// second-difference matrix with reflecting ends is diagonalised by the
/// DCT-II basis.
#[derive(Debug, Clone)]
pub struct NeumannAxis {
    pub n: usize,
    /// Eigenvalues of the unit-weight second-difference matrix, `2 − 2cos(πk/n)`.
    pub eigenvalues: Vec<f64>,
    /// Row-major `n × n`: entry `[k·n + i]` is mode `k` at node `i`.
    pub basis: Vec<f64>,
}

impl NeumannAxis {
    pub fn new(n: usize) -> Self {
        let nf = n as f64;
        let eigenvalues = (0..n)
            .map(|k| 2.0 - 2.0 * (PI * k as f64 / nf).cos())
            .collect();
        let mut basis = vec![0.0; n * n];
        for k in 0..n {
            let c = if k == 0 {
                (1.0 / nf).sqrt()
            } else {
                (2.0 / nf).sqrt()
            };
            for i in 0..n {
                basis[k * n + i] = c * (PI * k as f64 * (i as f64 + 0.5) / nf).cos();
            }
        }
        Self {
            n,
            eigenvalues,
            basis,
        }
    }

    pub fn mode(&self, k: usize) -> &[f64] {
        &self.basis[k * self.n..(k + 1) * self.n]
    }
}

/// Spectrum of `G` on an `nx × ny` Neumann grid. Mode `(kx, ky)` has index
/// `ky·nx + kx` and eigenvector `u(ix, iy) = ux_kx(ix)·uy_ky(iy)`.
#[derive(Debug, Clone)]
pub struct NeumannSpectrum {
    pub x: NeumannAxis,
    pub y: NeumannAxis,
    pub wx: f64,
    pub wy: f64,
}

impl NeumannSpectrum {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Self {
        Self {
            x: NeumannAxis::new(nx),
            y: NeumannAxis::new(ny),
            wx: dy / dx,
            wy: dx / dy,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.x.n * self.y.n
    }

    /// Eigenvalue of `G` for mode index `ky·nx + kx`.
    pub fn stiffness_eigenvalue(&self, mode: usize) -> f64 {
        let (kx, ky) = (mode % self.x.n, mode / self.x.n);
        self.wx * self.x.eigenvalues[kx] + self.wy * self.y.eigenvalues[ky]
    }

    /// Per-mode mean of `u_k²` over the sub-grid starting at `(x0, y0)`
    /// with `nx × ny` nodes.
    pub fn window_mean_square(&self, x0: usize, nx: usize, y0: usize, ny: usize) -> Vec<f64> {
        let axis = |a: &NeumannAxis, o: usize, n: usize| -> Vec<f64> {
            (0..a.n)
                .map(|k| a.mode(k)[o..o + n].iter().map(|u| u * u).sum::<f64>() / n as f64)
                .collect()
        };
        let (sx, sy) = (axis(&self.x, x0, nx), axis(&self.y, y0, ny));
        sy.iter()
            .flat_map(|b| sx.iter().map(move |a| a * b))
            .collect()
    }

    /// Value of mode `mode` at spatial node `iy·nx + ix`.
    pub fn value(&self, mode: usize, node: usize) -> f64 {
        let (kx, ky) = (mode % self.x.n, mode / self.x.n);
        let (ix, iy) = (node % self.x.n, node / self.x.n);
        self.x.basis[kx * self.x.n + ix] * self.y.basis[ky * self.y.n + iy]
    }
}
