//! Projection from fine lattice nodes to aggregated space-time cells.

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Field, LatticeSpec};
use crate::sparsela::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggScheme {
    pub s_f: usize,
    pub t_f: usize,
}

impl AggScheme {
    pub fn new(s_f: usize, t_f: usize) -> Self {
        Self { s_f, t_f }
    }

    pub fn check(&self, lattice: &LatticeSpec) -> Result<()> {
        for (axis, factor, extent) in [
            ("x", self.s_f, lattice.nx),
            ("y", self.s_f, lattice.ny),
            ("t", self.t_f, lattice.nt),
        ] {
            if factor == 0 || extent % factor != 0 {
                return Err(Error::IndivisibleFactor {
                    axis,
                    factor,
                    extent,
                });
            }
        }
        Ok(())
    }
}

/// Row-stochastic sparse matrix averaging lattice nodes into cells.
///
/// Rows are cells in time-major order (`window·R + region`); columns are
/// lattice nodes, buffer included. Weights are kept as exact rationals so
/// every row sums to one exactly.
#[derive(Debug, Clone)]
pub struct Projection {
    pub n_regions: usize,
    pub n_windows: usize,
    cols: usize,
    rows_exact: Vec<Vec<(usize, Ratio<u64>)>>,
    matrix: CsrMatrix<f64>,
    /// Uniform block layout, when the projection came from [`build_projection`].
    pub scheme: Option<AggScheme>,
    /// Coarse grid shape `(ncx, ncy)` for block projections.
    pub coarse_shape: Option<(usize, usize)>,
}

impl Projection {
    /// General projection from cell-centre memberships. `region_of[s]` gives
    /// the region of interior spatial node `s` (window-relative, row-major),
    /// `window_of[t]` the window of time node `t`. Each node of region `i`
    /// and window `j` gets weight `1/(|R_i|·|T_j|)`.
    pub fn from_membership(
        lattice: &LatticeSpec,
        region_of: &[Option<usize>],
        window_of: &[Option<usize>],
    ) -> Result<Self> {
        let ns = lattice.nx * lattice.ny;
        if region_of.len() != ns {
            return Err(Error::DimensionMismatch {
                expected: ns,
                found: region_of.len(),
            });
        }
        if window_of.len() != lattice.nt {
            return Err(Error::DimensionMismatch {
                expected: lattice.nt,
                found: window_of.len(),
            });
        }
        let n_regions = region_of.iter().flatten().max().map_or(0, |m| m + 1);
        let n_windows = window_of.iter().flatten().max().map_or(0, |m| m + 1);
        let mut region_nodes = vec![Vec::new(); n_regions];
        for (s, r) in region_of.iter().enumerate() {
            if let Some(r) = r {
                region_nodes[*r].push(s);
            }
        }
        let mut window_nodes = vec![Vec::new(); n_windows];
        for (t, w) in window_of.iter().enumerate() {
            if let Some(w) = w {
                window_nodes[*w].push(t);
            }
        }
        if let Some(i) = region_nodes.iter().position(Vec::is_empty) {
            return Err(Error::InvalidParameter(format!(
                "region {i} contains no lattice node"
            )));
        }
        if let Some(j) = window_nodes.iter().position(Vec::is_empty) {
            return Err(Error::InvalidParameter(format!(
                "window {j} contains no time node"
            )));
        }

        let mut rows_exact = Vec::with_capacity(n_regions * n_windows);
        let mut trip = Vec::new();
        for (j, times) in window_nodes.iter().enumerate() {
            for (i, spaces) in region_nodes.iter().enumerate() {
                let w = Ratio::new(1u64, (spaces.len() * times.len()) as u64);
                let row = j * n_regions + i;
                let mut entries = Vec::with_capacity(spaces.len() * times.len());
                for &t in times {
                    for &s in spaces {
                        let node = lattice.interior_index(s % lattice.nx, s / lattice.nx, t);
                        entries.push((node, w));
                        trip.push((row, node, *w.numer() as f64 / *w.denom() as f64));
                    }
                }
                entries.sort_by_key(|e| e.0);
                rows_exact.push(entries);
            }
        }
        let matrix = CsrMatrix::from_triplets(n_regions * n_windows, lattice.n_nodes(), &trip)?;
        Ok(Self {
            n_regions,
            n_windows,
            cols: lattice.n_nodes(),
            rows_exact,
            matrix,
            scheme: None,
            coarse_shape: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.n_regions * self.n_windows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    pub fn row_exact(&self, row: usize) -> &[(usize, Ratio<u64>)] {
        &self.rows_exact[row]
    }

    /// Exact rational sum of a row's weights.
    pub fn row_sum_exact(&self, row: usize) -> Ratio<u64> {
        self.rows_exact[row]
            .iter()
            .fold(Ratio::from_integer(0), |acc, (_, w)| acc + w)
    }

    /// Row of cell `(region, window)`.
    pub fn cell_index(&self, region: usize, window: usize) -> usize {
        window * self.n_regions + region
    }

    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.matrix.matvec(values)
    }
}

/// Uniform block projection: `s_f × s_f` cells over `t_f` time steps, with
/// weight `1/(s_f²·t_f)`. Regions are numbered row-major on the coarse grid.
pub fn build_projection(lattice: &LatticeSpec, scheme: AggScheme) -> Result<Projection> {
    scheme.check(lattice)?;
    let ncx = lattice.nx / scheme.s_f;
    let region_of: Vec<Option<usize>> = (0..lattice.nx * lattice.ny)
        .map(|s| {
            let (ix, iy) = (s % lattice.nx, s / lattice.nx);
            Some((iy / scheme.s_f) * ncx + ix / scheme.s_f)
        })
        .collect();
    let window_of: Vec<Option<usize>> = (0..lattice.nt).map(|t| Some(t / scheme.t_f)).collect();
    let mut p = Projection::from_membership(lattice, &region_of, &window_of)?;
    p.scheme = Some(scheme);
    p.coarse_shape = Some((ncx, lattice.ny / scheme.s_f));
    Ok(p)
}

/// `y = P·W + e` with `e ~ N(0, 1/τ_ε)`; an infinite `tau_eps` adds no noise.
pub fn aggregate_observe(
    field: &Field,
    p: &Projection,
    tau_eps: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(tau_eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau_eps must be positive, got {tau_eps}"
        )));
    }
    let mut y = p.apply(&field.values)?;
    if tau_eps.is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0 / tau_eps.sqrt())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for v in y.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    Ok(y)
}

/// Aggregated design: an intercept column followed by the cell mean of each covariate.
/// Row-major, `rows × (1 + covariates.len())`.
pub fn aggregate_covariates(covariates: &[Field], p: &Projection) -> Result<Vec<f64>> {
    let cols = 1 + covariates.len();
    let mut x = vec![1.0; p.rows() * cols];
    for (j, f) in covariates.iter().enumerate() {
        let means = p.apply(&f.values)?;
        for (r, m) in means.into_iter().enumerate() {
            x[r * cols + 1 + j] = m;
        }
    }
    Ok(x)
}
