//! Areal comparison model: Besag spatial field with AR(1) time dependence,
//! fitted at the aggregated resolution and duplicated onto the fine lattice.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::aggregate::Projection;
use crate::error::{Error, Result};
use crate::infer::{
    fd_hessian, laplace_covariance, nelder_mead, ModalBasis, ModalEngine, ModeParams,
    NelderMeadOptions, Z975,
};
use crate::lattice::{Field, LatticeSpec};
use crate::sparsela::SparseSym;

/// Undirected region graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    pub n_regions: usize,
    /// Each edge once, as `(i, j)` with `i < j`.
    pub pairs: Vec<(usize, usize)>,
}

impl Adjacency {
    pub fn from_pairs(n_regions: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(a, b) in pairs {
            if a >= n_regions || b >= n_regions {
                return Err(Error::IndexOutOfRange {
                    index: a.max(b),
                    len: n_regions,
                });
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at region {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            n_regions,
            pairs: set.into_iter().collect(),
        })
    }

    /// Rook neighbours on an `ncx × ncy` grid numbered row-major.
    pub fn rook(ncx: usize, ncy: usize) -> Self {
        let mut pairs = Vec::new();
        for iy in 0..ncy {
            for ix in 0..ncx {
                let i = iy * ncx + ix;
                if ix + 1 < ncx {
                    pairs.push((i, i + 1));
                }
                if iy + 1 < ncy {
                    pairs.push((i, i + ncx));
                }
            }
        }
        Self {
            n_regions: ncx * ncy,
            pairs,
        }
    }

    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n_regions];
        for &(a, b) in &self.pairs {
            nb[a].push(b);
            nb[b].push(a);
        }
        nb
    }

    pub fn components(&self) -> usize {
        let nb = self.neighbours();
        let mut seen = vec![false; self.n_regions];
        let mut count = 0;
        for s in 0..self.n_regions {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &w in &nb[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        count
    }
}

/// `Q_S = D − W`. Fails on disconnected graphs, whose null space exceeds one.
pub fn besag_precision(adj: &Adjacency) -> Result<SparseSym<f64>> {
    let components = adj.components();
    if components > 1 {
        return Err(Error::DisconnectedGraph { components });
    }
    let mut trip = Vec::with_capacity(adj.n_regions + adj.pairs.len());
    let mut deg = vec![0.0; adj.n_regions];
    for &(a, b) in &adj.pairs {
        deg[a] += 1.0;
        deg[b] += 1.0;
        trip.push((b, a, -1.0));
    }
    for (i, d) in deg.into_iter().enumerate() {
        trip.push((i, i, d));
    }
    SparseSym::from_triplets(adj.n_regions, &trip)
}

/// How the intrinsic Besag field is made proper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BesagProper {
    /// Condition on a zero sum in every time slice.
    SumToZero,
    /// Add `δ·I` to `Q_S`.
    Jitter(f64),
}

impl Default for BesagProper {
    fn default() -> Self {
        BesagProper::SumToZero
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArealOptions {
    pub proper: BesagProper,
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
    pub hessian_step: f64,
    pub beta_prior_precision: f64,
}

impl Default for ArealOptions {
    fn default() -> Self {
        Self {
            proper: BesagProper::SumToZero,
            max_iter: 400,
            tol: 1e-5,
            restarts: 1,
            hessian_step: 0.02,
            beta_prior_precision: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArealFit {
    pub beta_mean: Vec<f64>,
    pub beta_sd: Vec<f64>,
    pub rho_hat: f64,
    pub rho_ci: (f64, f64),
    pub tau_s_hat: f64,
    pub tau_eps_hat: f64,
    /// Covariance of `(atanh ρ, log τ_S, log τ_ε)`, row-major.
    pub theta_cov: [f64; 9],
    /// Posterior of `xᵀβ + z` per cell, time-major like the observations.
    pub cell_mean: Vec<f64>,
    pub cell_sd: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
}

/// Modal weights of the Besag–AR(1) field.
fn mode_params(lambda: &[f64], rho: f64, tau_s: f64) -> ModeParams {
    let var = lambda
        .iter()
        .map(|&l| {
            if l > 0.0 {
                1.0 / (tau_s * l * (1.0 - rho * rho))
            } else {
                0.0
            }
        })
        .collect();
    ModeParams {
        var,
        phi: vec![rho; lambda.len()],
    }
}

/// Fit the areal model to `y` (time-major, `window·R + region`) with design `x` (`p` columns).
pub fn fit_areal(
    y: &[f64],
    x: &[f64],
    p: usize,
    adj: &Adjacency,
    n_times: usize,
    opts: &ArealOptions,
) -> Result<ArealFit> {
    let r = adj.n_regions;
    if y.len() != r * n_times {
        return Err(Error::DimensionMismatch {
            expected: r * n_times,
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "areal fit needs complete observations".into(),
        ));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    if !(var > 1e-24 * mean.abs().max(1.0).powi(2)) {
        return Err(Error::DegenerateData(
            "all observed values are equal".into(),
        ));
    }

    let qs = besag_precision(adj)?;
    let mut dense = DMatrix::from_row_slice(r, r, &qs.to_dense());
    if let BesagProper::Jitter(d) = opts.proper {
        for i in 0..r {
            dense[(i, i)] += d;
        }
    }
    let eig = SymmetricEigen::new(dense);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut lambda = Vec::with_capacity(r);
    let mut basis = Vec::with_capacity(r * r);
    for (rank, &k) in order.iter().enumerate() {
        let l = eig.eigenvalues[k];
        lambda.push(match opts.proper {
            // the constant vector is removed by the constraint
            BesagProper::SumToZero if rank == 0 => 0.0,
            _ => l.max(0.0),
        });
        basis.extend(eig.eigenvectors.column(k).iter());
    }
    if lambda.iter().skip(1).any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite { pivot: 0 });
    }
    let engine = ModalEngine::new(
        ModalBasis::identity_map(r, basis),
        n_times,
        1,
        y,
        x,
        p,
        opts.beta_prior_precision,
    )?;

    let objective = |t: &[f64]| -> f64 {
        let pr = mode_params(&lambda, t[0].tanh(), t[1].exp());
        engine
            .log_marginal(&pr, t[2].exp())
            .map_or(f64::INFINITY, |ll| -ll)
    };
    let x0 = [0.5f64.atanh(), (1.0 / var).ln(), (2.0 / var).ln()];
    let lo = [-4.0, (1e-4 / var).ln(), (1e-3 / var).ln()];
    let hi = [4.0, (1e6 / var).ln(), (1e9 / var).ln()];
    let nm = NelderMeadOptions {
        max_iter: opts.max_iter,
        ftol: opts.tol,
        initial_step: 0.5,
        restarts: opts.restarts,
    };
    let res = nelder_mead(objective, &x0, &lo, &hi, &nm);
    if !res.f.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    let h = fd_hessian(objective, &res.x, res.f, opts.hessian_step);
    let (cov, _) = laplace_covariance(&h, 3);
    let theta_cov: [f64; 9] = std::array::from_fn(|i| cov[i]);
    let (rho, tau_s, tau_eps) = (res.x[0].tanh(), res.x[1].exp(), res.x[2].exp());
    let sd0 = theta_cov[0].sqrt();
    let post = engine.posterior(&mode_params(&lambda, rho, tau_s), tau_eps, x, true)?;
    Ok(ArealFit {
        beta_sd: (0..p)
            .map(|i| post.beta_cov[i * p + i].max(0.0).sqrt())
            .collect(),
        beta_mean: post.beta_mean,
        rho_hat: rho,
        rho_ci: (
            (res.x[0] - Z975 * sd0).tanh(),
            (res.x[0] + Z975 * sd0).tanh(),
        ),
        tau_s_hat: tau_s,
        tau_eps_hat: tau_eps,
        theta_cov,
        cell_sd: post.var.iter().map(|v| v.max(0.0).sqrt()).collect(),
        cell_mean: post.mean,
        loglik: -res.f,
        converged: res.converged,
    })
}

/// Copy each cell's value onto the fine nodes it covers.
pub fn duplicate_to_fine(
    cell_values: &[f64],
    projection: &Projection,
    lattice: &LatticeSpec,
) -> Result<Field> {
    if cell_values.len() != projection.rows() {
        return Err(Error::DimensionMismatch {
            expected: projection.rows(),
            found: cell_values.len(),
        });
    }
    let target = lattice.with_buffer(0);
    let mut position = vec![usize::MAX; lattice.n_nodes()];
    for (k, node) in lattice.interior_nodes().into_iter().enumerate() {
        position[node] = k;
    }
    let mut out = vec![f64::NAN; target.n_nodes()];
    for (row, &v) in cell_values.iter().enumerate() {
        for &(node, _) in projection.row_exact(row) {
            out[position[node]] = v;
        }
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(Error::ShapeMismatch(
            "projection does not cover every fine node".into(),
        ));
    }
    Field::new(target, out)
}
