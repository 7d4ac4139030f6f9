#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stdisagg::aggregate::{build_projection, AggScheme};
use stdisagg::sparsela::SparseSym;
use stdisagg::stmodel::{ModelKind, ModelSpec};
use stdisagg::{Extents, Field, LatticeSpec, ObsModel};

pub fn dense(a: &SparseSym<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.n(), a.n(), &a.to_dense())
}

/// Random sparse SPD matrix: a random sparse symmetric pattern made
/// diagonally dominant.
pub fn random_spd(n: usize, density: f64, seed: u64) -> SparseSym<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trip = Vec::new();
    let mut rowsum = vec![0.0; n];
    for i in 0..n {
        for j in 0..i {
            if rng.gen::<f64>() < density {
                let v: f64 = rng.gen_range(-1.0..1.0);
                trip.push((i, j, v));
                rowsum[i] += v.abs();
                rowsum[j] += v.abs();
            }
        }
    }
    for i in 0..n {
        trip.push((i, i, rowsum[i] + rng.gen_range(0.1..2.0)));
    }
    SparseSym::from_triplets(n, &trip).unwrap()
}

pub fn ar1_precision(n: usize, rho: f64) -> SparseSym<f64> {
    let s = 1.0 / (1.0 - rho * rho);
    let mut t = Vec::new();
    for i in 0..n {
        let d = if i == 0 || i == n - 1 {
            1.0
        } else {
            1.0 + rho * rho
        };
        t.push((i, i, d * s));
        if i > 0 {
            t.push((i, i - 1, -rho * s));
        }
    }
    SparseSym::from_triplets(n, &t).unwrap()
}

pub fn path_laplacian(n: usize) -> SparseSym<f64> {
    let mut t = Vec::new();
    for i in 0..n {
        let deg = if n == 1 {
            0.0
        } else if i == 0 || i == n - 1 {
            1.0
        } else {
            2.0
        };
        t.push((i, i, deg));
        if i > 0 {
            t.push((i, i - 1, -1.0));
        }
    }
    SparseSym::from_triplets(n, &t).unwrap()
}

pub fn dense_kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Log-density of N(mean, cov) at y by dense Cholesky.
pub fn mvn_logpdf(y: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let n = y.len();
    let chol = cov.clone().cholesky().expect("covariance must be SPD");
    let r = nalgebra::DVector::from_iterator(n, y.iter().zip(mean).map(|(a, b)| a - b));
    let z = chol.solve(&r);
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + r.dot(&z))
}

/// Dense covariance of the observed cells: `P Q⁻¹ Pᵀ + τ⁻¹I + ε⁻¹ X Xᵀ`.
pub fn dense_obs_covariance(obs: &stdisagg::ObsModel, m: &stdisagg::ModelSpec) -> DMatrix<f64> {
    let q = dense(&stdisagg::stmodel::build_precision(m, &obs.lattice).unwrap());
    let sigma = q.try_inverse().expect("precision is invertible");
    let rows = obs.observed();
    let n = obs.lattice.n_nodes();
    let p = obs.p;
    let pm = DMatrix::from_fn(rows.len(), n, |i, j| {
        obs.projection
            .row_exact(rows[i])
            .iter()
            .find(|e| e.0 == j)
            .map_or(0.0, |e| *e.1.numer() as f64 / *e.1.denom() as f64)
    });
    let x = DMatrix::from_fn(rows.len(), p, |i, j| obs.x_agg[rows[i] * p + j]);
    let mut c = &pm * sigma * pm.transpose() + &x * x.transpose() / obs.beta_prior_precision;
    for i in 0..rows.len() {
        c[(i, i)] += 1.0 / m.tau_eps;
    }
    c
}

/// Log marginal likelihood by dense linear algebra.
pub fn dense_log_marginal(obs: &stdisagg::ObsModel, m: &stdisagg::ModelSpec) -> f64 {
    let y: Vec<f64> = obs.observed().into_iter().map(|r| obs.y[r]).collect();
    let c = dense_obs_covariance(obs, m);
    mvn_logpdf(&y, &vec![0.0; y.len()], &c)
}

pub struct Case {
    pub obs: ObsModel,
    pub model: ModelSpec,
}

/// Small random observation model (at most 200 latent nodes).
pub fn random_case(seed: u64, buffer_allowed: bool, allow_missing: bool) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, ny, nt, sf, tf) = *[
        (4, 4, 2, 2, 1),
        (4, 4, 4, 2, 2),
        (6, 6, 4, 3, 2),
        (6, 4, 3, 2, 3),
        (4, 6, 2, 1, 1),
    ]
    .get(rng.gen_range(0..5))
    .unwrap();
    let mut buffer = if buffer_allowed {
        rng.gen_range(0..=1)
    } else {
        0
    };
    if (nx + 2 * buffer) * (ny + 2 * buffer) * nt > 200 {
        buffer = 0;
    }
    let extents = Extents {
        x: (0.0, 1.0),
        y: (0.0, ny as f64 / nx as f64),
        t: (0.0, nt as f64 * 0.5),
    };
    let lat = LatticeSpec::build(nx, ny, nt, extents, buffer).unwrap();
    let kind = if rng.gen_bool(0.5) {
        ModelKind::Separable102
    } else {
        ModelKind::NonSeparable121
    };
    let model = ModelSpec::new(
        kind,
        rng.gen_range(0.1..2.0),
        rng.gen_range(0.15..0.8),
        rng.gen_range(0.5..6.0),
        rng.gen_range(2.0..50.0),
    )
    .unwrap();
    let proj = build_projection(&lat, AggScheme::new(sf, tf)).unwrap();
    let n_cov = rng.gen_range(0..=2);
    let covs: Vec<Field> = (0..n_cov)
        .map(|_| {
            Field::new(
                lat,
                (0..lat.n_nodes())
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let names: Vec<String> = (0..n_cov).map(|i| format!("x{i}")).collect();
    let mut y: Vec<f64> = (0..proj.rows()).map(|_| rng.gen_range(-1.0..2.0)).collect();
    if allow_missing && rng.gen_bool(0.5) {
        let r = rng.gen_range(0..y.len());
        y[r] = f64::NAN;
    }
    Case {
        obs: ObsModel::new(lat, proj, y, &covs, &names, model).unwrap(),
        model,
    }
}
