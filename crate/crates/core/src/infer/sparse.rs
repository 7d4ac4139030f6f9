//! Joint sparse posterior of fixed effects and latent field.

use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::sparsela::{
    factorize, CholFactor, CsrMatrix, OrderingChoice, SparseSym, SymbolicCholesky,
};
use crate::stmodel::{DiscreteModel, ModelParts, ModelSpec};

use super::modal::Posterior;
use super::obs::ObsModel;

const LOG_2PI: f64 = 1.8378770664093453;

/// How marginal posterior variances are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceMethod {
    /// Exact solves up to `threshold` unknowns, Monte Carlo beyond.
    Auto {
        threshold: usize,
        samples: usize,
    },
    Exact,
    MonteCarlo {
        samples: usize,
    },
}

impl Default for VarianceMethod {
    fn default() -> Self {
        VarianceMethod::Auto {
            threshold: 20_000,
            samples: 200,
        }
    }
}

/// `logdet Q` from the two-dimensional factors of the model.
pub fn precision_logdet(dm: &DiscreteModel) -> Result<f64> {
    let nt = dm.lattice.nt as f64;
    let ns = dm.lattice.n_space() as f64;
    match &dm.parts {
        ModelParts::Separable { phi, q_s, .. } => {
            let ld_s = factorize(q_s, OrderingChoice::Amd)?.logdet();
            let ld_t = -(nt - 1.0) * (1.0 - phi * phi).ln();
            Ok(ns * ld_t + nt * ld_s)
        }
        ModelParts::NonSeparable(p) => {
            let ld0 = factorize(&p.q0, OrderingChoice::Amd)?.logdet();
            if dm.lattice.nt == 1 {
                return Ok(ld0);
            }
            let ldw = factorize(&p.q_w, OrderingChoice::Amd)?.logdet();
            let ldf = factorize(&p.f, OrderingChoice::Amd)?.logdet();
            Ok(ld0 + (nt - 1.0) * (ldw + 2.0 * ldf))
        }
    }
}

/// Likelihood and posterior through one factorization of
/// `Q_post = blockdiag(εI, Q) + τ BᵀB` with `B = [X, P]`.
#[derive(Debug)]
pub struct SparseEngine {
    lattice: LatticeSpec,
    p: usize,
    eps: f64,
    n_obs: usize,
    btb: SparseSym<f64>,
    bty: Vec<f64>,
    yty: f64,
    x_fine: Vec<f64>,
    interior: Vec<usize>,
    symbolic: OnceLock<Arc<SymbolicCholesky>>,
    pub variance: VarianceMethod,
}

impl SparseEngine {
    pub fn new(obs: &ObsModel) -> Result<Self> {
        let p = obs.p;
        let rows = obs.observed();
        let mut trip = Vec::new();
        let mut y = Vec::with_capacity(rows.len());
        for (i, &r) in rows.iter().enumerate() {
            for q in 0..p {
                trip.push((i, q, obs.x_agg[r * p + q]));
            }
            for &(c, w) in obs.projection.row_exact(r) {
                trip.push((i, p + c, *w.numer() as f64 / *w.denom() as f64));
            }
            y.push(obs.y[r]);
        }
        let n = obs.lattice.n_nodes();
        let b = CsrMatrix::from_triplets(rows.len(), p + n, &trip)?;
        let btb = b.gram(None)?;
        let bty = b.matvec_transpose(&y)?;
        Ok(Self {
            lattice: obs.lattice,
            p,
            eps: obs.beta_prior_precision,
            n_obs: rows.len(),
            btb,
            bty,
            yty: y.iter().map(|v| v * v).sum(),
            x_fine: obs.x_fine.clone(),
            interior: obs.lattice.interior_nodes(),
            symbolic: OnceLock::new(),
            variance: VarianceMethod::default(),
        })
    }

    fn posterior_precision(&self, q: &SparseSym<f64>, tau: f64) -> Result<SparseSym<f64>> {
        let p = self.p;
        let mut trip: Vec<(usize, usize, f64)> = (0..p).map(|i| (i, i, self.eps)).collect();
        trip.extend(q.iter_lower().map(|(r, c, v)| (r + p, c + p, v)));
        let prior = SparseSym::from_triplets(p + q.n(), &trip)?;
        prior.add_scaled(1.0, &self.btb, tau)
    }

    fn factor(&self, qpost: &SparseSym<f64>) -> Result<CholFactor<f64>> {
        let sym = self
            .symbolic
            .get_or_init(|| Arc::new(SymbolicCholesky::analyze(qpost, OrderingChoice::Amd)));
        sym.factorize(qpost)
    }

    fn check_tau(tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise precision must be positive, got {tau}"
            )));
        }
        Ok(())
    }

    pub fn log_marginal(&self, m: &ModelSpec) -> Result<f64> {
        Self::check_tau(m.tau_eps)?;
        let dm = DiscreteModel::new(m, &self.lattice)?;
        let q = dm.precision()?;
        let ld_q = precision_logdet(&dm)?;
        let tau = m.tau_eps;
        let qpost = self.posterior_precision(&q, tau)?;
        let f = self.factor(&qpost)?;
        let b: Vec<f64> = self.bty.iter().map(|v| tau * v).collect();
        let quad = f.inv_quad_form(&b)?;
        let n = self.n_obs as f64;
        let lp = 0.5
            * (self.p as f64 * self.eps.ln() + ld_q + n * tau.ln() - f.logdet() - tau * self.yty
                + quad)
            - 0.5 * n * LOG_2PI;
        if !lp.is_finite() {
            return Err(Error::NonFiniteLikelihood);
        }
        Ok(lp)
    }

    pub fn posterior(&self, m: &ModelSpec, want_var: bool, seed: u64) -> Result<Posterior> {
        Self::check_tau(m.tau_eps)?;
        let dm = DiscreteModel::new(m, &self.lattice)?;
        let q = dm.precision()?;
        let tau = m.tau_eps;
        let qpost = self.posterior_precision(&q, tau)?;
        let f = self.factor(&qpost)?;
        let b: Vec<f64> = self.bty.iter().map(|v| tau * v).collect();
        let mu = f.solve(&b)?;
        let p = self.p;
        let beta = &mu[..p];
        let mean: Vec<f64> = self
            .interior
            .iter()
            .enumerate()
            .map(|(k, &node)| {
                (0..p)
                    .map(|q| self.x_fine[k * p + q] * beta[q])
                    .sum::<f64>()
                    + mu[p + node]
            })
            .collect();

        let dim = qpost.n();
        let mut beta_cov = vec![0.0; p * p];
        for i in 0..p {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            let col = f.solve(&e)?;
            for j in 0..p {
                beta_cov[j * p + i] = col[j];
            }
        }

        let var = if !want_var {
            vec![f64::NAN; mean.len()]
        } else {
            let exact = match self.variance {
                VarianceMethod::Exact => true,
                VarianceMethod::MonteCarlo { .. } => false,
                VarianceMethod::Auto { threshold, .. } => dim <= threshold,
            };
            if exact {
                let mut v = vec![0.0; dim];
                let mut out = Vec::with_capacity(mean.len());
                for (k, &node) in self.interior.iter().enumerate() {
                    v.iter_mut().for_each(|x| *x = 0.0);
                    v[..p].copy_from_slice(&self.x_fine[k * p..(k + 1) * p]);
                    v[p + node] = 1.0;
                    out.push(f.inv_quad_form(&v)?.max(0.0));
                }
                out
            } else {
                let samples = match self.variance {
                    VarianceMethod::MonteCarlo { samples }
                    | VarianceMethod::Auto { samples, .. } => samples,
                    VarianceMethod::Exact => unreachable!(),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut acc = vec![0.0; mean.len()];
                for _ in 0..samples {
                    let s = f.sample_with(&mut rng);
                    for (k, &node) in self.interior.iter().enumerate() {
                        let xb: f64 = (0..p).map(|q| self.x_fine[k * p + q] * s[q]).sum();
                        acc[k] += (xb + s[p + node]).powi(2);
                    }
                }
                acc.into_iter().map(|a| a / samples as f64).collect()
            }
        };
        Ok(Posterior {
            beta_mean: beta.to_vec(),
            beta_cov,
            mean,
            var,
        })
    }
}
