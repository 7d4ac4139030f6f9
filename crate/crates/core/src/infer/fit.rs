use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Field;
use crate::stmodel::ModelSpec;

use super::obs::ObsModel;
use super::optim::{fd_hessian, laplace_covariance, nelder_mead, NelderMeadOptions, TraceEntry};
use super::{normal_cdf, Engine, EngineRoute, Posterior, Z975};

pub const HYPER_NAMES: [&str; 4] = ["sigma2", "range_s", "range_t", "tau_eps"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub route: EngineRoute,
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
    /// Starting hyperparameters; heuristics from the data when absent.
    pub initial: Option<ModelSpec>,
    pub hessian_step: f64,
    /// Mix conditionals over five points along the leading posterior axis.
    pub integrate: bool,
    /// Compute the fine-scale prediction as part of the fit.
    pub predict: bool,
    /// Optional log-normal penalties `(mean, sd)` of each log hyperparameter.
    pub penalties: [Option<(f64, f64)>; 4],
    /// Prior on the latent hyperparameters added to the marginal likelihood.
    pub prior: HyperPrior,
    pub seed: u64,
}

/// Penalised-complexity prior: `P(r_s < r_s0) = p_s`, `P(r_t < r_t0) = p_t`,
/// `P(σ > σ0) = p_σ`. Thresholds are relative: `r_s0` to the domain
/// width, `r_t0` to the time span, `σ0` to the sd of the observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcPrior {
    pub range_s: (f64, f64),
    pub range_t: (f64, f64),
    pub sigma: (f64, f64),
}

impl Default for PcPrior {
    fn default() -> Self {
        Self {
            range_s: (0.05, 0.05),
            range_t: (0.02, 0.05),
            sigma: (3.0, 0.05),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperPrior {
    /// Pure marginal likelihood.
    Flat,
    Pc(PcPrior),
}

impl Default for HyperPrior {
    fn default() -> Self {
        HyperPrior::Pc(PcPrior::default())
    }
}

impl HyperPrior {
    /// Log density over `θ = (ln σ², ln r_s, ln r_t, ln τ)` up to a constant.
    pub fn log_density(&self, obs: &ObsModel, theta: &[f64]) -> f64 {
        let HyperPrior::Pc(pc) = self else {
            return 0.0;
        };
        let l = &obs.lattice;
        let (_, v) = obs.observed_moments();
        // range in dimension d: density ∝ r^{-d/2-1} exp(-λ r^{-d/2}); on log r
        let range = |ln_r: f64, r0: f64, p: f64, d: f64| {
            let lam = -p.ln() * r0.powf(d / 2.0);
            lam.ln() - 0.5 * d * ln_r - lam * (-0.5 * d * ln_r).exp()
        };
        let (fs, ps) = pc.range_s;
        let (ft, pt) = pc.range_t;
        let (ms, pv) = pc.sigma;
        let lam_sigma = -pv.ln() / (ms * v.sqrt());
        let ln_sigma = 0.5 * theta[0];
        range(theta[1], fs * l.width().max(l.height()), ps, 2.0)
            + range(theta[2], ft * l.span(), pt, 1.0)
            + lam_sigma.ln()
            + ln_sigma
            - lam_sigma * ln_sigma.exp()
    }
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            route: EngineRoute::Auto,
            max_iter: 400,
            tol: 1e-5,
            restarts: 1,
            initial: None,
            hessian_step: 0.02,
            integrate: false,
            predict: true,
            penalties: [None; 4],
            prior: HyperPrior::default(),
            seed: 0,
        }
    }
}

/// Posterior summary of one scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

/// Fine-lattice predictive summaries.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub mean: Field,
    pub sd: Field,
    pub lo95: Field,
    pub hi95: Field,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: ModelSpec,
    /// Covariance of the log hyperparameters (σ², r_s, r_t, τ_ε), row-major.
    pub theta_log_cov: [f64; 16],
    /// 95% intervals on the natural scale.
    pub theta_ci: [(f64, f64); 4],
    pub hessian_pd: bool,
    pub beta_names: Vec<String>,
    pub beta_mean: Vec<f64>,
    pub beta_sd: Vec<f64>,
    /// Posterior of `xᵀβ + z` on the unbuffered lattice.
    pub latent_mean: Field,
    pub latent_sd: Field,
    pub lo95: Field,
    pub hi95: Field,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub opt_trace: Vec<TraceEntry>,
    pub route: EngineRoute,
    pub prior: HyperPrior,
}

impl FitResult {
    pub fn theta_log_sd(&self, i: usize) -> f64 {
        self.theta_log_cov[i * 4 + i].sqrt()
    }

    /// Log-normal summaries of the hyperparameters.
    pub fn hyper_summary(&self) -> Vec<ParamSummary> {
        let th = self.theta_hat.theta();
        (0..4)
            .map(|i| {
                let sd = self.theta_log_sd(i);
                let m = (th[i] + 0.5 * sd * sd).exp();
                ParamSummary {
                    name: HYPER_NAMES[i].to_string(),
                    mean: m,
                    sd: m * (sd * sd).exp_m1().sqrt(),
                    q025: (th[i] - Z975 * sd).exp(),
                    q50: th[i].exp(),
                    q975: (th[i] + Z975 * sd).exp(),
                }
            })
            .collect()
    }

    pub fn beta_summary(&self) -> Vec<ParamSummary> {
        self.beta_names
            .iter()
            .zip(self.beta_mean.iter().zip(&self.beta_sd))
            .map(|(n, (&m, &s))| ParamSummary {
                name: n.clone(),
                mean: m,
                sd: s,
                q025: m - Z975 * s,
                q50: m,
                q975: m + Z975 * s,
            })
            .collect()
    }

    pub fn beta_ci(&self, i: usize) -> (f64, f64) {
        (
            self.beta_mean[i] - Z975 * self.beta_sd[i],
            self.beta_mean[i] + Z975 * self.beta_sd[i],
        )
    }

    /// Error out if the optimizer hit its iteration cap.
    pub fn require_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::MaxIterationsExceeded {
                iterations: self.iterations,
            })
        }
    }
}

fn heuristic_start(obs: &ObsModel) -> [f64; 4] {
    let (_, v) = obs.observed_moments();
    let l = &obs.lattice;
    [
        (v / 2.0).ln(),
        (l.width().max(l.height()) / 4.0).ln(),
        (l.span() / 4.0).ln(),
        (2.0 / v).ln(),
    ]
}

fn bounds(obs: &ObsModel) -> ([f64; 4], [f64; 4]) {
    let (_, v) = obs.observed_moments();
    let l = &obs.lattice;
    let w = l.width().max(l.height());
    (
        [
            (v * 1e-6).ln(),
            (l.dx.min(l.dy) / 4.0).ln(),
            (l.dt / 4.0).ln(),
            (1e-3 / v).ln(),
        ],
        [
            (v * 1e3).ln(),
            (20.0 * w).ln(),
            (20.0 * l.span()).ln(),
            (1e9 / v).ln(),
        ],
    )
}

fn to_theta(x: &[f64]) -> [f64; 4] {
    [x[0], x[1], x[2], x[3]]
}

/// Empirical-Bayes fit of the hyperparameters followed by prediction at the mode.
pub fn fit(obs: &ObsModel, opts: &FitOptions) -> Result<FitResult> {
    obs.check_fittable()?;
    let engine = Engine::new(obs, opts.route)?;
    let base = opts.initial.unwrap_or(obs.model);
    base.validate()?;
    let x0 = match &opts.initial {
        Some(m) => m.theta(),
        None => heuristic_start(obs),
    };
    let (lo, hi) = bounds(obs);
    let penalty = |th: &[f64]| -> f64 {
        opts.penalties
            .iter()
            .zip(th)
            .map(|(p, &t)| p.map_or(0.0, |(mu, sd)| -0.5 * ((t - mu) / sd).powi(2)))
            .sum::<f64>()
            + opts.prior.log_density(obs, th)
    };
    let objective = |x: &[f64]| -> f64 {
        let m = base.with_theta(&to_theta(x));
        match engine.log_marginal(&m) {
            Ok(ll) => -(ll + penalty(x)),
            Err(_) => f64::INFINITY,
        }
    };
    let nm_opts = NelderMeadOptions {
        max_iter: opts.max_iter,
        ftol: opts.tol,
        initial_step: 0.5,
        restarts: opts.restarts,
    };
    let res = nelder_mead(objective, &x0, &lo, &hi, &nm_opts);
    if !res.f.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    let theta_hat = base.with_theta(&to_theta(&res.x));
    let loglik = engine.log_marginal(&theta_hat)?;
    let h = fd_hessian(objective, &res.x, res.f, opts.hessian_step);
    let (cov, hessian_pd) = laplace_covariance(&h, 4);
    let theta_log_cov: [f64; 16] = std::array::from_fn(|i| cov[i]);
    let theta_ci = std::array::from_fn(|i| {
        let sd = theta_log_cov[i * 4 + i].sqrt();
        ((res.x[i] - Z975 * sd).exp(), (res.x[i] + Z975 * sd).exp())
    });

    let target = obs.target_lattice();
    let empty = Field::constant(target, 0.0);
    let mut result = FitResult {
        theta_hat,
        theta_log_cov,
        theta_ci,
        hessian_pd,
        beta_names: obs.beta_names.clone(),
        beta_mean: vec![],
        beta_sd: vec![],
        latent_mean: empty.clone(),
        latent_sd: empty.clone(),
        lo95: empty.clone(),
        hi95: empty,
        loglik,
        converged: res.converged,
        iterations: res.iterations,
        evaluations: res.evaluations,
        opt_trace: res.trace,
        route: engine.route(),
        prior: opts.prior,
    };
    let post = engine.posterior(&theta_hat, &obs.x_fine, false, opts.seed)?;
    result.beta_mean = post.beta_mean.clone();
    result.beta_sd = (0..obs.p)
        .map(|i| post.beta_cov[i * obs.p + i].max(0.0).sqrt())
        .collect();
    if opts.predict {
        let pred = predict_with(&engine, obs, &result, opts.integrate, opts.seed)?;
        result.latent_mean = pred.mean;
        result.latent_sd = pred.sd;
        result.lo95 = pred.lo95;
        result.hi95 = pred.hi95;
    }
    Ok(result)
}

/// Fine-scale prediction at the fitted hyperparameters, optionally mixing
/// over the leading direction of hyperparameter uncertainty.
pub fn predict_fine(obs: &ObsModel, fit: &FitResult, integrate: bool) -> Result<Prediction> {
    let engine = Engine::new(obs, fit.route)?;
    predict_with(&engine, obs, fit, integrate, 0)
}

fn gaussian_prediction(obs: &ObsModel, post: &Posterior) -> Result<Prediction> {
    let target = obs.target_lattice();
    let sd: Vec<f64> = post.var.iter().map(|v| v.max(0.0).sqrt()).collect();
    let lo = post
        .mean
        .iter()
        .zip(&sd)
        .map(|(m, s)| m - Z975 * s)
        .collect();
    let hi = post
        .mean
        .iter()
        .zip(&sd)
        .map(|(m, s)| m + Z975 * s)
        .collect();
    Ok(Prediction {
        mean: Field::new(target, post.mean.clone())?,
        sd: Field::new(target, sd)?,
        lo95: Field::new(target, lo)?,
        hi95: Field::new(target, hi)?,
    })
}

fn predict_with(
    engine: &Engine,
    obs: &ObsModel,
    fit: &FitResult,
    integrate: bool,
    seed: u64,
) -> Result<Prediction> {
    if !integrate {
        let post = engine.posterior(&fit.theta_hat, &obs.x_fine, true, seed)?;
        return gaussian_prediction(obs, &post);
    }
    let cov = DMatrix::from_row_slice(4, 4, &fit.theta_log_cov);
    let eig = SymmetricEigen::new(cov);
    let lead = eig.eigenvalues.imax();
    let dir = eig.eigenvectors.column(lead) * eig.eigenvalues[lead].max(0.0).sqrt();
    let th = fit.theta_hat.theta();
    let mut comps = Vec::with_capacity(5);
    for z in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let t: [f64; 4] = std::array::from_fn(|i| th[i] + z * dir[i]);
        let m = fit.theta_hat.with_theta(&t);
        let Ok(ll) = engine.log_marginal(&m) else {
            continue;
        };
        let ll = ll + fit.prior.log_density(obs, &t);
        let post = engine.posterior(&m, &obs.x_fine, true, seed)?;
        comps.push((ll, post));
    }
    if comps.is_empty() {
        return Err(Error::NonFiniteLikelihood);
    }
    let top = comps.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = comps.iter().map(|c| (c.0 - top).exp()).collect();
    let wsum: f64 = w.iter().sum();
    let w: Vec<f64> = w.into_iter().map(|v| v / wsum).collect();

    let n = comps[0].1.mean.len();
    let mut mean = vec![0.0; n];
    let mut sd = vec![0.0; n];
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for i in 0..n {
        let mus: Vec<f64> = comps.iter().map(|c| c.1.mean[i]).collect();
        let sds: Vec<f64> = comps.iter().map(|c| c.1.var[i].max(0.0).sqrt()).collect();
        let m: f64 = w.iter().zip(&mus).map(|(w, m)| w * m).sum();
        let second: f64 = w
            .iter()
            .zip(mus.iter().zip(&sds))
            .map(|(w, (m, s))| w * (s * s + m * m))
            .sum();
        mean[i] = m;
        sd[i] = (second - m * m).max(0.0).sqrt();
        lo[i] = mixture_quantile(&w, &mus, &sds, 0.025);
        hi[i] = mixture_quantile(&w, &mus, &sds, 0.975);
    }
    let target = obs.target_lattice();
    Ok(Prediction {
        mean: Field::new(target, mean)?,
        sd: Field::new(target, sd)?,
        lo95: Field::new(target, lo)?,
        hi95: Field::new(target, hi)?,
    })
}

fn mixture_cdf(w: &[f64], mus: &[f64], sds: &[f64], x: f64) -> f64 {
    w.iter()
        .zip(mus.iter().zip(sds))
        .map(|(w, (m, s))| {
            w * if *s > 0.0 {
                normal_cdf((x - m) / s)
            } else if x >= *m {
                1.0
            } else {
                0.0
            }
        })
        .sum()
}

/// Quantile of a Gaussian mixture by bisection.
pub(crate) fn mixture_quantile(w: &[f64], mus: &[f64], sds: &[f64], p: f64) -> f64 {
    let smax = sds.iter().copied().fold(0.0, f64::max);
    let mut a = mus.iter().copied().fold(f64::INFINITY, f64::min) - 10.0 * smax;
    let mut b = mus.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 10.0 * smax;
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        if mixture_cdf(w, mus, sds, mid) < p {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// `Pr{W > c}` at every fine node under the Gaussian posterior marginals.
pub fn exceedance(fit: &FitResult, threshold: f64) -> Result<Field> {
    exceedance_of(&fit.latent_mean, &fit.latent_sd, threshold)
}

/// `Pr(W > threshold)` node-wise for Gaussian marginals `N(mean, sd²)`.
pub fn exceedance_of(mean: &Field, sd: &Field, threshold: f64) -> Result<Field> {
    if !threshold.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "threshold must be finite, got {threshold}"
        )));
    }
    let values = mean
        .values
        .iter()
        .zip(&sd.values)
        .map(|(&m, &s)| {
            if s > 0.0 {
                normal_cdf((m - threshold) / s)
            } else if m > threshold {
                1.0
            } else if m < threshold {
                0.0
            } else {
                0.5
            }
        })
        .collect();
    Field::new(mean.spec, values)
}

/// Fine-scale prediction at fixed hyperparameters, without fitting.
pub fn predict_at(
    obs: &ObsModel,
    model: &ModelSpec,
    route: EngineRoute,
    seed: u64,
) -> Result<Prediction> {
    let engine = Engine::new(obs, route)?;
    let post = engine.posterior(model, &obs.x_fine, true, seed)?;
    gaussian_prediction(obs, &post)
}
