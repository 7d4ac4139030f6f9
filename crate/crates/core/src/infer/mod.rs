//! Marginal likelihood, hyperparameter fitting and fine-scale prediction.

mod fit;
mod modal;
mod obs;
mod optim;
mod sparse;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::operators::NeumannSpectrum;
use crate::stmodel::{ModalSpectrum, ModelSpec};

pub use fit::{
    exceedance, exceedance_of, fit, predict_at, predict_fine, FitOptions, FitResult, HyperPrior,
    ParamSummary, PcPrior, Prediction, HYPER_NAMES,
};
pub use modal::{
    axis_aggregation_map, point_window_covariance, window_covariance, FineModes, ModalBasis,
    ModalEngine, ModeParams, Posterior,
};
pub use obs::{ObsModel, DEFAULT_BETA_PRECISION};
pub use optim::{
    fd_hessian, laplace_covariance, nelder_mead, NelderMeadOptions, NelderMeadResult, TraceEntry,
    MIN_CURVATURE,
};
pub use sparse::{precision_logdet, SparseEngine, VarianceMethod};

/// Two-sided 95% normal quantile.
pub const Z975: f64 = 1.959963984540054;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineRoute {
    /// Modal when the data allow it, sparse otherwise.
    #[default]
    Auto,
    Sparse,
    Modal,
}

/// A likelihood/posterior engine bound to one data set.
#[derive(Debug)]
pub enum Engine {
    Sparse(SparseEngine),
    Modal {
        engine: ModalEngine,
        lattice: LatticeSpec,
        spectrum: NeumannSpectrum,
    },
}

/// The modal route needs complete data, no buffer and a uniform block projection.
pub fn modal_applicable(obs: &ObsModel) -> bool {
    obs.lattice.buffer == 0 && obs.projection.scheme.is_some() && obs.is_complete()
}

impl Engine {
    pub fn new(obs: &ObsModel, route: EngineRoute) -> Result<Self> {
        let use_modal = match route {
            EngineRoute::Auto => modal_applicable(obs),
            EngineRoute::Modal => {
                if !modal_applicable(obs) {
                    return Err(Error::InvalidParameter(
                        "modal engine needs complete data on an unbuffered block projection".into(),
                    ));
                }
                true
            }
            EngineRoute::Sparse => false,
        };
        if !use_modal {
            return Ok(Engine::Sparse(SparseEngine::new(obs)?));
        }
        let l = obs.lattice;
        let scheme = obs.projection.scheme.expect("checked above");
        let basis = ModalBasis::block_dct(l.nx, l.ny, l.dx, l.dy, scheme.s_f)?;
        let engine = ModalEngine::new(
            basis,
            l.nt,
            scheme.t_f,
            &obs.y,
            &obs.x_agg,
            obs.p,
            obs.beta_prior_precision,
        )?;
        Ok(Engine::Modal {
            engine,
            lattice: l,
            spectrum: NeumannSpectrum::new(l.nx, l.ny, l.dx, l.dy),
        })
    }

    pub fn route(&self) -> EngineRoute {
        match self {
            Engine::Sparse(_) => EngineRoute::Sparse,
            Engine::Modal { .. } => EngineRoute::Modal,
        }
    }

    fn mode_params(
        m: &ModelSpec,
        lattice: &LatticeSpec,
        spectrum: &NeumannSpectrum,
    ) -> Result<ModeParams> {
        m.validate()?;
        let s = ModalSpectrum::with_spectrum(m, lattice, spectrum.clone());
        Ok(ModeParams {
            var: s.var,
            phi: s.phi,
        })
    }

    pub fn log_marginal(&self, m: &ModelSpec) -> Result<f64> {
        match self {
            Engine::Sparse(e) => e.log_marginal(m),
            Engine::Modal {
                engine,
                lattice,
                spectrum,
            } => engine.log_marginal(&Self::mode_params(m, lattice, spectrum)?, m.tau_eps),
        }
    }

    /// Posterior of `xᵀβ + z` at every interior fine node.
    pub fn posterior(
        &self,
        m: &ModelSpec,
        x_fine: &[f64],
        want_var: bool,
        seed: u64,
    ) -> Result<Posterior> {
        match self {
            Engine::Sparse(e) => e.posterior(m, want_var, seed),
            Engine::Modal {
                engine,
                lattice,
                spectrum,
            } => engine.posterior(
                &Self::mode_params(m, lattice, spectrum)?,
                m.tau_eps,
                x_fine,
                want_var,
            ),
        }
    }
}

/// Log marginal likelihood of the observations at hyperparameters `m`.
pub fn log_marginal_likelihood(obs: &ObsModel, m: &ModelSpec) -> Result<f64> {
    Engine::new(obs, EngineRoute::Auto)?.log_marginal(m)
}
