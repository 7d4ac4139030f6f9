use crate::aggregate::{aggregate_covariates, Projection};
use crate::error::{Error, Result};
use crate::lattice::{Field, LatticeSpec};
use crate::stmodel::ModelSpec;

/// Prior precision of each fixed effect (flat limit).
pub const DEFAULT_BETA_PRECISION: f64 = 1e-6;

/// Aggregated observations together with everything needed to fit them.
#[derive(Debug, Clone)]
pub struct ObsModel {
    pub lattice: LatticeSpec,
    pub projection: Projection,
    /// One entry per projection row; NaN marks a missing cell.
    pub y: Vec<f64>,
    /// Row-major `rows × p`, intercept first.
    pub x_agg: Vec<f64>,
    /// Row-major `interior nodes × p`, interior order `t·nx·ny + iy·nx + ix`.
    pub x_fine: Vec<f64>,
    pub p: usize,
    /// Names of the fixed effects, `"intercept"` first.
    pub beta_names: Vec<String>,
    /// Model kind and conventions; the numeric values seed the optimizer
    /// when no explicit start is given.
    pub model: ModelSpec,
    pub beta_prior_precision: f64,
}

impl ObsModel {
    /// `covariates` live on `lattice` (buffer included) and are averaged
    /// through the projection.
    pub fn new(
        lattice: LatticeSpec,
        projection: Projection,
        y: Vec<f64>,
        covariates: &[Field],
        covariate_names: &[String],
        model: ModelSpec,
    ) -> Result<Self> {
        if y.len() != projection.rows() {
            return Err(Error::DimensionMismatch {
                expected: projection.rows(),
                found: y.len(),
            });
        }
        if projection.cols() != lattice.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: lattice.n_nodes(),
                found: projection.cols(),
            });
        }
        if covariate_names.len() != covariates.len() {
            return Err(Error::DimensionMismatch {
                expected: covariates.len(),
                found: covariate_names.len(),
            });
        }
        for c in covariates {
            if c.spec != lattice {
                return Err(Error::ShapeMismatch(
                    "covariate lattice differs from the model lattice".into(),
                ));
            }
        }
        if y.iter().any(|v| v.is_infinite()) {
            return Err(Error::InvalidParameter(
                "observations must be finite or NaN for missing".into(),
            ));
        }
        let p = 1 + covariates.len();
        let x_agg = aggregate_covariates(covariates, &projection)?;
        let interior = lattice.interior_nodes();
        let mut x_fine = vec![1.0; interior.len() * p];
        for (k, &node) in interior.iter().enumerate() {
            for (j, c) in covariates.iter().enumerate() {
                x_fine[k * p + 1 + j] = c.values[node];
            }
        }
        let mut beta_names = vec!["intercept".to_string()];
        beta_names.extend(covariate_names.iter().cloned());
        Ok(Self {
            lattice,
            projection,
            y,
            x_agg,
            x_fine,
            p,
            beta_names,
            model,
            beta_prior_precision: DEFAULT_BETA_PRECISION,
        })
    }

    /// Rows with an observed value.
    pub fn observed(&self) -> Vec<usize> {
        (0..self.y.len()).filter(|&r| !self.y[r].is_nan()).collect()
    }

    pub fn n_observed(&self) -> usize {
        self.y.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.y.iter().all(|v| !v.is_nan())
    }

    /// Mean and variance of the observed values.
    pub fn observed_moments(&self) -> (f64, f64) {
        let obs: Vec<f64> = self.y.iter().copied().filter(|v| !v.is_nan()).collect();
        let n = obs.len() as f64;
        let mean = obs.iter().sum::<f64>() / n;
        let var = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, var)
    }

    /// Degenerate inputs cannot inform the hyperparameters.
    pub fn check_fittable(&self) -> Result<()> {
        let n = self.n_observed();
        if n < 2 {
            return Err(Error::DegenerateData(format!(
                "need at least 2 observed cells, found {n}"
            )));
        }
        let (mean, var) = self.observed_moments();
        if !(var > 1e-24 * mean.abs().max(1.0).powi(2)) {
            return Err(Error::DegenerateData(
                "all observed values are equal".into(),
            ));
        }
        Ok(())
    }

    /// Unbuffered lattice carrying the predictions.
    pub fn target_lattice(&self) -> LatticeSpec {
        self.lattice.with_buffer(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{build_projection, AggScheme};
    use crate::lattice::Extents;
    use crate::stmodel::ModelKind;

    fn setup(y: Vec<f64>) -> Result<ObsModel> {
        let lat = LatticeSpec::build(4, 4, 2, Extents::unit_square(2), 1).unwrap();
        let p = build_projection(&lat, AggScheme::new(2, 2)).unwrap();
        let cov = Field::new(lat, (0..lat.n_nodes()).map(|i| i as f64).collect()).unwrap();
        let m = ModelSpec::new(ModelKind::Separable102, 1.0, 0.3, 1.0, 10.0).unwrap();
        ObsModel::new(lat, p, y, &[cov], &["elev".into()], m)
    }

    #[test]
    fn designs_and_missing_cells() {
        let o = setup(vec![1.0, f64::NAN, 2.0, 3.0]).unwrap();
        assert_eq!(o.p, 2);
        assert_eq!(o.x_fine.len(), 32 * 2);
        assert_eq!(o.observed(), vec![0, 2, 3]);
        assert!(!o.is_complete());
        assert_eq!(o.beta_names, vec!["intercept", "elev"]);
        // fine design picks interior nodes only
        let first = o.lattice.interior_nodes()[0] as f64;
        assert_eq!(o.x_fine[1], first);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            setup(vec![1.0; 4]).unwrap().check_fittable(),
            Err(Error::DegenerateData(_))
        ));
        let o = setup(vec![1.0, f64::NAN, f64::NAN, f64::NAN]).unwrap();
        assert!(matches!(o.check_fittable(), Err(Error::DegenerateData(_))));
        assert!(setup(vec![1.0; 3]).is_err());
    }
}
