use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Field, LatticeSpec};
use crate::sparsela::{factorize, CholFactor, OrderingChoice};

use super::precision::{DiscreteModel, ModelParts};
use super::spec::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationRoute {
    /// Time-stepping with two-dimensional factors only.
    #[default]
    Structured,
    /// One factorization of the full space-time precision.
    FullPrecision,
}

enum Sampler {
    Separable {
        phi: f64,
        q_s: CholFactor<f64>,
    },
    NonSeparable {
        a: f64,
        q0: CholFactor<f64>,
        q_w: CholFactor<f64>,
        f: CholFactor<f64>,
    },
    Full(CholFactor<f64>),
}

/// Reusable sampler of the zero-mean latent field of a discrete model.
pub struct LatentSampler {
    nt: usize,
    g: usize,
    inner: Sampler,
}

impl LatentSampler {
    pub fn new(dm: &DiscreteModel, route: SimulationRoute) -> Result<Self> {
        let nt = dm.lattice.nt;
        let g = dm.lattice.n_space();
        let inner = match (route, &dm.parts) {
            (SimulationRoute::FullPrecision, _) => {
                Sampler::Full(factorize(&dm.precision()?, OrderingChoice::Amd)?)
            }
            (SimulationRoute::Structured, ModelParts::Separable { phi, q_s, .. }) => {
                Sampler::Separable {
                    phi: *phi,
                    q_s: factorize(q_s, OrderingChoice::Amd)?,
                }
            }
            (SimulationRoute::Structured, ModelParts::NonSeparable(p)) => Sampler::NonSeparable {
                a: p.a,
                q0: factorize(&p.q0, OrderingChoice::Amd)?,
                q_w: factorize(&p.q_w, OrderingChoice::Amd)?,
                f: factorize(&p.f, OrderingChoice::Amd)?,
            },
        };
        Ok(Self { nt, g, inner })
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (nt, g) = (self.nt, self.g);
        match &self.inner {
            Sampler::Full(f) => f.sample_with(rng),
            Sampler::Separable { phi, q_s } => {
                let innov = (1.0 - phi * phi).sqrt();
                let mut out = Vec::with_capacity(nt * g);
                out.extend(q_s.sample_with(rng));
                for t in 1..nt {
                    let s = q_s.sample_with(rng);
                    for i in 0..g {
                        let prev = out[(t - 1) * g + i];
                        out.push(phi * prev + innov * s[i]);
                    }
                }
                out
            }
            Sampler::NonSeparable { a, q0, q_w, f } => {
                let mut out = Vec::with_capacity(nt * g);
                out.extend(q0.sample_with(rng));
                for t in 1..nt {
                    let e = q_w.sample_with(rng);
                    let rhs: Vec<f64> = (0..g).map(|i| a * out[(t - 1) * g + i] + e[i]).collect();
                    let v = f.solve(&rhs).expect("slice length matches");
                    out.extend(v);
                }
                out
            }
        }
    }
}

/// `W = β₀ + Σ_j β_j X_j + z` with `z` drawn from the model's latent field.
/// `beta[0]` is the intercept; `beta[1..]` pair with `covariates`.
pub fn simulate_field(
    model: &ModelSpec,
    lattice: &LatticeSpec,
    beta: &[f64],
    covariates: &[Field],
    seed: u64,
    route: SimulationRoute,
) -> Result<Field> {
    let dm = DiscreteModel::new(model, lattice)?;
    let sampler = LatentSampler::new(&dm, route)?;
    let z = sampler.sample(seed);
    add_fixed_effects(lattice, z, beta, covariates)
}

pub fn add_fixed_effects(
    lattice: &LatticeSpec,
    mut z: Vec<f64>,
    beta: &[f64],
    covariates: &[Field],
) -> Result<Field> {
    if beta.len() != covariates.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: covariates.len() + 1,
            found: beta.len(),
        });
    }
    for x in covariates {
        if x.spec != *lattice {
            return Err(Error::ShapeMismatch(
                "covariate lattice differs from the field lattice".into(),
            ));
        }
    }
    for (i, v) in z.iter_mut().enumerate() {
        *v += beta[0]
            + covariates
                .iter()
                .zip(&beta[1..])
                .map(|(x, b)| b * x.values[i])
                .sum::<f64>();
    }
    Field::new(*lattice, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Extents;
    use crate::stmodel::ModelKind;

    #[test]
    fn degenerate_variance_gives_constant_field() {
        let lat = LatticeSpec::build(8, 8, 4, Extents::unit_square(4), 2).unwrap();
        for kind in [ModelKind::Separable102, ModelKind::NonSeparable121] {
            let m = ModelSpec::new(kind, 1e-8, 0.2, 3.0, 1.0).unwrap();
            let f = simulate_field(&m, &lat, &[0.1], &[], 7, SimulationRoute::Structured).unwrap();
            assert!(f.values.iter().all(|v| (v - 0.1).abs() < 1e-3));
        }
    }

    #[test]
    fn same_seed_same_field() {
        let lat = LatticeSpec::build(6, 6, 3, Extents::unit_square(3), 1).unwrap();
        let m = ModelSpec::new(ModelKind::NonSeparable121, 0.25, 0.2, 6.0, 1.0).unwrap();
        for route in [SimulationRoute::Structured, SimulationRoute::FullPrecision] {
            let a = simulate_field(&m, &lat, &[0.1], &[], 3, route).unwrap();
            let b = simulate_field(&m, &lat, &[0.1], &[], 3, route).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn covariate_effect_is_added() {
        let lat = LatticeSpec::build(3, 3, 2, Extents::unit_square(2), 0).unwrap();
        let x = Field::constant(lat, 2.0);
        let f = add_fixed_effects(&lat, vec![0.0; lat.n_nodes()], &[1.0, -0.5], &[x]).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert!(add_fixed_effects(&lat, vec![0.0; lat.n_nodes()], &[1.0, 2.0], &[]).is_err());
    }
}
