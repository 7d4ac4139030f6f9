//! Sparse space-time precision matrices for the two model kinds.

use crate::error::Result;
use crate::lattice::LatticeSpec;
use crate::operators::{build_operator, SpatialOperator};
use crate::sparsela::{kron, sym_product, SparseSym};

use super::modal::unit_window_variance;
use super::spec::{to_scale_params, ModelKind, ModelSpec, ScaleParams};

/// Unit-variance precision of a stationary AR(1) chain with coefficient `phi`.
pub fn ou_precision(n: usize, phi: f64) -> SparseSym<f64> {
    let s = 1.0 / (1.0 - phi * phi);
    let mut t = Vec::with_capacity(2 * n);
    for i in 0..n {
        let d = if n == 1 || i == 0 || i == n - 1 {
            1.0
        } else {
            1.0 + phi * phi
        };
        // a single node has unit variance
        t.push((i, i, if n == 1 { 1.0 } else { d * s }));
        if i > 0 {
            t.push((i, i - 1, -phi * s));
        }
    }
    SparseSym::from_triplets(n, &t).expect("valid AR(1) pattern")
}

/// Lag-`dt` autocorrelation of the separable model.
pub fn temporal_phi(m: &ModelSpec, dt: f64) -> f64 {
    m.convention.correlation(dt, m.range_t)
}

/// Pieces of the non-separable diffusion discretisation, all polynomials in
/// `K`: innovation precision `Q_w = s·K`, step operator `F = a·I + K`.
#[derive(Debug, Clone)]
pub struct DiffusionParts {
    /// `γ_t · cell area / dt`.
    pub a: f64,
    /// Innovation scale chosen so the stationary variance averaged over the window is σ².
    pub s: f64,
    pub q_w: SparseSym<f64>,
    pub f: SparseSym<f64>,
    /// `F Q_w F`.
    pub fqf: SparseSym<f64>,
    /// `F Q_w`.
    pub fq: SparseSym<f64>,
    /// Stationary slice precision `F Q_w F − a² Q_w`.
    pub q0: SparseSym<f64>,
}

#[derive(Debug, Clone)]
pub enum ModelParts {
    Separable {
        phi: f64,
        /// Normalised spatial precision `c·K C⁻¹ K`.
        q_s: SparseSym<f64>,
        /// The constant `c`.
        c: f64,
    },
    NonSeparable(DiffusionParts),
}

/// A model discretised on a lattice (buffer included).
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    pub model: ModelSpec,
    pub lattice: LatticeSpec,
    pub scales: ScaleParams,
    pub op: SpatialOperator<f64>,
    pub parts: ModelParts,
}

impl DiscreteModel {
    pub fn new(model: &ModelSpec, lattice: &LatticeSpec) -> Result<Self> {
        model.validate()?;
        lattice.validate()?;
        let scales = to_scale_params(model, 2);
        let op = build_operator::<f64>(lattice, scales.gamma_s)?;
        let v = unit_window_variance(model, lattice);
        let parts = match model.kind {
            ModelKind::Separable102 => {
                let phi = temporal_phi(model, lattice.dt);
                let kk = op.k_cinv_k()?;
                let c = v / model.sigma2;
                ModelParts::Separable {
                    phi,
                    q_s: kk.scale(c),
                    c,
                }
            }
            ModelKind::NonSeparable121 => {
                let a = scales.gamma_t * lattice.cell_area() / lattice.dt;
                let k = &op.k;
                let k2 = sym_product(k, k)?;
                let k3 = sym_product(&k2, k)?;
                // s = 1 first, then rescale
                let q0_unit = k2.add_scaled(2.0 * a, &k3, 1.0)?;
                let s = v / model.sigma2;
                let fqf = k
                    .add_scaled(a * a, &k2, 2.0 * a)?
                    .add_scaled(1.0, &k3, 1.0)?
                    .scale(s);
                let fq = k.add_scaled(a, &k2, 1.0)?.scale(s);
                let n = op.n();
                let f = k.add_scaled(1.0, &SparseSym::identity(n), a)?;
                ModelParts::NonSeparable(DiffusionParts {
                    a,
                    s,
                    q_w: k.scale(s),
                    f,
                    fqf,
                    fq,
                    q0: q0_unit.scale(s),
                })
            }
        };
        Ok(Self {
            model: *model,
            lattice: *lattice,
            scales,
            op,
            parts,
        })
    }

    /// Joint precision over all lattice nodes in time-major order.
    pub fn precision(&self) -> Result<SparseSym<f64>> {
        let nt = self.lattice.nt;
        match &self.parts {
            ModelParts::Separable { phi, q_s, .. } => Ok(kron(&ou_precision(nt, *phi), q_s)),
            ModelParts::NonSeparable(p) => {
                let mut diag_extra = Vec::with_capacity(nt);
                let mut off = Vec::new();
                for j in 0..nt {
                    let w = if nt == 1 {
                        -1.0
                    } else if j == 0 || j == nt - 1 {
                        0.0
                    } else {
                        1.0
                    };
                    diag_extra.push((j, j, w));
                    if j > 0 {
                        off.push((j, j - 1, 1.0));
                    }
                }
                let t1 = SparseSym::from_triplets(nt, &diag_extra)?;
                let q_w_a2 = p.q_w.scale(p.a * p.a);
                let mut q = kron(&SparseSym::identity(nt), &p.fqf).add_scaled(
                    1.0,
                    &kron(&t1, &q_w_a2),
                    1.0,
                )?;
                if nt > 1 {
                    let t2 = SparseSym::from_triplets(nt, &off)?;
                    q = q.add_scaled(1.0, &kron(&t2, &p.fq), -p.a)?;
                }
                Ok(q)
            }
        }
    }

    /// Precision of one time slice's spatial marginal.
    pub fn spatial_marginal_precision(&self) -> &SparseSym<f64> {
        match &self.parts {
            ModelParts::Separable { q_s, .. } => q_s,
            ModelParts::NonSeparable(p) => &p.q0,
        }
    }
}

/// Assemble the normalised space-time precision of a model on a lattice.
pub fn build_precision(model: &ModelSpec, lattice: &LatticeSpec) -> Result<SparseSym<f64>> {
    DiscreteModel::new(model, lattice)?.precision()
}

/// Largest number of stored entries in any row of the full matrix.
pub fn max_row_nnz(q: &SparseSym<f64>) -> usize {
    q.row_counts().into_iter().max().unwrap_or(0)
}
