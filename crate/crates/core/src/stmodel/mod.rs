//! Space-time precision builders for the separable (1,0,2) and
//! non-separable (1,2,1) diffusion models, their parameter transforms, an
//! exact modal form, a spectral correlation oracle and field simulation.

mod modal;
mod oracle;
mod precision;
mod simulate;
mod spec;

pub use modal::{mode_weights, ModalSpectrum};
pub use oracle::{spectral_oracle, SpectralOracle, DEFAULT_TORUS_POINTS};
pub use precision::{
    build_precision, max_row_nnz, ou_precision, temporal_phi, DiffusionParts, DiscreteModel,
    ModelParts,
};
pub use simulate::{add_fixed_effects, simulate_field, LatentSampler, SimulationRoute};
pub use spec::{
    nonseparability_beta, spatial_smoothness, to_scale_params, total_smoothness, ModelKind,
    ModelSpec, ScaleParams, TemporalRangeConvention,
};
