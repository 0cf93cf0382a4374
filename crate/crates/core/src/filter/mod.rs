//! Particle filters: the two-stage implicit equal-weights filter and the
//! standard importance-resampling filter used for comparison.

pub mod gamma_oracle;
pub mod iewpf;
pub mod lambert;
pub mod precompute;
pub mod sir;

pub use iewpf::{iewpf_assimilate, CycleReport, FilterContext, ParticleDiagnostics};
pub use lambert::{lambert_w0, solve_alpha};
pub use precompute::{precompute_local_svd, precompute_s, LocalSvdBlock, SMatrix};
pub use sir::{residual_resample, standard_pf_weights};
