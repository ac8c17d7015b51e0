//! Hyperreduced least-squares Petrov-Galerkin reduced-order models for the
//! steady 1D Burgers problem, with energy-conserving sampling and weighting,
//! dual-weighted residual error estimation and goal-oriented snapshot
//! selection.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dwr;
pub mod ecsw;
pub mod error;
pub mod experiment;
pub mod fom;
pub mod lspg;
pub mod nnls;
pub mod pod;
pub mod rbf;
pub mod sampler;
pub mod work_units;

pub use dwr::{epsilon_f, epsilon_r_exact, epsilon_r_hyper, ErrorRecord};
pub use ecsw::{find_weights, ReducedMesh, TrainingMode};
pub use error::{Result, RomError};
pub use fom::{burgers_params, BurgersModel, BurgersParams, Grid1D, StateVector};
pub use lspg::{solve_rom, solve_rom_exact, solve_rom_hyper, Quadrature, RomSolution};
pub use nnls::nnls_early_stop;
pub use pod::{build_basis, ParamPoint, PodBasis, SnapshotSet};
pub use rbf::{rbf_argmax, rbf_fit, ParameterDomain, RbfModel};
pub use sampler::{SamplerConfig, SamplerMode, SamplerState};
pub use work_units::{ledger, CostModel, CycleCostInputs, WorkLedger};
