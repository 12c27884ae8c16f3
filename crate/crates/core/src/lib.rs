//! Simulation and analysis of `u_t = J∗u - u + f(u)` on the line for
//! fat-tailed dispersal kernels: accelerating fronts, their theoretical
//! envelopes, and numerical checks of sub- and supersolutions.

// `!(x > 0.0)` style guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod certificates;
pub mod config;
pub mod discretization;
pub mod integrator;
pub mod io;
pub mod kernels;
pub mod quadrature;
pub mod reaction;

pub use analysis::{
    AnalysisError, EnvelopeReport, LevelSample, LevelSetTrace, MinimalSpeed, RhoEstimate, SpeedEstimate,
};
pub use certificates::{CertificateError, CertificateReport, Construction, SuiteOptions};
pub use config::{AutoOr, ConfigError, ResolvedRun, RunConfig};
pub use discretization::{ConvolutionOptions, ConvolutionPlan, DiscretizationError, Field, Grid1D, InitialShape};
pub use integrator::{IntegratorError, Scheme, SimulationRun, StepperConfig};
pub use kernels::{KernelError, KernelFamily, KernelSpec, TruncatedKernel};
pub use reaction::{ReactionError, ReactionFamily, ReactionSpec};
