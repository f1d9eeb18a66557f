//! Probabilistic linear multistep integrators for ODE initial value problems.
//!
//! Adams–Bashforth and Adams–Moulton schemes are randomised either by additive
//! Gaussian noise (explicit) or by sampling each step from a Gaussian law on
//! the implicit residual (implicit). On top of the solvers sit ensemble
//! statistics, grid-search calibration of the noise scale, and a
//! Metropolis-within-Gibbs sampler for parameter inference.

pub mod calibration;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod explicit;
pub mod implicit;
pub mod inference;
pub mod io;
pub mod method;
pub mod multistep;
pub mod noise;
pub mod problems;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use method::{Method, MethodTag, SamplerMode};
pub use multistep::{adams_coefficients, AdamsCoefficients, Family};
pub use problems::{Ivp, OdeSystem, State};
pub use trajectory::Trajectory;
