//! Estimation of a time-varying optical phase with coherent states.
//!
//! The crate covers the full pipeline for a Gaussian phase with a power-law
//! spectrum `kappa^(p-1) / |omega|^p`:
//!
//! * [`phase_process`]: the spectrum and the integrator chain that generates it.
//! * [`analytic_bounds`]: quantum Cramér-Rao bound and Wiener filter/smoother
//!   errors, by quadrature for any spectrum and in closed form for power laws.
//! * [`lg_estimation`]: the linear-Gaussian state-space model for even `p`,
//!   with stationary filtered, retrofiltered and smoothed covariances.
//! * [`simulation`]: adaptive homodyne simulations with feedback, the
//!   forward/backward filters, the smoother and the ABC estimator.
//! * [`experiment`]: parameter sweeps written to CSV, driven by the
//!   `phasetrack` binary.

pub mod analytic_bounds;
pub mod error;
pub mod experiment;
pub mod lg_estimation;
pub mod noise;
pub mod phase_process;
pub mod quadrature;
pub mod simulation;

pub use error::{Error, Result};
