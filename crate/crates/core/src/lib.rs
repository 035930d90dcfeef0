//! Simulation and numerical verification toolkit for one-dimensional
//! (α, 1, β)-superprocesses: symmetric α-stable motion with (1+β)-stable
//! continuous-state branching.
//!
//! The crate is organised bottom-up:
//!
//! * [`stable_kernel`] evaluates the symmetric α-stable transition density.
//! * [`stable_process`] samples spectrally positive stable paths.
//! * [`superprocess_sim`] runs the branching particle approximation.
//! * [`loglap_oracle`] solves the log-Laplace equation spectrally.
//! * [`density_estimator`] and [`regularity`] turn particle clouds into
//!   density grids and Hölder exponent estimates.
//! * [`cli`] wires everything into reproducible experiments.

pub mod cli;
pub mod cloud;
pub mod density_estimator;
pub mod error;
pub mod loglap_oracle;
pub mod params;
pub mod quadrature;
pub mod regularity;
pub mod seed;
pub mod stable_kernel;
pub mod stable_process;
pub mod stats;
pub mod superprocess_sim;

pub use cloud::ParticleCloud;
pub use error::{Error, Result};
pub use params::ModelParams;
