//! Mean-field integrate-and-fire networks: Volterra rates, spectral stability,
//! Hopf bifurcations of the toy model, periodic solutions and particle simulation.

pub mod cli;
pub mod current;
pub mod error;
pub mod hopf;
pub mod invariant;
pub mod io;
pub mod kernels;
pub mod model;
pub mod particle;
pub mod periodic;
pub mod quadrature;
pub mod spectral;
pub mod trajectory;
pub mod volterra;

pub use current::PeriodicCurrent;
pub use error::{MfhError, Result};
pub use model::{ModelSpec, ToyParams};
