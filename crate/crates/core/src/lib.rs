//! Flexure-FET molecular-communication receiver model under competitive
//! ligand binding: equilibrium, binding noise, transduction, link metrics,
//! a stochastic oracle and figure sweeps.

pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod figures;
pub mod link;
pub mod oracle;
pub mod params;
pub mod quadrature;
pub mod receptor_noise;
pub mod sweep;
pub mod transducer;

pub use error::{Error, Result};
