//! Bayesian inference of a star-shaped penetrable scatterer from point
//! measurements of a time-harmonic field.
//!
//! The pipeline is: [`shape`] (prior over boundaries) → [`mesh`] + [`forward`]
//! (P1 finite elements on a fixed reference mesh, domain mapping, annular
//! PML) → [`observe`] (ring measurements, Gaussian noise) → [`bayes`] and
//! [`smc`] (potentials, tempering, particles). [`bounds`] evaluates the
//! wavenumber-explicit stability constants and checks them against solves.
//! [`cli`] wires everything into a reproducible command-line tool.

pub mod bayes;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod forward;
pub mod mesh;
pub mod observe;
pub mod shape;
pub mod smc;

pub use error::{Error, Result};
