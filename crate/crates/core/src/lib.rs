pub mod config;
pub mod convergence;
pub mod dyson;
pub mod error;
pub mod evolution;
pub mod fock;
pub mod hamiltonian;
pub mod linalg;
pub mod pipeline;
pub mod scattering;

pub use error::{Error, Result};
