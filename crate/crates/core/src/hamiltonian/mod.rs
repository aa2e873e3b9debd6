//! Free and finite-rank interacting Hamiltonians.

mod assembly;
mod vertex;

pub use assembly::{
    assemble_regularized, free_hamiltonian, ground_state_check, interaction_matrix,
    interaction_matrix_element, GroundStateReport, RegularizedHamiltonian, HERMITICITY_TOLERANCE,
};
pub use vertex::{InteractionSpec, Kernel, Leg, ResolvedLeg, ResolvedVertex, Term, Vertex};
