//! Particle systems, discretized single-particle modes and truncated Fock bases.

mod basis;
mod grid;
mod particles;

pub use basis::{BasisCutoffs, FockBasis, FockState, LadderKind};
pub use grid::{Mode, ModeGrid, ModeSpace, MomentumIndex};
pub use particles::{Particle, ParticleSpec, ParticleSystem, Statistics};
