//! Particle systems: labels, an involutive conjugation, statistics and masses.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Boson,
    Fermion,
}

/// One row of a declarative particle table.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub name: String,
    pub statistics: Statistics,
    pub mass: f64,
    /// Name of the antiparticle; equal to `name` for self-conjugate particles.
    pub conjugate: String,
}

impl ParticleSpec {
    pub fn new(name: &str, statistics: Statistics, mass: f64, conjugate: &str) -> Self {
        Self {
            name: name.to_string(),
            statistics,
            mass,
            conjugate: conjugate.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub name: String,
    pub statistics: Statistics,
    pub mass: f64,
    pub conjugate: usize,
}

impl Particle {
    pub fn is_fermion(&self) -> bool {
        self.statistics == Statistics::Fermion
    }
}

/// Validated particle system. Particle ids are positions in the table.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    particles: Vec<Particle>,
    index: HashMap<String, usize>,
}

impl ParticleSystem {
    pub fn new(table: &[ParticleSpec]) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::ParticleTable("particle table is empty".into()));
        }
        let mut index = HashMap::new();
        for (i, spec) in table.iter().enumerate() {
            if spec.name.is_empty() {
                return Err(Error::ParticleTable(format!("entry {i} has an empty name")));
            }
            if index.insert(spec.name.clone(), i).is_some() {
                return Err(Error::ParticleTable(format!("duplicate particle `{}`", spec.name)));
            }
            if !spec.mass.is_finite() || spec.mass < 0.0 {
                return Err(Error::ParticleTable(format!(
                    "particle `{}` has invalid mass {}",
                    spec.name, spec.mass
                )));
            }
        }
        let mut particles = Vec::with_capacity(table.len());
        for spec in table {
            let conjugate = *index.get(&spec.conjugate).ok_or_else(|| {
                Error::ParticleTable(format!(
                    "particle `{}` names unknown conjugate `{}`",
                    spec.name, spec.conjugate
                ))
            })?;
            particles.push(Particle {
                name: spec.name.clone(),
                statistics: spec.statistics,
                mass: spec.mass,
                conjugate,
            });
        }
        for (i, p) in particles.iter().enumerate() {
            let bar = &particles[p.conjugate];
            if bar.conjugate != i {
                return Err(Error::ParticleTable(format!(
                    "conjugation is not an involution: `{}` -> `{}` -> `{}`",
                    p.name, bar.name, particles[bar.conjugate].name
                )));
            }
            if bar.mass != p.mass {
                return Err(Error::ParticleTable(format!(
                    "mass mismatch between `{}` ({}) and its conjugate `{}` ({})",
                    p.name, p.mass, bar.name, bar.mass
                )));
            }
            if bar.statistics != p.statistics {
                return Err(Error::ParticleTable(format!(
                    "statistics mismatch between `{}` and its conjugate `{}`",
                    p.name, bar.name
                )));
            }
        }
        Ok(Self { particles, index })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn particle(&self, id: usize) -> &Particle {
        &self.particles[id]
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParticle(name.to_string()))
    }

    pub fn conjugate(&self, id: usize) -> usize {
        self.particles[id].conjugate
    }

    /// Relativistic dispersion `sqrt(m^2 + |k|^2)` for a physical momentum.
    pub fn dispersion(&self, id: usize, momentum: &[f64]) -> f64 {
        let m = self.particles[id].mass;
        let k2: f64 = momentum.iter().map(|k| k * k).sum();
        (m * m + k2).sqrt()
    }
}
