//! Box-quantized momentum grids and the global single-particle mode table.

use std::collections::{BTreeMap, HashMap};

use super::particles::ParticleSystem;
use crate::error::{Error, Result};

/// Integer lattice coordinates of a momentum point; physical momentum is
/// `spacing * coords`.
pub type MomentumIndex = Vec<i32>;

/// Symmetric momentum grid `{ j * spacing : |j_i * spacing| <= cutoff }`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    dimension: usize,
    cutoff: f64,
    spacing: f64,
    points: Vec<MomentumIndex>,
    /// Internal (spin/colour/flavour) labels per particle name. Particles
    /// without an entry carry a single anonymous label.
    internal_labels: BTreeMap<String, Vec<String>>,
}

impl ModeGrid {
    pub fn new(dimension: usize, cutoff: f64, spacing: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::ModeGrid("dimension must be at least 1".into()));
        }
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(Error::ModeGrid(format!("cutoff must be positive, got {cutoff}")));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::ModeGrid(format!("spacing must be positive, got {spacing}")));
        }
        let jmax = (cutoff / spacing * (1.0 + 1e-12)).floor() as i32;
        let mut points: Vec<MomentumIndex> = vec![Vec::new()];
        for _ in 0..dimension {
            points = points
                .into_iter()
                .flat_map(|p| {
                    (-jmax..=jmax).map(move |j| {
                        let mut q = p.clone();
                        q.push(j);
                        q
                    })
                })
                .collect();
        }
        points.sort_by(|a, b| norm2(a).cmp(&norm2(b)).then_with(|| a.cmp(b)));
        Ok(Self {
            dimension,
            cutoff,
            spacing,
            points,
            internal_labels: BTreeMap::new(),
        })
    }

    pub fn with_internal_labels(mut self, particle: &str, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::ModeGrid(format!("empty label set for `{particle}`")));
        }
        self.internal_labels.insert(particle.to_string(), labels);
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Momentum points in canonical order: by `|k|`, then by components.
    pub fn points(&self) -> &[MomentumIndex] {
        &self.points
    }

    pub fn momentum(&self, point: &[i32]) -> Vec<f64> {
        point.iter().map(|&j| j as f64 * self.spacing).collect()
    }

    /// Box volume `(2π / spacing)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * std::f64::consts::PI / self.spacing).powi(self.dimension as i32)
    }

    pub fn labels_for(&self, particle: &str) -> Vec<String> {
        self.internal_labels
            .get(particle)
            .cloned()
            .unwrap_or_else(|| vec![String::new()])
    }

    pub fn internal_labels(&self) -> &BTreeMap<String, Vec<String>> {
        &self.internal_labels
    }
}

fn norm2(p: &[i32]) -> i64 {
    p.iter().map(|&j| (j as i64) * (j as i64)).sum()
}

/// One single-particle mode: particle, momentum point and internal label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mode {
    pub particle: usize,
    pub momentum: MomentumIndex,
    pub label: usize,
}

/// Global ordered mode table for a particle system on a grid.
///
/// Mode order is: particles in table order, then grid point order, then
/// label. Fermionic signs count occupied fermionic modes earlier in this order.
#[derive(Debug, Clone)]
pub struct ModeSpace {
    system: ParticleSystem,
    grid: ModeGrid,
    modes: Vec<Mode>,
    energies: Vec<f64>,
    fermionic: Vec<bool>,
    by_particle: Vec<Vec<usize>>,
    lookup: HashMap<Mode, usize>,
}

impl ModeSpace {
    pub fn new(system: ParticleSystem, grid: ModeGrid) -> Result<Self> {
        for name in grid.internal_labels.keys() {
            system.id(name).map_err(|_| {
                Error::ModeGrid(format!("internal labels given for unknown particle `{name}`"))
            })?;
        }
        let mut modes = Vec::new();
        let mut energies = Vec::new();
        let mut fermionic = Vec::new();
        let mut by_particle = vec![Vec::new(); system.len()];
        for (pid, particle) in system.particles().iter().enumerate() {
            let nlabels = grid.labels_for(&particle.name).len();
            for point in grid.points() {
                let e = system.dispersion(pid, &grid.momentum(point));
                for label in 0..nlabels {
                    by_particle[pid].push(modes.len());
                    modes.push(Mode {
                        particle: pid,
                        momentum: point.clone(),
                        label,
                    });
                    energies.push(e);
                    fermionic.push(particle.is_fermion());
                }
            }
        }
        let lookup = modes.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        Ok(Self {
            system,
            grid,
            modes,
            energies,
            fermionic,
            by_particle,
            lookup,
        })
    }

    pub fn system(&self) -> &ParticleSystem {
        &self.system
    }

    pub fn grid(&self) -> &ModeGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn mode(&self, idx: usize) -> &Mode {
        &self.modes[idx]
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Single-particle energy of a mode.
    pub fn energy(&self, idx: usize) -> f64 {
        self.energies[idx]
    }

    pub fn is_fermionic(&self, idx: usize) -> bool {
        self.fermionic[idx]
    }

    /// Global mode indices belonging to `particle`, in mode order.
    pub fn modes_of(&self, particle: usize) -> &[usize] {
        &self.by_particle[particle]
    }

    pub fn find(&self, particle: usize, momentum: &[i32], label: usize) -> Result<usize> {
        let key = Mode {
            particle,
            momentum: momentum.to_vec(),
            label,
        };
        self.lookup.get(&key).copied().ok_or_else(|| Error::UnknownMode {
            particle: self.system.particle(particle).name.clone(),
            momentum: momentum.to_vec(),
            label,
        })
    }

    /// Human-readable mode name, e.g. `phi[-1]` or `q[0,1]{red}`.
    pub fn describe(&self, idx: usize) -> String {
        let m = &self.modes[idx];
        let p = self.system.particle(m.particle);
        let k = m
            .momentum
            .iter()
            .map(|j| j.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let label = &self.grid.labels_for(&p.name)[m.label];
        if label.is_empty() {
            format!("{}[{}]", p.name, k)
        } else {
            format!("{}[{}]{{{}}}", p.name, k, label)
        }
    }
}
