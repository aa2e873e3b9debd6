//! Run configuration: one flat TOML file per run, strictly parsed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{Method, Propagator, DEFAULT_DENSE_LIMIT};
use crate::fock::{BasisCutoffs, FockBasis, ModeGrid, ModeSpace, ParticleSpec, ParticleSystem};
use crate::hamiltonian::{InteractionSpec, Kernel, Leg, Term, Vertex};
use crate::scattering::{AdiabaticOptions, PlateauOptions, WaveMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub basis: BasisConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub particles: Vec<ParticleSpec>,
    #[serde(default)]
    pub interaction: InteractionConfig,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub waveops: WaveopsConfig,
    #[serde(default)]
    pub dyson: DysonConfig,
    pub converge: Option<ConvergeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dimension: usize,
    pub cutoff: f64,
    pub spacing: f64,
    /// Internal labels per particle name.
    #[serde(default)]
    pub labels: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub max_quanta: u32,
    pub energy_cap: Option<f64>,
    #[serde(default = "default_hard_limit")]
    pub hard_limit: usize,
}

fn default_hard_limit() -> usize {
    200_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionConfig {
    /// Interaction rank `n`; the whole basis when absent.
    pub rank: Option<usize>,
    #[serde(default)]
    pub couplings: BTreeMap<String, f64>,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
    #[serde(default)]
    pub counterterms: Vec<TermConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TermConfig {
    PhiPower {
        particle: String,
        power: usize,
        coupling: String,
    },
    Yukawa {
        boson: String,
        fermion: String,
        coupling: String,
    },
    Counterterm {
        particle: String,
        coupling: String,
    },
    Vertex {
        name: String,
        /// `dag(x)` raises, `x` lowers, `x{label}` picks an internal label.
        legs: Vec<String>,
        kernel: KernelConfig,
        coupling: Option<String>,
        #[serde(default = "yes")]
        momentum_conserving: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelConfig {
    /// `[re, im]`.
    Constant([f64; 2]),
    FieldNormalized(f64),
    Table(Vec<TableEntry>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    /// Momentum index of every leg, in leg order.
    pub momenta: Vec<Vec<i32>>,
    pub value: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    pub method: Method,
    pub tol: f64,
    pub krylov_dim: usize,
    pub dense_limit: usize,
    /// Basis index of the initial state.
    pub initial_state: usize,
    pub times: Vec<f64>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            method: Method::KrylovStep,
            tol: 1e-10,
            krylov_dim: 30,
            dense_limit: DEFAULT_DENSE_LIMIT,
            initial_state: 1,
            times: vec![1.0, 2.0, 5.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveopsConfig {
    pub method: WaveMethod,
    /// Plateau drift tolerance, or quadrature tolerance for the adiabatic method.
    pub tol: f64,
    pub time_step: f64,
    pub time_steps: usize,
    pub window: usize,
    pub eps: Vec<f64>,
    pub columns: Option<Vec<usize>>,
    pub rank_tol: f64,
    pub isometry_tol: f64,
    pub intertwining_tol: f64,
    pub unitarity_tol: f64,
}

impl Default for WaveopsConfig {
    fn default() -> Self {
        Self {
            method: WaveMethod::TimePlateau,
            tol: 1e-5,
            time_step: 1.0,
            time_steps: 40,
            window: 4,
            eps: vec![0.2, 0.1, 0.05],
            columns: None,
            rank_tol: 1e-8,
            isometry_tol: 1e-4,
            intertwining_tol: 1e-3,
            unitarity_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DysonConfig {
    pub order: usize,
    pub t: f64,
    pub t0: f64,
    /// Gauss-Legendre nodes per simplex level; chosen from `tol` when absent.
    pub nodes: Option<usize>,
    pub tol: f64,
    /// Damping values for the Born comparison table; skipped when empty.
    pub born_eps: Vec<f64>,
    /// Entries with `|E_u - E_v|` below this count as on shell in the Born table.
    pub off_shell_gap: f64,
}

impl Default for DysonConfig {
    fn default() -> Self {
        Self {
            order: 3,
            t: 1.0,
            t0: 0.0,
            nodes: None,
            tol: 1e-8,
            born_eps: Vec::new(),
            off_shell_gap: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub ranks: Vec<usize>,
    /// Momentum cutoffs of the regulator sequence; the spacing stays fixed.
    pub cutoffs: Vec<f64>,
    pub eps: f64,
    #[serde(default)]
    pub swapped: bool,
    pub observables: Vec<ObservableConfig>,
    pub horizon: Option<HorizonConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableConfig {
    /// `<row|S|col>` from time-plateau wave operators. Low basis indices
    /// name the same states at every cutoff of a fixed-spacing sequence.
    SElement { row: usize, col: usize },
    /// Lowest eigenvalue of `A_{n,r}`.
    GroundEnergy,
    /// Intertwining defect of the time-plateau `W+`.
    IntertwiningDefect,
}

impl ObservableConfig {
    pub fn name(&self) -> String {
        match self {
            ObservableConfig::SElement { row, col } => format!("S[{row},{col}]"),
            ObservableConfig::GroundEnergy => "ground-energy".into(),
            ObservableConfig::IntertwiningDefect => "intertwining-defect".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    /// Basis indices of the probe states.
    pub states: Vec<usize>,
    pub time_step: f64,
    pub time_steps: usize,
    pub window: usize,
    pub tol: f64,
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {x}")))
    }
}

fn nonempty<T>(field: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(invalid(field, "must not be empty"))
    } else {
        Ok(())
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Parses configuration text. Syntax errors carry the line and column.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| invalid("<file>", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        nonempty("particles", &self.particles)?;
        positive("grid.cutoff", self.grid.cutoff)?;
        positive("grid.spacing", self.grid.spacing)?;
        if self.grid.dimension == 0 {
            return Err(invalid("grid.dimension", "must be at least 1"));
        }
        if let Some(cap) = self.basis.energy_cap {
            positive("basis.energy_cap", cap)?;
        }
        for (name, g) in &self.interaction.couplings {
            if !g.is_finite() {
                return Err(invalid(&format!("interaction.couplings.{name}"), "must be finite"));
            }
        }

        let ev = &self.evolution;
        positive("evolution.tol", ev.tol)?;
        nonempty("evolution.times", &ev.times)?;
        if ev.krylov_dim < 2 {
            return Err(invalid("evolution.krylov_dim", "must be at least 2"));
        }

        let w = &self.waveops;
        positive("waveops.tol", w.tol)?;
        positive("waveops.time_step", w.time_step)?;
        positive("waveops.rank_tol", w.rank_tol)?;
        positive("waveops.isometry_tol", w.isometry_tol)?;
        positive("waveops.intertwining_tol", w.intertwining_tol)?;
        positive("waveops.unitarity_tol", w.unitarity_tol)?;
        if w.time_steps == 0 {
            return Err(invalid("waveops.time_steps", "must not be zero"));
        }
        if w.window < 2 || w.window > w.time_steps {
            return Err(invalid("waveops.window", "must be between 2 and time_steps"));
        }
        nonempty("waveops.eps", &w.eps)?;
        for &e in &w.eps {
            positive("waveops.eps", e)?;
        }
        if let Some(c) = &w.columns {
            nonempty("waveops.columns", c)?;
        }

        let d = &self.dyson;
        positive("dyson.tol", d.tol)?;
        positive("dyson.off_shell_gap", d.off_shell_gap)?;
        if !(d.t >= d.t0) {
            return Err(invalid("dyson.t", "must not precede dyson.t0"));
        }
        if d.nodes == Some(0) {
            return Err(invalid("dyson.nodes", "must be positive"));
        }
        for &e in &d.born_eps {
            positive("dyson.born_eps", e)?;
        }

        if let Some(c) = &self.converge {
            if c.ranks.len() < 3 {
                return Err(invalid("converge.ranks", "needs at least 3 ranks"));
            }
            if c.ranks.windows(2).any(|p| p[1] <= p[0]) {
                return Err(invalid("converge.ranks", "must be strictly increasing"));
            }
            nonempty("converge.cutoffs", &c.cutoffs)?;
            for &x in &c.cutoffs {
                positive("converge.cutoffs", x)?;
            }
            if c.cutoffs.windows(2).any(|p| p[1] <= p[0]) {
                return Err(invalid("converge.cutoffs", "must be strictly increasing"));
            }
            positive("converge.eps", c.eps)?;
            nonempty("converge.observables", &c.observables)?;
            if let Some(h) = &c.horizon {
                nonempty("converge.horizon.states", &h.states)?;
                positive("converge.horizon.time_step", h.time_step)?;
                positive("converge.horizon.tol", h.tol)?;
                if h.window < 2 || h.window > h.time_steps {
                    return Err(invalid("converge.horizon.window", "must be between 2 and time_steps"));
                }
            }
        }
        Ok(())
    }

    /// Applies a `--tol stage=value` override.
    pub fn override_tolerance(&mut self, stage: &str, value: f64) -> Result<()> {
        let field = format!("--tol {stage}");
        positive(&field, value)?;
        match stage {
            "evolution" | "evolve" => self.evolution.tol = value,
            "waveops" => self.waveops.tol = value,
            "dyson" => self.dyson.tol = value,
            "converge" => {
                self.converge
                    .as_mut()
                    .ok_or_else(|| invalid(&field, "config has no [converge] section"))?
                    .eps = value
            }
            "horizon" => {
                self.converge
                    .as_mut()
                    .and_then(|c| c.horizon.as_mut())
                    .ok_or_else(|| invalid(&field, "config has no [converge.horizon] section"))?
                    .tol = value
            }
            _ => return Err(invalid(&field, "unknown stage")),
        }
        Ok(())
    }

    /// The configuration as TOML, defaults filled in.
    pub fn echo(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# cannot serialize config: {e}\n"))
    }

    pub fn mode_space(&self, cutoff: Option<f64>) -> Result<Arc<ModeSpace>> {
        let system = ParticleSystem::new(&self.particles)?;
        let mut grid = ModeGrid::new(
            self.grid.dimension,
            cutoff.unwrap_or(self.grid.cutoff),
            self.grid.spacing,
        )?;
        for (name, labels) in &self.grid.labels {
            grid = grid.with_internal_labels(name, labels.clone())?;
        }
        Ok(Arc::new(ModeSpace::new(system, grid)?))
    }

    pub fn cutoffs(&self) -> BasisCutoffs {
        let mut c = BasisCutoffs::new(self.basis.max_quanta).with_hard_limit(self.basis.hard_limit);
        if let Some(cap) = self.basis.energy_cap {
            c = c.with_energy_cap(cap);
        }
        c
    }

    /// Basis at the configured cutoff, or at `cutoff` when given.
    pub fn basis(&self, cutoff: Option<f64>) -> Result<Arc<FockBasis>> {
        Ok(Arc::new(FockBasis::enumerate(self.mode_space(cutoff)?, self.cutoffs())?))
    }

    pub fn interaction_spec(&self) -> Result<InteractionSpec> {
        let mut spec = InteractionSpec::empty();
        spec.couplings = self.interaction.couplings.clone();
        for t in &self.interaction.terms {
            spec = spec.with_term(term(t)?);
        }
        for t in &self.interaction.counterterms {
            spec = spec.with_counterterm(term(t)?);
        }
        Ok(spec)
    }

    /// Configured rank, capped at the basis size.
    pub fn rank_for(&self, basis_len: usize) -> usize {
        self.interaction.rank.map_or(basis_len, |n| n.min(basis_len))
    }

    pub fn propagator(&self, h: &crate::linalg::SparseOperator) -> Propagator {
        Propagator::new(h.clone(), self.evolution.tol)
            .with_method(self.evolution.method)
            .with_krylov_dim(self.evolution.krylov_dim)
            .with_dense_limit(self.evolution.dense_limit)
    }

    pub fn plateau_options(&self) -> PlateauOptions {
        let w = &self.waveops;
        let mut o = PlateauOptions::uniform(w.time_step, w.time_steps, w.window, w.tol);
        o.columns = w.columns.clone();
        o
    }

    pub fn adiabatic_options(&self) -> AdiabaticOptions {
        let mut o = AdiabaticOptions::new(self.waveops.eps.clone(), self.waveops.tol);
        o.columns = self.waveops.columns.clone();
        o
    }
}

fn term(t: &TermConfig) -> Result<Term> {
    Ok(match t {
        TermConfig::PhiPower {
            particle,
            power,
            coupling,
        } => Term::PhiPower {
            particle: particle.clone(),
            power: *power,
            coupling: coupling.clone(),
        },
        TermConfig::Yukawa {
            boson,
            fermion,
            coupling,
        } => Term::Yukawa {
            boson: boson.clone(),
            fermion: fermion.clone(),
            coupling: coupling.clone(),
        },
        TermConfig::Counterterm { particle, coupling } => Term::MassCounterterm {
            particle: particle.clone(),
            coupling: coupling.clone(),
        },
        TermConfig::Vertex {
            name,
            legs,
            kernel,
            coupling,
            momentum_conserving,
        } => {
            let legs = legs.iter().map(|l| Leg::parse(l)).collect::<Result<Vec<_>>>()?;
            let kernel = match kernel {
                KernelConfig::Constant([re, im]) => Kernel::Constant(Complex64::new(*re, *im)),
                KernelConfig::FieldNormalized(c) => Kernel::FieldNormalized(*c),
                KernelConfig::Table(rows) => Kernel::Table(
                    rows.iter()
                        .map(|r| (r.momenta.clone(), Complex64::new(r.value[0], r.value[1])))
                        .collect(),
                ),
            };
            let mut v = Vertex::new(name, legs, kernel).conserving(*momentum_conserving);
            if let Some(c) = coupling {
                v = v.with_coupling(c);
            }
            Term::Custom(v)
        }
    })
}
