//! Normal-ordered vertices and the interaction specification built from them.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{LadderKind, ModeSpace, MomentumIndex, Statistics};

/// One ladder operator in a vertex monomial, addressed by particle name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Leg {
    pub particle: String,
    pub kind: LadderKind,
    /// Restricts the leg to one internal label; `None` sums over all labels.
    pub label: Option<String>,
}

impl Leg {
    pub fn raise(particle: &str) -> Self {
        Self {
            particle: particle.into(),
            kind: LadderKind::Raise,
            label: None,
        }
    }

    pub fn lower(particle: &str) -> Self {
        Self {
            particle: particle.into(),
            kind: LadderKind::Lower,
            label: None,
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Parses `dag(name)` as a raising leg and `name` as a lowering leg.
    /// Either form accepts a `{label}` suffix on the name.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (kind, inner) = match text.strip_prefix("dag(").and_then(|s| s.strip_suffix(')')) {
            Some(inner) => (LadderKind::Raise, inner.trim()),
            None => (LadderKind::Lower, text),
        };
        let (particle, label) = match inner.split_once('{') {
            Some((name, rest)) => {
                let label = rest.strip_suffix('}').ok_or_else(|| bad_leg(text))?;
                (name.trim(), Some(label.trim().to_string()))
            }
            None => (inner, None),
        };
        let valid = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_');
        if !valid(particle) || label.as_deref().is_some_and(|l| !valid(l)) {
            return Err(bad_leg(text));
        }
        Ok(Self {
            particle: particle.into(),
            kind,
            label,
        })
    }
}

fn bad_leg(text: &str) -> Error {
    Error::InvalidArgument(format!("cannot parse vertex leg `{text}`"))
}

impl fmt::Display for Leg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.label {
            Some(l) => format!("{}{{{}}}", self.particle, l),
            None => self.particle.clone(),
        };
        match self.kind {
            LadderKind::Raise => write!(f, "dag({name})"),
            LadderKind::Lower => write!(f, "{name}"),
        }
    }
}

/// Amplitude as a function of the leg modes.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// The same amplitude for every momentum assignment.
    Constant(Complex64),
    /// `c * V^(1 - L/2) * prod_legs (2 mu)^(-1/2)` with box volume `V`; the
    /// normalization produced by expanding local fields in box modes.
    FieldNormalized(f64),
    /// Explicit amplitudes keyed by the momentum index of every leg, in leg
    /// order. Missing assignments are zero.
    Table(BTreeMap<Vec<MomentumIndex>, Complex64>),
}

impl Kernel {
    pub(crate) fn evaluate(
        &self,
        vertex: &str,
        space: &ModeSpace,
        modes: &[usize],
    ) -> Result<Complex64> {
        match self {
            Kernel::Constant(c) => Ok(*c),
            Kernel::FieldNormalized(c) => {
                let volume = space.grid().volume();
                let mut value = c * volume.powf(1.0 - modes.len() as f64 / 2.0);
                for &m in modes {
                    let mu = space.energy(m);
                    if mu <= 0.0 {
                        return Err(Error::KernelEvaluation {
                            vertex: vertex.into(),
                            reason: format!(
                                "field normalization diverges on zero-energy mode {}",
                                space.describe(m)
                            ),
                        });
                    }
                    value /= (2.0 * mu).sqrt();
                }
                if !value.is_finite() {
                    return Err(Error::KernelEvaluation {
                        vertex: vertex.into(),
                        reason: "non-finite amplitude".into(),
                    });
                }
                Ok(Complex64::new(value, 0.0))
            }
            Kernel::Table(table) => {
                let key: Vec<MomentumIndex> =
                    modes.iter().map(|&m| space.mode(m).momentum.clone()).collect();
                Ok(table.get(&key).copied().unwrap_or_default())
            }
        }
    }
}

/// A normal-ordered monomial `coupling * sum_k K(k) A_1(k_1) ... A_L(k_L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub name: String,
    pub legs: Vec<Leg>,
    pub kernel: Kernel,
    /// Named coupling multiplying the kernel; `None` means 1.
    pub coupling: Option<String>,
    pub momentum_conserving: bool,
}

impl Vertex {
    pub fn new(name: &str, legs: Vec<Leg>, kernel: Kernel) -> Self {
        Self {
            name: name.into(),
            legs,
            kernel,
            coupling: None,
            momentum_conserving: true,
        }
    }

    pub fn with_coupling(mut self, coupling: &str) -> Self {
        self.coupling = Some(coupling.into());
        self
    }

    pub fn conserving(mut self, flag: bool) -> Self {
        self.momentum_conserving = flag;
        self
    }
}

/// A term of an interaction: a built-in family expanded against the
/// particle system at resolution time, or an explicit vertex.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// `g/N! :phi^N:` for a self-conjugate boson, integrated over the box.
    PhiPower {
        particle: String,
        power: usize,
        coupling: String,
    },
    /// `g (b^dag d^dag a + a^dag d b)` with `d` the antiparticle of the fermion `b`.
    Yukawa {
        boson: String,
        fermion: String,
        coupling: String,
    },
    /// `delta/2 :phi^2:`, a mass-squared shift of a self-conjugate boson.
    MassCounterterm { particle: String, coupling: String },
    Custom(Vertex),
}

/// The interaction `A_i` as a list of terms plus named coupling values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionSpec {
    pub vertices: Vec<Term>,
    pub couplings: BTreeMap<String, f64>,
    pub counterterms: Vec<Term>,
}

impl InteractionSpec {
    /// The free theory.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_term(mut self, term: Term) -> Self {
        self.vertices.push(term);
        self
    }

    pub fn with_counterterm(mut self, term: Term) -> Self {
        self.counterterms.push(term);
        self
    }

    pub fn with_coupling(mut self, name: &str, value: f64) -> Self {
        self.couplings.insert(name.into(), value);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() && self.counterterms.is_empty()
    }

    /// Expands built-ins, checks normal order and binds particles, labels
    /// and couplings against `space`.
    pub fn resolve(&self, space: &ModeSpace) -> Result<Vec<ResolvedVertex>> {
        let mut out = Vec::new();
        for term in self.vertices.iter().chain(&self.counterterms) {
            for v in expand(term, space)? {
                out.push(self.bind(&v, space)?);
            }
        }
        Ok(out)
    }

    fn bind(&self, v: &Vertex, space: &ModeSpace) -> Result<ResolvedVertex> {
        let invalid = |reason: String| Error::InvalidVertex {
            vertex: v.name.clone(),
            reason,
        };
        if v.legs.is_empty() {
            return Err(invalid("vertex has no legs".into()));
        }
        let first_lower = v.legs.iter().position(|l| l.kind == LadderKind::Lower);
        if let Some(p) = first_lower {
            if v.legs[p..].iter().any(|l| l.kind == LadderKind::Raise) {
                return Err(invalid("legs are not normal ordered".into()));
            }
        }
        let system = space.system();
        let mut legs = Vec::with_capacity(v.legs.len());
        for leg in &v.legs {
            let particle = system.id(&leg.particle)?;
            let label = match &leg.label {
                None => None,
                Some(name) => {
                    let labels = space.grid().labels_for(&leg.particle);
                    let idx = labels.iter().position(|l| l == name).ok_or_else(|| {
                        invalid(format!("particle `{}` has no label `{name}`", leg.particle))
                    })?;
                    Some(idx)
                }
            };
            legs.push(ResolvedLeg {
                particle,
                kind: leg.kind,
                label,
            });
        }
        if let Kernel::Table(t) = &v.kernel {
            let d = space.grid().dimension();
            if t.keys().any(|k| k.len() != legs.len() || k.iter().any(|p| p.len() != d)) {
                return Err(invalid(format!(
                    "table keys must list one {d}-dimensional momentum per leg"
                )));
            }
        }
        let coefficient = match &v.coupling {
            None => 1.0,
            Some(name) => *self
                .couplings
                .get(name)
                .ok_or_else(|| Error::UnknownCoupling(name.clone()))?,
        };
        Ok(ResolvedVertex {
            name: v.name.clone(),
            legs,
            kernel: v.kernel.clone(),
            coefficient,
            momentum_conserving: v.momentum_conserving,
        })
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn require_real_scalar(space: &ModeSpace, particle: &str, context: &str) -> Result<()> {
    let sys = space.system();
    let id = sys.id(particle)?;
    let p = sys.particle(id);
    if p.statistics != Statistics::Boson || sys.conjugate(id) != id {
        return Err(Error::InvalidVertex {
            vertex: context.into(),
            reason: format!("`{particle}` must be a self-conjugate boson"),
        });
    }
    Ok(())
}

fn expand(term: &Term, space: &ModeSpace) -> Result<Vec<Vertex>> {
    match term {
        Term::Custom(v) => Ok(vec![v.clone()]),
        Term::PhiPower {
            particle,
            power,
            coupling,
        } => {
            let name = format!("{particle}^{power}");
            require_real_scalar(space, particle, &name)?;
            if *power == 0 {
                return Err(Error::InvalidVertex {
                    vertex: name,
                    reason: "power must be positive".into(),
                });
            }
            Ok(phi_power_vertices(&name, particle, *power, coupling))
        }
        Term::MassCounterterm { particle, coupling } => {
            let name = format!("{particle} mass counterterm");
            require_real_scalar(space, particle, &name)?;
            Ok(phi_power_vertices(&name, particle, 2, coupling))
        }
        Term::Yukawa {
            boson,
            fermion,
            coupling,
        } => {
            let name = format!("yukawa({fermion},{boson})");
            require_real_scalar(space, boson, &name)?;
            let sys = space.system();
            let fid = sys.id(fermion)?;
            if !sys.particle(fid).is_fermion() {
                return Err(Error::InvalidVertex {
                    vertex: name,
                    reason: format!("`{fermion}` must be a fermion"),
                });
            }
            let anti = sys.particle(sys.conjugate(fid)).name.clone();
            let pair = Vertex::new(
                &format!("{name} pair creation"),
                vec![Leg::raise(fermion), Leg::raise(&anti), Leg::lower(boson)],
                Kernel::FieldNormalized(1.0),
            )
            .with_coupling(coupling);
            let annihilation = Vertex::new(
                &format!("{name} pair annihilation"),
                vec![Leg::raise(boson), Leg::lower(&anti), Leg::lower(fermion)],
                Kernel::FieldNormalized(1.0),
            )
            .with_coupling(coupling);
            Ok(vec![pair, annihilation])
        }
    }
}

/// `:phi^N:/N!` split into its `N + 1` normal-ordered monomials.
fn phi_power_vertices(name: &str, particle: &str, power: usize, coupling: &str) -> Vec<Vertex> {
    (0..=power)
        .map(|raises| {
            let legs = (0..power)
                .map(|i| {
                    if i < raises {
                        Leg::raise(particle)
                    } else {
                        Leg::lower(particle)
                    }
                })
                .collect();
            let c = binomial(power, raises) / factorial(power);
            Vertex::new(
                &format!("{name} [{raises} raising]"),
                legs,
                Kernel::FieldNormalized(c),
            )
            .with_coupling(coupling)
        })
        .collect()
}

/// A leg bound to a particle id and optional label index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedLeg {
    pub particle: usize,
    pub kind: LadderKind,
    pub label: Option<usize>,
}

/// A vertex ready for the assembly engine.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedVertex {
    pub name: String,
    pub legs: Vec<ResolvedLeg>,
    pub kernel: Kernel,
    pub coefficient: f64,
    pub momentum_conserving: bool,
}

impl ResolvedVertex {
    /// Modes a leg may address.
    pub fn leg_modes<'a>(
        &self,
        space: &'a ModeSpace,
        leg: usize,
    ) -> impl Iterator<Item = usize> + 'a {
        let l = self.legs[leg].clone();
        space
            .modes_of(l.particle)
            .iter()
            .copied()
            .filter(move |&m| l.label.is_none_or(|lab| space.mode(m).label == lab))
    }

    /// `sum(raise momenta) == sum(lower momenta)` for a full assignment.
    pub fn conserves(&self, space: &ModeSpace, modes: &[usize]) -> bool {
        let d = space.grid().dimension();
        let mut total = vec![0i64; d];
        for (leg, &m) in self.legs.iter().zip(modes) {
            let s = if leg.kind == LadderKind::Raise { 1 } else { -1 };
            for (t, &k) in total.iter_mut().zip(&space.mode(m).momentum) {
                *t += s * k as i64;
            }
        }
        total.iter().all(|&t| t == 0)
    }

    /// Kernel times coupling.
    pub fn amplitude(&self, space: &ModeSpace, modes: &[usize]) -> Result<Complex64> {
        Ok(self.kernel.evaluate(&self.name, space, modes)? * self.coefficient)
    }
}
