//! Stage orchestration, table and report emission, and the run manifest.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::config::{ConvergeConfig, ObservableConfig, RunConfig};
use crate::convergence::{double_limit_study, horizon_study, DoubleLimitReport, ObservableFamily, Regulator};
use crate::dyson::{
    choose_nodes, damped_scattering_matrix, force_vacuum, propagator_interaction_picture,
    smatrix_first_order, time_ordered_exponential, DampedOptions, InteractionPictureGenerator,
    QuadratureSpec, DYSON_DENSE_LIMIT,
};
use crate::error::{Error, Result};
use crate::evolution::{dense_oracle_exponential, Propagator};
use crate::fock::FockBasis;
use crate::hamiltonian::{assemble_regularized, ground_state_check, interaction_matrix, RegularizedHamiltonian};
use crate::linalg::{max_abs, max_abs_vec, CVector, SparseOperator, ONE, ZERO};
use crate::scattering::{
    principal_angles, range_projection, scattering_operator, wave_operator_adiabatic,
    wave_operator_time_plateau, Direction, ScatteringReport, WaveMethod, WaveOperatorResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Build,
    Evolve,
    Waveops,
    Smatrix,
    Dyson,
    Converge,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Build,
        Stage::Evolve,
        Stage::Waveops,
        Stage::Smatrix,
        Stage::Dyson,
        Stage::Converge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Build => "build",
            Stage::Evolve => "evolve",
            Stage::Waveops => "waveops",
            Stage::Smatrix => "smatrix",
            Stage::Dyson => "dyson",
            Stage::Converge => "converge",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    /// Path relative to the output directory.
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: Stage,
    pub version: String,
    pub config_echo: String,
    /// Wall-clock seconds per executed stage.
    pub timings: Vec<(Stage, f64)>,
    pub files: Vec<OutputFile>,
    /// Failed certification checks; empty when the run is certified.
    pub failures: Vec<String>,
}

impl RunManifest {
    pub fn certified(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command: {}", self.command);
        let _ = writeln!(s, "fockscatter: {}", self.version);
        let _ = writeln!(s, "certified: {}", self.certified());
        for f in &self.failures {
            let _ = writeln!(s, "failed: {f}");
        }
        s.push_str("\n[timings]\n");
        for (st, secs) in &self.timings {
            let _ = writeln!(s, "{st}: {secs:.3} s");
        }
        s.push_str("\n[files]\n");
        for f in &self.files {
            let _ = writeln!(s, "{}  {}  {} bytes", f.sha256, f.name, f.bytes);
        }
        s.push_str("\n[config]\n");
        s.push_str(&self.config_echo);
        s
    }

    /// Recomputes every digest against the files in `dir`.
    pub fn verify(&self, dir: &Path) -> Result<bool> {
        for f in &self.files {
            let bytes = std::fs::read(dir.join(&f.name))?;
            if hex::encode(Sha256::digest(&bytes)) != f.sha256 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), content)?;
        self.files.push(OutputFile {
            name: name.into(),
            bytes: content.len(),
            sha256: hex::encode(Sha256::digest(content.as_bytes())),
        });
        Ok(())
    }
}

/// Plain decimal for moderate magnitudes, scientific otherwise.
struct Num(f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || (1e-3..1e7).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn stage_error(stage: Stage, e: Error) -> Error {
    Error::InvalidArgument(format!("stage {stage} failed: {e}"))
}

struct Built {
    basis: Arc<FockBasis>,
    h: RegularizedHamiltonian,
    prop: Propagator,
}

/// Runs `command` and its prerequisite stages, writing tables and reports
/// into `out` followed by `manifest.txt`.
pub fn run_pipeline(cfg: &RunConfig, command: Stage, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut outputs = Outputs {
        dir: out.to_path_buf(),
        files: Vec::new(),
    };
    let mut timings = Vec::new();
    let mut failures = Vec::new();

    let mut timed = |stage: Stage, f: &mut dyn FnMut() -> Result<()>| -> Result<()> {
        let start = Instant::now();
        f().map_err(|e| stage_error(stage, e))?;
        timings.push((stage, start.elapsed().as_secs_f64()));
        Ok(())
    };

    if command == Stage::Converge {
        let conv = cfg.converge.as_ref().ok_or_else(|| Error::Config {
            field: "converge".into(),
            reason: "the converge stage needs a [converge] section".into(),
        })?;
        timed(Stage::Converge, &mut || {
            failures.extend(converge_stage(cfg, conv, &mut outputs)?);
            Ok(())
        })?;
    } else {
        let mut built = None;
        timed(Stage::Build, &mut || {
            built = Some(build_stage(cfg, &mut outputs)?);
            Ok(())
        })?;
        let built = built.unwrap();
        match command {
            Stage::Evolve => timed(Stage::Evolve, &mut || evolve_stage(cfg, &built, &mut outputs))?,
            Stage::Waveops | Stage::Smatrix => {
                let mut pair = None;
                timed(Stage::Waveops, &mut || {
                    let (wp, wm, fails) = waveops_stage(cfg, &built, &mut outputs)?;
                    failures.extend(fails);
                    pair = Some((wp, wm));
                    Ok(())
                })?;
                if command == Stage::Smatrix {
                    let (wp, wm) = pair.take().unwrap();
                    timed(Stage::Smatrix, &mut || {
                        failures.extend(smatrix_stage(cfg, &wp, &wm, &mut outputs)?);
                        Ok(())
                    })?;
                }
            }
            Stage::Dyson => timed(Stage::Dyson, &mut || {
                failures.extend(dyson_stage(cfg, &built, &mut outputs)?);
                Ok(())
            })?,
            Stage::Build | Stage::Converge => {}
        }
    }

    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION").into(),
        config_echo: cfg.echo(),
        timings,
        files: outputs.files,
        failures,
    };
    std::fs::write(out.join("manifest.txt"), manifest.render())?;
    Ok(manifest)
}

fn build_hamiltonian(cfg: &RunConfig, basis: Arc<FockBasis>) -> Result<RegularizedHamiltonian> {
    let spec = cfg.interaction_spec()?;
    let rank = cfg.rank_for(basis.len());
    assemble_regularized(&spec, basis, rank)
}

fn build_stage(cfg: &RunConfig, out: &mut Outputs) -> Result<Built> {
    let basis = cfg.basis(None)?;
    let h = build_hamiltonian(cfg, basis.clone())?;
    let prop = cfg.propagator(&h.full);

    let mut csv = String::from("index,energy,quanta,state\n");
    for i in 0..basis.len() {
        let _ = writeln!(
            csv,
            "{i},{},{},{}",
            basis.energy(i),
            basis.state(i).total_quanta(),
            quote(&basis.describe(i))
        );
    }
    out.write("basis.csv", &csv)?;

    let mut rep = String::new();
    let _ = writeln!(rep, "modes: {}", basis.space().len());
    let _ = writeln!(rep, "basis size: {}", basis.len());
    let _ = writeln!(rep, "max quanta: {}", basis.n_max_quanta());
    let _ = writeln!(rep, "interaction rank: {}", h.rank);
    let _ = writeln!(rep, "interaction nonzeros: {}", h.interaction.nnz());
    let _ = writeln!(rep, "interaction max entry: {}", Num(h.interaction.max_abs()));
    let _ = writeln!(rep, "hermiticity defect: {}", Num(h.full.hermiticity_defect()));
    if !h.is_free() && basis.len() <= cfg.evolution.dense_limit {
        let g = ground_state_check(&h, cfg.evolution.dense_limit, 1e-12)?;
        let _ = writeln!(rep, "vacuum expectation: {}", Num(g.vacuum_expectation));
        let _ = writeln!(rep, "vacuum defect: {}", Num(g.vacuum_defect));
        let _ = writeln!(rep, "lowest eigenvalue: {}", Num(g.lowest_eigenvalue));
        let _ = writeln!(rep, "vacuum is eigenvector: {}", g.vacuum_is_eigenvector);
    }
    out.write("build.txt", &rep)?;
    Ok(Built { basis, h, prop })
}

fn evolve_stage(cfg: &RunConfig, b: &Built, out: &mut Outputs) -> Result<()> {
    let dim = b.basis.len();
    let u = cfg.evolution.initial_state;
    if u >= dim {
        return Err(Error::Config {
            field: "evolution.initial_state".into(),
            reason: format!("index {u} outside basis of size {dim}"),
        });
    }
    let mut v = CVector::zeros(dim);
    v[u] = ONE;
    let energy = |x: &CVector| x.dotc(&b.h.full.apply(x)).re;
    let e0 = energy(&v);
    let dense = (dim <= cfg.evolution.dense_limit).then(|| b.h.full.to_dense());

    let mut csv = String::from("t,index,re,im\n");
    let mut rep = String::new();
    let _ = writeln!(rep, "method: {}", b.prop.method());
    let _ = writeln!(rep, "tolerance: {}", Num(b.prop.tolerance()));
    let _ = writeln!(rep, "initial state: {u} {}", b.basis.describe(u));
    let _ = writeln!(rep, "t,norm_defect,energy_drift,oracle_error");
    for &t in &cfg.evolution.times {
        let w = b.prop.evolve(&v, t)?;
        for (i, z) in w.iter().enumerate() {
            let _ = writeln!(csv, "{t},{i},{},{}", Num(z.re), Num(z.im));
        }
        let oracle = match &dense {
            Some(m) => {
                let exact = dense_oracle_exponential(m, t, cfg.evolution.dense_limit)? * &v;
                Num(max_abs_vec(&(exact - &w))).to_string()
            }
            None => "skipped".into(),
        };
        let _ = writeln!(rep, "{t},{},{},{oracle}", Num((w.norm() - 1.0).abs()), Num((energy(&w) - e0).abs()));
    }
    out.write("evolve.csv", &csv)?;
    out.write("evolve.txt", &rep)?;
    Ok(())
}

fn wave_operator(
    cfg: &RunConfig,
    h: &RegularizedHamiltonian,
    prop: &Propagator,
    dir: Direction,
    columns: Option<Vec<usize>>,
) -> Result<WaveOperatorResult> {
    match cfg.waveops.method {
        WaveMethod::TimePlateau => {
            let mut o = cfg.plateau_options();
            if columns.is_some() {
                o.columns = columns;
            }
            wave_operator_time_plateau(h, prop, dir, &o)
        }
        WaveMethod::Adiabatic => {
            let mut o = cfg.adiabatic_options();
            if columns.is_some() {
                o.columns = columns;
            }
            wave_operator_adiabatic(h, prop, dir, &o)
        }
    }
}

fn matrix_csv(w: &WaveOperatorResult) -> String {
    let mut csv = String::from("row,col,re,im\n");
    for (j, &c) in w.columns.iter().enumerate() {
        for r in 0..w.matrix.nrows() {
            let z = w.matrix[(r, j)];
            if z != ZERO {
                let _ = writeln!(csv, "{r},{c},{},{}", Num(z.re), Num(z.im));
            }
        }
    }
    csv
}

fn waveops_stage(
    cfg: &RunConfig,
    b: &Built,
    out: &mut Outputs,
) -> Result<(WaveOperatorResult, WaveOperatorResult, Vec<String>)> {
    let wp = wave_operator(cfg, &b.h, &b.prop, Direction::Plus, None)?;
    let wm = wave_operator(cfg, &b.h, &b.prop, Direction::Minus, None)?;
    let mut failures = Vec::new();
    let mut rep = String::new();
    let _ = writeln!(rep, "method: {}", cfg.waveops.method);
    let _ = writeln!(rep, "tolerance: {}", Num(cfg.waveops.tol));
    let mut drift = String::from("direction,parameter,drift\n");
    for w in [&wp, &wm] {
        let _ = writeln!(rep, "\n[{}]", w.direction);
        let _ = writeln!(rep, "columns: {}", w.columns.len());
        if let Some(t) = w.plateau_time {
            let _ = writeln!(rep, "plateau time: {t}");
        }
        if let Some(d) = w.extrapolation_disagreement {
            let _ = writeln!(rep, "extrapolation disagreement: {}", Num(d));
        }
        let _ = writeln!(rep, "converged: {}", w.converged);
        let _ = writeln!(rep, "recurrence detected: {}", w.recurrence_detected);
        let _ = writeln!(rep, "isometry defect: {}", Num(w.isometry_defect));
        let _ = writeln!(rep, "intertwining defect: {}", Num(w.intertwining_defect));
        if let Some(d) = w.half_time_intertwining_defect {
            let _ = writeln!(rep, "intertwining defect at half time: {}", Num(d));
        }
        for (p, d) in &w.drift_history {
            let _ = writeln!(drift, "{},{p},{}", w.direction, Num(*d));
        }
        if !w.converged {
            failures.push(format!("{} did not converge", w.direction));
        }
        if w.isometry_defect > cfg.waveops.isometry_tol {
            failures.push(format!(
                "{} isometry defect {} above {}",
                w.direction, w.isometry_defect, cfg.waveops.isometry_tol
            ));
        }
        if w.intertwining_defect > cfg.waveops.intertwining_tol {
            failures.push(format!(
                "{} intertwining defect {} above {}",
                w.direction, w.intertwining_defect, cfg.waveops.intertwining_tol
            ));
        }
    }
    let pp = range_projection(&wp, cfg.waveops.rank_tol)?;
    let pm = range_projection(&wm, cfg.waveops.rank_tol)?;
    let angles = principal_angles(&pp, &pm);
    let _ = writeln!(rep, "\n[ranges]");
    let _ = writeln!(rep, "rank W+: {}{}", pp.rank, if pp.rank_deficient { " (deficient)" } else { "" });
    let _ = writeln!(rep, "rank W-: {}{}", pm.rank, if pm.rank_deficient { " (deficient)" } else { "" });
    let _ = writeln!(rep, "largest principal angle: {}", Num(angles.last().copied().unwrap_or(0.0)));
    out.write("waveops_plus.csv", &matrix_csv(&wp))?;
    out.write("waveops_minus.csv", &matrix_csv(&wm))?;
    out.write("waveops_drift.csv", &drift)?;
    out.write("waveops.txt", &rep)?;
    Ok((wp, wm, failures))
}

fn smatrix_stage(
    cfg: &RunConfig,
    wp: &WaveOperatorResult,
    wm: &WaveOperatorResult,
    out: &mut Outputs,
) -> Result<Vec<String>> {
    let rep: ScatteringReport = scattering_operator(wp, wm)?;
    let mut failures = Vec::new();
    let mut csv = String::from("row,col,re,im\n");
    for (i, &r) in rep.out_states.iter().enumerate() {
        for (j, &c) in rep.in_states.iter().enumerate() {
            let z = rep.s_matrix[(i, j)];
            if z != ZERO {
                let _ = writeln!(csv, "{r},{c},{},{}", Num(z.re), Num(z.im));
            }
        }
    }
    let mut channels = String::from("in,out,probability\n");
    for (i, o, p) in &rep.channel_probabilities {
        let _ = writeln!(channels, "{i},{o},{p}");
    }
    let mut text = String::new();
    let _ = writeln!(text, "in states: {}", rep.in_states.len());
    let _ = writeln!(text, "out states: {}", rep.out_states.len());
    let _ = writeln!(text, "vacuum persistence: {} {}", Num(rep.vacuum_persistence.re), Num(rep.vacuum_persistence.im));
    match rep.unitarity_defect {
        Some(d) => {
            let _ = writeln!(text, "unitarity defect: {d}");
            if d > cfg.waveops.unitarity_tol {
                failures.push(format!("unitarity defect {d} above {}", cfg.waveops.unitarity_tol));
            }
        }
        None => {
            let _ = writeln!(text, "unitarity defect: not computed (column subset)");
        }
    }
    if rep.vacuum_persistence != ONE {
        failures.push(format!("vacuum persistence {}", rep.vacuum_persistence));
    }
    for w in &rep.warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    out.write("smatrix.csv", &csv)?;
    out.write("channels.csv", &channels)?;
    out.write("smatrix.txt", &text)?;
    Ok(failures)
}

fn dyson_stage(cfg: &RunConfig, b: &Built, out: &mut Outputs) -> Result<Vec<String>> {
    let d = &cfg.dyson;
    let dim = b.h.dim();
    if dim > DYSON_DENSE_LIMIT {
        return Err(Error::DenseLimit {
            dim,
            limit: DYSON_DENSE_LIMIT,
        });
    }
    let g = InteractionPictureGenerator::new(&b.h)?;
    let quad = match d.nodes {
        Some(n) => QuadratureSpec::new(n),
        None => choose_nodes(&g, d.t, d.t0, d.tol)?,
    };
    let series = time_ordered_exponential(&g, d.t, d.t0, d.order, &quad, d.tol)?;
    let exact = propagator_interaction_picture(&b.h, &b.prop, d.t, d.t0)?;
    let mut csv = String::from("order,term_norm,error\n");
    for (k, (term, sum)) in series.terms.iter().zip(&series.partial_sums).enumerate() {
        let _ = writeln!(csv, "{k},{},{}", Num(max_abs(term)), Num(max_abs(&(sum - &exact))));
    }
    let mut rep = String::new();
    let _ = writeln!(rep, "t: {}", d.t);
    let _ = writeln!(rep, "t0: {}", d.t0);
    let _ = writeln!(rep, "order: {}", d.order);
    let _ = writeln!(rep, "nodes per level: {}", series.quadrature.nodes_per_level);
    if let Some((m, diff)) = series.cube_check {
        let _ = writeln!(rep, "cube check (order {m}): {diff}");
    }
    for w in &series.warnings {
        let _ = writeln!(rep, "warning: {w}");
    }
    let failures = series.warnings.iter().map(|w| format!("dyson: {w}")).collect();
    out.write("dyson.csv", &csv)?;

    if !d.born_eps.is_empty() {
        let e = b.h.energies();
        let mut born = String::from("eps,row,col,delta_e,damped_abs,born_abs,ratio\n");
        for &eps in &d.born_eps {
            let mut s = damped_scattering_matrix(&b.h, &DampedOptions::new(eps))?;
            force_vacuum(&mut s);
            let first = smatrix_first_order(&b.h, eps)?;
            for (r, c, _) in b.h.interaction.entries() {
                let de = e[r] - e[c];
                if r == 0 || c == 0 || de.abs() < d.off_shell_gap {
                    continue;
                }
                let (sd, sb) = (s[(r, c)].norm(), first[(r, c)].norm());
                let _ = writeln!(born, "{eps},{r},{c},{de},{},{},{}", Num(sd), Num(sb), Num(sd / sb));
            }
        }
        out.write("born.csv", &born)?;
    }
    out.write("dyson.txt", &rep)?;
    Ok(failures)
}

/// Assembled ingredients per regulator, shared by all families.
struct RegulatorData {
    basis: Arc<FockBasis>,
    interaction: SparseOperator,
}

fn observable_family(
    cfg: Arc<RunConfig>,
    obs: &ObservableConfig,
    data: Arc<Vec<(Regulator, RegulatorData)>>,
) -> ObservableFamily {
    let name = obs.name();
    let obs = obs.clone();
    let fam_name = name.clone();
    ObservableFamily::new(&name, move |n, r| {
        let fail = |e: Error| Error::Observable {
            family: fam_name.clone(),
            rank: n,
            regulator: r.to_string(),
            reason: e.to_string(),
        };
        let (_, d) = data
            .iter()
            .find(|(reg, _)| reg == r)
            .ok_or_else(|| fail(Error::InvalidArgument("regulator was not prepared".into())))?;
        let rank = n.min(d.basis.len());
        let h = RegularizedHamiltonian::from_interaction(d.basis.clone(), &d.interaction, rank).map_err(fail)?;
        let prop = cfg.propagator(&h.full);
        let value = match &obs {
            ObservableConfig::GroundEnergy => {
                let g = ground_state_check(&h, cfg.evolution.dense_limit, 1e-12).map_err(fail)?;
                Complex64::new(g.lowest_eigenvalue, 0.0)
            }
            ObservableConfig::IntertwiningDefect => {
                let w = wave_operator(&cfg, &h, &prop, Direction::Plus, None).map_err(fail)?;
                Complex64::new(w.intertwining_defect, 0.0)
            }
            ObservableConfig::SElement { row, col } => {
                if *row == 0 || *col == 0 {
                    if row == col { ONE } else { ZERO }
                } else {
                    let wp = wave_operator(&cfg, &h, &prop, Direction::Plus, Some(vec![*col])).map_err(fail)?;
                    let wm = wave_operator(&cfg, &h, &prop, Direction::Minus, Some(vec![*row])).map_err(fail)?;
                    wm.matrix.column(0).dotc(&wp.matrix.column(0))
                }
            }
        };
        Ok(value)
    })
}

/// Prepares the families of a converge section and runs the double-limit study.
pub fn converge_study(cfg: &RunConfig, conv: &ConvergeConfig) -> Result<DoubleLimitReport> {
    let spec = cfg.interaction_spec()?;
    let regs: Vec<Regulator> = conv
        .cutoffs
        .iter()
        .map(|&c| Regulator::new(c, cfg.grid.spacing))
        .collect();
    let mut data = Vec::with_capacity(regs.len());
    for r in &regs {
        let basis = cfg.basis(Some(r.cutoff))?;
        let interaction = interaction_matrix(&spec, &basis, basis.len())?;
        data.push((*r, RegulatorData { basis, interaction }));
    }
    let data = Arc::new(data);
    let shared = Arc::new(cfg.clone());
    let fams: Vec<ObservableFamily> = conv
        .observables
        .iter()
        .map(|o| observable_family(shared.clone(), o, data.clone()))
        .collect();
    double_limit_study(&fams, &regs, &conv.ranks, conv.eps, conv.swapped)
}

fn converge_stage(cfg: &RunConfig, conv: &ConvergeConfig, out: &mut Outputs) -> Result<Vec<String>> {
    let rep = converge_study(cfg, conv)?;
    let mut failures = Vec::new();

    let mut grid = String::from("family,cutoff,spacing,rank,re,im\n");
    let mut plateaus = String::from("family,cutoff,spacing,plateau_rank,failure\n");
    for sweeps in &rep.inner {
        for s in sweeps {
            for (n, v) in s.ranks.iter().zip(&s.values) {
                let _ = writeln!(
                    grid,
                    "{},{},{},{n},{},{}",
                    quote(&s.family),
                    s.regulator.cutoff,
                    s.regulator.spacing,
                    Num(v.re),
                    Num(v.im)
                );
            }
            let _ = writeln!(
                plateaus,
                "{},{},{},{},{}",
                quote(&s.family),
                s.regulator.cutoff,
                s.regulator.spacing,
                s.plateau_rank.map_or("none".into(), |n| n.to_string()),
                quote(s.failure.as_deref().unwrap_or(""))
            );
        }
    }
    let mut outer = String::from("family,re,im,uncertainty,swapped_re,swapped_im\n");
    for o in &rep.outer {
        let (sr, si) = o.swapped.map_or((String::new(), String::new()), |z| (Num(z.re).to_string(), Num(z.im).to_string()));
        let _ = writeln!(outer, "{},{},{},{},{sr},{si}", quote(&o.family), Num(o.value.re), Num(o.value.im), Num(o.uncertainty));
    }

    let mut text = String::new();
    let _ = writeln!(
        text,
        "scope: h_star covers only the {} declared observables below",
        rep.families.len()
    );
    for f in &rep.families {
        let _ = writeln!(text, "observable: {f}");
    }
    let _ = writeln!(text, "eps: {}", rep.eps);
    let _ = writeln!(
        text,
        "h_star: {}",
        rep.h_star.map_or("none".into(), |h| h.to_string())
    );
    for (f, ok) in rep.dominance() {
        let _ = writeln!(text, "dominance {f}: {ok}");
        if !ok {
            failures.push(format!("dominance fails for {f}"));
        }
    }
    for o in &rep.outer {
        let _ = writeln!(text, "estimate {}: {} {} +- {}", o.family, Num(o.value.re), Num(o.value.im), Num(o.uncertainty));
        if let Some(d) = o.order_discrepancy() {
            let _ = writeln!(text, "order discrepancy {}: {}", o.family, Num(d));
        }
    }
    for q in &rep.quarantined {
        let _ = writeln!(text, "quarantined: {q}");
        failures.push(format!("no plateau for {q}"));
    }
    let _ = writeln!(text, "certified: {}", rep.certified);

    if let Some(hz) = &conv.horizon {
        let basis = cfg.basis(None)?;
        let h = build_hamiltonian(cfg, basis.clone())?;
        let prop = cfg.propagator(&h.full);
        let states: Vec<CVector> = hz
            .states
            .iter()
            .map(|&u| {
                if u >= basis.len() {
                    return Err(Error::Config {
                        field: "converge.horizon.states".into(),
                        reason: format!("index {u} outside basis of size {}", basis.len()),
                    });
                }
                let mut v = CVector::zeros(basis.len());
                v[u] = ONE;
                Ok(v)
            })
            .collect::<Result<_>>()?;
        let times: Vec<f64> = (1..=hz.time_steps).map(|k| k as f64 * hz.time_step).collect();
        let rec = horizon_study(&h, &prop, &states, &times, hz.window, hz.tol)?;
        let mut csv = String::from("state,horizon,drift,recurrence_onset\n");
        for (u, s) in hz.states.iter().zip(&rec.states) {
            let _ = writeln!(
                csv,
                "{u},{},{},{}",
                s.horizon.map_or("none".into(), |t| t.to_string()),
                Num(s.drift),
                s.recurrence_onset.map_or("none".into(), |t| t.to_string())
            );
        }
        let _ = writeln!(
            text,
            "horizon: {}",
            rec.global.map_or("none".into(), |t| t.to_string())
        );
        if rec.global.is_none() {
            failures.push("no global horizon".into());
        }
        out.write("horizon.csv", &csv)?;
    }

    out.write("converge_grid.csv", &grid)?;
    out.write("converge_plateaus.csv", &plateaus)?;
    out.write("converge_outer.csv", &outer)?;
    out.write("converge.txt", &text)?;
    Ok(failures)
}
