//! Plateau and extrapolation studies over interaction rank, regulator and time.
//!
//! The inner limit in the rank `n` is taken at fixed regulator first, then
//! the regulator is extrapolated. A study covers a finite, explicitly
//! declared list of observables; `h_star` is the largest plateau rank among
//! them and says nothing about observables outside the list.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::Propagator;
use crate::hamiltonian::RegularizedHamiltonian;
use crate::scattering::{omega_apply, Direction};
use crate::linalg::CVector;

/// A regulator setting: momentum cutoff and grid spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regulator {
    pub cutoff: f64,
    pub spacing: f64,
}

impl Regulator {
    pub fn new(cutoff: f64, spacing: f64) -> Self {
        Self { cutoff, spacing }
    }

    /// Expansion variable of the outer extrapolation, `1/cutoff`.
    pub fn step(&self) -> f64 {
        1.0 / self.cutoff
    }
}

impl fmt::Display for Regulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cutoff={} spacing={}", self.cutoff, self.spacing)
    }
}

type Evaluator = dyn Fn(usize, &Regulator) -> Result<Complex64> + Send + Sync;

/// A named observable `g_n(r)`. Evaluation must be deterministic.
pub struct ObservableFamily {
    pub name: String,
    evaluate: Box<Evaluator>,
}

impl ObservableFamily {
    pub fn new(
        name: &str,
        evaluate: impl Fn(usize, &Regulator) -> Result<Complex64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            evaluate: Box::new(evaluate),
        }
    }

    pub fn evaluate(&self, rank: usize, r: &Regulator) -> Result<Complex64> {
        (self.evaluate)(rank, r)
    }
}

impl fmt::Debug for ObservableFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObservableFamily").field("name", &self.name).finish()
    }
}

/// Values of one family along the rank grid at one regulator.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerPlateau {
    pub family: String,
    pub regulator: Regulator,
    pub ranks: Vec<usize>,
    /// Values for the ranks evaluated before any failure.
    pub values: Vec<Complex64>,
    /// First rank after which every later value stays within `eps`.
    pub plateau_rank: Option<usize>,
    pub failure: Option<String>,
}

impl InnerPlateau {
    /// Inner-limit estimate: the value at the largest evaluated rank.
    pub fn limit_estimate(&self) -> Option<Complex64> {
        self.values.last().copied()
    }

    pub fn value_at(&self, rank: usize) -> Option<Complex64> {
        self.ranks
            .iter()
            .position(|&n| n == rank)
            .and_then(|i| self.values.get(i).copied())
    }
}

/// First index `i` with at least one later value and `|g_i - g_j| < eps`
/// for every later `j`.
fn plateau_index(values: &[Complex64], eps: f64) -> Option<usize> {
    (0..values.len().saturating_sub(1))
        .find(|&i| values[i + 1..].iter().all(|v| (v - values[i]).norm() < eps))
}

fn check_ranks(ranks: &[usize]) -> Result<()> {
    if ranks.len() < 3 {
        return Err(Error::InvalidArgument("an inner sweep needs at least 3 ranks".into()));
    }
    if ranks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("ranks must be strictly increasing".into()));
    }
    Ok(())
}

fn plateau_from(family: &str, r: Regulator, ranks: &[usize], results: Vec<Result<Complex64>>, eps: f64) -> InnerPlateau {
    let mut values = Vec::new();
    let mut failure = None;
    for (n, res) in ranks.iter().zip(results) {
        match res {
            Ok(v) => values.push(v),
            Err(e) => {
                failure = Some(format!("rank {n}: {e}"));
                break;
            }
        }
    }
    let plateau_rank = if failure.is_none() {
        plateau_index(&values, eps).map(|i| ranks[i])
    } else {
        None
    };
    InnerPlateau {
        family: family.into(),
        regulator: r,
        ranks: ranks.to_vec(),
        values,
        plateau_rank,
        failure,
    }
}

/// Evaluates `g_n(r)` along `ranks` and locates the plateau.
pub fn inner_sweep(fam: &ObservableFamily, r: Regulator, ranks: &[usize], eps: f64) -> Result<InnerPlateau> {
    check_ranks(ranks)?;
    let results: Vec<Result<Complex64>> = ranks.par_iter().map(|&n| fam.evaluate(n, &r)).collect();
    Ok(plateau_from(&fam.name, r, ranks, results, eps))
}

/// Outer estimate and its uncertainty for one family.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterEstimate {
    pub family: String,
    pub value: Complex64,
    /// `|g(r_last) - g(r_prev)|` of the inner limits.
    pub uncertainty: f64,
    /// Estimate with the limits swapped (extrapolate in `r` at each rank,
    /// then take the largest rank), when requested.
    pub swapped: Option<Complex64>,
}

impl OuterEstimate {
    pub fn order_discrepancy(&self) -> Option<f64> {
        self.swapped.map(|s| (s - self.value).norm())
    }
}

/// Full double-limit study.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleLimitReport {
    pub regulators: Vec<Regulator>,
    pub ranks: Vec<usize>,
    pub eps: f64,
    /// Per family, one inner sweep per regulator (in regulator order).
    pub inner: Vec<Vec<InnerPlateau>>,
    pub families: Vec<String>,
    /// Largest plateau rank at the last regulator over the plateaued families.
    pub h_star: Option<usize>,
    pub outer: Vec<OuterEstimate>,
    /// Families without a plateau at some regulator; excluded from `outer`.
    pub quarantined: Vec<String>,
    pub certified: bool,
}

impl DoubleLimitReport {
    /// `|g_{h_star}(r_max) - g_n(r_max)| < eps` for every computed
    /// `n >= h_star`, per family.
    pub fn dominance(&self) -> Vec<(String, bool)> {
        let Some(h) = self.h_star else {
            return self.families.iter().map(|f| (f.clone(), false)).collect();
        };
        self.inner
            .iter()
            .map(|sweeps| {
                let last = sweeps.last().unwrap();
                let ok = match last.value_at(h) {
                    Some(gh) => last
                        .ranks
                        .iter()
                        .zip(&last.values)
                        .filter(|(&n, _)| n >= h)
                        .all(|(_, v)| (v - gh).norm() < self.eps),
                    None => false,
                };
                (last.family.clone(), ok)
            })
            .collect()
    }
}

/// Richardson extrapolation to step 0: linear through the last two points,
/// quadratic through the last three when four or more are available.
pub fn richardson(steps: &[f64], values: &[Complex64]) -> Complex64 {
    let n = values.len();
    match n {
        0 => Complex64::default(),
        1 => values[0],
        2 | 3 => {
            let (h1, h2) = (steps[n - 2], steps[n - 1]);
            (values[n - 1] * h1 - values[n - 2] * h2) / (h1 - h2)
        }
        _ => {
            // Lagrange interpolation through the last three points, evaluated at 0
            let h = &steps[n - 3..];
            let g = &values[n - 3..];
            (0..3)
                .map(|i| {
                    let w: f64 = (0..3)
                        .filter(|&j| j != i)
                        .map(|j| h[j] / (h[j] - h[i]))
                        .product();
                    g[i] * w
                })
                .sum()
        }
    }
}

/// Runs every family over the `(n, r)` grid.
pub fn double_limit_study(
    fams: &[ObservableFamily],
    regulators: &[Regulator],
    ranks: &[usize],
    eps: f64,
    swapped_order: bool,
) -> Result<DoubleLimitReport> {
    if fams.is_empty() || regulators.is_empty() {
        return Err(Error::InvalidArgument("study needs families and regulators".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("plateau eps must be positive".into()));
    }
    check_ranks(ranks)?;
    let steps: Vec<f64> = regulators.iter().map(|r| r.step()).collect();
    if steps.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("regulator cutoffs must be distinct".into()));
    }
    let cells: Vec<(usize, usize, usize)> = (0..fams.len())
        .flat_map(|f| (0..regulators.len()).flat_map(move |r| (0..ranks.len()).map(move |n| (f, r, n))))
        .collect();
    let results: Vec<Result<Complex64>> = cells
        .par_iter()
        .map(|&(f, r, n)| fams[f].evaluate(ranks[n], &regulators[r]))
        .collect();
    let mut it = results.into_iter();
    let inner: Vec<Vec<InnerPlateau>> = fams
        .iter()
        .map(|fam| {
            regulators
                .iter()
                .map(|&r| {
                    let chunk: Vec<Result<Complex64>> = it.by_ref().take(ranks.len()).collect();
                    plateau_from(&fam.name, r, ranks, chunk, eps)
                })
                .collect()
        })
        .collect();

    let mut quarantined = Vec::new();
    let mut outer = Vec::new();
    let mut h_star: Option<usize> = None;
    for sweeps in &inner {
        let name = sweeps[0].family.clone();
        if sweeps.iter().any(|s| s.plateau_rank.is_none()) {
            quarantined.push(name);
            continue;
        }
        let last = sweeps.last().unwrap().plateau_rank.unwrap();
        h_star = Some(h_star.map_or(last, |h| h.max(last)));
        let limits: Vec<Complex64> = sweeps.iter().map(|s| s.limit_estimate().unwrap()).collect();
        let value = richardson(&steps, &limits);
        let uncertainty = if limits.len() >= 2 {
            (limits[limits.len() - 1] - limits[limits.len() - 2]).norm()
        } else {
            0.0
        };
        let swapped = swapped_order.then(|| {
            let per_rank: Vec<Complex64> = (0..ranks.len())
                .map(|i| {
                    let vals: Vec<Complex64> = sweeps.iter().map(|s| s.values[i]).collect();
                    richardson(&steps, &vals)
                })
                .collect();
            *per_rank.last().unwrap()
        });
        outer.push(OuterEstimate {
            family: name,
            value,
            uncertainty,
            swapped,
        });
    }
    Ok(DoubleLimitReport {
        regulators: regulators.to_vec(),
        ranks: ranks.to_vec(),
        eps,
        families: fams.iter().map(|f| f.name.clone()).collect(),
        certified: quarantined.is_empty(),
        inner,
        h_star,
        outer,
        quarantined,
    })
}

/// Horizon of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateHorizon {
    /// Smallest grid time after which both directions stay within `tol`
    /// over the forward window.
    pub horizon: Option<f64>,
    /// Largest drift inside the accepted window, over both directions.
    pub drift: f64,
    /// First later grid time at which the drift from `Omega(T_u)` reaches `tol`.
    pub recurrence_onset: Option<f64>,
}

/// Horizon study over a set of states.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonRecord {
    pub time_grid: Vec<f64>,
    pub window: usize,
    pub tol: f64,
    pub states: Vec<StateHorizon>,
    /// `max_u T_u`, or `None` if some state has no horizon.
    pub global: Option<f64>,
}

/// For each state, the first grid time `T_u` such that
/// `||(Omega(t) - Omega(T_u)) u|| < tol` for the next `window - 1` grid
/// times, in both time directions.
pub fn horizon_study(
    h: &RegularizedHamiltonian,
    prop: &Propagator,
    states: &[CVector],
    time_grid: &[f64],
    window: usize,
    tol: f64,
) -> Result<HorizonRecord> {
    if time_grid.is_empty() || time_grid.windows(2).any(|w| w[1] <= w[0]) || time_grid[0] <= 0.0 {
        return Err(Error::InvalidArgument(
            "time grid must be nonempty, positive and increasing".into(),
        ));
    }
    if window < 2 {
        return Err(Error::InvalidArgument("horizon window must be at least 2".into()));
    }
    for s in states {
        if s.len() != h.dim() {
            return Err(Error::DimensionMismatch {
                expected: h.dim(),
                got: s.len(),
            });
        }
        if (s.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument("horizon states must be normalized".into()));
        }
    }
    let energies = h.energies();
    let jobs: Vec<(usize, Direction, usize)> = (0..states.len())
        .flat_map(|s| {
            [Direction::Plus, Direction::Minus]
                .into_iter()
                .flat_map(move |d| (0..time_grid.len()).map(move |k| (s, d, k)))
        })
        .collect();
    let iterates: Vec<CVector> = jobs
        .par_iter()
        .map(|&(s, d, k)| omega_apply(prop, energies, &states[s], d.time_sign() * time_grid[k]))
        .collect::<Result<_>>()?;
    let nt = time_grid.len();
    let per_state: Vec<StateHorizon> = (0..states.len())
        .map(|s| {
            let traj = |d: usize, k: usize| &iterates[(2 * s + d) * nt + k];
            let drift_from = |k: usize, j: usize| -> f64 {
                (0..2).map(|d| (traj(d, j) - traj(d, k)).norm()).fold(0.0, f64::max)
            };
            let found = (0..nt.saturating_sub(window - 1)).find_map(|k| {
                let worst = (k + 1..k + window).map(|j| drift_from(k, j)).fold(0.0, f64::max);
                (worst < tol).then_some((k, worst))
            });
            match found {
                Some((k, worst)) => StateHorizon {
                    horizon: Some(time_grid[k]),
                    drift: worst,
                    recurrence_onset: (k + window..nt)
                        .find(|&j| drift_from(k, j) >= tol)
                        .map(|j| time_grid[j]),
                },
                None => StateHorizon {
                    horizon: None,
                    drift: f64::INFINITY,
                    recurrence_onset: None,
                },
            }
        })
        .collect();
    let global = per_state
        .iter()
        .map(|s| s.horizon)
        .try_fold(f64::NEG_INFINITY, |acc, h| h.map(|h| acc.max(h)))
        .filter(|_| !per_state.is_empty());
    Ok(HorizonRecord {
        time_grid: time_grid.to_vec(),
        window,
        tol,
        states: per_state,
        global,
    })
}
