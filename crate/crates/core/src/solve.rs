//! Solution fields: variational solutions by front propagation and minimax
//! selection, Lax–Oleinik and Hopf oracles, stability gaps and the two-time
//! order discrepancy.

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{Bindings, DiffError, EvalError, Expr, Var};
use crate::front::{self, Branch, Evolution, Front, FrontError, Order};
use crate::gfqi::{self, FamilyBuilder, FiberAxis, GeneratingFamily, GfqiError};
use crate::grid::linspace;
use crate::ham::{self, BracketKind, Coords, HamError, Hamiltonian, Region};

/// Points of the brute-force Legendre grid.
pub const LEGENDRE_POINTS: usize = 2001;
/// Slack allowed on top of the stability bound.
pub const STABILITY_TOL: f64 = 2.5e-3;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Front(#[from] FrontError),
    #[error(transparent)]
    Gfqi(#[from] GfqiError),
    #[error(transparent)]
    Ham(#[from] HamError),
    #[error("initial condition: {0}")]
    Eval(#[from] EvalError),
    #[error("initial condition: {0}")]
    Diff(#[from] DiffError),
    #[error("'{0}' must depend on p only for this method")]
    NotMomentumOnly(String),
    #[error("'{0}' is not convex in p on the sampled range")]
    NotConvex(String),
    #[error("the initial condition is not convex on the sampled range")]
    InitialNotConvex,
    #[error("bad grid: {0}")]
    Grid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Variational,
    LaxOleinik,
    Hopf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Variational => "variational",
            Method::LaxOleinik => "lax-oleinik",
            Method::Hopf => "hopf",
        }
    }
}

/// Values on a `(t[, t2]) × x` grid. Undefined nodes hold NaN with zero
/// branches.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionField {
    pub method: Method,
    /// `t`, or `t1` for two-time fields.
    pub times: Vec<f64>,
    pub times2: Option<Vec<f64>>,
    pub x: Vec<f64>,
    /// Row-major over `(t, t2, x)`.
    pub u: Vec<f64>,
    pub branches: Vec<u32>,
    /// First time the front was found vertical.
    pub horizon: Option<f64>,
    /// Multi-branch nodes where no family could be built.
    pub failures: usize,
}

impl SolutionField {
    fn empty(method: Method, times: &[f64], times2: Option<&[f64]>, x: &[f64]) -> Self {
        let n = times.len() * times2.map_or(1, <[f64]>::len) * x.len();
        SolutionField {
            method,
            times: times.to_vec(),
            times2: times2.map(<[f64]>::to_vec),
            x: x.to_vec(),
            u: vec![f64::NAN; n],
            branches: vec![0; n],
            horizon: None,
            failures: 0,
        }
    }

    fn n2(&self) -> usize {
        self.times2.as_ref().map_or(1, Vec::len)
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n2() + j) * self.x.len() + k
    }

    /// `u(times[i], x[k])` of a one-time field.
    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.u[self.index(i, 0, k)]
    }

    /// `u(times[i], times2[j], x[k])`.
    pub fn at2(&self, i: usize, j: usize, k: usize) -> f64 {
        self.u[self.index(i, j, k)]
    }

    /// Row of `u` at one time (pair).
    pub fn slice(&self, i: usize, j: usize) -> &[f64] {
        let s = self.index(i, j, 0);
        &self.u[s..s + self.x.len()]
    }

    fn put_row(&mut self, i: usize, j: usize, u: Vec<f64>, b: Vec<u32>) {
        let s = self.index(i, j, 0);
        self.u[s..s + u.len()].copy_from_slice(&u);
        self.branches[s..s + b.len()].copy_from_slice(&b);
    }

    /// Largest `|self - other|` over nodes finite in both.
    pub fn sup_gap(&self, other: &SolutionField) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Discretisation shared by the solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct Grids {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    /// Front seeds; must cover every foot of a characteristic reaching `x`.
    pub seeds: Vec<f64>,
    pub steps_per_unit: f64,
    /// Levels of seed bisection near folds.
    pub refine_levels: usize,
    /// Uniform fiber samples per multi-branch node, before adding the feet.
    pub fiber_points: usize,
}

impl Grids {
    pub fn new(x: Vec<f64>, t: Vec<f64>, seeds: Vec<f64>) -> Self {
        Grids {
            x,
            t,
            seeds,
            steps_per_unit: 100.0,
            refine_levels: 3,
            fiber_points: 257,
        }
    }

    fn validate(&self) -> Result<(), SolveError> {
        let increasing = |v: &[f64]| v.iter().all(|a| a.is_finite()) && v.windows(2).all(|w| w[0] < w[1]);
        if self.x.len() < 2 || !increasing(&self.x) {
            return Err(SolveError::Grid("x grid needs at least two increasing points".into()));
        }
        if self.t.is_empty() || !increasing(&self.t) || self.t[0] < 0.0 {
            return Err(SolveError::Grid("time grid must be increasing and start at t >= 0".into()));
        }
        if self.seeds.len() < 2 || !increasing(&self.seeds) {
            return Err(SolveError::Grid("seed grid needs at least two increasing points".into()));
        }
        if self.steps_per_unit.is_nan() || self.steps_per_unit <= 0.0 {
            return Err(SolveError::Grid("steps_per_unit must be positive".into()));
        }
        Ok(())
    }

    fn uniform_step(&self) -> Result<f64, SolveError> {
        let dx = (self.x[self.x.len() - 1] - self.x[0]) / (self.x.len() - 1) as f64;
        let uniform = self
            .x
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dx).abs() <= 1e-9 * dx.max(1.0));
        if !uniform {
            return Err(SolveError::Grid("this method needs a uniform x grid".into()));
        }
        Ok(dx)
    }
}

fn eval_f(f: &Expr, x: f64) -> Result<f64, EvalError> {
    f.eval(&Bindings::new().with(Var::X, x))
}

/// How multi-branch nodes are resolved.
enum Selector {
    Exact { builder: Box<FamilyBuilder>, fiber_points: usize },
    FrontShot,
}

struct Row {
    u: Vec<f64>,
    branches: Vec<u32>,
    failures: usize,
}

fn select(front: &Front, x: &[f64], selector: &Selector) -> Row {
    let seeds = front.seeds();
    let spacing = seeds.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let margin = 3.0 * spacing;
    let decomposed = front::branch_decompose(front, x);
    let picked: Vec<(f64, u32, bool)> = decomposed
        .par_iter()
        .zip(x.par_iter())
        .map(|(branches, &xk)| match branches.len() {
            0 => (f64::NAN, 0, false),
            1 => (branches[0].action, 1, false),
            n => match minimax_node(front, xk, branches, margin, selector) {
                Ok(v) => (v, n as u32, false),
                Err(e) => {
                    log::debug!("selection failed at x = {xk}: {e}");
                    (f64::NAN, n as u32, true)
                }
            },
        })
        .collect();
    Row {
        u: picked.iter().map(|r| r.0).collect(),
        branches: picked.iter().map(|r| r.1).collect(),
        failures: picked.iter().filter(|r| r.2).count(),
    }
}

fn minimax_node(
    front: &Front,
    x: f64,
    branches: &[Branch],
    margin: f64,
    selector: &Selector,
) -> Result<f64, GfqiError> {
    let lo = branches.iter().map(|b| b.seed_x).fold(f64::INFINITY, f64::min) - margin;
    let hi = branches.iter().map(|b| b.seed_x).fold(f64::NEG_INFINITY, f64::max) + margin;
    let fam = match selector {
        Selector::Exact {
            builder,
            fiber_points,
        } => {
            let mut fiber = linspace(lo, hi, *fiber_points);
            fiber.extend(branches.iter().map(|b| b.seed_x));
            fiber.sort_by(f64::total_cmp);
            fiber.dedup();
            let values = builder.fiber_values(x, &fiber)?;
            let tail = builder
                .tail()
                .ok_or_else(|| GfqiError::Tail("kernel has no fixed tail".into()))?;
            GeneratingFamily::new(vec![x], false, vec![FiberAxis { values: fiber, tail }], values)?
        }
        Selector::FrontShot => gfqi::family_from_front(front, &[x], false, (lo, hi))?,
    };
    Ok(gfqi::minimax_c1_fiber(&fam, 0)?.value)
}

fn initial_row(f: &Expr, x: &[f64]) -> Result<Row, SolveError> {
    Ok(Row {
        u: x.iter().map(|&xk| eval_f(f, xk)).collect::<Result<_, _>>()?,
        branches: vec![1; x.len()],
        failures: 0,
    })
}

fn evolve_refined(
    f: &Expr,
    h: &Hamiltonian,
    grids: &Grids,
) -> Result<Evolution, SolveError> {
    let mut seeds = grids.seeds.clone();
    let mut level = 0;
    loop {
        let start = front::seed_front(f, std::slice::from_ref(h), &seeds)?;
        let evo = front::evolve_front(&start, h, 0, &grids.t, grids.steps_per_unit)?;
        if level == grids.refine_levels {
            return Ok(evo);
        }
        let refined = front::refine_near_folds(&seeds, &evo.fronts);
        if refined.len() == seeds.len() {
            return Ok(evo);
        }
        log::debug!("refinement level {}: {} -> {} seeds", level + 1, seeds.len(), refined.len());
        seeds = refined;
        level += 1;
    }
}

/// `u(t, x) = c(1_x, S_x)` at every node of `grids`.
///
/// Single-branch nodes take the branch action. Multi-branch nodes take the
/// minimax of a one-fiber family over a window around the branch feet. Nodes
/// at or after the blowup horizon are NaN.
pub fn variational_solution(
    f: &Expr,
    h: &Hamiltonian,
    grids: &Grids,
) -> Result<SolutionField, SolveError> {
    grids.validate()?;
    h.require_deps(&[Var::T, Var::X, Var::P])?;
    let evo = evolve_refined(f, h, grids)?;
    let mut field = SolutionField::empty(Method::Variational, &grids.t, None, &grids.x);
    field.horizon = evo.horizon;
    for (i, fr) in evo.fronts.iter().enumerate() {
        let t = grids.t[i];
        let row = if t == 0.0 {
            initial_row(f, &grids.x)?
        } else {
            let builder = FamilyBuilder::new(f, h, t)?;
            let selector = if builder.is_exact() && builder.tail().is_some() {
                Selector::Exact {
                    builder: Box::new(builder),
                    fiber_points: grids.fiber_points,
                }
            } else {
                Selector::FrontShot
            };
            select(fr, &grids.x, &selector)
        };
        field.failures += row.failures;
        field.put_row(i, 0, row.u, row.branches);
    }
    if field.failures > 0 {
        log::warn!("{} multi-branch nodes could not be resolved", field.failures);
    }
    Ok(field)
}

fn require_momentum_only(h: &Hamiltonian) -> Result<(), SolveError> {
    if h.deps().iter().any(|&v| v != Var::P) {
        return Err(SolveError::NotMomentumOnly(h.label().to_string()));
    }
    Ok(())
}

/// `[min f', max f']` over the seed range from divided differences, padded.
fn slope_range(f: &Expr, grids: &Grids) -> Result<(f64, f64), SolveError> {
    let (lo, hi) = (grids.seeds[0], grids.seeds[grids.seeds.len() - 1]);
    let y = linspace(lo, hi, 4001);
    let fy: Vec<f64> = y.iter().map(|&v| eval_f(f, v)).collect::<Result<_, _>>()?;
    let dy = y[1] - y[0];
    let range = fy
        .windows(2)
        .map(|w| (w[1] - w[0]) / dy)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |r, s| (r.0.min(s), r.1.max(s)));
    let pad = 0.1 * (range.1 - range.0) + 0.1;
    Ok((range.0 - pad, range.1 + pad))
}

fn h_of_p(h: &Hamiltonian, p: &[f64]) -> Result<Vec<f64>, HamError> {
    p.iter().map(|&q| h.value(&Coords::phase(0.0, q))).collect()
}

/// Viscosity solution `min_y f(y) + t H*((x - y)/t)` for convex `H(p)`.
///
/// `H*` is a brute-force maximum over a `p` grid spanning the slopes of `f`;
/// `y` runs over a lattice four times finer than the uniform `x` grid,
/// restricted to `|x - y| ≤ t max|H'|`.
pub fn lax_oleinik(f: &Expr, h: &Hamiltonian, grids: &Grids) -> Result<SolutionField, SolveError> {
    grids.validate()?;
    require_momentum_only(h)?;
    let dx = grids.uniform_step()?;
    let (plo, phi) = slope_range(f, grids)?;
    let p = linspace(plo, phi, LEGENDRE_POINTS);
    let hp = h_of_p(h, &p)?;
    if hp.windows(3).any(|w| w[0] - 2.0 * w[1] + w[2] < -1e-9) {
        return Err(SolveError::NotConvex(h.label().to_string()));
    }
    let dp = p[1] - p[0];
    let vmax = hp.windows(2).map(|w| ((w[1] - w[0]) / dp).abs()).fold(0.0, f64::max);

    const REFINE: usize = 4;
    let dy = dx / REFINE as f64;
    let t_max = grids.t[grids.t.len() - 1];
    let k_max = (t_max * vmax / dy).ceil() as usize;
    let nx = grids.x.len();
    // f on the lattice x_0 + (m - k_max) dy, m = 0..REFINE (nx - 1) + 2 k_max.
    let lattice: Vec<f64> = (0..=REFINE * (nx - 1) + 2 * k_max)
        .into_par_iter()
        .map(|m| eval_f(f, grids.x[0] + (m as f64 - k_max as f64) * dy))
        .collect::<Result<_, _>>()?;

    let mut field = SolutionField::empty(Method::LaxOleinik, &grids.t, None, &grids.x);
    for (i, &t) in grids.t.iter().enumerate() {
        if t == 0.0 {
            let row = initial_row(f, &grids.x)?;
            field.put_row(i, 0, row.u, row.branches);
            continue;
        }
        let k = ((t * vmax / dy).ceil() as usize).min(k_max);
        // t H*(v) at v = j dy / t for j in -k..=k.
        let cost: Vec<f64> = (0..=2 * k)
            .into_par_iter()
            .map(|j| {
                let v = (j as f64 - k as f64) * dy / t;
                let star = p
                    .iter()
                    .zip(&hp)
                    .map(|(q, hq)| q * v - hq)
                    .fold(f64::NEG_INFINITY, f64::max);
                t * star
            })
            .collect();
        let u: Vec<f64> = (0..nx)
            .into_par_iter()
            .map(|ix| {
                // y = x_ix - (j - k) dy sits at lattice index REFINE ix + k_max - (j - k).
                let centre = REFINE * ix + k_max + k;
                cost.iter()
                    .enumerate()
                    .map(|(j, c)| lattice[centre - j] + c)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        field.put_row(i, 0, u, vec![1; nx]);
    }
    Ok(field)
}

/// Hopf formula `max_q x q - f*(q) - t H(q)` for convex `f` and `H(p)`.
pub fn hopf(f: &Expr, h: &Hamiltonian, grids: &Grids) -> Result<SolutionField, SolveError> {
    grids.validate()?;
    require_momentum_only(h)?;
    let (lo, hi) = (grids.seeds[0], grids.seeds[grids.seeds.len() - 1]);
    let y = linspace(lo, hi, 8001);
    let fy: Vec<f64> = y.iter().map(|&v| eval_f(f, v)).collect::<Result<_, _>>()?;
    if fy.windows(3).any(|w| w[0] - 2.0 * w[1] + w[2] < -1e-9) {
        return Err(SolveError::InitialNotConvex);
    }
    let (qlo, qhi) = slope_range(f, grids)?;
    let q = linspace(qlo, qhi, LEGENDRE_POINTS);
    let hq = h_of_p(h, &q)?;
    let fstar: Vec<f64> = q
        .par_iter()
        .map(|&s| {
            y.iter()
                .zip(&fy)
                .map(|(yv, fv)| s * yv - fv)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut field = SolutionField::empty(Method::Hopf, &grids.t, None, &grids.x);
    for (i, &t) in grids.t.iter().enumerate() {
        let row = if t == 0.0 {
            initial_row(f, &grids.x)?.u
        } else {
            grids
                .x
                .par_iter()
                .map(|&x| {
                    (0..q.len())
                        .map(|j| x * q[j] - fstar[j] - t * hq[j])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        };
        field.put_row(i, 0, row, vec![1; grids.x.len()]);
    }
    Ok(field)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityReport {
    /// `sup |u_H - u_K|` over nodes defined for both.
    pub gap: f64,
    /// `T · sup |H - K|` sampled on the grid.
    pub bound: f64,
    pub ok: bool,
}

/// Compares the variational solutions of `H` and `K` with the `C⁰`
/// stability bound.
pub fn stability_gap(
    h: &Hamiltonian,
    k: &Hamiltonian,
    f: &Expr,
    grids: &Grids,
) -> Result<StabilityReport, SolveError> {
    let uh = variational_solution(f, h, grids)?;
    let uk = variational_solution(f, k, grids)?;
    let gap = uh.sup_gap(&uk);
    let t_final = grids.t[grids.t.len() - 1];
    let (plo, phi) = slope_range(f, grids)?;
    let p = linspace(plo - 1.0, phi + 1.0, 101);
    let timed = h.depends_on(Var::T) || k.depends_on(Var::T);
    let times: &[f64] = if timed { &grids.t } else { &grids.t[..1] };
    let mut sup: f64 = 0.0;
    for &t in times {
        for &x in &grids.x {
            for &q in &p {
                let c = Coords::phase(x, q).at_time(t);
                sup = sup.max((h.value(&c)? - k.value(&c)?).abs());
            }
        }
    }
    let bound = t_final * sup;
    Ok(StabilityReport {
        gap,
        bound,
        ok: gap <= bound + 2.0 * STABILITY_TOL,
    })
}

/// `u^σ(t1, t2, x)` for `σ = order`, on `t1 × t2 × x`.
pub fn multitime_solve(
    f: &Expr,
    h1: &Hamiltonian,
    h2: &Hamiltonian,
    order: Order,
    t1: &[f64],
    t2: &[f64],
    grids: &Grids,
) -> Result<SolutionField, SolveError> {
    grids.validate()?;
    let legal = [Var::T1, Var::T2, Var::X, Var::P];
    h1.require_deps(&legal)?;
    h2.require_deps(&legal)?;
    for t in [t1, t2] {
        Grids {
            t: t.to_vec(),
            ..grids.clone()
        }
        .validate()?;
    }

    let start = front::seed_front(f, &[h1.clone(), h2.clone()], &grids.seeds)?;
    let (first, first_slot, first_t, second, second_slot, second_t) = match order {
        Order::OneTwo => (h2, 1, t2, h1, 0, t1),
        Order::TwoOne => (h1, 0, t1, h2, 1, t2),
    };
    let spu = grids.steps_per_unit;
    let outer = front::evolve_front(&start, first, first_slot, first_t, spu)?;
    let inner: Vec<Evolution> = outer
        .fronts
        .par_iter()
        .map(|fr| front::evolve_front(fr, second, second_slot, second_t, spu))
        .collect::<Result<_, _>>()?;

    let mut field = SolutionField::empty(Method::Variational, t1, Some(t2), &grids.x);
    field.horizon = inner
        .iter()
        .filter_map(|e| e.horizon)
        .chain(outer.horizon)
        .reduce(f64::min);
    for (a, evo) in inner.iter().enumerate() {
        for (b, fr) in evo.fronts.iter().enumerate() {
            let (i, j) = match order {
                Order::OneTwo => (b, a),
                Order::TwoOne => (a, b),
            };
            let row = if t1[i] == 0.0 && t2[j] == 0.0 {
                initial_row(f, &grids.x)?
            } else {
                select(fr, &grids.x, &Selector::FrontShot)
            };
            field.failures += row.failures;
            field.put_row(i, j, row.u, row.branches);
        }
    }
    Ok(field)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscrepancyRow {
    pub eps: f64,
    /// `sup |u_{1,2} - u_{2,1}|` over the `(t1, t2, x)` grid.
    pub gap: f64,
    /// Grid supremum of `|≪H1, εH2≫|`.
    pub bracket_norm: f64,
}

/// Solves both orders for `H1` and `ε H2` at each `ε`.
pub fn order_discrepancy(
    f: &Expr,
    h1: &Hamiltonian,
    h2: &Hamiltonian,
    t1: &[f64],
    t2: &[f64],
    grids: &Grids,
    eps_list: &[f64],
) -> Result<Vec<DiscrepancyRow>, SolveError> {
    let (plo, phi) = slope_range(f, grids)?;
    let region = Region {
        x: Some((grids.x[0], grids.x[grids.x.len() - 1])),
        p: Some((plo, phi)),
        t1: Some((t1[0], t1[t1.len() - 1])),
        t2: Some((t2[0], t2[t2.len() - 1])),
        ..Default::default()
    };
    eps_list
        .iter()
        .map(|&eps| {
            let h2e = h2.scaled(eps)?;
            let a = multitime_solve(f, h1, &h2e, Order::OneTwo, t1, t2, grids)?;
            let b = multitime_solve(f, h1, &h2e, Order::TwoOne, t1, t2, grids)?;
            let norm = ham::bracket_sup_norm(h1, &h2e, BracketKind::MultiTime, &region, 9)?;
            Ok(DiscrepancyRow {
                eps,
                gap: a.sup_gap(&b),
                bracket_norm: norm.value,
            })
        })
        .collect()
}
