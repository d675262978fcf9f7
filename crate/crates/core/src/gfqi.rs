//! Discrete generating families quadratic at infinity and their minimax
//! values `c(1, S)`, `c(μ, S)` and `γ`.
//!
//! A family is sampled on `base × fiber` with at most two fiber axes. Each
//! fiber axis carries the sign of its quadratic tail. The class `1` appears
//! at the global minimum when every tail is positive, and at the least level
//! whose sublevel set joins the two ends of the single negative axis when
//! one tail is negative. `c(μ, S)` is computed as `-c(1, -S)`.

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{Bindings, EvalError, Expr, Var};
use crate::flow::{self, ActiveTime};
use crate::front::{self, Front, FrontError};
use crate::ham::{Coords, HamError, Hamiltonian};

/// Largest product grid a difference family may occupy.
pub const CELL_CAP: usize = 4_000_000;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GfqiError {
    #[error("minimax of a family with {0} negative tail axes is not supported (at most 1)")]
    UnsupportedIndex(usize),
    #[error("malformed family: {0}")]
    Shape(String),
    #[error("family value at cell {0} is NaN")]
    NotANumber(usize),
    #[error("product family would have {cells} cells, over the cap of {cap}; coarsen the grids")]
    TooLarge { cells: usize, cap: usize },
    #[error("cannot classify the tail of the family ({0}); enlarge xi_bounds")]
    Tail(String),
    #[error("families live on different base grids")]
    BaseMismatch,
    #[error(transparent)]
    Ham(#[from] HamError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Front(#[from] FrontError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailSign {
    /// `+ξ²`, index 0.
    Positive,
    /// `-ξ²`, index 1.
    Negative,
}

impl TailSign {
    pub fn flip(self) -> Self {
        match self {
            TailSign::Positive => TailSign::Negative,
            TailSign::Negative => TailSign::Positive,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            TailSign::Positive => 1.0,
            TailSign::Negative => -1.0,
        }
    }

    fn of(value: f64) -> TailSign {
        if value < 0.0 {
            TailSign::Negative
        } else {
            TailSign::Positive
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberAxis {
    pub values: Vec<f64>,
    pub tail: TailSign,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratingFamily {
    pub base: Vec<f64>,
    pub periodic: bool,
    pub fibers: Vec<FiberAxis>,
    /// Row-major samples: base index outermost, then fiber axes in order.
    pub values: Vec<f64>,
    /// Half-width of the fiber window; informational.
    pub match_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinimaxKind {
    C1Fiber,
    C1Global,
    CmuGlobal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinimaxValue {
    pub value: f64,
    pub kind: MinimaxKind,
    /// Grid indices of the threshold cell: base first (global queries only),
    /// then one per fiber axis.
    pub witness: Vec<usize>,
}

impl GeneratingFamily {
    pub fn new(
        base: Vec<f64>,
        periodic: bool,
        fibers: Vec<FiberAxis>,
        values: Vec<f64>,
    ) -> Result<Self, GfqiError> {
        if base.is_empty() || fibers.iter().any(|a| a.values.is_empty()) {
            return Err(GfqiError::Shape("empty axis".into()));
        }
        if fibers.len() > 2 {
            return Err(GfqiError::Shape(format!("{} fiber axes, at most 2", fibers.len())));
        }
        let cells = base.len() * fibers.iter().map(|a| a.values.len()).product::<usize>();
        if values.len() != cells {
            return Err(GfqiError::Shape(format!("{} values for {cells} cells", values.len())));
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(GfqiError::NotANumber(i));
        }
        let match_radius = fibers
            .iter()
            .flat_map(|a| a.values.iter().map(|v| v.abs()))
            .fold(0.0, f64::max);
        Ok(GeneratingFamily {
            base,
            periodic,
            fibers,
            values,
            match_radius,
        })
    }

    /// Family without fiber variables: the graph of `d(values)`.
    pub fn graph(base: Vec<f64>, periodic: bool, values: Vec<f64>) -> Result<Self, GfqiError> {
        Self::new(base, periodic, Vec::new(), values)
    }

    /// One-fiber family sampled from a closure `s(x, ξ)`.
    pub fn from_fn(
        base: Vec<f64>,
        periodic: bool,
        fiber: FiberAxis,
        s: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, GfqiError> {
        let values = base
            .iter()
            .flat_map(|&x| fiber.values.iter().map(move |&xi| (x, xi)))
            .map(|(x, xi)| s(x, xi))
            .collect();
        Self::new(base, periodic, vec![fiber], values)
    }

    /// Number of negative tail axes.
    pub fn index(&self) -> usize {
        self.fibers.iter().filter(|a| a.tail == TailSign::Negative).count()
    }

    pub fn fiber_len(&self) -> usize {
        self.fibers.iter().map(|a| a.values.len()).product()
    }

    pub fn fiber(&self, x_index: usize) -> &[f64] {
        let n = self.fiber_len();
        &self.values[x_index * n..(x_index + 1) * n]
    }

    /// `-S` with every tail sign flipped.
    pub fn negated(&self) -> Self {
        GeneratingFamily {
            fibers: self
                .fibers
                .iter()
                .map(|a| FiberAxis {
                    values: a.values.clone(),
                    tail: a.tail.flip(),
                })
                .collect(),
            values: self.values.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }

    pub fn shifted(&self, by: f64) -> Self {
        GeneratingFamily {
            values: self.values.iter().map(|v| v + by).collect(),
            ..self.clone()
        }
    }

    fn negative_axis(&self) -> Result<Option<usize>, GfqiError> {
        match self.index() {
            0 => Ok(None),
            1 => Ok(self.fibers.iter().position(|a| a.tail == TailSign::Negative)),
            k => Err(GfqiError::UnsupportedIndex(k)),
        }
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Threshold of the class `1` on a row-major grid. Returns the value and the
/// flat index of the witness cell.
fn sweep(values: &[f64], dims: &[usize], periodic: &[bool], negative: Option<usize>) -> (f64, usize) {
    let Some(axis) = negative else {
        let (i, v) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .expect("non-empty grid");
        return (*v, i);
    };
    let n = values.len();
    let mut strides = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let coord = |i: usize, k: usize| (i / strides[k]) % dims[k];

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let (left, right) = (n, n + 1);
    let mut uf = UnionFind::new(n + 2);
    let mut inserted = vec![false; n];
    for &i in &order {
        inserted[i] = true;
        for k in 0..dims.len() {
            let c = coord(i, k);
            let mut link = |j: usize| {
                if inserted[j] {
                    uf.union(i, j);
                }
            };
            if c > 0 {
                link(i - strides[k]);
            } else if periodic[k] && dims[k] > 2 {
                link(i + (dims[k] - 1) * strides[k]);
            }
            if c + 1 < dims[k] {
                link(i + strides[k]);
            } else if periodic[k] && dims[k] > 2 {
                link(i - (dims[k] - 1) * strides[k]);
            }
        }
        let c = coord(i, axis);
        if c == 0 {
            uf.union(i, left);
        }
        if c + 1 == dims[axis] {
            uf.union(i, right);
        }
        if uf.find(left) == uf.find(right) {
            return (values[i], i);
        }
    }
    unreachable!("the ends of the negative axis are joined once every cell is in")
}

fn unflatten(mut i: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = i % dims[k];
        i /= dims[k];
    }
    out
}

/// `c(1_x, S_x)` on the fiber over base index `x_index`.
pub fn minimax_c1_fiber(fam: &GeneratingFamily, x_index: usize) -> Result<MinimaxValue, GfqiError> {
    if x_index >= fam.base.len() {
        return Err(GfqiError::Shape(format!("base index {x_index} out of range")));
    }
    let negative = fam.negative_axis()?;
    let dims: Vec<usize> = fam.fibers.iter().map(|a| a.values.len()).collect();
    let periodic = vec![false; dims.len()];
    let (value, i) = sweep(fam.fiber(x_index), &dims, &periodic, negative);
    Ok(MinimaxValue {
        value,
        kind: MinimaxKind::C1Fiber,
        witness: unflatten(i, &dims),
    })
}

/// `c(1, S)` over the whole product grid.
pub fn minimax_c1_global(fam: &GeneratingFamily) -> Result<MinimaxValue, GfqiError> {
    let negative = fam.negative_axis()?.map(|k| k + 1);
    let mut dims = vec![fam.base.len()];
    dims.extend(fam.fibers.iter().map(|a| a.values.len()));
    let mut periodic = vec![false; dims.len()];
    periodic[0] = fam.periodic;
    let (value, i) = sweep(&fam.values, &dims, &periodic, negative);
    Ok(MinimaxValue {
        value,
        kind: MinimaxKind::C1Global,
        witness: unflatten(i, &dims),
    })
}

/// `c(μ, S) = -c(1, -S)`.
pub fn minimax_cmu_global(fam: &GeneratingFamily) -> Result<MinimaxValue, GfqiError> {
    let dual = minimax_c1_global(&fam.negated())?;
    Ok(MinimaxValue {
        value: -dual.value,
        kind: MinimaxKind::CmuGlobal,
        witness: dual.witness,
    })
}

/// `γ = c(μ) - c(1)`, clamped at zero.
pub fn gamma_of_family(fam: &GeneratingFamily) -> Result<f64, GfqiError> {
    let raw = minimax_cmu_global(fam)?.value - minimax_c1_global(fam)?.value;
    if raw < 0.0 {
        log::debug!("negative raw gamma {raw:e} clamped to 0");
    }
    Ok(raw.max(0.0))
}

/// `S1(x, ξ1) - S2(x, ξ2)` on the product fiber.
pub fn difference_family(
    fam1: &GeneratingFamily,
    fam2: &GeneratingFamily,
) -> Result<GeneratingFamily, GfqiError> {
    if fam1.base != fam2.base || fam1.periodic != fam2.periodic {
        return Err(GfqiError::BaseMismatch);
    }
    let (n1, n2) = (fam1.fiber_len(), fam2.fiber_len());
    let cells = fam1.base.len() * n1 * n2;
    if cells > CELL_CAP {
        return Err(GfqiError::TooLarge {
            cells,
            cap: CELL_CAP,
        });
    }
    let mut fibers = fam1.fibers.clone();
    fibers.extend(fam2.fibers.iter().map(|a| FiberAxis {
        values: a.values.clone(),
        tail: a.tail.flip(),
    }));
    let mut values = Vec::with_capacity(cells);
    for x in 0..fam1.base.len() {
        for a in fam1.fiber(x) {
            values.extend(fam2.fiber(x).iter().map(|b| a - b));
        }
    }
    GeneratingFamily::new(fam1.base.clone(), fam1.periodic, fibers, values)
}

/// `γ(L1 - L2)` for the Lagrangians generated by the two families.
pub fn gamma_difference(fam1: &GeneratingFamily, fam2: &GeneratingFamily) -> Result<f64, GfqiError> {
    gamma_of_family(&difference_family(fam1, fam2)?)
}

/// How a single-fiber family is assembled for a given `(f, H, t)`.
#[derive(Clone, Debug)]
enum Kernel {
    /// `t = 0`: the graph of `df`.
    Graph,
    /// `H = a p² + b p + c`: exact one-jump action.
    Quadratic { a: f64, b: f64, c: f64 },
    /// `H(p)` with strictly monotone `H'`: `f(ξ) + t L((x - ξ)/t)`.
    Legendre { tail: TailSign },
    /// Characteristic shot from `(ξ, f'(ξ))` plus the linear correction
    /// `P (x - X)`.
    Shot,
}

/// Builder for the discrete generating family of `u_t` with one fiber
/// variable, the seed `ξ` of the characteristic.
#[derive(Clone, Debug)]
pub struct FamilyBuilder {
    f: Expr,
    df: Expr,
    h: Hamiltonian,
    t: f64,
    kernel: Kernel,
    /// RK4 steps per unit time for the shot kernel.
    pub steps_per_unit: f64,
}

fn quadratic_coefficients(h: &Hamiltonian) -> Result<Option<(f64, f64, f64)>, HamError> {
    if h.deps().iter().any(|&v| v != Var::P) {
        return Ok(None);
    }
    let at = |p: f64| h.value(&Coords::phase(0.0, p));
    let c = at(0.0)?;
    let (hp, hm) = (at(1.0)?, at(-1.0)?);
    let b = 0.5 * (hp - hm);
    let a = 0.5 * (hp + hm) - c;
    for p in [-3.7, -0.4, 0.3, 2.5, 11.0] {
        let v = at(p)?;
        if (v - (a * p * p + b * p + c)).abs() > 1e-12 * (1.0 + v.abs()) {
            return Ok(None);
        }
    }
    Ok((a != 0.0).then_some((a, b, c)))
}

/// Sign of `H''` when `H` depends on `p` only and `H'` is strictly monotone
/// on a wide sample.
fn monotone_slope(h: &Hamiltonian) -> Result<Option<TailSign>, HamError> {
    if h.deps().iter().any(|&v| v != Var::P) {
        return Ok(None);
    }
    let slope = |p: f64| h.partial(Var::P, &Coords::phase(0.0, p));
    let mut prev = slope(-50.0)?;
    let mut sign = 0.0;
    for i in 1..=2000 {
        let next = slope(-50.0 + 0.05 * i as f64)?;
        let d = next - prev;
        if d == 0.0 || (sign != 0.0 && d.signum() != sign) {
            return Ok(None);
        }
        sign = d.signum();
        prev = next;
    }
    Ok(Some(TailSign::of(sign)))
}

impl FamilyBuilder {
    pub fn new(f: &Expr, h: &Hamiltonian, t: f64) -> Result<Self, GfqiError> {
        let df = f
            .differentiate(Var::X)
            .map_err(|e| GfqiError::Front(FrontError::Diff(e)))?;
        let kernel = if t == 0.0 {
            Kernel::Graph
        } else if let Some((a, b, c)) = quadratic_coefficients(h)? {
            Kernel::Quadratic { a, b, c }
        } else if let Some(tail) = monotone_slope(h)? {
            Kernel::Legendre { tail }
        } else {
            Kernel::Shot
        };
        Ok(FamilyBuilder {
            f: f.clone(),
            df,
            h: h.clone(),
            t,
            kernel,
            steps_per_unit: 200.0,
        })
    }

    /// Tail sign fixed by the Hamiltonian alone, when the kernel has one.
    pub fn tail(&self) -> Option<TailSign> {
        match self.kernel {
            Kernel::Quadratic { a, .. } => Some(TailSign::of(a * self.t)),
            Kernel::Legendre { tail } => Some(if self.t > 0.0 { tail } else { tail.flip() }),
            Kernel::Graph | Kernel::Shot => None,
        }
    }

    /// True unless the family falls back to characteristic shots.
    pub fn is_exact(&self) -> bool {
        !matches!(self.kernel, Kernel::Shot)
    }

    fn f_at(&self, x: f64) -> Result<f64, EvalError> {
        self.f.eval(&Bindings::new().with(Var::X, x))
    }

    /// `L(v) = p v - H(p)` at `H'(p) = v`; `None` when `v` is outside the
    /// range of `H'`.
    fn lagrangian(&self, v: f64, tail: TailSign) -> Result<Option<f64>, HamError> {
        let s = tail.sign();
        let g = |p: f64| -> Result<f64, HamError> {
            Ok(s * (self.h.partial(Var::P, &Coords::phase(0.0, p))? - v))
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        while g(lo)? > 0.0 {
            lo *= 2.0;
            if lo < -1e8 {
                return Ok(None);
            }
        }
        while g(hi)? < 0.0 {
            hi *= 2.0;
            if hi > 1e8 {
                return Ok(None);
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if g(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let p = 0.5 * (lo + hi);
        Ok(Some(p * v - self.h.value(&Coords::phase(0.0, p))?))
    }

    /// `S(x, ξ)` for one `x` over a fiber grid.
    pub fn fiber_values(&self, x: f64, xi: &[f64]) -> Result<Vec<f64>, GfqiError> {
        let t = self.t;
        match &self.kernel {
            Kernel::Graph => Ok(vec![self.f_at(x)?; xi.len()]),
            Kernel::Quadratic { a, b, c } => xi
                .iter()
                .map(|&e| {
                    let d = x - e - b * t;
                    Ok(self.f_at(e)? + d * d / (4.0 * a * t) - c * t)
                })
                .collect(),
            Kernel::Legendre { tail } => {
                let far = if self.tail() == Some(TailSign::Positive) {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                };
                xi.iter()
                    .map(|&e| {
                        Ok(match self.lagrangian((x - e) / t, *tail)? {
                            Some(l) => self.f_at(e)? + t * l,
                            None => far,
                        })
                    })
                    .collect()
            }
            Kernel::Shot => {
                let shots = self.shots(xi)?;
                Ok(shots.iter().map(|s| s[2] + s[1] * (x - s[0])).collect())
            }
        }
    }

    /// End states `(X, P, A)` of the characteristics seeded at `xi`.
    fn shots(&self, xi: &[f64]) -> Result<Vec<[f64; 3]>, GfqiError> {
        let steps = ((self.steps_per_unit * self.t.abs()).ceil() as usize).max(1);
        let dt = self.t / steps as f64;
        let rhs = flow::characteristic_rhs(&self.h, ActiveTime::Single, Coords::default());
        xi.par_iter()
            .map(|&e| {
                let b = Bindings::new().with(Var::X, e);
                let mut y = [e, self.df.eval(&b)?, self.f.eval(&b)?];
                for i in 0..steps {
                    y = flow::rk4_step(&rhs, dt * i as f64, &y, dt)?;
                }
                Ok(y)
            })
            .collect()
    }

    pub fn family(&self, x_grid: &[f64], xi_grid: &[f64]) -> Result<GeneratingFamily, GfqiError> {
        if let Kernel::Graph = self.kernel {
            let values = x_grid.iter().map(|&x| self.f_at(x)).collect::<Result<_, _>>()?;
            return GeneratingFamily::graph(x_grid.to_vec(), false, values);
        }
        let rows: Vec<Vec<f64>> = match self.kernel {
            Kernel::Shot => {
                let shots = self.shots(xi_grid)?;
                x_grid
                    .iter()
                    .map(|&x| shots.iter().map(|s| s[2] + s[1] * (x - s[0])).collect())
                    .collect()
            }
            _ => x_grid
                .par_iter()
                .map(|&x| self.fiber_values(x, xi_grid))
                .collect::<Result<_, _>>()?,
        };
        let tail = match self.tail() {
            Some(tail) => tail,
            None => classify_tail(&rows)?,
        };
        let fiber = FiberAxis {
            values: xi_grid.to_vec(),
            tail,
        };
        GeneratingFamily::new(x_grid.to_vec(), false, vec![fiber], rows.concat())
    }
}

/// Tail sign from the end slopes of every fiber: rising outward on both
/// sides is index 0, falling on both is index 1.
pub fn classify_tail(rows: &[Vec<f64>]) -> Result<TailSign, GfqiError> {
    let mut seen = None;
    for row in rows {
        let n = row.len();
        if n < 2 {
            return Err(GfqiError::Tail("fiber has fewer than two samples".into()));
        }
        let (left, right) = (row[1] - row[0], row[n - 1] - row[n - 2]);
        let sign = if left < 0.0 && right > 0.0 {
            TailSign::Positive
        } else if left > 0.0 && right < 0.0 {
            TailSign::Negative
        } else {
            return Err(GfqiError::Tail("fiber ends do not bend the same way".into()));
        };
        if seen.is_some_and(|s| s != sign) {
            return Err(GfqiError::Tail("tail sign changes along the base".into()));
        }
        seen = Some(sign);
    }
    seen.ok_or_else(|| GfqiError::Tail("no base points".into()))
}

/// Discrete generating family of the time-`t` solution with one broken
/// node; the fiber variable is the seed `ξ` on `xi_grid`.
pub fn build_discrete_family(
    f: &Expr,
    h: &Hamiltonian,
    t: f64,
    x_grid: &[f64],
    xi_grid: &[f64],
) -> Result<GeneratingFamily, GfqiError> {
    FamilyBuilder::new(f, h, t)?.family(x_grid, xi_grid)
}

/// Shot family `S(x, ξ_i) = A_i + P_i (x - X_i)` read off the points of a
/// front, restricted to the seeds in `[lo, hi]`.
pub fn family_from_front(
    front: &Front,
    x_grid: &[f64],
    periodic: bool,
    window: (f64, f64),
) -> Result<GeneratingFamily, GfqiError> {
    let pts: Vec<_> = front
        .points
        .iter()
        .filter(|q| !q.blown && q.seed_x >= window.0 && q.seed_x <= window.1)
        .collect();
    let rows: Vec<Vec<f64>> = x_grid
        .iter()
        .map(|&x| pts.iter().map(|q| q.action + q.p * (x - q.x)).collect())
        .collect();
    let tail = classify_tail(&rows)?;
    let fiber = FiberAxis {
        values: pts.iter().map(|q| q.seed_x).collect(),
        tail,
    };
    GeneratingFamily::new(x_grid.to_vec(), periodic, vec![fiber], rows.concat())
}

/// Grids for [`gamma_tilde_lower_bound`].
#[derive(Clone, Debug, PartialEq)]
pub struct GammaTildeGrid {
    pub x: Vec<f64>,
    pub periodic: bool,
    /// Seeds for the propagated fronts; must cover `x` after transport.
    pub seeds: Vec<f64>,
    pub steps_per_unit: f64,
}

/// `max_f γ(ψ(graph df) - graph df)` over the sample initial conditions, with
/// `ψ` the time-`t_final` map of `h`. A lower bound for `γ̃(ψ)`.
pub fn gamma_tilde_lower_bound(
    h: &Hamiltonian,
    sample_fs: &[Expr],
    t_final: f64,
    grid: &GammaTildeGrid,
) -> Result<f64, GfqiError> {
    let mut best: f64 = 0.0;
    for f in sample_fs {
        let front0 = front::seed_front(f, std::slice::from_ref(h), &grid.seeds)?;
        let steps = ((grid.steps_per_unit * t_final.abs()).ceil() as usize).max(1);
        let moved = front::propagate_front(&front0, h, 0, t_final, steps)?;
        let original = GeneratingFamily::graph(
            grid.x.clone(),
            grid.periodic,
            grid.x
                .iter()
                .map(|&x| f.eval(&Bindings::new().with(Var::X, x)))
                .collect::<Result<_, _>>()?,
        )?;
        let branches = front::branch_decompose(&moved, &grid.x);
        let image = if branches.iter().all(|b| b.len() == 1) {
            GeneratingFamily::graph(
                grid.x.clone(),
                grid.periodic,
                branches.iter().map(|b| b[0].action).collect(),
            )
        } else {
            let (lo, hi) = (grid.seeds[0], grid.seeds[grid.seeds.len() - 1]);
            family_from_front(&moved, &grid.x, grid.periodic, (lo, hi))
        };
        let image = match image {
            Ok(fam) => fam,
            Err(e) => {
                log::warn!("sample '{f}' skipped: {e}");
                continue;
            }
        };
        match gamma_difference(&image, &original) {
            Ok(g) => best = best.max(g),
            Err(e) => log::warn!("sample '{f}' skipped: {e}"),
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{linspace, periodic};
    use std::f64::consts::PI;

    fn axis(lo: f64, hi: f64, n: usize, tail: TailSign) -> FiberAxis {
        FiberAxis {
            values: linspace(lo, hi, n),
            tail,
        }
    }

    fn fiber_family(s: impl Fn(f64) -> f64, tail: TailSign) -> GeneratingFamily {
        GeneratingFamily::from_fn(vec![0.0], false, axis(-4.0, 4.0, 8001, tail), |_, xi| s(xi)).unwrap()
    }

    #[test]
    fn fiber_minimax_examples() {
        let c = |fam: &GeneratingFamily| minimax_c1_fiber(fam, 0).unwrap().value;
        assert_eq!(c(&fiber_family(|e| -e * e, TailSign::Negative)), 0.0);
        assert_eq!(c(&fiber_family(|e| e * e, TailSign::Positive)), 0.0);
        let v = c(&fiber_family(|e| -e * e + 2.0 * (-e * e).exp(), TailSign::Negative));
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mountain_pass_in_two_fibers() {
        // Index 1 along ξ1, positive along ξ2: the pass between the ends lies
        // on ξ2 = 0 at height max of -ξ1^2 + 2 exp(-ξ1^2), i.e. 2.
        let a1 = axis(-3.0, 3.0, 121, TailSign::Negative);
        let a2 = axis(-2.0, 2.0, 81, TailSign::Positive);
        let mut values = Vec::new();
        for &e1 in &a1.values {
            for &e2 in &a2.values {
                values.push(-e1 * e1 + 2.0 * (-e1 * e1).exp() + e2 * e2);
            }
        }
        let fam = GeneratingFamily::new(vec![0.0], false, vec![a1, a2], values).unwrap();
        let m = minimax_c1_fiber(&fam, 0).unwrap();
        assert!((m.value - 2.0).abs() < 1e-12);
        assert_eq!(m.witness, [60, 40]);
    }

    #[test]
    fn global_values_of_graph_like_family() {
        let base = periodic(0.0, 2.0 * PI, 256);
        let fam = GeneratingFamily::from_fn(base.clone(), true, axis(-3.0, 3.0, 61, TailSign::Negative), |x, e| {
            x.sin() - e * e
        })
        .unwrap();
        let c1 = minimax_c1_global(&fam).unwrap().value;
        let cmu = minimax_cmu_global(&fam).unwrap().value;
        let fmin = base.iter().map(|x| x.sin()).fold(f64::INFINITY, f64::min);
        let fmax = base.iter().map(|x| x.sin()).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((c1, cmu), (fmin, fmax));
        let shifted = fam.shifted(0.75);
        assert_eq!(minimax_c1_global(&shifted).unwrap().value, c1 + 0.75);
        assert_eq!(minimax_cmu_global(&shifted).unwrap().value, cmu + 0.75);
    }

    #[test]
    fn gamma_of_graphs() {
        let base = periodic(0.0, 2.0 * PI, 512);
        let sin = GeneratingFamily::graph(base.clone(), true, base.iter().map(|x| x.sin()).collect()).unwrap();
        assert!((gamma_of_family(&sin).unwrap() - 2.0).abs() < 2e-3);
        let zero = GeneratingFamily::graph(base.clone(), true, vec![0.0; 512]).unwrap();
        assert_eq!(gamma_of_family(&zero).unwrap(), 0.0);
        assert_eq!(gamma_of_family(&sin.shifted(3.0)).unwrap(), gamma_of_family(&sin).unwrap());
        assert_eq!(gamma_difference(&sin, &sin).unwrap(), 0.0);
        let cos = GeneratingFamily::graph(base.clone(), true, base.iter().map(|x| x.cos()).collect()).unwrap();
        assert!((gamma_difference(&sin, &cos).unwrap() - 2.0 * 2f64.sqrt()).abs() < 5e-3);
        assert_eq!(gamma_difference(&sin, &zero).unwrap(), gamma_of_family(&sin).unwrap());
    }

    #[test]
    fn x_independent_family_has_zero_gamma() {
        let fam = GeneratingFamily::from_fn(linspace(0.0, 1.0, 11), false, axis(-3.0, 3.0, 301, TailSign::Negative), |_, e| {
            -e * e + 2.0 * (-e * e).exp()
        })
        .unwrap();
        let c1 = minimax_c1_global(&fam).unwrap().value;
        assert!((c1 - 2.0).abs() < 1e-12);
        assert_eq!(gamma_of_family(&fam).unwrap(), 0.0);
    }

    #[test]
    fn unsupported_and_oversized() {
        let a = axis(-1.0, 1.0, 5, TailSign::Negative);
        let fam = GeneratingFamily::new(vec![0.0], false, vec![a.clone(), a], vec![0.0; 25]).unwrap();
        assert_eq!(minimax_c1_fiber(&fam, 0), Err(GfqiError::UnsupportedIndex(2)));
        let big = GeneratingFamily::from_fn(linspace(0.0, 1.0, 100), false, axis(-1.0, 1.0, 300, TailSign::Positive), |_, e| e * e)
            .unwrap();
        assert!(matches!(difference_family(&big, &big), Err(GfqiError::TooLarge { .. })));
        assert!(GeneratingFamily::graph(vec![0.0], false, vec![f64::NAN]).is_err());
    }

    #[test]
    fn quadratic_family_matches_hopf() {
        let f = Expr::parse("x^2/2").unwrap();
        let h = Hamiltonian::parse("H", "p^2/2").unwrap();
        let xs = linspace(-1.0, 1.0, 5);
        let xi = linspace(-4.0, 4.0, 8001);
        let fam = build_discrete_family(&f, &h, 1.0, &xs, &xi).unwrap();
        assert_eq!(fam.index(), 0);
        for (i, &x) in xs.iter().enumerate() {
            let e = xi[1234];
            let expect = e * e / 2.0 + (x - e) * (x - e) / 2.0;
            assert!((fam.fiber(i)[1234] - expect).abs() < 1e-14);
            let m = minimax_c1_fiber(&fam, i).unwrap().value;
            assert!((m - x * x / 4.0).abs() < 1e-6);
        }
    }

    #[test]
    fn concave_family_has_index_one() {
        let f = Expr::parse("0").unwrap();
        let h = Hamiltonian::parse("H", "-p^2/4").unwrap();
        let fam = build_discrete_family(&f, &h, 1.0, &[0.3], &linspace(-3.0, 3.0, 61)).unwrap();
        assert_eq!(fam.index(), 1);
    }

    #[test]
    fn zero_hamiltonian_is_stationary() {
        let h = Hamiltonian::zero();
        let xs = linspace(-1.0, 1.0, 9);
        let xi = linspace(-2.0, 2.0, 401);
        for (text, sign) in [("x^2", 1.0), ("-x^2", -1.0)] {
            let u = |x: f64| sign * x * x;
            let fam = build_discrete_family(&Expr::parse(text).unwrap(), &h, 0.8, &xs, &xi).unwrap();
            for (i, &x) in xs.iter().enumerate() {
                let m = minimax_c1_fiber(&fam, i).unwrap().value;
                assert!((m - u(x)).abs() < 1e-12, "{text} at {x}: {m}");
            }
        }
    }

    #[test]
    fn legendre_family_convex() {
        // H = sqrt(1 + p^2) has L(v) = -sqrt(1 - v^2) on |v| < 1.
        let h = Hamiltonian::parse("H", "sqrt(1 + p^2)").unwrap();
        let f = Expr::parse("0").unwrap();
        let b = FamilyBuilder::new(&f, &h, 0.5).unwrap();
        assert!(b.is_exact());
        assert_eq!(b.tail(), Some(TailSign::Positive));
        let vals = b.fiber_values(0.0, &[-0.25, 0.0, 0.3, 0.7]).unwrap();
        let l = |v: f64| -0.5 * (1.0 - v * v).sqrt();
        assert!((vals[0] - l(0.5)).abs() < 1e-12);
        assert!((vals[1] - l(0.0)).abs() < 1e-12);
        assert!((vals[2] - l(-0.6)).abs() < 1e-12);
        assert_eq!(vals[3], f64::INFINITY);
    }

    #[test]
    fn tail_classification_failure() {
        let rows = vec![vec![0.0, 1.0, 2.0]];
        assert!(matches!(classify_tail(&rows), Err(GfqiError::Tail(_))));
    }

    #[test]
    fn gamma_tilde_for_x_only_hamiltonian() {
        let eps = 0.3;
        let h = Hamiltonian::parse("H", &format!("{eps}*sin(x)")).unwrap();
        let x = periodic(0.0, 2.0 * PI, 256);
        let grid = GammaTildeGrid {
            seeds: x.clone(),
            x,
            periodic: true,
            steps_per_unit: 50.0,
        };
        let fs: Vec<Expr> = ["0", "sin(x)", "cos(2*x)/2"].iter().map(|s| Expr::parse(s).unwrap()).collect();
        let g = gamma_tilde_lower_bound(&h, &fs, 1.0, &grid).unwrap();
        assert!((g - 2.0 * eps).abs() < 5e-3, "{g}");
        assert_eq!(gamma_tilde_lower_bound(&Hamiltonian::zero(), &fs, 1.0, &grid).unwrap(), 0.0);
    }
}
