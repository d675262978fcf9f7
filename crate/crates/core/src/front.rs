//! Lagrangian fronts: seeded from the graph of `df`, pushed along
//! characteristics with action transport, and decomposed into branches.

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{Bindings, DiffError, EvalError, Expr, Var};
use crate::flow::{self, ActiveTime, FlowError};
use crate::ham::{Coords, HamError, Hamiltonian};

/// A front is vertical once `max |Δx| / Δseed` drops below this.
pub const VERTICAL_EPS: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FrontError {
    #[error("initial condition is not differentiable: {0}")]
    Diff(#[from] DiffError),
    #[error("initial condition could not be evaluated: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ham(#[from] HamError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("bad seed grid: {0}")]
    Seeds(String),
    #[error("time slot {slot} does not exist for a {dim}-time front")]
    Slot { slot: usize, dim: usize },
    #[error("slice times must be finite, increasing and not before the front's time")]
    SliceTimes,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrontPoint {
    pub seed_x: f64,
    pub x: f64,
    pub p: f64,
    pub action: f64,
    /// `-H_j` at the point, one entry per time slot.
    pub tau: Vec<f64>,
    /// The characteristic left the finite region; fields hold the last finite state.
    pub blown: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Front {
    pub times: Vec<f64>,
    pub points: Vec<FrontPoint>,
    /// Indices `i` where `x_{i+1} - x_i` and `x_i - x_{i-1}` have opposite signs.
    pub folds: Vec<usize>,
    pub vertical: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerticalityReport {
    pub vertical: bool,
    /// `max_i |Δx_i| / Δseed_i`; NaN when fewer than two live points exist.
    pub collapse_ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch {
    pub p: f64,
    pub action: f64,
    pub seed_x: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    /// `L^{(1,2)}`: flow `H2` to `t2` first, then `H1` to `t1`.
    OneTwo,
    /// `L^{(2,1)}`: flow `H1` to `t1` first, then `H2` to `t2`.
    TwoOne,
}

impl Order {
    pub fn name(self) -> &'static str {
        match self {
            Order::OneTwo => "12",
            Order::TwoOne => "21",
        }
    }
}

fn live_pairs(points: &[FrontPoint]) -> impl Iterator<Item = (usize, &FrontPoint, &FrontPoint)> {
    points
        .windows(2)
        .enumerate()
        .filter(|(_, w)| !w[0].blown && !w[1].blown)
        .map(|(i, w)| (i, &w[0], &w[1]))
}

impl Front {
    pub fn from_points(times: Vec<f64>, points: Vec<FrontPoint>) -> Front {
        let folds = fold_indices(&points);
        let vertical = collapse_ratio(&points) < VERTICAL_EPS;
        Front {
            times,
            points,
            folds,
            vertical,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.times.len()
    }

    pub fn seeds(&self) -> Vec<f64> {
        self.points.iter().map(|q| q.seed_x).collect()
    }

    /// True when the live points project injectively to the base.
    pub fn is_graph(&self) -> bool {
        self.folds.is_empty() && !self.vertical && self.points.iter().all(|q| !q.blown)
    }
}

fn fold_indices(points: &[FrontPoint]) -> Vec<usize> {
    let mut folds = Vec::new();
    let mut prev: Option<(usize, f64)> = None;
    for (i, a, b) in live_pairs(points) {
        let dx = b.x - a.x;
        if dx == 0.0 {
            continue;
        }
        if let Some((j, d)) = prev {
            if j + 1 == i && d * dx < 0.0 {
                folds.push(i);
            }
        }
        prev = Some((i, dx));
    }
    folds
}

fn collapse_ratio(points: &[FrontPoint]) -> f64 {
    live_pairs(points)
        .map(|(_, a, b)| (b.x - a.x).abs() / (b.seed_x - a.seed_x))
        .fold(f64::NAN, f64::max)
}

pub fn detect_verticality(front: &Front) -> VerticalityReport {
    let ratio = collapse_ratio(&front.points);
    VerticalityReport {
        vertical: ratio < VERTICAL_EPS,
        collapse_ratio: ratio,
    }
}

fn check_seeds(seeds: &[f64]) -> Result<(), FrontError> {
    if seeds.is_empty() {
        return Err(FrontError::Seeds("no seed points".into()));
    }
    if seeds.iter().any(|s| !s.is_finite()) {
        return Err(FrontError::Seeds("non-finite seed".into()));
    }
    if seeds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FrontError::Seeds("seeds must be strictly increasing".into()));
    }
    Ok(())
}

/// Front of `Λ_f` at time zero for `d = hams.len()` time slots.
pub fn seed_front(f: &Expr, hams: &[Hamiltonian], seeds: &[f64]) -> Result<Front, FrontError> {
    check_seeds(seeds)?;
    let df = f.differentiate(Var::X)?;
    let dim = hams.len().max(1);
    let points = seeds
        .iter()
        .map(|&x| {
            let b = Bindings::new().with(Var::X, x);
            let p = df.eval(&b)?;
            let action = f.eval(&b)?;
            let c = Coords::phase(x, p);
            let tau = hams
                .iter()
                .map(|h| h.value(&c).map(|v| -v))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(FrontPoint {
                seed_x: x,
                x,
                p,
                action,
                tau,
                blown: false,
            })
        })
        .collect::<Result<Vec<_>, FrontError>>()?;
    Ok(Front::from_points(vec![0.0; dim], points))
}

fn clock_for(front: &Front, slot: usize) -> Result<(ActiveTime, Coords), FrontError> {
    let dim = front.dim();
    let clock = match (dim, slot) {
        (1, 0) => ActiveTime::Single,
        (2, 0) => ActiveTime::First,
        (2, 1) => ActiveTime::Second,
        _ => return Err(FrontError::Slot { slot, dim }),
    };
    let base = Coords {
        t: front.times[slot],
        t1: front.times[0],
        t2: front.times.get(1).copied().unwrap_or(0.0),
        ..Default::default()
    };
    Ok((clock, base))
}

/// Advances every point by the flow of `h` in time slot `slot` (0-based)
/// over `dt`, in `steps` RK4 steps; the other slot stays frozen.
pub fn propagate_front(
    front: &Front,
    h: &Hamiltonian,
    slot: usize,
    dt: f64,
    steps: usize,
) -> Result<Front, FrontError> {
    let (clock, base) = clock_for(front, slot)?;
    if steps == 0 {
        return Err(FlowError::ZeroSteps.into());
    }
    if dt == 0.0 {
        return Ok(front.clone());
    }
    let t0 = front.times[slot];
    let mut stepper = Stepper::new(front, h, slot, clock, base);
    let step = dt / steps as f64;
    for i in 0..steps {
        stepper.step(t0 + step * i as f64, step)?;
    }
    stepper.snapshot(t0 + dt)
}

/// Lock-step integrator over all points of a front.
struct Stepper<'a> {
    h: &'a Hamiltonian,
    slot: usize,
    clock: ActiveTime,
    base: Coords,
    template: &'a Front,
    state: Vec<[f64; 3]>,
    blown: Vec<bool>,
}

impl<'a> Stepper<'a> {
    fn new(front: &'a Front, h: &'a Hamiltonian, slot: usize, clock: ActiveTime, base: Coords) -> Self {
        Stepper {
            h,
            slot,
            clock,
            base,
            template: front,
            state: front.points.iter().map(|q| [q.x, q.p, q.action]).collect(),
            blown: front.points.iter().map(|q| q.blown).collect(),
        }
    }

    fn step(&mut self, time: f64, dt: f64) -> Result<(), FrontError> {
        let rhs = flow::characteristic_rhs(self.h, self.clock, self.base);
        let next = self
            .state
            .par_iter()
            .zip(self.blown.par_iter())
            .map(|(y, &dead)| {
                if dead {
                    Ok(None)
                } else {
                    flow::rk4_step(&rhs, time, y, dt).map(Some)
                }
            })
            .collect::<Result<Vec<_>, HamError>>()?;
        for (i, n) in next.into_iter().enumerate() {
            if let Some(y) = n {
                if flow::escaped(&y) {
                    self.blown[i] = true;
                } else {
                    self.state[i] = y;
                }
            }
        }
        Ok(())
    }

    /// Signed mean stretch `Σ Δx / Σ Δseed` and per-pair data for the
    /// verticality test.
    fn stretch(&self) -> (f64, f64, Vec<f64>) {
        let pts = &self.template.points;
        let mut sum_dx = 0.0;
        let mut sum_ds = 0.0;
        let mut ratio = f64::NAN;
        let mut dxs = Vec::with_capacity(pts.len());
        for i in 0..pts.len().saturating_sub(1) {
            if self.blown[i] || self.blown[i + 1] {
                dxs.push(0.0);
                continue;
            }
            let dx = self.state[i + 1][0] - self.state[i][0];
            let ds = pts[i + 1].seed_x - pts[i].seed_x;
            sum_dx += dx;
            sum_ds += ds;
            ratio = ratio.max(dx.abs() / ds);
            dxs.push(dx);
        }
        (sum_dx / sum_ds, ratio, dxs)
    }

    fn snapshot(&self, time: f64) -> Result<Front, FrontError> {
        let mut times = self.template.times.clone();
        times[self.slot] = time;
        let base = Coords { t: time, ..self.base };
        let base = self.clock.apply(base, time);
        let points = self
            .template
            .points
            .iter()
            .zip(&self.state)
            .zip(&self.blown)
            .map(|((q, y), &blown)| {
                let mut tau = q.tau.clone();
                if !blown {
                    let c = Coords { x: y[0], p: y[1], ..base };
                    tau[self.slot] = -self.h.value(&c)?;
                }
                Ok(FrontPoint {
                    seed_x: q.seed_x,
                    x: y[0],
                    p: y[1],
                    action: y[2],
                    tau,
                    blown,
                })
            })
            .collect::<Result<Vec<_>, HamError>>()?;
        Ok(Front::from_points(times, points))
    }
}

/// Fronts recorded at a sequence of slice times.
#[derive(Clone, Debug, PartialEq)]
pub struct Evolution {
    pub slice_times: Vec<f64>,
    /// One front per slice strictly before the horizon.
    pub fronts: Vec<Front>,
    /// First time at which the front was found vertical.
    pub horizon: Option<f64>,
}

/// Integrates `start` through `slice_times` in slot `slot`, using
/// `max(1, ceil(steps_per_unit · Δt))` steps per slice interval and testing
/// verticality after every step.
///
/// A front that flips orientation between two steps without registering as
/// vertical passed through a vertical position; the horizon is then placed
/// by linear interpolation of the mean stretch.
pub fn evolve_front(
    start: &Front,
    h: &Hamiltonian,
    slot: usize,
    slice_times: &[f64],
    steps_per_unit: f64,
) -> Result<Evolution, FrontError> {
    let (clock, base) = clock_for(start, slot)?;
    let t_start = start.times[slot];
    if slice_times.iter().any(|t| !t.is_finite())
        || slice_times.windows(2).any(|w| w[0] >= w[1])
        || slice_times.first().is_some_and(|&t| t < t_start)
    {
        return Err(FrontError::SliceTimes);
    }
    let mut evo = Evolution {
        slice_times: slice_times.to_vec(),
        fronts: Vec::with_capacity(slice_times.len()),
        horizon: None,
    };
    let mut stepper = Stepper::new(start, h, slot, clock, base);
    let (mut q_prev, ratio, mut dx_prev) = stepper.stretch();
    if ratio < VERTICAL_EPS {
        evo.horizon = Some(t_start);
        return Ok(evo);
    }
    let mut now = t_start;
    for &target in slice_times {
        let span = target - now;
        if span > 0.0 {
            let steps = ((steps_per_unit * span).ceil() as usize).max(1);
            let dt = span / steps as f64;
            for i in 0..steps {
                let t = now + dt * i as f64;
                stepper.step(t, dt)?;
                let (q, ratio, dx) = stepper.stretch();
                let t_next = if i + 1 == steps { target } else { t + dt };
                if ratio < VERTICAL_EPS {
                    evo.horizon = Some(t_next);
                } else if flipped(&dx_prev, &dx) {
                    evo.horizon = Some(t + dt * q_prev / (q_prev - q));
                }
                if evo.horizon.is_some() {
                    return Ok(evo);
                }
                q_prev = q;
                dx_prev = dx;
            }
        }
        now = target;
        evo.fronts.push(stepper.snapshot(target)?);
    }
    Ok(evo)
}

fn flipped(before: &[f64], after: &[f64]) -> bool {
    let mut any = false;
    for (a, b) in before.iter().zip(after) {
        if *a == 0.0 && *b == 0.0 {
            continue;
        }
        if a * b >= 0.0 {
            return false;
        }
        any = true;
    }
    any
}

/// Adds the midpoints of the seed intervals on either side of every fold.
pub fn refine_near_folds(seeds: &[f64], fronts: &[Front]) -> Vec<f64> {
    let mut extra = Vec::new();
    for front in fronts {
        for &i in &front.folds {
            let s = |j: usize| front.points[j].seed_x;
            if i > 0 {
                extra.push(0.5 * (s(i - 1) + s(i)));
            }
            if i + 1 < front.points.len() {
                extra.push(0.5 * (s(i) + s(i + 1)));
            }
        }
    }
    let mut all: Vec<f64> = seeds.iter().copied().chain(extra).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

/// The two-time front `L^σ` at `(t1, t2)`.
pub fn multi_time_front(
    f: &Expr,
    h1: &Hamiltonian,
    h2: &Hamiltonian,
    order: Order,
    times: (f64, f64),
    seeds: &[f64],
    steps_per_unit: f64,
) -> Result<Front, FrontError> {
    let hams = [h1.clone(), h2.clone()];
    let front = seed_front(f, &hams, seeds)?;
    let steps = |dt: f64| ((steps_per_unit * dt.abs()).ceil() as usize).max(1);
    let legs = match order {
        Order::OneTwo => [(h2, 1, times.1), (h1, 0, times.0)],
        Order::TwoOne => [(h1, 0, times.0), (h2, 1, times.1)],
    };
    legs.into_iter().try_fold(front, |fr, (h, slot, dt)| {
        propagate_front(&fr, h, slot, dt, steps(dt))
    })
}

/// Every branch of the front above each query point. `x_query` must be
/// sorted ascending.
///
/// Each monotone pair of adjacent points covers `[lo, hi)`, closed at `hi`
/// when the upper endpoint ends its monotone run. Actions use cubic Hermite
/// interpolation with slope `p = dS/dx`; `p` and the seed are interpolated
/// linearly.
pub fn branch_decompose(front: &Front, x_query: &[f64]) -> Vec<Vec<Branch>> {
    let mut out = vec![Vec::new(); x_query.len()];
    let pts = &front.points;
    let n = pts.len();
    let dir = |i: usize| -> f64 {
        if i + 1 >= n || pts[i].blown || pts[i + 1].blown {
            0.0
        } else {
            (pts[i + 1].x - pts[i].x).signum() * ((pts[i + 1].x != pts[i].x) as u8 as f64)
        }
    };
    for i in 0..n.saturating_sub(1) {
        let d = dir(i);
        if d == 0.0 {
            continue;
        }
        let (a, b) = (&pts[i], &pts[i + 1]);
        // Upper endpoint index and whether the run continues past it.
        let continues = if d > 0.0 {
            dir(i + 1) == d
        } else {
            i > 0 && dir(i - 1) == d
        };
        let (lo, hi) = if d > 0.0 { (a.x, b.x) } else { (b.x, a.x) };
        let start = x_query.partition_point(|&x| x < lo);
        let end = if continues {
            x_query.partition_point(|&x| x < hi)
        } else {
            x_query.partition_point(|&x| x <= hi)
        };
        let width = b.x - a.x;
        for (k, &xq) in x_query.iter().enumerate().take(end).skip(start) {
            let s = (xq - a.x) / width;
            let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
            let h10 = s * (1.0 - s) * (1.0 - s);
            let h01 = s * s * (3.0 - 2.0 * s);
            let h11 = s * s * (s - 1.0);
            let action =
                h00 * a.action + h10 * width * a.p + h01 * b.action + h11 * width * b.p;
            out[k].push(Branch {
                p: a.p + s * (b.p - a.p),
                action,
                seed_x: a.seed_x + s * (b.seed_x - a.seed_x),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::linspace;
    use std::f64::consts::FRAC_PI_2;

    fn h(text: &str) -> Hamiltonian {
        Hamiltonian::parse(text, text).unwrap()
    }

    fn f(text: &str) -> Expr {
        Expr::parse(text).unwrap()
    }

    #[test]
    fn seeding() {
        let seeds = linspace(-1.0, 1.0, 5);
        let fr = seed_front(&f("0"), &[h("p^2/2")], &seeds).unwrap();
        assert!(fr.points.iter().all(|q| q.p == 0.0 && q.action == 0.0 && q.tau == [0.0]));
        let fr = seed_front(&f("x^2/2"), &[h("p^2/2")], &seeds).unwrap();
        for q in &fr.points {
            assert_eq!(q.p, q.x);
            assert_eq!(q.action, q.x * q.x / 2.0);
            assert_eq!(q.tau, [-q.x * q.x / 2.0]);
        }
        let fr = seed_front(&f("0"), &[h("-x^2 - p^2/4")], &seeds).unwrap();
        assert!(fr.points.iter().all(|q| q.tau == [q.x * q.x]));
        assert!(seed_front(&f("0"), &[], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn zero_time_is_identity() {
        let fr = seed_front(&f("sin(x)"), &[h("p^2/2")], &linspace(-1.0, 1.0, 11)).unwrap();
        assert_eq!(propagate_front(&fr, &h("p^2/2"), 0, 0.0, 5).unwrap(), fr);
        let moved = propagate_front(&fr, &Hamiltonian::zero(), 0, 0.7, 5).unwrap();
        assert_eq!(moved.times, [0.7]);
        for (a, b) in moved.points.iter().zip(&fr.points) {
            assert_eq!((a.x, a.p, a.action), (b.x, b.p, b.action));
        }
    }

    #[test]
    fn free_particle_quadratic() {
        let hh = h("p^2/2");
        let fr = seed_front(&f("x^2/2"), std::slice::from_ref(&hh), &linspace(-2.0, 2.0, 9)).unwrap();
        let fr = propagate_front(&fr, &hh, 0, 1.0, 10).unwrap();
        for q in &fr.points {
            let x0 = q.seed_x;
            assert!((q.x - 2.0 * x0).abs() < 1e-14 && (q.p - x0).abs() < 1e-14);
            assert!((q.action - x0 * x0).abs() < 1e-12);
            // Hopf–Lax value min_y (y^2/2 + (x - y)^2/2) = x^2/4.
            assert!((q.action - q.x * q.x / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tan_front_and_verticality() {
        let hh = h("-x^2 - p^2/4");
        let fr = seed_front(&f("0"), std::slice::from_ref(&hh), &linspace(-1.0, 1.0, 41)).unwrap();
        assert_eq!(detect_verticality(&fr).collapse_ratio, 1.0);
        let t = 1.1;
        let at = propagate_front(&fr, &hh, 0, t, 220).unwrap();
        for q in &at.points {
            let a = q.seed_x;
            assert!((q.x - a * t.cos()).abs() < 1e-8);
            assert!((q.p - 2.0 * a * t.sin()).abs() < 1e-8);
            assert!((q.action - a * a * t.sin() * t.cos()).abs() < 1e-8);
        }
        let r = detect_verticality(&propagate_front(&fr, &hh, 0, 1.5, 300).unwrap());
        assert!(!r.vertical && (r.collapse_ratio - 1.5f64.cos()).abs() < 1e-6);
        let r = detect_verticality(&propagate_front(&fr, &hh, 0, std::f64::consts::FRAC_PI_2 - 1e-4, 400).unwrap());
        assert!(r.vertical);
    }

    #[test]
    fn evolution_finds_horizon() {
        let hh = h("-x^2 - p^2/4");
        let fr = seed_front(&f("0"), std::slice::from_ref(&hh), &linspace(-3.0, 3.0, 61)).unwrap();
        let slices = linspace(0.0, 2.0, 41);
        let evo = evolve_front(&fr, &hh, 0, &slices, 100.0).unwrap();
        let horizon = evo.horizon.unwrap();
        assert!((horizon - FRAC_PI_2).abs() < 0.01, "{horizon}");
        assert!(evo.fronts.iter().all(|fr| fr.times[0] < horizon));
        assert_eq!(evo.fronts.len(), 32);
    }

    #[test]
    fn folds_and_branches() {
        let hh = h("p^2/2");
        let fr = seed_front(&f("-x^4"), std::slice::from_ref(&hh), &linspace(-1.5, 1.5, 301)).unwrap();
        let fr = propagate_front(&fr, &hh, 0, 0.5, 50).unwrap();
        assert_eq!(fr.folds.len(), 2);
        // x(ξ) = ξ - 4 t ξ^3 folds where 12 t ξ^2 = 1.
        let xi = (1.0 / 6.0f64).sqrt();
        let edge = xi - 2.0 * xi.powi(3);
        let q = [-edge - 0.05, -0.2, 0.0, 0.2, edge + 0.05];
        let counts: Vec<usize> = branch_decompose(&fr, &q).iter().map(Vec::len).collect();
        assert_eq!(counts, [1, 3, 3, 3, 1]);
        let pre = seed_front(&f("x^2"), &[hh], &linspace(-1.0, 1.0, 21)).unwrap();
        let q = linspace(-1.0, 1.0, 57);
        assert!(branch_decompose(&pre, &q).iter().all(|b| b.len() == 1));
    }

    #[test]
    fn hermite_reproduces_quadratic_actions() {
        let fr = seed_front(&f("x^2/2"), &[], &linspace(-1.0, 1.0, 5)).unwrap();
        let q = [-0.9, -0.13, 0.4, 1.0];
        for (b, &x) in branch_decompose(&fr, &q).iter().zip(&q) {
            assert!((b[0].action - x * x / 2.0).abs() < 1e-15);
            assert!((b[0].p - x).abs() < 1e-15);
        }
    }

    #[test]
    fn commuting_orders_agree() {
        let (h1, h2) = (h("p^2/2"), h("p^2/2"));
        let seeds = linspace(-2.0, 2.0, 81);
        let a = multi_time_front(&f("x^2/2"), &h1, &h2, Order::OneTwo, (0.4, 0.7), &seeds, 100.0).unwrap();
        let b = multi_time_front(&f("x^2/2"), &h1, &h2, Order::TwoOne, (0.4, 0.7), &seeds, 100.0).unwrap();
        for (qa, qb) in a.points.iter().zip(&b.points) {
            assert!((qa.x - qb.x).abs() < 1e-8 && (qa.action - qb.action).abs() < 1e-8);
            let u = qa.x * qa.x / (2.0 * (1.0 + 1.1));
            assert!((qa.action - u).abs() < 1e-8);
        }
        let zero = multi_time_front(&f("x^2/2"), &h1, &h2, Order::TwoOne, (0.0, 0.0), &seeds, 100.0).unwrap();
        assert_eq!(zero, seed_front(&f("x^2/2"), &[h1, h2], &seeds).unwrap());
    }
}
