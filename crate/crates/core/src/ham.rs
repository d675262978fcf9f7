//! Hamiltonians, bracket flavours and contact fields.
//!
//! Conventions (one spatial dimension, symplectic form `dp ∧ dx`):
//!
//! * `X_H = (∂H/∂p, -∂H/∂x)`
//! * `{A, B} = A_x B_p - A_p B_x`, so that `{K, H} = dK · X_H`
//! * `[A, B] = {A, B} + ∂A/∂t - ∂B/∂t` for time-dependent pairs
//! * `≪A, B≫ = {A, B} + ∂A/∂t2 - ∂B/∂t1`, where `A` advances `t2` and `B`
//!   advances `t1`
//! * contact field on `(x, p, u)` with `α = du - p dx`:
//!   `u̇ = pH_p - H`, `ẋ = H_p`, `ṗ = -(H_x + pH_u)`
//! * contact bracket `{A,B}_s + B_u(pA_p - A) - A_u(pB_p - B)` with the
//!   spatial part `{A,B}_s = A_p B_x - A_x B_p`.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::expr::{self, DiffError, EvalError, Expr, ParseError, Var};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum HamError {
    #[error("expression error in '{label}': {source}")]
    Parse {
        label: String,
        #[source]
        source: ParseError,
    },
    #[error("symbolic gradient of '{label}' unavailable: {source}")]
    Gradient {
        label: String,
        #[source]
        source: DiffError,
    },
    #[error("evaluation of '{label}' failed: {source}")]
    Eval {
        label: String,
        #[source]
        source: EvalError,
    },
    #[error("'{label}' must not depend on {var} here")]
    IllegalDependency { label: String, var: Var },
    #[error("symbolic bracket requires symbolic gradients ('{0}' is finite-difference)")]
    NotSymbolic(String),
}

/// How partial derivatives are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradientMode {
    #[default]
    Symbolic,
    /// Central differences with `h = cbrt(eps) * (1 + |coordinate|)`.
    FiniteDifference,
}

/// A full assignment of the six expression variables. Unused coordinates
/// are simply zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Coords {
    pub t: f64,
    pub t1: f64,
    pub t2: f64,
    pub x: f64,
    pub p: f64,
    pub u: f64,
}

impl Coords {
    pub fn phase(x: f64, p: f64) -> Self {
        Coords {
            x,
            p,
            ..Default::default()
        }
    }

    pub fn at_time(self, t: f64) -> Self {
        Coords { t, ..self }
    }

    pub fn get(&self, var: Var) -> f64 {
        match var {
            Var::T => self.t,
            Var::T1 => self.t1,
            Var::T2 => self.t2,
            Var::X => self.x,
            Var::P => self.p,
            Var::U => self.u,
        }
    }

    pub fn with(mut self, var: Var, value: f64) -> Self {
        match var {
            Var::T => self.t = value,
            Var::T1 => self.t1 = value,
            Var::T2 => self.t2 = value,
            Var::X => self.x = value,
            Var::P => self.p = value,
            Var::U => self.u = value,
        }
        self
    }

    fn bindings(&self) -> expr::Bindings {
        let mut b = expr::Bindings::new();
        for var in Var::ALL {
            b.set(var, self.get(var));
        }
        b
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhasePoint {
    pub x: f64,
    pub p: f64,
}

impl PhasePoint {
    pub fn new(x: f64, p: f64) -> Self {
        PhasePoint { x, p }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.p.is_finite()
    }
}

/// A point of the 1-jet space `(x, p, u)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContactPoint {
    pub x: f64,
    pub p: f64,
    pub u: f64,
}

impl ContactPoint {
    pub fn new(x: f64, p: f64, u: f64) -> Self {
        ContactPoint { x, p, u }
    }

    fn coords(&self) -> Coords {
        Coords {
            x: self.x,
            p: self.p,
            u: self.u,
            ..Default::default()
        }
    }
}

/// An evaluatable Hamiltonian with declared dependencies.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    label: String,
    expr: Expr,
    deps: BTreeSet<Var>,
    mode: GradientMode,
    partials: Vec<(Var, Expr)>,
}

impl Hamiltonian {
    pub fn new(label: impl Into<String>, expr: Expr, mode: GradientMode) -> Result<Self, HamError> {
        let label = label.into();
        let deps = expr.variables();
        let mut partials = Vec::new();
        if mode == GradientMode::Symbolic {
            for &var in &deps {
                let d = expr.differentiate(var).map_err(|source| HamError::Gradient {
                    label: label.clone(),
                    source,
                })?;
                partials.push((var, d));
            }
        }
        Ok(Hamiltonian {
            label,
            expr,
            deps,
            mode,
            partials,
        })
    }

    /// Parses `text` and builds a symbolic-gradient Hamiltonian.
    pub fn parse(label: impl Into<String>, text: &str) -> Result<Self, HamError> {
        let label = label.into();
        let expr = Expr::parse(text).map_err(|source| HamError::Parse {
            label: label.clone(),
            source,
        })?;
        Self::new(label, expr, GradientMode::Symbolic)
    }

    pub fn zero() -> Self {
        Self::new("0", Expr::Const(0.0), GradientMode::Symbolic).expect("constant")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn deps(&self) -> &BTreeSet<Var> {
        &self.deps
    }

    pub fn depends_on(&self, var: Var) -> bool {
        self.deps.contains(&var)
    }

    pub fn mode(&self) -> GradientMode {
        self.mode
    }

    pub fn with_mode(&self, mode: GradientMode) -> Result<Self, HamError> {
        Self::new(self.label.clone(), self.expr.clone(), mode)
    }

    /// `factor * H`, used to scale a Hamiltonian in experiments.
    pub fn scaled(&self, factor: f64) -> Result<Self, HamError> {
        let expr = Expr::Binary(
            expr::BinaryOp::Mul,
            Box::new(Expr::Const(factor)),
            Box::new(self.expr.clone()),
        );
        Self::new(format!("{factor}*({})", self.label), expr, self.mode)
    }

    /// True when none of `t`, `t1`, `t2` appear.
    pub fn is_autonomous(&self) -> bool {
        ![Var::T, Var::T1, Var::T2].iter().any(|v| self.deps.contains(v))
    }

    /// Rejects dependencies outside `allowed`.
    pub fn require_deps(&self, allowed: &[Var]) -> Result<(), HamError> {
        match self.deps.iter().find(|v| !allowed.contains(v)) {
            Some(&var) => Err(HamError::IllegalDependency {
                label: self.label.clone(),
                var,
            }),
            None => Ok(()),
        }
    }

    fn eval_expr(&self, e: &Expr, c: &Coords) -> Result<f64, HamError> {
        e.eval(&c.bindings()).map_err(|source| HamError::Eval {
            label: self.label.clone(),
            source,
        })
    }

    pub fn value(&self, c: &Coords) -> Result<f64, HamError> {
        self.eval_expr(&self.expr, c)
    }

    /// Partial derivative; exactly zero for variables outside the declared
    /// dependencies.
    pub fn partial(&self, var: Var, c: &Coords) -> Result<f64, HamError> {
        if !self.deps.contains(&var) {
            return Ok(0.0);
        }
        match self.mode {
            GradientMode::Symbolic => {
                let (_, d) = self
                    .partials
                    .iter()
                    .find(|(v, _)| *v == var)
                    .expect("partials cover deps");
                self.eval_expr(d, c)
            }
            GradientMode::FiniteDifference => self.partial_fd(var, c),
        }
    }

    /// Central finite difference regardless of the configured mode.
    pub fn partial_fd(&self, var: Var, c: &Coords) -> Result<f64, HamError> {
        if !self.deps.contains(&var) {
            return Ok(0.0);
        }
        let at = c.get(var);
        let h = f64::EPSILON.cbrt() * (1.0 + at.abs());
        let plus = self.value(&c.with(var, at + h))?;
        let minus = self.value(&c.with(var, at - h))?;
        Ok((plus - minus) / (2.0 * h))
    }

    /// Symbolic partial as an expression (symbolic mode only).
    pub fn partial_expr(&self, var: Var) -> Result<Expr, HamError> {
        if self.mode != GradientMode::Symbolic {
            return Err(HamError::NotSymbolic(self.label.clone()));
        }
        Ok(self
            .partials
            .iter()
            .find(|(v, _)| *v == var)
            .map_or(Expr::Const(0.0), |(_, d)| d.clone()))
    }

    /// Is `H` a sum of a `p`-only part and an `x`-only part?
    pub fn is_separable(&self) -> bool {
        fn split(e: &Expr) -> bool {
            match e {
                Expr::Binary(expr::BinaryOp::Add | expr::BinaryOp::Sub, a, b) => split(a) && split(b),
                Expr::Unary(expr::UnaryOp::Neg, a) => split(a),
                other => !(other.depends_on(Var::X) && other.depends_on(Var::P)),
            }
        }
        self.deps.iter().all(|v| matches!(v, Var::X | Var::P)) && split(&self.expr)
    }
}

/// `(dx/dt, dp/dt) = (H_p, -H_x)` at `(time, pt)`.
pub fn hamiltonian_vector_field(
    h: &Hamiltonian,
    pt: PhasePoint,
    time: f64,
) -> Result<(f64, f64), HamError> {
    vector_field_at(h, &Coords::phase(pt.x, pt.p).at_time(time))
}

pub(crate) fn vector_field_at(h: &Hamiltonian, c: &Coords) -> Result<(f64, f64), HamError> {
    Ok((h.partial(Var::P, c)?, -h.partial(Var::X, c)?))
}

/// `{A, B} = A_x B_p - A_p B_x` at full coordinates.
pub fn poisson_bracket_at(a: &Hamiltonian, b: &Hamiltonian, c: &Coords) -> Result<f64, HamError> {
    let ax = a.partial(Var::X, c)?;
    let ap = a.partial(Var::P, c)?;
    let bx = b.partial(Var::X, c)?;
    let bp = b.partial(Var::P, c)?;
    Ok(ax * bp - ap * bx)
}

pub fn poisson_bracket(
    a: &Hamiltonian,
    b: &Hamiltonian,
    pt: PhasePoint,
    time: f64,
) -> Result<f64, HamError> {
    poisson_bracket_at(a, b, &Coords::phase(pt.x, pt.p).at_time(time))
}

/// `[A, B] = {A, B} + ∂A/∂t - ∂B/∂t`.
pub fn timedep_bracket(
    a: &Hamiltonian,
    b: &Hamiltonian,
    pt: PhasePoint,
    t: f64,
) -> Result<f64, HamError> {
    timedep_bracket_at(a, b, &Coords::phase(pt.x, pt.p).at_time(t))
}

fn timedep_bracket_at(a: &Hamiltonian, b: &Hamiltonian, c: &Coords) -> Result<f64, HamError> {
    let mut value = poisson_bracket_at(a, b, c)?;
    if a.depends_on(Var::T) {
        value += a.partial(Var::T, c)?;
    }
    if b.depends_on(Var::T) {
        value -= b.partial(Var::T, c)?;
    }
    Ok(value)
}

/// `≪A, B≫ = {A, B} + ∂A/∂t2 - ∂B/∂t1` at `(t1, t2) = (s, t)`.
pub fn multitime_bracket(
    a: &Hamiltonian,
    b: &Hamiltonian,
    pt: PhasePoint,
    (s, t): (f64, f64),
) -> Result<f64, HamError> {
    let c = Coords {
        t1: s,
        t2: t,
        ..Coords::phase(pt.x, pt.p)
    };
    multitime_bracket_at(a, b, &c)
}

fn multitime_bracket_at(a: &Hamiltonian, b: &Hamiltonian, c: &Coords) -> Result<f64, HamError> {
    let mut value = poisson_bracket_at(a, b, c)?;
    if a.depends_on(Var::T2) {
        value += a.partial(Var::T2, c)?;
    }
    if b.depends_on(Var::T1) {
        value -= b.partial(Var::T1, c)?;
    }
    Ok(value)
}

/// Contact Hamiltonian field, returned as `(du/dt, dx/dt, dp/dt)`.
pub fn contact_vector_field(h: &Hamiltonian, pt: ContactPoint) -> Result<(f64, f64, f64), HamError> {
    contact_field_at(h, &pt.coords())
}

pub(crate) fn contact_field_at(h: &Hamiltonian, c: &Coords) -> Result<(f64, f64, f64), HamError> {
    let hv = h.value(c)?;
    let hx = h.partial(Var::X, c)?;
    let hp = h.partial(Var::P, c)?;
    let hu = h.partial(Var::U, c)?;
    Ok((c.p * hp - hv, hp, -(hx + c.p * hu)))
}

pub fn contact_bracket(a: &Hamiltonian, b: &Hamiltonian, pt: ContactPoint) -> Result<f64, HamError> {
    contact_bracket_at(a, b, &pt.coords())
}

fn contact_bracket_at(a: &Hamiltonian, b: &Hamiltonian, c: &Coords) -> Result<f64, HamError> {
    let (av, bv) = (a.value(c)?, b.value(c)?);
    let (ax, ap, au) = (a.partial(Var::X, c)?, a.partial(Var::P, c)?, a.partial(Var::U, c)?);
    let (bx, bp, bu) = (b.partial(Var::X, c)?, b.partial(Var::P, c)?, b.partial(Var::U, c)?);
    let spatial = ap * bx - ax * bp;
    Ok(spatial + bu * (c.p * ap - av) - au * (c.p * bp - bv))
}

/// Symbolic `{A, B}` as a new Hamiltonian (both operands symbolic).
pub fn poisson_bracket_hamiltonian(a: &Hamiltonian, b: &Hamiltonian) -> Result<Hamiltonian, HamError> {
    let e = expr::sub(
        expr::mul(a.partial_expr(Var::X)?, b.partial_expr(Var::P)?),
        expr::mul(a.partial_expr(Var::P)?, b.partial_expr(Var::X)?),
    );
    Hamiltonian::new(format!("{{{},{}}}", a.label, b.label), e, GradientMode::Symbolic)
}

/// Symbolic contact bracket as a new Hamiltonian.
pub fn contact_bracket_hamiltonian(a: &Hamiltonian, b: &Hamiltonian) -> Result<Hamiltonian, HamError> {
    let p = Expr::Var(Var::P);
    let spatial = expr::sub(
        expr::mul(a.partial_expr(Var::P)?, b.partial_expr(Var::X)?),
        expr::mul(a.partial_expr(Var::X)?, b.partial_expr(Var::P)?),
    );
    let a_lift = expr::sub(expr::mul(p.clone(), a.partial_expr(Var::P)?), a.expr.clone());
    let b_lift = expr::sub(expr::mul(p, b.partial_expr(Var::P)?), b.expr.clone());
    let e = expr::sub(
        expr::add(spatial, expr::mul(b.partial_expr(Var::U)?, a_lift)),
        expr::mul(a.partial_expr(Var::U)?, b_lift),
    );
    Hamiltonian::new(format!("[{},{}]", a.label, b.label), e, GradientMode::Symbolic)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BracketKind {
    Poisson,
    TimeDep,
    MultiTime,
    Contact,
}

impl BracketKind {
    pub const ALL: [BracketKind; 4] = [
        BracketKind::Poisson,
        BracketKind::TimeDep,
        BracketKind::MultiTime,
        BracketKind::Contact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BracketKind::Poisson => "poisson",
            BracketKind::TimeDep => "timedep",
            BracketKind::MultiTime => "multitime",
            BracketKind::Contact => "contact",
        }
    }
}

/// One bracket evaluation with its context.
#[derive(Clone, Debug, PartialEq)]
pub struct BracketReport {
    pub kind: BracketKind,
    pub value: f64,
    pub point: Coords,
    pub operands: (String, String),
}

pub fn bracket(
    kind: BracketKind,
    a: &Hamiltonian,
    b: &Hamiltonian,
    c: &Coords,
) -> Result<BracketReport, HamError> {
    let value = match kind {
        BracketKind::Poisson => poisson_bracket_at(a, b, c)?,
        BracketKind::TimeDep => timedep_bracket_at(a, b, c)?,
        BracketKind::MultiTime => multitime_bracket_at(a, b, c)?,
        BracketKind::Contact => contact_bracket_at(a, b, c)?,
    };
    Ok(BracketReport {
        kind,
        value,
        point: *c,
        operands: (a.label.clone(), b.label.clone()),
    })
}

/// Axis-aligned sampling box. Axes left as `None` are pinned at zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Region {
    pub x: Option<(f64, f64)>,
    pub p: Option<(f64, f64)>,
    pub t: Option<(f64, f64)>,
    pub t1: Option<(f64, f64)>,
    pub t2: Option<(f64, f64)>,
    pub u: Option<(f64, f64)>,
}

impl Region {
    pub fn phase(x: (f64, f64), p: (f64, f64)) -> Self {
        Region {
            x: Some(x),
            p: Some(p),
            ..Default::default()
        }
    }

    fn axes(&self) -> Vec<(Var, (f64, f64))> {
        [
            (Var::T, self.t),
            (Var::T1, self.t1),
            (Var::T2, self.t2),
            (Var::X, self.x),
            (Var::P, self.p),
            (Var::U, self.u),
        ]
        .into_iter()
        .filter_map(|(v, r)| r.map(|r| (v, r)))
        .collect()
    }

    /// Every node of the uniform `samples`-per-axis grid, corners included.
    pub fn grid(&self, samples: usize) -> Vec<Coords> {
        let axes = self.axes();
        let samples = samples.max(2);
        let mut out = vec![Coords::default()];
        for (var, (lo, hi)) in axes {
            let values: Vec<f64> = if lo == hi {
                vec![lo]
            } else {
                crate::grid::linspace(lo, hi, samples)
            };
            out = out
                .into_iter()
                .flat_map(|c| values.iter().map(move |&v| c.with(var, v)))
                .collect();
        }
        out
    }
}

/// Grid maximum of a bracket, a lower bound of the true supremum.
#[derive(Clone, Debug, PartialEq)]
pub struct SupNorm {
    pub value: f64,
    pub argmax: Coords,
    pub samples_per_axis: usize,
    pub nodes: usize,
}

pub fn bracket_sup_norm(
    a: &Hamiltonian,
    b: &Hamiltonian,
    kind: BracketKind,
    region: &Region,
    samples: usize,
) -> Result<SupNorm, HamError> {
    let nodes = region.grid(samples);
    let mut best = SupNorm {
        value: 0.0,
        argmax: nodes.first().copied().unwrap_or_default(),
        samples_per_axis: samples.max(2),
        nodes: nodes.len(),
    };
    for c in &nodes {
        let v = bracket(kind, a, b, c)?.value.abs();
        if v > best.value {
            best.value = v;
            best.argmax = *c;
        }
    }
    Ok(best)
}

/// Linear-growth diagnostic for `|X_H|` on diamond shells `|x| + |p| = r`.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationReport {
    pub a: f64,
    pub b: f64,
    pub satisfied: bool,
    /// Largest absolute deviation of the shell suprema from the fitted line.
    pub residual: f64,
    pub shells: Vec<(f64, f64)>,
}

/// Fits `sup_{|x|+|p|=r} |X_H| ≈ A r + B` over shells inside `region`.
///
/// The largest shell radius is the smaller of the `x` and `p` half-widths so
/// every shell lies in the box; time, if present, is swept and maximised over.
/// `satisfied` means the worst deviation is within 10% of the fitted value at
/// the outer shell. This is a numerical diagnostic only.
pub fn propagation_report(
    h: &Hamiltonian,
    region: &Region,
    samples: usize,
) -> Result<PropagationReport, HamError> {
    let half = |r: Option<(f64, f64)>| r.map_or(0.0, |(lo, hi)| lo.abs().min(hi.abs()));
    let r_max = half(region.x).min(half(region.p));
    let samples = samples.max(2);
    let times: Vec<f64> = match region.t {
        Some((lo, hi)) if lo != hi => crate::grid::linspace(lo, hi, samples),
        Some((lo, _)) => vec![lo],
        None => vec![0.0],
    };
    let per_shell = 8 * samples;
    let mut shells = Vec::with_capacity(samples);
    for r in crate::grid::linspace(0.0, r_max, samples) {
        let mut sup: f64 = 0.0;
        for k in 0..per_shell {
            // Walk the diamond perimeter uniformly.
            let s = 4.0 * k as f64 / per_shell as f64;
            let (qx, qp) = match s as usize {
                0 => (1.0 - s, s),
                1 => (-(s - 1.0), 2.0 - s),
                2 => (-(3.0 - s), -(s - 2.0)),
                _ => (s - 3.0, -(4.0 - s)),
            };
            for &t in &times {
                let c = Coords::phase(r * qx, r * qp).at_time(t);
                let (dx, dp) = vector_field_at(h, &c)?;
                sup = sup.max(dx.hypot(dp));
            }
        }
        shells.push((r, sup));
    }

    if shells.iter().all(|&(_, s)| s == 0.0) {
        return Ok(PropagationReport {
            a: 0.0,
            b: 0.0,
            satisfied: true,
            residual: 0.0,
            shells,
        });
    }
    let n = shells.len() as f64;
    let mean_r = shells.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_s = shells.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = shells.iter().map(|s| (s.0 - mean_r).powi(2)).sum();
    let sxy: f64 = shells.iter().map(|s| (s.0 - mean_r) * (s.1 - mean_s)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = mean_s - a * mean_r;
    let residual = shells
        .iter()
        .map(|&(r, s)| (s - (a * r + b)).abs())
        .fold(0.0, f64::max);
    let scale = (a * r_max + b).abs().max(shells.iter().map(|s| s.1).fold(0.0, f64::max));
    Ok(PropagationReport {
        a,
        b,
        satisfied: residual <= 0.1 * scale,
        residual,
        shells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(text: &str) -> Hamiltonian {
        Hamiltonian::parse(text, text).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn vector_field_examples() {
        assert_eq!(
            hamiltonian_vector_field(&h("p^2/2"), PhasePoint::new(0.0, 1.0), 0.0).unwrap(),
            (1.0, 0.0)
        );
        let (dx, dp) =
            hamiltonian_vector_field(&h("-x^2 - p^2/4"), PhasePoint::new(0.7, -0.4), 0.0).unwrap();
        assert!(close(dx, 0.2, 1e-15) && close(dp, 1.4, 1e-15));
        let (dx, dp) =
            hamiltonian_vector_field(&h("(x^2 + p^2)/2"), PhasePoint::new(1.0, 0.0), 0.0).unwrap();
        assert_eq!((dx, dp), (0.0, -1.0));
    }

    #[test]
    fn poisson_bracket_examples() {
        let pt = PhasePoint::new(1.0, 3.0);
        let hh = h("x*p + sin(x)");
        assert_eq!(poisson_bracket(&hh, &hh, pt, 0.0).unwrap(), 0.0);
        let a = h("x");
        let b = h("p^2/2");
        assert!(close(poisson_bracket(&a, &b, PhasePoint::new(0.0, 2.0), 0.0).unwrap(), 2.0, 1e-15));
        // Finite-difference oracle agrees.
        let fd = |pt: PhasePoint| {
            let c = Coords::phase(pt.x, pt.p);
            a.partial_fd(Var::X, &c).unwrap() * b.partial_fd(Var::P, &c).unwrap()
                - a.partial_fd(Var::P, &c).unwrap() * b.partial_fd(Var::X, &c).unwrap()
        };
        assert!(close(fd(PhasePoint::new(0.0, 2.0)), 2.0, 1e-8));
        assert_eq!(poisson_bracket(&h("x^2/2"), &b, pt, 0.0).unwrap(), 3.0);
    }

    #[test]
    fn timedep_and_multitime_examples() {
        let pt = PhasePoint::new(0.3, -0.8);
        let (a, b) = (h("x^2*p"), h("p^3 + x"));
        assert_eq!(
            timedep_bracket(&a, &b, pt, 0.4).unwrap(),
            poisson_bracket(&a, &b, pt, 0.4).unwrap()
        );
        assert_eq!(timedep_bracket(&h("t"), &Hamiltonian::zero(), pt, 2.0).unwrap(), 1.0);
        let c = h("t*x + p^2");
        assert_eq!(timedep_bracket(&c, &c, pt, 1.5).unwrap(), 0.0);

        assert_eq!(multitime_bracket(&h("p^2"), &h("sin(p)"), pt, (0.1, 0.2)).unwrap(), 0.0);
        assert_eq!(multitime_bracket(&h("t2"), &h("t1"), pt, (0.1, 0.2)).unwrap(), 0.0);
        assert_eq!(
            multitime_bracket(&h("p^2/2"), &h("x*p"), PhasePoint::new(0.5, 1.0), (0.0, 0.0)).unwrap(),
            -1.0
        );
    }

    #[test]
    fn contact_examples() {
        let pt = ContactPoint::new(0.4, 1.3, -0.7);
        assert_eq!(contact_vector_field(&h("-1"), pt).unwrap(), (1.0, 0.0, 0.0));
        assert_eq!(contact_vector_field(&h("p"), pt).unwrap(), (0.0, 1.0, 0.0));
        assert_eq!(contact_vector_field(&h("u"), pt).unwrap(), (0.7, 0.0, -1.3));
        let hh = h("x*u + p^2");
        assert_eq!(contact_bracket(&hh, &hh, pt).unwrap(), 0.0);
        assert_eq!(contact_bracket(&h("p"), &h("u"), pt).unwrap(), 0.0);
        assert_eq!(contact_bracket(&h("u"), &h("x"), ContactPoint::new(2.0, 0.5, 1.0)).unwrap(), 2.0);
    }

    #[test]
    fn contact_field_projects_for_u_independent_h() {
        let hh = h("x^2*p + cos(p)");
        let pt = ContactPoint::new(0.2, -1.1, 5.0);
        let (du, dx, dp) = contact_vector_field(&hh, pt).unwrap();
        let (fx, fp) = hamiltonian_vector_field(&hh, PhasePoint::new(0.2, -1.1), 0.0).unwrap();
        assert_eq!((dx, dp), (fx, fp));
        let c = Coords::phase(0.2, -1.1);
        assert_eq!(du, -1.1 * fx - hh.value(&c).unwrap());
    }

    #[test]
    fn sup_norm_examples() {
        let hh = h("x*p");
        let r = Region::phase((-1.0, 1.0), (-1.0, 1.0));
        assert_eq!(bracket_sup_norm(&hh, &hh, BracketKind::Poisson, &r, 11).unwrap().value, 0.0);
        let s = bracket_sup_norm(&h("x^2/2"), &h("p^2/2"), BracketKind::Poisson, &r, 11).unwrap();
        assert_eq!(s.value, 1.0);
        let r = Region::phase((-1.0, 1.0), (-2.0, 2.0));
        let s = bracket_sup_norm(&h("p^2/2"), &h("x*p"), BracketKind::MultiTime, &r, 21).unwrap();
        assert_eq!(s.value, 4.0);
    }

    #[test]
    fn propagation_examples() {
        let r = Region::phase((-2.0, 2.0), (-2.0, 2.0));
        let rep = propagation_report(&h("p^2/2"), &r, 21).unwrap();
        assert!(close(rep.a, 1.0, 1e-12) && close(rep.b, 0.0, 1e-12) && rep.satisfied);
        let rep = propagation_report(&h("-x^2 - p^2/4"), &r, 21).unwrap();
        assert!(close(rep.a, 2.0, 1e-9) && rep.satisfied, "{rep:?}");
        let rep = propagation_report(&h("exp(p^2)"), &r, 21).unwrap();
        assert!(!rep.satisfied, "{rep:?}");
        let rep = propagation_report(&h("3"), &r, 5).unwrap();
        assert_eq!((rep.a, rep.b, rep.satisfied), (0.0, 0.0, true));
    }

    #[test]
    fn gradients_outside_deps_are_zero() {
        let hh = h("p^2/2").with_mode(GradientMode::FiniteDifference).unwrap();
        let c = Coords::phase(3.0, 2.0);
        assert_eq!(hh.partial(Var::X, &c).unwrap(), 0.0);
        assert_eq!(hh.partial(Var::T, &c).unwrap(), 0.0);
        assert!(close(hh.partial(Var::P, &c).unwrap(), 2.0, 1e-9));
    }

    #[test]
    fn separability() {
        assert!(h("p^2/2 + x^2/2").is_separable());
        assert!(h("-x^2 - p^2/4").is_separable());
        assert!(!h("x*p").is_separable());
        assert!(!h("p^2 + t*x").is_separable());
    }

    #[test]
    fn symbolic_mode_rejects_kinks() {
        assert!(matches!(Hamiltonian::parse("k", "abs(p)"), Err(HamError::Gradient { .. })));
        assert!(Hamiltonian::new("k", Expr::parse("abs(p)").unwrap(), GradientMode::FiniteDifference)
            .is_ok());
    }
}
