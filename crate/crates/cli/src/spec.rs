//! JSON problem specifications.

use std::path::Path;

use hjvar::expr::Var;
use hjvar::front::Order;
use hjvar::grid;
use hjvar::ham::Region;
use hjvar::solve::{Grids, Method};
use hjvar::{Expr, Hamiltonian};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub hamiltonians: Vec<HamiltonianSpec>,
    #[serde(default = "zero_text")]
    pub initial_condition: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub method: MethodSpec,
    #[serde(default)]
    pub options: Options,
}

fn zero_text() -> String {
    "0".into()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    pub label: String,
    pub expression: String,
    /// Time slot (1 or 2) or operand position for `bracket`.
    #[serde(default = "one")]
    pub slot: u8,
}

fn one() -> u8 {
    1
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum TMax {
    Single(f64),
    Pair([f64; 2]),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub t_max: TMax,
    pub nt: usize,
    #[serde(default = "default_steps")]
    pub steps_per_unit_time: f64,
    #[serde(default)]
    pub seed_min: Option<f64>,
    #[serde(default)]
    pub seed_max: Option<f64>,
    #[serde(default)]
    pub n_seeds: Option<usize>,
    #[serde(default)]
    pub periodic: bool,
}

fn default_steps() -> f64 {
    100.0
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodSpec {
    #[default]
    Variational,
    LaxOleinik,
    Hopf,
}

impl From<MethodSpec> for Method {
    fn from(m: MethodSpec) -> Method {
        match m {
            MethodSpec::Variational => Method::Variational,
            MethodSpec::LaxOleinik => Method::LaxOleinik,
            MethodSpec::Hopf => Method::Hopf,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub x: Option<[f64; 2]>,
    pub p: Option<[f64; 2]>,
    pub t: Option<[f64; 2]>,
    pub t1: Option<[f64; 2]>,
    pub t2: Option<[f64; 2]>,
    pub u: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default)]
    pub eps_list: Vec<f64>,
    #[serde(default, rename = "box")]
    pub region: Option<BoxSpec>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub allow_blowup: bool,
    #[serde(default)]
    pub refine_levels: Option<usize>,
    #[serde(default)]
    pub fiber_points: Option<usize>,
    /// `"12"` or `"21"`.
    #[serde(default)]
    pub order: Option<String>,
    /// Initial conditions for the `γ̃` estimate.
    #[serde(default)]
    pub sample_fs: Vec<String>,
    /// Second initial condition for `γ(L1 - L2)`.
    #[serde(default)]
    pub compare: Option<String>,
    /// Phase points `[x, p]` for `flow`.
    #[serde(default)]
    pub points: Vec<[f64; 2]>,
    /// `"rk4"` or `"stormer-verlet"`.
    #[serde(default)]
    pub scheme: Option<String>,
    /// Integrate the contact field in `flow`; Hamiltonians may then use `u`.
    #[serde(default)]
    pub contact: bool,
    /// Default output path when `--out` is absent.
    #[serde(default)]
    pub output: Option<String>,
}

/// Command-line overrides applied before validation.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub nx: Option<usize>,
    pub nt: Option<usize>,
    pub t_max: Option<f64>,
    pub steps_per_unit: Option<f64>,
    pub n_seeds: Option<usize>,
    pub allow_blowup: bool,
    pub method: Option<MethodSpec>,
    pub order: Option<String>,
}

/// A validated problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub f: Expr,
    pub hamiltonians: Vec<(u8, Hamiltonian)>,
    pub x: Vec<f64>,
    pub periodic: bool,
    pub t_max: (f64, f64),
    pub nt: usize,
    pub seeds: Vec<f64>,
    pub steps_per_unit: f64,
    pub method: Method,
    pub order: Order,
    pub options: Options,
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {reason}"))
}

pub fn parse_problem(path: &Path) -> Result<ProblemSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_problem_str(&text).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_problem_str(text: &str) -> Result<ProblemSpec, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Validation(format!("schema: {e}")))
}

fn parse_order(text: &str, field: &str) -> Result<Order, CliError> {
    match text {
        "12" | "1,2" => Ok(Order::OneTwo),
        "21" | "2,1" => Ok(Order::TwoOne),
        other => Err(invalid(field, format!("unknown order '{other}', expected \"12\" or \"21\""))),
    }
}

impl ProblemSpec {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(nx) = o.nx {
            self.grid.nx = nx;
        }
        if let Some(nt) = o.nt {
            self.grid.nt = nt;
        }
        if let Some(t) = o.t_max {
            self.grid.t_max = match self.grid.t_max {
                TMax::Single(_) => TMax::Single(t),
                TMax::Pair(_) => TMax::Pair([t, t]),
            };
        }
        if let Some(s) = o.steps_per_unit {
            self.grid.steps_per_unit_time = s;
        }
        if let Some(n) = o.n_seeds {
            self.grid.n_seeds = Some(n);
        }
        if o.allow_blowup {
            self.options.allow_blowup = true;
        }
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(order) = &o.order {
            self.options.order = Some(order.clone());
        }
    }

    pub fn validate(self) -> Result<Problem, CliError> {
        let g = &self.grid;
        if g.nx < 2 {
            return Err(invalid("grid.nx", "must be at least 2"));
        }
        if g.nt < 2 {
            return Err(invalid("grid.nt", "must be at least 2"));
        }
        if !(g.x_min.is_finite() && g.x_max.is_finite() && g.x_min < g.x_max) {
            return Err(invalid("grid.x_min", "must be finite and below grid.x_max"));
        }
        let t_max = match g.t_max {
            TMax::Single(t) => (t, t),
            TMax::Pair([a, b]) => (a, b),
        };
        if !(t_max.0 > 0.0 && t_max.1 > 0.0 && t_max.0.is_finite() && t_max.1.is_finite()) {
            return Err(invalid("grid.t_max", "must be positive and finite"));
        }
        if !(g.steps_per_unit_time > 0.0 && g.steps_per_unit_time.is_finite()) {
            return Err(invalid("grid.steps_per_unit_time", "must be positive"));
        }

        let f = Expr::parse(&self.initial_condition).map_err(|e| invalid("initial_condition", e))?;
        if let Some(v) = f.variables().into_iter().find(|&v| v != Var::X) {
            return Err(invalid(
                "initial_condition",
                format!("initial_condition may not reference {}", v.name()),
            ));
        }

        let mut allowed = vec![Var::T, Var::T1, Var::T2, Var::X, Var::P];
        if self.options.contact {
            allowed.push(Var::U);
        }
        let mut hamiltonians = Vec::new();
        for (i, hs) in self.hamiltonians.iter().enumerate() {
            let field = format!("hamiltonians[{i}]");
            if !(1..=2).contains(&hs.slot) {
                return Err(invalid(&format!("{field}.slot"), "must be 1 or 2"));
            }
            if hamiltonians.iter().any(|(s, _)| *s == hs.slot) {
                return Err(invalid(&format!("{field}.slot"), format!("slot {} used twice", hs.slot)));
            }
            let h = Hamiltonian::parse(hs.label.clone(), &hs.expression)
                .map_err(|e| invalid(&format!("{field}.expression"), e))?;
            if let Some(v) = h.deps().iter().find(|v| !allowed.contains(v)) {
                return Err(invalid(
                    &format!("{field}.expression"),
                    format!("a Hamiltonian may not reference {}", v.name()),
                ));
            }
            hamiltonians.push((hs.slot, h));
        }
        hamiltonians.sort_by_key(|(s, _)| *s);

        let x = if g.periodic {
            grid::periodic(g.x_min, g.x_max - g.x_min, g.nx)
        } else {
            grid::linspace(g.x_min, g.x_max, g.nx)
        };
        let seeds = self.seeds(&f, &hamiltonians, t_max.0.max(t_max.1))?;
        if let Some(&e) = self.options.eps_list.iter().find(|e| !e.is_finite()) {
            return Err(invalid("options.eps_list", format!("non-finite entry {e}")));
        }
        let order = match &self.options.order {
            Some(o) => parse_order(o, "options.order")?,
            None => Order::OneTwo,
        };
        Ok(Problem {
            f,
            hamiltonians,
            periodic: g.periodic,
            x,
            t_max,
            nt: g.nt,
            seeds,
            steps_per_unit: g.steps_per_unit_time,
            method: self.method.into(),
            order,
            options: self.options,
        })
    }

    /// Explicit seed grid, or one padded by the characteristic speed seen at
    /// time zero over the `x` range.
    fn seeds(&self, f: &Expr, hams: &[(u8, Hamiltonian)], t_max: f64) -> Result<Vec<f64>, CliError> {
        let g = &self.grid;
        let dx = (g.x_max - g.x_min) / (g.nx - 1) as f64;
        let (lo, hi) = match (g.seed_min, g.seed_max) {
            (Some(a), Some(b)) => (a, b),
            (a, b) => {
                let speed = initial_speed(f, hams, g.x_min, g.x_max)?;
                let pad = 1.5 * t_max * speed + 2.0 * dx;
                (a.unwrap_or(g.x_min - pad), b.unwrap_or(g.x_max + pad))
            }
        };
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("grid.seed_min", "must be finite and below grid.seed_max"));
        }
        let n = match g.n_seeds {
            Some(n) if n < 2 => return Err(invalid("grid.n_seeds", "must be at least 2")),
            Some(n) => n,
            None => ((hi - lo) / dx).ceil() as usize + 1,
        };
        Ok(grid::linspace(lo, hi, n))
    }
}

fn initial_speed(f: &Expr, hams: &[(u8, Hamiltonian)], lo: f64, hi: f64) -> Result<f64, CliError> {
    let Ok(df) = f.differentiate(Var::X) else {
        return Ok(1.0);
    };
    let mut speed: f64 = 0.0;
    for x in grid::linspace(lo, hi, 201) {
        let p = df
            .eval(&hjvar::expr::Bindings::new().with(Var::X, x))
            .map_err(|e| invalid("initial_condition", e))?;
        for (_, h) in hams {
            let c = hjvar::Coords::phase(x, p);
            if let Ok(v) = h.partial(Var::P, &c) {
                if v.is_finite() {
                    speed = speed.max(v.abs());
                }
            }
        }
    }
    Ok(speed)
}

impl Problem {
    pub fn ham(&self, slot: u8) -> Result<&Hamiltonian, CliError> {
        self.hamiltonians
            .iter()
            .find(|(s, _)| *s == slot)
            .map(|(_, h)| h)
            .ok_or_else(|| invalid("hamiltonians", format!("this command needs a Hamiltonian in slot {slot}")))
    }

    pub fn times(&self, t_max: f64) -> Vec<f64> {
        grid::linspace(0.0, t_max, self.nt)
    }

    pub fn grids(&self) -> Grids {
        let mut g = Grids::new(self.x.clone(), self.times(self.t_max.0), self.seeds.clone());
        g.steps_per_unit = self.steps_per_unit;
        if let Some(r) = self.options.refine_levels {
            g.refine_levels = r;
        }
        if let Some(n) = self.options.fiber_points {
            g.fiber_points = n;
        }
        g
    }

    pub fn samples(&self) -> usize {
        self.options.samples.unwrap_or(21).max(2)
    }

    /// Sampling box; axes absent from the spec default to the grid ranges.
    pub fn region(&self) -> Region {
        let b = self.options.region.unwrap_or_default();
        let pair = |a: Option<[f64; 2]>| a.map(|[lo, hi]| (lo, hi));
        let timed = |v: Var| self.hamiltonians.iter().any(|(_, h)| h.depends_on(v));
        let x_hi = self.x[self.x.len() - 1];
        Region {
            x: pair(b.x).or(Some((self.x[0], x_hi))),
            p: pair(b.p).or(Some((-1.0, 1.0))),
            t: pair(b.t).or(timed(Var::T).then_some((0.0, self.t_max.0))),
            t1: pair(b.t1).or(timed(Var::T1).then_some((0.0, self.t_max.0))),
            t2: pair(b.t2).or(timed(Var::T2).then_some((0.0, self.t_max.1))),
            u: pair(b.u).or(timed(Var::U).then_some((-1.0, 1.0))),
        }
    }
}
