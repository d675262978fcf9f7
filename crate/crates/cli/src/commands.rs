//! Command bodies. Each returns the CSV table plus a few summary lines for
//! stderr.

use hjvar::expr::{Bindings, Var};
use hjvar::flow::{self, Scheme};
use hjvar::front::{self, Front};
use hjvar::gfqi::{self, FamilyBuilder, GammaTildeGrid, GeneratingFamily};
use hjvar::ham::{self, BracketKind, ContactPoint};
use hjvar::solve::{self, Method, SolutionField};
use hjvar::{Coords, Expr, PhasePoint};

use crate::output::{Cell, Table};
use crate::spec::Problem;
use crate::CliError;

pub struct Report {
    pub table: Table,
    pub summary: Vec<String>,
}

fn eval_f(f: &Expr, x: f64) -> Result<f64, CliError> {
    f.eval(&Bindings::new().with(Var::X, x))
        .map_err(|e| CliError::Numerical(format!("initial condition at x = {x}: {e}")))
}

fn steps_for(p: &Problem, span: f64) -> usize {
    ((p.steps_per_unit * span.abs()).ceil() as usize).max(1)
}

fn check_horizon(horizon: Option<f64>, allow: bool) -> Result<Vec<String>, CliError> {
    match horizon {
        Some(t) if !allow => Err(CliError::Numerical(format!(
            "the front turns vertical at t = {t:.6}, before the final time; \
             pass --allow-blowup to keep the partial result"
        ))),
        Some(t) => Ok(vec![format!("front vertical at t = {t:.6}; later nodes are nan")]),
        None => Ok(Vec::new()),
    }
}

fn field_table(field: &SolutionField) -> Table {
    match &field.times2 {
        None => {
            let mut t = Table::new(&["t", "x", "u", "branches"]);
            for (i, &time) in field.times.iter().enumerate() {
                for (k, &x) in field.x.iter().enumerate() {
                    let n = i * field.x.len() + k;
                    t.push(vec![time.into(), x.into(), field.u[n].into(), field.branches[n].into()]);
                }
            }
            t
        }
        Some(times2) => {
            let mut t = Table::new(&["t1", "t2", "x", "u", "branches"]);
            for (i, &t1) in field.times.iter().enumerate() {
                for (j, &t2) in times2.iter().enumerate() {
                    for (k, &x) in field.x.iter().enumerate() {
                        let n = (i * times2.len() + j) * field.x.len() + k;
                        t.push(vec![
                            t1.into(),
                            t2.into(),
                            x.into(),
                            field.u[n].into(),
                            field.branches[n].into(),
                        ]);
                    }
                }
            }
            t
        }
    }
}

fn field_summary(field: &SolutionField) -> Vec<String> {
    let undefined = field.u.iter().filter(|v| v.is_nan()).count();
    vec![format!(
        "method {}: {} nodes, {} undefined, {} family failures",
        field.method.name(),
        field.u.len(),
        undefined,
        field.failures
    )]
}

pub fn solve(p: &Problem) -> Result<Report, CliError> {
    let h = p.ham(1)?;
    let grids = p.grids();
    let field = match p.method {
        Method::Variational => solve::variational_solution(&p.f, h, &grids)?,
        Method::LaxOleinik => solve::lax_oleinik(&p.f, h, &grids)?,
        Method::Hopf => solve::hopf(&p.f, h, &grids)?,
    };
    let mut summary = check_horizon(field.horizon, p.options.allow_blowup)?;
    summary.extend(field_summary(&field));
    Ok(Report {
        table: field_table(&field),
        summary,
    })
}

pub fn multitime(p: &Problem) -> Result<Report, CliError> {
    let (h1, h2) = (p.ham(1)?, p.ham(2)?);
    let t1 = p.times(p.t_max.0);
    let t2 = p.times(p.t_max.1);
    let field = solve::multitime_solve(&p.f, h1, h2, p.order, &t1, &t2, &p.grids())?;
    let mut summary = check_horizon(field.horizon, p.options.allow_blowup)?;
    summary.push(format!("order {}", p.order.name()));
    summary.extend(field_summary(&field));
    Ok(Report {
        table: field_table(&field),
        summary,
    })
}

fn scheme(p: &Problem) -> Result<Scheme, CliError> {
    match p.options.scheme.as_deref() {
        None | Some("rk4") => Ok(Scheme::Rk4),
        Some("stormer-verlet") | Some("verlet") => Ok(Scheme::StormerVerlet),
        Some(other) => Err(CliError::Validation(format!(
            "options.scheme: unknown scheme '{other}', expected \"rk4\" or \"stormer-verlet\""
        ))),
    }
}

/// Start points: `options.points`, else `(x, f'(x))` over the `x` grid.
fn start_points(p: &Problem) -> Result<Vec<PhasePoint>, CliError> {
    if !p.options.points.is_empty() {
        return Ok(p.options.points.iter().map(|&[x, q]| PhasePoint::new(x, q)).collect());
    }
    let df = p
        .f
        .differentiate(Var::X)
        .map_err(|e| CliError::Validation(format!("initial_condition: {e}")))?;
    p.x.iter()
        .map(|&x| Ok(PhasePoint::new(x, eval_f(&df, x)?)))
        .collect()
}

pub fn flow(p: &Problem) -> Result<Report, CliError> {
    let h = p.ham(1)?;
    let t_final = p.t_max.0;
    let steps = steps_for(p, t_final);
    let starts = start_points(p)?;
    let allow = p.options.allow_blowup;
    let blown = |i: usize, time: f64| -> Result<String, CliError> {
        if allow {
            Ok(format!("trajectory {i} left the finite region near t = {time:.6}"))
        } else {
            Err(CliError::Numerical(format!(
                "trajectory {i} left the finite region near t = {time:.6}; pass --allow-blowup to keep it"
            )))
        }
    };
    let mut summary = Vec::new();
    if p.options.contact {
        let mut table = Table::new(&["point", "t", "x", "p", "u"]);
        for (i, z) in starts.iter().enumerate() {
            let u0 = eval_f(&p.f, z.x)?;
            let traj = flow::contact_integrate(h, ContactPoint::new(z.x, z.p, u0), 0.0, t_final, steps)?;
            if let Some(last) = traj.blowup {
                summary.push(blown(i, traj.samples[last].0)?);
            }
            for (t, c) in &traj.samples {
                table.push(vec![i.into(), (*t).into(), c.x.into(), c.p.into(), c.u.into()]);
            }
        }
        return Ok(Report { table, summary });
    }
    let scheme = scheme(p)?;
    let mut table = Table::new(&["point", "t", "x", "p", "tau"]);
    let mut drift: f64 = 0.0;
    for (i, z) in starts.iter().enumerate() {
        let traj = flow::integrate(h, *z, 0.0, t_final, steps, scheme)?;
        if let Some(last) = traj.blowup {
            summary.push(blown(i, traj.samples[last].0)?);
        }
        if let Some(d) = traj.energy_drift {
            drift = drift.max(d);
        }
        for (t, q) in &traj.samples {
            let tau = -h.value(&Coords::phase(q.x, q.p).at_time(*t))?;
            table.push(vec![i.into(), (*t).into(), q.x.into(), q.p.into(), tau.into()]);
        }
    }
    if h.is_autonomous() {
        summary.push(format!("largest energy drift {drift:.3e}"));
    }
    Ok(Report { table, summary })
}

fn push_front(table: &mut Table, fr: &Front) {
    for q in &fr.points {
        let mut row: Vec<Cell> = fr.times.iter().map(|&t| t.into()).collect();
        row.extend([
            q.seed_x.into(),
            q.x.into(),
            q.p.into(),
            q.action.into(),
            (q.blown as usize).into(),
        ]);
        table.push(row);
    }
}

pub fn front(p: &Problem) -> Result<Report, CliError> {
    let spu = p.steps_per_unit;
    if p.hamiltonians.len() == 2 {
        let (h1, h2) = (p.ham(1)?, p.ham(2)?);
        let fr = front::multi_time_front(&p.f, h1, h2, p.order, p.t_max, &p.seeds, spu)?;
        let mut table = Table::new(&["t1", "t2", "seed_x", "x", "p", "action", "blown"]);
        push_front(&mut table, &fr);
        let summary = vec![format!(
            "order {}: {} points, {} folds, vertical {}",
            p.order.name(),
            fr.len(),
            fr.folds.len(),
            fr.vertical
        )];
        return Ok(Report { table, summary });
    }
    let h = p.ham(1)?;
    let start = front::seed_front(&p.f, std::slice::from_ref(h), &p.seeds)?;
    let evo = front::evolve_front(&start, h, 0, &p.times(p.t_max.0), spu)?;
    let mut summary = check_horizon(evo.horizon, p.options.allow_blowup)?;
    let mut table = Table::new(&["t", "seed_x", "x", "p", "action", "blown"]);
    for fr in &evo.fronts {
        push_front(&mut table, fr);
    }
    let folds = evo.fronts.last().map_or(0, |f| f.folds.len());
    summary.push(format!("{} slices, {folds} folds at the last slice", evo.fronts.len()));
    Ok(Report { table, summary })
}

pub fn bracket(p: &Problem) -> Result<Report, CliError> {
    let (a, b) = (p.ham(1)?, p.ham(2)?);
    let region = p.region();
    let samples = p.samples();
    let mut table = Table::new(&["kind", "sup", "t", "t1", "t2", "x", "p", "u", "nodes"]);
    for kind in BracketKind::ALL {
        let s = ham::bracket_sup_norm(a, b, kind, &region, samples)?;
        let c = s.argmax;
        table.push(vec![
            kind.name().into(),
            s.value.into(),
            c.t.into(),
            c.t1.into(),
            c.t2.into(),
            c.x.into(),
            c.p.into(),
            c.u.into(),
            s.nodes.into(),
        ]);
    }
    Ok(Report {
        table,
        summary: vec![format!("{samples} samples per axis; values are grid maxima")],
    })
}

fn graph_of(p: &Problem, f: &Expr) -> Result<GeneratingFamily, CliError> {
    let values = p.x.iter().map(|&x| eval_f(f, x)).collect::<Result<Vec<_>, _>>()?;
    Ok(GeneratingFamily::graph(p.x.clone(), p.periodic, values)?)
}

fn parse_aux(text: &str, field: &str) -> Result<Expr, CliError> {
    let e = Expr::parse(text).map_err(|e| CliError::Validation(format!("{field}: {e}")))?;
    if let Some(v) = e.variables().into_iter().find(|&v| v != Var::X) {
        return Err(CliError::Validation(format!("{field}: may not reference {}", v.name())));
    }
    Ok(e)
}

/// `T · osc(H)` over the sampling box, the bound `γ̃(φ) ≤ T osc(H)` checked
/// against for Hamiltonians with compact support.
fn oscillation_bound(p: &Problem) -> Result<f64, CliError> {
    let h = p.ham(1)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in p.region().grid(p.samples()) {
        let v = h.value(&c)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(p.t_max.0 * (hi - lo))
}

pub fn gamma(p: &Problem) -> Result<Report, CliError> {
    let mut table = Table::new(&["quantity", "value", "witness_x"]);
    let fam = graph_of(p, &p.f)?;
    let c1 = gfqi::minimax_c1_global(&fam)?;
    let cmu = gfqi::minimax_cmu_global(&fam)?;
    let at = |w: &[usize]| -> Cell { w.first().map_or(Cell::S(String::new()), |&i| p.x[i].into()) };
    table.push(vec!["c1".into(), c1.value.into(), at(&c1.witness)]);
    table.push(vec!["cmu".into(), cmu.value.into(), at(&cmu.witness)]);
    table.push(vec!["gamma".into(), gfqi::gamma_of_family(&fam)?.into(), "".into()]);
    if let Some(text) = &p.options.compare {
        let g = parse_aux(text, "options.compare")?;
        let other = graph_of(p, &g)?;
        table.push(vec!["gamma_difference".into(), gfqi::gamma_difference(&fam, &other)?.into(), "".into()]);
    }
    let mut summary = Vec::new();
    if let Ok(h) = p.ham(1) {
        let samples = if p.options.sample_fs.is_empty() {
            vec![p.f.clone()]
        } else {
            p.options
                .sample_fs
                .iter()
                .enumerate()
                .map(|(i, s)| parse_aux(s, &format!("options.sample_fs[{i}]")))
                .collect::<Result<_, _>>()?
        };
        let grid = GammaTildeGrid {
            x: p.x.clone(),
            periodic: p.periodic,
            seeds: p.seeds.clone(),
            steps_per_unit: p.steps_per_unit,
        };
        let lower = gfqi::gamma_tilde_lower_bound(h, &samples, p.t_max.0, &grid)?;
        table.push(vec!["gamma_tilde_lower".into(), lower.into(), "".into()]);
        table.push(vec!["oscillation_bound".into(), oscillation_bound(p)?.into(), "".into()]);
        summary.push(format!("{} sample initial conditions", samples.len()));
    }
    Ok(Report { table, summary })
}

/// Discrete generating family at the final time (the graph of `f` without a
/// Hamiltonian), as long-format `x,xi,S` rows.
pub fn family_table(p: &Problem) -> Result<Table, CliError> {
    let fam = match p.ham(1) {
        Ok(h) => {
            let mut b = FamilyBuilder::new(&p.f, h, p.t_max.0)?;
            b.steps_per_unit = p.steps_per_unit;
            b.family(&p.x, &p.seeds)?
        }
        Err(_) => graph_of(p, &p.f)?,
    };
    let mut table = Table::new(&["x", "xi", "S"]);
    for (k, &x) in fam.base.iter().enumerate() {
        match fam.fibers.first() {
            Some(axis) => {
                for (xi, s) in axis.values.iter().zip(fam.fiber(k)) {
                    table.push(vec![x.into(), (*xi).into(), (*s).into()]);
                }
            }
            None => table.push(vec![x.into(), "".into(), fam.values[k].into()]),
        }
    }
    Ok(table)
}

pub fn discrepancy(p: &Problem) -> Result<Report, CliError> {
    let (h1, h2) = (p.ham(1)?, p.ham(2)?);
    let eps = if p.options.eps_list.is_empty() {
        vec![0.1, 0.5, 1.0]
    } else {
        p.options.eps_list.clone()
    };
    let t1 = p.times(p.t_max.0);
    let t2 = p.times(p.t_max.1);
    let rows = solve::order_discrepancy(&p.f, h1, h2, &t1, &t2, &p.grids(), &eps)?;
    let mut table = Table::new(&["eps", "gap", "bracket_norm"]);
    for r in &rows {
        table.push(vec![r.eps.into(), r.gap.into(), r.bracket_norm.into()]);
    }
    Ok(Report {
        table,
        summary: vec![format!("{} scalings", rows.len())],
    })
}
