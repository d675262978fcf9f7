//! Quick consistency checks against closed forms, run by `hjvar selfcheck`.

use hjvar::expr::{Bindings, Var};
use hjvar::flow::{self, Scheme};
use hjvar::front;
use hjvar::gfqi::{self, FiberAxis, GeneratingFamily, TailSign};
use hjvar::grid::{linspace, periodic};
use hjvar::ham::{self, poisson_bracket_hamiltonian};
use hjvar::solve::{self, Grids};
use hjvar::{Coords, Expr, Hamiltonian, PhasePoint};

use crate::output::Table;

type Check = Result<(bool, String), String>;
type Named = (&'static str, fn() -> Check);

fn ham(text: &str) -> Result<Hamiltonian, String> {
    Hamiltonian::parse(text, text).map_err(|e| e.to_string())
}

fn expr(text: &str) -> Result<Expr, String> {
    Expr::parse(text).map_err(|e| e.to_string())
}

fn within(err: f64, tol: f64) -> (bool, String) {
    (err <= tol, format!("error {err:.3e} (tol {tol:.0e})"))
}

const POINTS: [(f64, f64); 4] = [(0.3, -0.7), (-1.2, 0.4), (2.0, 1.5), (0.0, 0.0)];

fn round_trip() -> Check {
    let e = expr("sin(x)^2 + p*exp(-x)/2 - x^-2")?;
    let again = expr(&e.to_string())?;
    let mut err: f64 = 0.0;
    for (x, p) in POINTS.iter().take(3) {
        let b = Bindings::new().with(Var::X, *x).with(Var::P, *p);
        let (a, c) = (e.eval(&b), again.eval(&b));
        err = err.max((a.map_err(|e| e.to_string())? - c.map_err(|e| e.to_string())?).abs());
    }
    Ok(within(err, 0.0))
}

fn kink_rejected() -> Check {
    let e = expr("abs(x) + max(x, p)")?;
    Ok((e.differentiate(Var::X).is_err(), "d/dx abs(x) refused".into()))
}

fn antisymmetry() -> Check {
    let (a, b) = (ham("x^2*p + sin(p)")?, ham("exp(-x^2)*p^3 - x")?);
    let mut err: f64 = 0.0;
    for (x, p) in POINTS {
        let z = PhasePoint::new(x, p);
        let ab = ham::poisson_bracket(&a, &b, z, 0.0).map_err(|e| e.to_string())?;
        let ba = ham::poisson_bracket(&b, &a, z, 0.0).map_err(|e| e.to_string())?;
        err = err.max((ab + ba).abs());
    }
    Ok(within(err, 1e-12))
}

fn jacobi() -> Check {
    let (a, b, c) = (ham("x^2*p")?, ham("sin(x) + p^2")?, ham("x*p^3 - x^3")?);
    let pb = |u: &Hamiltonian, v: &Hamiltonian| poisson_bracket_hamiltonian(u, v).map_err(|e| e.to_string());
    let terms = [pb(&a, &pb(&b, &c)?)?, pb(&b, &pb(&c, &a)?)?, pb(&c, &pb(&a, &b)?)?];
    let mut err: f64 = 0.0;
    for (x, p) in POINTS {
        let pt = Coords::phase(x, p);
        let mut sum = 0.0;
        for t in &terms {
            sum += t.value(&pt).map_err(|e| e.to_string())?;
        }
        err = err.max(sum.abs());
    }
    Ok(within(err, 1e-9))
}

fn gradients() -> Check {
    let h = ham("sin(x)*p^2 + exp(x/3) - p*x^2")?;
    let mut err: f64 = 0.0;
    for (x, p) in POINTS {
        let c = Coords::phase(x, p);
        for v in [Var::X, Var::P] {
            let s = h.partial(v, &c).map_err(|e| e.to_string())?;
            let f = h.partial_fd(v, &c).map_err(|e| e.to_string())?;
            err = err.max((s - f).abs() / s.abs().max(1.0));
        }
    }
    Ok(within(err, 1e-6))
}

fn rk4_order() -> Check {
    let h = ham("(p^2 + x^2)/2")?;
    let z0 = PhasePoint::new(1.0, 0.0);
    let err = |n: usize| -> Result<f64, String> {
        let z = flow::integrate(&h, z0, 0.0, 1.0, n, Scheme::Rk4).map_err(|e| e.to_string())?.end();
        Ok(((z.x - 1f64.cos()).powi(2) + (z.p + 1f64.sin()).powi(2)).sqrt())
    };
    let rate = (err(10)? / err(20)?).log2();
    Ok(((rate - 4.0).abs() < 0.2, format!("observed order {rate:.3}")))
}

fn verlet_energy() -> Check {
    let h = ham("p^2/2 - cos(x)")?;
    let traj = flow::integrate(&h, PhasePoint::new(1.0, 0.0), 0.0, 200.0, 4000, Scheme::StormerVerlet)
        .map_err(|e| e.to_string())?;
    let e0 = h.value(&Coords::phase(1.0, 0.0)).map_err(|e| e.to_string())?;
    let mut drift: f64 = 0.0;
    for (_, z) in &traj.samples {
        drift = drift.max((h.value(&Coords::phase(z.x, z.p)).map_err(|e| e.to_string())? - e0).abs());
    }
    Ok(within(drift, 2e-3))
}

fn quadratic_front() -> Check {
    let h = ham("-x^2 - p^2/4")?;
    let seeds = linspace(-2.0, 2.0, 41);
    let start = front::seed_front(&expr("0")?, std::slice::from_ref(&h), &seeds).map_err(|e| e.to_string())?;
    let fr = front::propagate_front(&start, &h, 0, 1.0, 200).map_err(|e| e.to_string())?;
    let mut err: f64 = 0.0;
    for q in &fr.points {
        let xi = q.seed_x;
        err = err
            .max((q.x - xi * 1f64.cos()).abs())
            .max((q.p - 2.0 * xi * 1f64.sin()).abs())
            .max((q.action - xi * xi * 1f64.sin() * 1f64.cos()).abs());
    }
    Ok(within(err, 1e-8))
}

fn mountain_pass() -> Check {
    let fiber = FiberAxis {
        values: linspace(-4.0, 4.0, 8001),
        tail: TailSign::Negative,
    };
    let fam = GeneratingFamily::from_fn(vec![0.0], false, fiber, |_, e| -e * e + 2.0 * (-e * e).exp())
        .map_err(|e| e.to_string())?;
    let v = gfqi::minimax_c1_fiber(&fam, 0).map_err(|e| e.to_string())?.value;
    Ok(within((v - 2.0).abs(), 1e-12))
}

fn gamma_sin() -> Check {
    let x = periodic(0.0, std::f64::consts::TAU, 512);
    let values = x.iter().map(|v| v.sin()).collect();
    let fam = GeneratingFamily::graph(x, true, values).map_err(|e| e.to_string())?;
    let g = gfqi::gamma_of_family(&fam).map_err(|e| e.to_string())?;
    Ok(within((g - 2.0).abs(), 1e-4))
}

fn tan_solution() -> Check {
    let h = ham("-x^2 - p^2/4")?;
    let grids = Grids::new(linspace(-1.0, 1.0, 41), linspace(0.0, 1.2, 13), linspace(-3.0, 3.0, 121));
    let field = solve::variational_solution(&expr("0")?, &h, &grids).map_err(|e| e.to_string())?;
    let mut err: f64 = 0.0;
    for (i, t) in grids.t.iter().enumerate() {
        for (k, x) in grids.x.iter().enumerate() {
            let exact = x * x * t.tan();
            err = err.max((field.at(i, k) - exact).abs() / exact.abs().max(1e-6));
        }
    }
    Ok(within(err, 1e-6))
}

fn lax_oleinik() -> Check {
    let h = ham("p^2/2")?;
    let f = expr("x^2/2")?;
    let grids = Grids::new(linspace(-1.0, 1.0, 41), linspace(0.0, 1.0, 6), linspace(-3.0, 3.0, 121));
    let lo = solve::lax_oleinik(&f, &h, &grids).map_err(|e| e.to_string())?;
    let mut err: f64 = 0.0;
    for (i, t) in grids.t.iter().enumerate() {
        for (k, x) in grids.x.iter().enumerate() {
            err = err.max((lo.at(i, k) - x * x / (2.0 * (1.0 + t))).abs());
        }
    }
    Ok(within(err, 5e-3))
}

fn stability_shift() -> Check {
    let (h, k) = (ham("p^2/2")?, ham("p^2/2 + 0.5")?);
    let grids = Grids::new(linspace(-1.0, 1.0, 21), linspace(0.0, 1.0, 6), linspace(-3.0, 3.0, 61));
    let r = solve::stability_gap(&h, &k, &expr("sin(x)")?, &grids).map_err(|e| e.to_string())?;
    Ok((
        r.ok && (r.gap - 0.5).abs() < 1e-9,
        format!("gap {:.6} bound {:.6}", r.gap, r.bound),
    ))
}

/// Runs every check; the flag is true when all passed.
pub fn run() -> (Table, bool) {
    let checks: [Named; 13] = [
        ("expression round trip", round_trip),
        ("kinks not differentiated", kink_rejected),
        ("bracket antisymmetry", antisymmetry),
        ("jacobi identity", jacobi),
        ("symbolic vs fd gradient", gradients),
        ("rk4 order", rk4_order),
        ("verlet energy drift", verlet_energy),
        ("quadratic front", quadratic_front),
        ("mountain pass minimax", mountain_pass),
        ("gamma of sin graph", gamma_sin),
        ("x^2 tan t solution", tan_solution),
        ("lax-oleinik quadratic case", lax_oleinik),
        ("stability under a shift", stability_shift),
    ];
    let mut table = Table::new(&["check", "status", "detail"]);
    let mut all = true;
    for (name, check) in checks {
        let (ok, detail) = check().unwrap_or_else(|e| (false, e));
        all &= ok;
        table.push(vec![name.into(), if ok { "pass" } else { "FAIL" }.into(), detail.into()]);
    }
    (table, all)
}
