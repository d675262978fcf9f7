use hjvar::expr::{Bindings, Var};
use hjvar::front::{self, Order};
use hjvar::grid::linspace;
use hjvar::solve::{self, Grids, Method};
use hjvar::{Expr, Hamiltonian};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ham(text: &str) -> Hamiltonian {
    Hamiltonian::parse(text, text).unwrap()
}

fn expr(text: &str) -> Expr {
    Expr::parse(text).unwrap()
}

#[test]
fn every_method_starts_from_f() {
    let f = expr("x^2/2 + 0.3*x");
    let h = ham("p^2/2");
    let g = Grids::new(linspace(-1.0, 1.0, 41), linspace(0.0, 0.5, 6), linspace(-3.0, 3.0, 121));
    for field in [
        solve::variational_solution(&f, &h, &g).unwrap(),
        solve::lax_oleinik(&f, &h, &g).unwrap(),
        solve::hopf(&f, &h, &g).unwrap(),
    ] {
        for (k, &x) in g.x.iter().enumerate() {
            let exact = f.eval(&Bindings::new().with(Var::X, x)).unwrap();
            assert!((field.at(0, k) - exact).abs() <= 1e-10, "{}", field.method.name());
        }
    }
}

#[test]
fn random_quadratic_hamiltonians_agree_with_lax_oleinik() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let (a, b, c): (f64, f64, f64) = (rng.gen_range(0.2..1.5), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let h = ham(&format!("{a}*p^2 + {b}*p + {c}"));
        let f = expr("sin(2*x)");
        let pad = 2.0 * (2.0 * a + b.abs()) + 1.0;
        let g = Grids::new(
            linspace(-1.5, 1.5, 121),
            linspace(0.0, 1.0, 41),
            linspace(-1.5 - pad, 1.5 + pad, 801),
        );
        let v = solve::variational_solution(&f, &h, &g).unwrap();
        let o = solve::lax_oleinik(&f, &h, &g).unwrap();
        assert!(v.branches.iter().any(|&n| n > 1), "shock expected for a = {a}");
        let gap = v.sup_gap(&o);
        assert!(gap < 5e-3, "a = {a}, b = {b}: gap {gap}");
    }
}

#[test]
fn hopf_matches_variational_for_convex_data() {
    let f = expr("x^2/2");
    let h = ham("-p^2/4");
    let g = Grids::new(linspace(-1.0, 1.0, 81), linspace(0.0, 1.0, 11), linspace(-4.0, 4.0, 401));
    let v = solve::variational_solution(&f, &h, &g).unwrap();
    let w = solve::hopf(&f, &h, &g).unwrap();
    assert_eq!(w.method, Method::Hopf);
    assert!(v.sup_gap(&w) < 1e-3, "{}", v.sup_gap(&w));
}

#[test]
fn larger_hamiltonian_gives_smaller_solution() {
    let f = expr("cos(x)");
    let (h0, h1) = (ham("p^2/2"), ham("p^2/2 + 0.1*p^2 + 0.05"));
    let g = Grids::new(linspace(-3.0, 3.0, 121), linspace(0.0, 1.0, 21), linspace(-6.0, 6.0, 801));
    let (l0, l1) = (solve::lax_oleinik(&f, &h0, &g).unwrap(), solve::lax_oleinik(&f, &h1, &g).unwrap());
    assert!(l0.u.iter().zip(&l1.u).all(|(a, b)| b <= a));
    let (v0, v1) = (
        solve::variational_solution(&f, &h0, &g).unwrap(),
        solve::variational_solution(&f, &h1, &g).unwrap(),
    );
    let worst = v0.u.iter().zip(&v1.u).map(|(a, b)| b - a).fold(f64::NEG_INFINITY, f64::max);
    assert!(worst <= 5e-3, "{worst}");
}

#[test]
fn zero_second_hamiltonian_reduces_to_one_time() {
    let f = expr("sin(x)");
    let h1 = ham("p^2/2");
    let x = linspace(-2.0, 2.0, 41);
    let t = linspace(0.0, 0.8, 9);
    let g = Grids::new(x, t.clone(), linspace(-4.0, 4.0, 401));
    let one = solve::variational_solution(&f, &h1, &g).unwrap();
    let two = solve::multitime_solve(&f, &h1, &Hamiltonian::zero(), Order::TwoOne, &t, &[0.0, 0.5], &g).unwrap();
    for i in 0..t.len() {
        for j in 0..2 {
            for (a, b) in one.slice(i, 0).iter().zip(two.slice(i, j)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
    let rows = solve::order_discrepancy(&f, &h1, &ham("x*p"), &t, &t, &g, &[0.0]).unwrap();
    assert_eq!(rows[0].gap, 0.0);
}

#[test]
fn horizon_is_stable_under_seed_refinement() {
    let h = ham("-x^2 - p^2/4");
    let start = |n| front::seed_front(&expr("0"), std::slice::from_ref(&h), &linspace(-3.0, 3.0, n)).unwrap();
    let times = linspace(0.0, 2.0, 201);
    for n in [101, 401, 1601] {
        let evo = front::evolve_front(&start(n), &h, 0, &times, 100.0).unwrap();
        let t = evo.horizon.unwrap();
        assert!((1.55..=1.59).contains(&t), "{n} seeds: {t}");
    }
}

#[test]
fn stability_bound_holds_for_time_dependent_perturbation() {
    let h = ham("p^2/2");
    let k = ham("p^2/2 + 0.2*sin(x)*cos(t)");
    let g = Grids::new(linspace(-2.0, 2.0, 81), linspace(0.0, 1.0, 21), linspace(-4.0, 4.0, 401));
    let r = solve::stability_gap(&h, &k, &expr("0.5*cos(x)"), &g).unwrap();
    assert!(r.ok, "{r:?}");
    assert!(r.gap > 0.0 && r.bound <= 0.2 + 1e-12);
}
