use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hjvar::flow::{self, Scheme};
use hjvar::{Hamiltonian, PhasePoint};
use hjvar_cli::parse_f64;

fn hjvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjvar")).args(args).output().unwrap()
}

fn spec(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

const TAN_BLOWUP: &str = r#"{"hamiltonians": [{"label": "H", "expression": "-x^2 - p^2/4"}],
    "initial_condition": "0",
    "grid": {"x_min": -1, "x_max": 1, "nx": 21, "t_max": 1.2, "nt": 13,
             "seed_min": -3, "seed_max": 3, "n_seeds": 201}}"#;

#[test]
fn solve_writes_time_major_csv() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), "a.json", TAN_BLOWUP);
    let out = dir.path().join("u.csv");
    let res = hjvar(&["solve", "--spec", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(!text.contains('\r'));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["t", "x", "u", "branches"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 21 * 13);
    let last = &rows[rows.len() - 1];
    let (t, x, u) = (parse_f64(&last[0]).unwrap(), parse_f64(&last[1]).unwrap(), parse_f64(&last[2]).unwrap());
    assert_eq!((t, x), (1.2, 1.0));
    assert!((u - 1.2f64.tan()).abs() < 1e-6);
}

#[test]
fn blowup_needs_permission() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), "a.json", TAN_BLOWUP);
    let path = s.to_str().unwrap();
    let res = hjvar(&["solve", "--spec", path, "--t-max", "1.6"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("--allow-blowup"));

    let res = hjvar(&["solve", "--spec", path, "--t-max", "1.6", "--allow-blowup"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.lines().any(|l| l.contains(",nan,0")));
}

#[test]
fn validation_errors_exit_one_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = spec(dir.path(), "b.json", &TAN_BLOWUP.replace(r#""nx": 21"#, r#""nx": 1"#));
    let res = hjvar(&["solve", "--spec", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8(res.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("grid.nx"));

    let bad = spec(dir.path(), "c.json", &TAN_BLOWUP.replace(r#""initial_condition": "0""#, r#""initial_condition": "p""#));
    let res = hjvar(&["solve", "--spec", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("initial_condition may not reference p"));

    let res = hjvar(&["solve", "--spec", "/nonexistent/spec.json"]);
    assert_eq!(res.status.code(), Some(1));
    let res = hjvar(&["solve", "--bogus"]);
    assert_eq!(res.status.code(), Some(1));
    let res = hjvar(&["--help"]);
    assert_eq!(res.status.code(), Some(0));
}

#[test]
fn method_preconditions_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), "a.json", TAN_BLOWUP);
    let res = hjvar(&["solve", "--spec", s.to_str().unwrap(), "--method", "hopf"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn flow_csv_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(
        dir.path(),
        "f.json",
        r#"{"hamiltonians": [{"label": "H", "expression": "p^2/2 - cos(x)"}],
            "grid": {"x_min": -1, "x_max": 1, "nx": 2, "t_max": 3, "nt": 2, "steps_per_unit_time": 50},
            "options": {"points": [[0.3, 0.1]], "scheme": "stormer-verlet"}}"#,
    );
    let res = hjvar(&["flow", "--spec", s.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let h = Hamiltonian::parse("H", "p^2/2 - cos(x)").unwrap();
    let traj = flow::integrate(&h, PhasePoint::new(0.3, 0.1), 0.0, 3.0, 150, Scheme::StormerVerlet).unwrap();
    let mut rdr = csv::Reader::from_reader(res.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), traj.samples.len());
    for (row, (t, z)) in rows.iter().zip(&traj.samples) {
        assert_eq!(parse_f64(&row[1]).unwrap().to_bits(), t.to_bits());
        assert_eq!(parse_f64(&row[2]).unwrap().to_bits(), z.x.to_bits());
        assert_eq!(parse_f64(&row[3]).unwrap().to_bits(), z.p.to_bits());
    }
}

#[test]
fn contact_flow_and_separability() {
    let dir = tempfile::tempdir().unwrap();
    let json = r#"{"hamiltonians": [{"label": "H", "expression": "u"}],
        "initial_condition": "x",
        "grid": {"x_min": 0, "x_max": 1, "nx": 2, "t_max": 1, "nt": 2},
        "options": {"contact": true, "points": [[0, 1]]}}"#;
    let s = spec(dir.path(), "c.json", json);
    let res = hjvar(&["flow", "--spec", s.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = String::from_utf8(res.stdout).unwrap();
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|c| parse_f64(c).unwrap()).collect();
    // H = u: u' = -u, p' = -p with u(0) = f(0) = 0 and p(0) = 1.
    assert!(last[4].abs() < 1e-12 && (last[3] - (-1f64).exp()).abs() < 1e-9);

    let s = spec(dir.path(), "d.json", &json.replace(r#""contact": true, "#, ""));
    assert_eq!(hjvar(&["flow", "--spec", s.to_str().unwrap()]).status.code(), Some(1));

    let s = spec(
        dir.path(),
        "e.json",
        r#"{"hamiltonians": [{"label": "H", "expression": "x*p"}],
            "grid": {"x_min": 0, "x_max": 1, "nx": 2, "t_max": 1, "nt": 2},
            "options": {"scheme": "stormer-verlet"}}"#,
    );
    assert_eq!(hjvar(&["flow", "--spec", s.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn bracket_and_gamma_tables() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(
        dir.path(),
        "b.json",
        r#"{"hamiltonians": [{"label": "A", "expression": "x^2/2", "slot": 1},
                             {"label": "B", "expression": "p^2/2", "slot": 2}],
            "grid": {"x_min": -1, "x_max": 1, "nx": 3, "t_max": 1, "nt": 2},
            "options": {"box": {"x": [-1, 1], "p": [-1, 1]}, "samples": 5}}"#,
    );
    let res = hjvar(&["bracket", "--spec", s.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8(res.stdout).unwrap();
    let poisson = text.lines().find(|l| l.starts_with("poisson,")).unwrap();
    assert_eq!(parse_f64(poisson.split(',').nth(1).unwrap()), Some(1.0));

    let s = spec(
        dir.path(),
        "g.json",
        r#"{"hamiltonians": [],
            "initial_condition": "sin(x)",
            "grid": {"x_min": 0, "x_max": 6.283185307179586, "nx": 512, "t_max": 1, "nt": 2, "periodic": true},
            "options": {"compare": "0"}}"#,
    );
    let fam = dir.path().join("fam.csv");
    let res = hjvar(&["gamma", "--spec", s.to_str().unwrap(), "--family-out", fam.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = String::from_utf8(res.stdout).unwrap();
    let value = |q: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("{q},"))).unwrap();
        parse_f64(line.split(',').nth(1).unwrap()).unwrap()
    };
    assert!((value("gamma") - 2.0).abs() < 1e-4);
    assert_eq!(value("gamma"), value("gamma_difference"));
    assert_eq!(std::fs::read_to_string(&fam).unwrap().lines().count(), 513);
}

#[test]
fn selfcheck_passes() {
    let res = hjvar(&["selfcheck"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
}

#[test]
fn shipped_specs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        hjvar_cli::parse_problem(&path).unwrap().validate().unwrap();
        n += 1;
    }
    assert!(n >= 4);
}
