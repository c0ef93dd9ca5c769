use std::path::Path;
use std::process::{Command, Output};

const BD: &str = "model.family = brownian\nmodel.mu = 0.5\nmodel.sigma = 1\n";
const JD: &str = "model.family = jump-diffusion\nmodel.mu = 3\nmodel.sigma = 1\nmodel.lambda = 1\nmodel.rho = 1\n";
const CL: &str = "model.family = cramer-lundberg\nmodel.c = 1.5\nmodel.lambda = 1\nmodel.rho = 1\n";

fn run(dir: &Path, cfg: &str, args: &[&str]) -> Output {
    let path = dir.join("run.cfg");
    std::fs::write(&path, cfg).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lastzero"));
    cmd.arg(args[0]).arg("--config").arg(&path).args(&args[1..]).current_dir(dir);
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn model_check_verdicts() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), BD, &["model-check"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("psi'(0+) = 0.5"));
    assert!(text.contains("Phi''(0) = -8"));
    assert!(text.contains("variation = infinite"));

    let slow = "model.family = jump-diffusion\nmodel.mu = 0.5\nmodel.sigma = 1\nmodel.lambda = 1\nmodel.rho = 1\n";
    let o = run(d.path(), slow, &["model-check"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("drift"));

    assert_eq!(code(&run(d.path(), "model.family brownian\n", &["model-check"])), 1);
    assert_eq!(code(&run(d.path(), &format!("{BD}colour = red\n"), &["model-check"])), 1);
}

#[test]
fn solve_writes_reproducible_files() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!("{BD}solver.n_u = 40\n");
    assert_eq!(code(&run(d.path(), &cfg, &["solve", "--out", "a"])), 0);
    assert_eq!(code(&run(d.path(), &cfg, &["solve", "--out", "b"])), 0);
    for f in ["boundary.csv", "value.csv", "report.txt"] {
        let a = std::fs::read(d.path().join("a").join(f)).unwrap();
        let b = std::fs::read(d.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
    let text = std::fs::read_to_string(d.path().join("a/boundary.csv")).unwrap();
    assert!(text.starts_with("u,b,h\n"));
    assert!(!text.contains('\r'));
    let b: Vec<f64> = rows(&d.path().join("a/boundary.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(b.len(), 40);
    assert!(b.windows(2).all(|w| w[1] <= w[0]));
    let report = std::fs::read_to_string(d.path().join("a/report.txt")).unwrap();
    assert!(report.contains("u_b = inf"));
    let v = rows(&d.path().join("a/value.csv"));
    assert!(v.iter().all(|r| r[2].parse::<f64>().unwrap() <= 0.0));
}

#[test]
fn value_prints_points() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!("{BD}solver.n_u = 40\n");
    let o = run(d.path(), &cfg, &["value", "1,0.5", "1,50", "0,-1"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    let vals: Vec<f64> = text.lines().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(vals[0] < 0.0);
    assert_eq!(vals[1], 0.0);
    assert!(vals[2] < vals[0]);
    assert!(d.path().join("value.csv").exists());
    assert_eq!(code(&run(d.path(), &cfg, &["value", "oops"])), 1);
}

#[test]
fn simulate_rules() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!("{BD}solver.n_u = 40\nsim.n_paths = 20000\n");
    assert_eq!(code(&run(d.path(), &cfg, &["solve"])), 0);
    let args = ["simulate", "--rule", "boundary:boundary.csv", "--rule", "barrier:1,2,3,4,5", "--rule", "oracle", "--out", "s1"];
    let o = run(d.path(), &cfg, &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&d.path().join("s1/sim.csv"));
    assert_eq!(r.len(), 7);
    let stat = |row: &Vec<String>| (row[2].parse::<f64>().unwrap(), row[3].parse::<f64>().unwrap());
    let (mb, sb) = stat(&r[0]);
    for row in &r[1..6] {
        assert!(row[0].starts_with("barrier:"));
        let (m, s) = stat(row);
        assert!(mb <= m + 2.0 * (s * s + sb * sb).sqrt(), "{} beats the boundary", row[0]);
    }
    assert_eq!(r[6][0], "oracle");
    assert!(stat(&r[6]).0 < 1e-3);

    // same seed, same bytes; --seed lands in the seed column
    let o = run(d.path(), &cfg, &["simulate", "--rule", "barrier:1,2,3,4,5", "--rule", "oracle", "--out", "s2"]);
    assert_eq!(code(&o), 0);
    let o = run(d.path(), &cfg, &["simulate", "--rule", "barrier:1,2,3,4,5", "--rule", "oracle", "--out", "s3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(d.path().join("s2/sim.csv")).unwrap(), std::fs::read(d.path().join("s3/sim.csv")).unwrap());
    let o = run(d.path(), &cfg, &["simulate", "--rule", "immediate", "--seed", "99", "--out", "s4"]);
    assert_eq!(code(&o), 0);
    assert_eq!(rows(&d.path().join("s4/sim.csv"))[0][5], "99");

    assert_eq!(code(&run(d.path(), &cfg, &["simulate", "--rule", "sometimes"])), 1);
    assert_eq!(code(&run(d.path(), &cfg, &["simulate", "--rule", "boundary:missing.csv"])), 1);
}

#[test]
fn strict_flags_heavy_censoring() {
    let d = tempfile::tempdir().unwrap();
    // a horizon far too short to see the last zero
    let cfg = format!("{BD}sim.n_paths = 2000\nsim.horizon = 2\n");
    let loose = run(d.path(), &cfg, &["simulate", "--rule", "barrier:50"]);
    assert_eq!(code(&loose), 0);
    let strict = run(d.path(), &cfg, &["simulate", "--rule", "barrier:50", "--strict"]);
    assert_eq!(code(&strict), 4);
}

#[test]
fn solve_reports_a_finite_cutoff() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &format!("{CL}solver.n_u = 40\n"), &["solve"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(d.path().join("report.txt")).unwrap();
    let ub: f64 = report.lines().find(|l| l.starts_with("u_b = ")).unwrap()[6..].split_whitespace().next().unwrap().parse().unwrap();
    assert!(ub.is_finite() && ub > 0.0);
}

#[test]
fn validate_runs_the_jump_checks() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &format!("{JD}sim.n_paths = 10000\n"), &["validate"]);
    let text = String::from_utf8_lossy(&o.stdout);
    println!("{text}");
    assert!(text.contains(" 9 jump-family Lambda positivity"));
    assert!(!text.contains(" 3 equivalence"));
    assert_eq!(code(&o), 0);
}

#[test]
fn validate_fails_on_a_tightened_tolerance() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!("{BD}solver.tol_smooth_fit = 1e-5\nsim.n_paths = 5000\n");
    let o = run(d.path(), &cfg, &["validate"]);
    let text = String::from_utf8_lossy(&o.stdout);
    println!("{text}");
    assert!(text.contains("FAIL  6 smooth fit"));
    assert_eq!(code(&o), 5);
}
