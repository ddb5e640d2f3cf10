use std::path::Path;
use std::process::{Command, Output};

fn phasetrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasetrack"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// `name -> (closed_form, quadrature)` from a bounds table.
fn bound_table(text: &str) -> Vec<(String, Option<f64>, Option<f64>)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].to_string(), c[1].parse().ok(), c[2].parse().ok())
        })
        .collect()
}

#[test]
fn bounds_p2_closed_forms() {
    let o = phasetrack(&["bounds", "--p", "2", "--kappa", "1", "--flux", "25"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = bound_table(&stdout(&o));
    let want = [("qcrb", 0.05), ("filter", 0.1), ("smoother", 0.05)];
    for ((name, cf, quad), (wn, wv)) in t.iter().zip(want) {
        assert_eq!(name, wn);
        assert!((cf.unwrap() - wv).abs() < 1e-12);
        assert!((quad.unwrap() / wv - 1.0).abs() < 1e-3);
    }
}

#[test]
fn bounds_p4_ratio() {
    let o = phasetrack(&["bounds", "--p", "4", "--kappa", "1", "--flux", "25"]);
    let t = bound_table(&stdout(&o));
    let ratio = t
        .iter()
        .find(|r| r.0 == "filter_over_qcrb")
        .unwrap()
        .1
        .unwrap();
    assert!((ratio - 4.0).abs() < 1e-12);
}

#[test]
fn bounds_from_tabulated_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.csv");
    let mut text = String::from("omega,density\n");
    for k in 0..=400 {
        let w = 10f64.powf(-4.0 + 10.0 * k as f64 / 400.0);
        text.push_str(&format!("{w},{}\n", 1.0 / (w * w)));
    }
    std::fs::write(&path, text).unwrap();
    let o = phasetrack(&[
        "bounds",
        "--spectrum-file",
        path.to_str().unwrap(),
        "--flux",
        "10",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = bound_table(&stdout(&o));
    // closed forms for p = 2, kappa = 1, N = 10
    let q = 0.5 / 40f64.sqrt();
    let f = 1.0 / 40f64.sqrt();
    for (name, want) in [("qcrb", q), ("filter", f), ("smoother", q)] {
        let row = t.iter().find(|r| r.0 == name).unwrap();
        assert!(row.1.is_none());
        let got = row.2.unwrap();
        assert!((got / want - 1.0).abs() <= 5e-3, "{name}: {got} vs {want}");
    }
}

#[test]
fn riccati_examples() {
    let o = phasetrack(&["riccati", "--p", "4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p = 4"));
    assert_eq!(lines.next(), Some("Vt_F (filter)"));
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split_whitespace()
        .map(|x| x.parse().unwrap())
        .collect();
    assert!((row[0] - std::f64::consts::SQRT_2).abs() < 1e-9 && (row[1] - 1.0).abs() < 1e-12);
    let res: f64 = text
        .lines()
        .last()
        .unwrap()
        .trim_start_matches("residual = ")
        .parse()
        .unwrap();
    assert!(res < 1e-9);

    let text = stdout(&phasetrack(&["riccati", "--p", "6"]));
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(2)
        .take(3)
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert!((rows[2][2] - 2.0).abs() < 1e-9);

    let text = stdout(&phasetrack(&["riccati", "--p", "2"]));
    let vs: f64 = text.lines().nth(6).unwrap().trim().parse().unwrap();
    assert!((vs - 0.5).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    assert_eq!(phasetrack(&["riccati", "--p", "5"]).status.code(), Some(2));
    assert_eq!(phasetrack(&["riccati", "--p", "22"]).status.code(), Some(2));
    assert_eq!(
        phasetrack(&["bounds", "--p", "0.5", "--kappa", "1", "--flux", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(phasetrack(&["no-such-command"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    std::fs::write(
        &spec,
        "[sweep]\np = [2]\nkappa = 1.0\ngrid = [10.0]\nestimators = []\n",
    )
    .unwrap();
    let out = dir.path().join("o.csv");
    let o = phasetrack(&["sweep", spec.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("estimators"));
}

#[test]
fn numerical_failure_exit_code() {
    // a tabulated spectrum decaying as 1/omega has a divergent tail
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.csv");
    std::fs::write(&path, "omega,density\n0.1,10\n1,1\n10,0.1\n").unwrap();
    let o = phasetrack(&[
        "bounds",
        "--spectrum-file",
        path.to_str().unwrap(),
        "--flux",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

fn simulate_to(dir: &Path, name: &str, extra: &[&str]) -> Vec<u8> {
    let out = dir.join(name);
    let mut args = vec![
        "--seed",
        "5",
        "simulate",
        "--p",
        "2",
        "--flux",
        "100",
        "-o",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = phasetrack(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::read(out).unwrap()
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate_to(dir.path(), "a.csv", &["--estimator", "abc"]);
    let b = simulate_to(dir.path(), "b.csv", &["--estimator", "abc"]);
    assert_eq!(a, b);
}

#[test]
fn simulate_smoother_column_only_inside_interior() {
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(simulate_to(
        dir.path(),
        "s.csv",
        &["--estimator", "smoother"],
    ))
    .unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    // burn-in 20 tau at each end of a 1000 tau window, dt = 0.01 tau
    let n = rows.len();
    assert_eq!(n, 104_000);
    for (i, r) in rows.iter().enumerate() {
        let inside = (2000..n - 2000).contains(&i);
        assert_eq!(!r[5].is_empty(), inside, "row {i}");
        assert!(r[6].is_empty());
    }
}

#[test]
fn simulate_abc_default_chi_is_sqrt_mu_for_p2() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate_to(dir.path(), "a.csv", &["--estimator", "abc"]);
    // mu = 4 N kappa = 400
    let b = simulate_to(dir.path(), "b.csv", &["--estimator", "abc", "--chi", "20"]);
    let c = simulate_to(dir.path(), "c.csv", &["--estimator", "abc", "--chi", "21"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

const P2_SPEC: &str = r#"
[sweep]
p = [2]
kappa = 1.0
grid = [10.0, 100.0]
estimators = ["filter", "smoother"]
trials = 16
seed = 21
linearized = true
"#;

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn sweep_p2_linearized_rows_and_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("p2.toml");
    std::fs::write(&spec, P2_SPEC).unwrap();
    let out = dir.path().join("p2.csv");
    let o = phasetrack(&["sweep", spec.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let main = read_csv(&out);
    assert_eq!(
        main[0].join(","),
        "p,N_over_kappa,estimator,mse,stderr,n_trials,dt,duration,seed,lg_filter_mse,qcrb,wiener_filter_mse"
    );
    assert_eq!(main.len(), 5);
    let ratios = read_csv(&dir.path().join("p2.ratios.csv"));
    assert_eq!(
        ratios[0].join(","),
        "p,grid,N_over_kappa,estimator,ratio,ratio_stderr,status"
    );
    for r in &ratios[1..] {
        if r[1] != "100" {
            continue;
        }
        let ratio: f64 = r[4].parse().unwrap();
        let se: f64 = r[5].parse().unwrap();
        let want = if r[3] == "filter" { 1.0 } else { 0.5 };
        // Euler bias at dt = 0.01 tau is about half a percent
        assert!((ratio - want).abs() <= 3.0 * se + 0.01, "{r:?}");
        assert_eq!(r[6], "ok");
    }
    // analytic columns agree with the bounds command
    for row in &main[1..] {
        let n: f64 = row[1].parse().unwrap();
        let o = phasetrack(&[
            "bounds",
            "--p",
            "2",
            "--kappa",
            "1",
            "--flux",
            &n.to_string(),
        ]);
        let t = bound_table(&stdout(&o));
        let qcrb: f64 = row[10].parse().unwrap();
        let wiener: f64 = row[11].parse().unwrap();
        let lg: f64 = row[9].parse().unwrap();
        assert!((t[0].1.unwrap() - qcrb).abs() <= 1e-9);
        assert!((t[1].1.unwrap() - wiener).abs() <= 1e-9);
        assert!((lg - wiener).abs() <= 1e-9);
    }
}

#[test]
fn sweep_seed_flag_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("p2.toml");
    std::fs::write(
        &spec,
        P2_SPEC
            .replace("grid = [10.0, 100.0]", "grid = [10.0]")
            .replace("trials = 16", "trials = 2"),
    )
    .unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = phasetrack(&[
            "--seed",
            seed,
            "sweep",
            spec.to_str().unwrap(),
            "-o",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        std::fs::read(out).unwrap()
    };
    let a = run("1", "a.csv");
    let b = run("1", "b.csv");
    let c = run("2", "c.csv");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sweep_unwritable_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("p2.toml");
    std::fs::write(&spec, P2_SPEC).unwrap();
    let out = dir.path().join("missing").join("out.csv");
    let o = phasetrack(&["sweep", spec.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_flags_undamped_p4_abc_as_diverged() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("p4.toml");
    let text = "[sweep]\np = [4]\nkappa = 1.0\ngrid = [100.0]\nestimators = [\"filter\", \"abc\"]\ntrials = 32\nseed = 11\n\n[timing]\nwindow_factor = 1e4\n";
    std::fs::write(&spec, text).unwrap();
    let out = dir.path().join("p4.csv");
    let o = phasetrack(&["sweep", spec.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ratios = read_csv(&dir.path().join("p4.ratios.csv"));
    let status = |est: &str| ratios.iter().find(|r| r[3] == est).unwrap()[6].clone();
    assert_eq!(status("filter"), "ok");
    assert_eq!(status("abc"), "diverged");
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        phasetrack::experiment::SweepSpec::from_path(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 4);
}
