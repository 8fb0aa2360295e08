use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dbsrc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dbsrc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn table(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn run_table(args: &[&str]) -> (Vec<String>, Vec<Vec<f64>>) {
    let out = dbsrc(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    table(&String::from_utf8(out.stdout).unwrap())
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn map_buck_rows_have_no_short() {
    let (h, rows) = run_table(&["map", "--set", "gain=0.5"]);
    assert_eq!(h, ["sigma_ref", "delta_ref", "d", "s", "beta", "feasible"]);
    assert_eq!(rows.len(), 41 * 41);
    let (s, f) = (col(&h, "s"), col(&h, "feasible"));
    assert!(rows.iter().filter(|r| r[f] == 1.0).all(|r| r[s] == 0.0));
}

#[test]
fn map_boost_rows_exist() {
    let (h, rows) = run_table(&["map", "--set", "gain=1.5"]);
    let (d, s, f) = (col(&h, "d"), col(&h, "s"), col(&h, "feasible"));
    assert!(rows.iter().any(|r| r[f] == 1.0 && r[d] == PI && r[s] > 0.0));
}

#[test]
fn single_cell_map() {
    let (_, rows) = run_table(&[
        "map",
        "--set",
        "sigma_steps=1",
        "--set",
        "delta_steps=1",
        "--set",
        "sigma_lo=0",
        "--set",
        "delta_lo=0",
    ]);
    assert_eq!(rows.len(), 1);
    assert!((rows[0][2] - PI / 2.0).abs() < 1e-15);
}

#[test]
fn trajectory_follows_references() {
    let (h, rows) = run_table(&["trajectory"]);
    let c = |n| col(&h, n);
    let mut feasible = 0;
    for r in &rows {
        if r[c("feasible")] == 1.0 {
            feasible += 1;
            assert!((r[c("sigma")] - r[c("sigma_ref")]).abs() < 1e-9);
            let buck = r[c("sigma_ref")].cos() >= r[c("G")] * r[c("delta_ref")].cos();
            if buck {
                assert!((r[c("s")] - r[c("s_add")]).abs() < 1e-12);
            }
        }
    }
    assert!(feasible > rows.len() / 2);
}

#[test]
fn constant_trajectory() {
    let (h, rows) = run_table(&[
        "trajectory",
        "--set",
        "gain_start=0.5",
        "--set",
        "gain_end=0.5",
        "--set",
        "sigma_offset=0.1",
        "--set",
        "sigma_amplitude=0",
        "--set",
        "delta_amplitude=0",
        "--set",
        "delta_offset=0",
        "--set",
        "s_add_amplitude=0",
        "--set",
        "s_add_offset=0",
        "--set",
        "traj_steps=11",
    ]);
    let d = col(&h, "d");
    assert!(rows.windows(2).all(|w| w[0][d] == w[1][d]));
}

#[test]
fn lowpower_endpoints_and_overshoot() {
    let (h, rows) = run_table(&["lowpower"]);
    assert_eq!(h, ["G", "s_add", "W_over_W0", "s_add_0"]);
    for g in [0.7, 1.0, 1.3] {
        let curve: Vec<_> = rows.iter().filter(|r| r[0] == g).collect();
        assert_eq!(curve[0][2], 1.0);
        assert!(curve.last().unwrap()[2].abs() < 1e-12);
    }
    let peak = rows
        .iter()
        .filter(|r| r[0] == 0.7)
        .map(|r| r[2])
        .fold(0.0, f64::max);
    assert!(peak > 1.0);
}

#[test]
fn parallel_and_sequential_output_match() {
    let a = dbsrc(&["map", "--set", "gain=1.1"]);
    let b = dbsrc(&["map", "--set", "gain=1.1", "--sequential"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn csv_is_plain_and_precise() {
    let out = dbsrc(&["lowpower", "--set", "lowpower_steps=4"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.ends_with('\n'));
    let first = text.lines().nth(1).unwrap();
    assert_eq!(first.split(',').next().unwrap(), "6.9999999999999996e-1");
}

#[test]
fn config_file_and_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# low-power curves\ngains = [0.9, 1.2]   # two curves\nlowpower_steps = 8\n",
    )
    .unwrap();
    let path = cfg.to_str().unwrap();
    let (_, rows) = run_table(&["lowpower", "--config", path]);
    assert_eq!(rows.len(), 2 * 9);
    let (_, rows) = run_table(&["lowpower", "--config", path, "--set", "gains=1.0"]);
    assert_eq!(rows.len(), 9);
}

#[test]
fn config_errors_exit_2_without_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out.csv");
    let o = out.to_str().unwrap();
    for args in [
        vec!["map", "--set", "nope=1", "--out", o],
        vec!["map", "--set", "gain=-1", "--out", o],
        vec!["map", "--set", "sigma_steps=1.5", "--out", o],
        vec!["charge", "--set", "dt=0", "--out", o],
        vec!["charge", "--set", "compensation=cascade", "--out", o],
        vec!["lowpower", "--set", "sigma_ref=2", "--out", o],
        vec![
            "trajectory",
            "--config",
            "/nonexistent/dbsrc.cfg",
            "--out",
            o,
        ],
        vec!["charge", "--decimate", "0", "--out", o],
    ] {
        let r = dbsrc(&args);
        assert_eq!(r.status.code(), Some(2), "{args:?}");
        assert!(!out.exists(), "{args:?} wrote output");
    }
    let r = dbsrc(&["explode"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn controller_abort_exits_3_with_partial_trace() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("trace.csv");
    let r = dbsrc(&[
        "charge",
        "--set",
        "delta_ref=-0.8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(3));
    let (h, rows) = table(&read(&out));
    assert_eq!(h.len(), 15);
    assert!(!rows.is_empty() && rows.len() < 250_000);
}

fn charge(dir: &TempDir, name: &str, extra: &[&str]) -> (Vec<String>, Vec<Vec<f64>>) {
    let out = dir.path().join(name);
    let mut args = vec!["charge", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let r = dbsrc(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    table(&read(&out))
}

/// Largest `|I_out − I_ref|` once the soft start has settled.
fn tracking_error(h: &[String], rows: &[Vec<f64>]) -> f64 {
    let (t, i_ref, i_out) = (col(h, "t"), col(h, "I_ref"), col(h, "I_out"));
    rows.iter()
        .filter(|r| r[t] >= 1.5)
        .map(|r| (r[i_out] - r[i_ref]).abs())
        .fold(0.0, f64::max)
}

#[test]
fn charge_scenarios() {
    let dir = TempDir::new().unwrap();
    let (h, base) = charge(&dir, "base.csv", &["--decimate", "10"]);
    assert_eq!(
        h.join(","),
        "t,G,I_ref,I_out,V_bat,d,s,beta,omega,sigma,delta,sigma_ref,delta_ref,s_add,W"
    );
    assert_eq!(base.len(), 25_000);
    let v = col(&h, "V_bat");
    let final_v = base.last().unwrap()[v];
    assert!((final_v - 400.0).abs() < 4.0, "final V {final_v}");

    let (_, exact) = charge(&dir, "exact.csv", &["--decimate", "10", "--no-uncertainty"]);
    assert!(tracking_error(&h, &exact) < tracking_error(&h, &base));

    let (_, coarse) = charge(&dir, "coarse.csv", &["--decimate", "5", "--set", "dt=2e-4"]);
    let coarse_v = coarse.last().unwrap()[v];
    assert!((coarse_v - final_v).abs() / final_v < 1e-3);
}

#[test]
fn charge_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = [
        "--set",
        "duration=1",
        "--set",
        "noise=0.005",
        "--set",
        "seed=9",
    ];
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let mut v = vec!["charge", "--out", p.to_str().unwrap()];
        v.extend_from_slice(&args);
        assert!(dbsrc(&v).status.success());
    }
    assert_eq!(read(&a), read(&b));
}
