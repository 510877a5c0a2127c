use std::path::Path;
use std::process::{Command, Output};

use colony_cli::io::{list_snapshots, read_series, Snapshot};

fn colony(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colony")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn summary_value(dir: &Path, key: &str) -> Option<String> {
    let text = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    text.lines().find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
}

const SMALL_1D: &str = "\
[grid]
dim = 1
lx = 10
nx = 100

[init.u]
kind = gaussian
mass = 0.2
width = 0.5

[control]
dt_max = 0.05

[schedule]
t_end = 2000
series_interval = 1
snapshot_interval = 100
";

#[test]
fn small_one_dimensional_run_settles() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(tmp.path(), SMALL_1D);
    let o = colony(&["run", "-c", &cfg, "--set", &format!("output.dir={}", out_dir.display())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("[control]") && stdout.contains("cfl = 0.5"), "defaults echoed");
    assert_eq!(summary_value(&out_dir, "cause").as_deref(), Some("steady_state"));
    let (records, moments) = read_series(std::fs::File::open(out_dir.join("series.csv")).unwrap()).unwrap();
    assert!(moments.is_empty());
    assert!(records.len() > 100);
    let snaps = list_snapshots(&out_dir).unwrap();
    assert_eq!(snaps[0].0, 0.0);
    assert_eq!(snaps[1].0, 100.0);
    let last = Snapshot::load(&snaps.last().unwrap().1).unwrap();
    assert_eq!(last.time, records.last().unwrap().t);
    assert!(std::fs::read_to_string(out_dir.join("config.resolved")).unwrap().contains("nx = 100"));
}

#[test]
fn supercritical_elliptic_run_reports_blow_up() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "\
[grid]
dim = 2
lx = 4
nx = 128

[sensitivity]
kind = linear
chi0 = 0.053

[control]
mode = parabolic_elliptic
dt_max = 0.02
dt_min = 1e-5

[init.u]
mass = 600
width = 0.1

[schedule]
t_end = 1
";
    let cfg = write_config(tmp.path(), text);
    let out_dir = tmp.path().join("out");
    let o = colony(&["run", "-c", &cfg, "--set", &format!("output.dir={}", out_dir.display())]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary_value(&out_dir, "cause").as_deref(), Some("blow_up"));
    assert!(summary_value(&out_dir, "t_detect").is_some());
    assert!(summary_value(&out_dir, "blow_up_mass_threshold").unwrap().starts_with("4.742026"));
}

#[test]
fn unwritable_output_directory_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = write_config(tmp.path(), SMALL_1D);
    let target = blocker.join("sub");
    let o = colony(&["run", "-c", &cfg, "--set", &format!("output.dir={}", target.display())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains(&target.display().to_string()));
}

#[test]
fn config_errors_name_key_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[grid]\ndim = 1\nlx = 1\nnx = 2\n");
    let o = colony(&["run", "-c", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("grid.nx") && err.contains("line 4") && err.contains("≥ 3"), "{err}");
}

#[test]
fn kinetics_command() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().display().to_string();
    let o = colony(&["kinetics", "--set", &format!("output.dir={d}"), "--set", "kinetics.c0=0"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("converged = true"), "{text}");
    let residual: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("conservation_residual = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual <= 1e-10);
    let csv = std::fs::read_to_string(tmp.path().join("kinetics.csv")).unwrap();
    assert!(csv.starts_with("t,u,c,n,w,total\n"));

    let zero = colony(&[
        "kinetics",
        "--set",
        &format!("output.dir={d}"),
        "--set",
        "kinetics.u0=0",
        "--set",
        "kinetics.c0=0",
        "--set",
        "kinetics.n0=0",
    ]);
    assert_eq!(zero.status.code(), Some(0));
    let csv = std::fs::read_to_string(tmp.path().join("kinetics.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert!(line.split(',').all(|v| v.parse::<f64>().unwrap() == 0.0), "{line}");
    }
    let bad = colony(&["kinetics", "--set", "kinetics.dt=0"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn validate_model_statuses() {
    let o = colony(&["validate-model", "--set", "preset=fig2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("[warn] g(0) = 0"), "{text}");

    let o = colony(&["validate-model", "--set", "sensitivity.kind=linear", "--set", "sensitivity.chi0=1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("b is constant"));

    let o = colony(&["validate-model", "--set", "sensitivity.kind=linear", "--set", "sensitivity.chi0=-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL]"));
}

#[test]
fn blowup_scan_requires_theorem_setting() {
    let base = ["blowup-scan", "--set", "preset=fig2", "--set", "scan.masses=1", "--set", "scan.widths=0.5"];
    let o = colony(&base);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parabolic_elliptic"));
    let mut args = base.to_vec();
    args.extend(["--set", "control.mode=parabolic_elliptic"]);
    let o = colony(&args);
    assert!(String::from_utf8_lossy(&o.stderr).contains("linear"));
    let o = colony(&[
        "blowup-scan",
        "--set",
        "preset=fig2",
        "--set",
        "scan.masses=",
        "--set",
        "scan.widths=0.5",
        "--set",
        "control.mode=parabolic_elliptic",
        "--set",
        "sensitivity.kind=linear",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));
}

#[test]
fn blowup_scan_rows_in_sweep_order() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "\
[grid]
dim = 2
lx = 4
nx = 64

[sensitivity]
kind = linear
chi0 = 0.053

[control]
mode = parabolic_elliptic
dt_max = 0.02
dt_min = 1e-5

[schedule]
series_interval = 0.1

[scan]
masses = 20, 50
widths = 0.3, 0.5
t_end = 0.5

[output]
dir = {}
",
        tmp.path().join("scan").display()
    );
    let cfg = write_config(tmp.path(), &text);
    let o = colony(&["blowup-scan", "-c", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("scan/blowup_scan.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv.lines().map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows[0], ["mass", "width", "cause", "t_final", "I0", "threshold"]);
    let keys: Vec<(f64, f64)> = rows[1..].iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    assert_eq!(keys, vec![(20.0, 0.3), (20.0, 0.5), (50.0, 0.3), (50.0, 0.5)]);
    assert!(rows[1..].iter().all(|r| r[2] != "blow_up"));
    let i0: Vec<f64> = rows[1..].iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(i0[0] < i0[1] && i0[2] < i0[3]);
}

#[test]
fn emit_plot_writes_gridded_data() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "[grid]\ndim = 2\nlx = 2\nly = 1\nnx = 4\nny = 3\n[init.u]\nkind = constant\nvalue = 0\n[init.w]\nkind = constant\nvalue = 0.5\n[schedule]\nt_end = 1\nsnapshot_interval = 0.5\n");
    let o = colony(&["run", "-c", &cfg, "--set", &format!("output.dir={}", out_dir.display())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let plots = tmp.path().join("plots");
    let d = out_dir.display().to_string();
    let p = plots.display().to_string();
    let o = colony(&["emit-plot", "--dir", &d, "--time", "0.5", "--out", &p]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let u = std::fs::read_to_string(plots.join("u_t0.5.dat")).unwrap();
    let uw = std::fs::read_to_string(plots.join("u_plus_w_t0.5.dat")).unwrap();
    let blocks: Vec<&str> = uw.split("\n\n").filter(|b| !b.trim().is_empty()).collect();
    assert_eq!(blocks.len(), 3);
    for line in uw.lines().filter(|l| !l.is_empty()) {
        let cols: Vec<f64> = line.split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols.len(), 3);
        assert_eq!(cols[2], 0.5);
    }
    assert!(u.lines().filter(|l| !l.is_empty()).all(|l| l.ends_with(" 0.0000000000000000e0")));

    let o = colony(&["emit-plot", "--dir", &d, "--time", "0.25"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("available times") && err.contains("0.5"), "{err}");
}

#[test]
fn emit_plot_one_dimensional_two_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "[grid]\ndim = 1\nlx = 1\nnx = 8\n[schedule]\nt_end = 0.1\n");
    assert_eq!(colony(&["run", "-c", &cfg, "--set", &format!("output.dir={}", out_dir.display())]).status.code(), Some(0));
    let d = out_dir.display().to_string();
    let o = colony(&["emit-plot", "--dir", &d, "--time", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let u = std::fs::read_to_string(out_dir.join("u_t0.dat")).unwrap();
    assert_eq!(u.lines().count(), 8);
    assert!(u.lines().all(|l| l.split(' ').count() == 2));
}

#[test]
fn eigencheck_passes() {
    let o = colony(&["eigencheck"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert_eq!(text.matches("PASS").count(), 2, "{text}");
}

#[test]
fn repeated_runs_write_identical_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "seed = 5\n[grid]\ndim = 2\nlx = 4\nnx = 32\n[init.n]\nkind = constant\nvalue = 1\nnoise = 0.2\n[schedule]\nt_end = 1\nseries_interval = 0.1\n",
    );
    let mut outputs = Vec::new();
    for k in 0..2 {
        let d = tmp.path().join(format!("r{k}"));
        let o = colony(&["run", "-c", &cfg, "--set", &format!("output.dir={}", d.display())]);
        assert_eq!(o.status.code(), Some(0));
        outputs.push(std::fs::read(d.join("series.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
