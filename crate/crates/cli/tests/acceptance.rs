//! Acceptance checks. Prints one PASS/FAIL line per criterion with the
//! measured quantities and wall time, and exits nonzero if any fails.

use std::cell::RefCell;
use std::io;
use std::path::Path;
use std::time::Instant;

use colony_cli::commands::{cmd_blowup_scan, cmd_eigencheck, cmd_kinetics, cmd_run};
use colony_cli::config::RunConfig;
use colony_cli::io::{list_snapshots, Snapshot};
use colony_core::diagnostics::{blow_up_threshold, check_monotonicity, DiagnosticsSeries, MomentWeight};
use colony_core::kinetics::{integrate, KineticState};
use colony_core::stepper::{run_simulation, RunHooks, Schedule, SimState, StepControl, StopRules};
use colony_core::{EllipticSolveSettings, Field, Grid, ModelParams, TerminationCause};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

struct Report {
    failures: usize,
    series: Vec<(String, DiagnosticsSeries)>,
}

impl Report {
    fn criterion(&mut self, id: u32, name: &str, limit_s: Option<f64>, f: impl FnOnce(&mut Self) -> Outcome) {
        let start = Instant::now();
        let out = f(self);
        let elapsed = start.elapsed().as_secs_f64();
        let in_time = limit_s.is_none_or(|l| elapsed <= l);
        let passed = out.passed && in_time;
        if !passed {
            self.failures += 1;
        }
        let limit = limit_s.map_or(String::new(), |l| format!(" (limit {l} s)"));
        println!(
            "{} criterion {id:>2} {name}: {} | runtime {elapsed:.2} s{limit}",
            if passed { "PASS" } else { "FAIL" },
            out.detail
        );
    }
}

fn config(text: &str, out_dir: &Path) -> RunConfig {
    let dir = format!("output.dir={}", out_dir.display());
    RunConfig::from_text(text, &[dir.as_str()], Path::new(".")).expect("acceptance config parses")
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome { passed: false, detail: detail.into() }
}

fn conservation_drift(series: &DiagnosticsSeries) -> f64 {
    let t0 = series.records[0].total;
    series.records.iter().map(|r| (r.total - t0).abs()).fold(0.0, f64::max) / t0.abs()
}

const FIG2_1D: &str = "\
preset = fig2
[grid]
dim = 1
lx = 16
nx = 200
[schedule]
t_end = 50
series_interval = 0.1
";

fn criterion1(r: &mut Report, tmp: &Path) -> Outcome {
    let cfg = config(FIG2_1D, &tmp.join("c1"));
    let run = match cmd_run(&cfg, &mut io::sink()) {
        Ok(run) => run.result,
        Err(e) => return fail(format!("run failed: {e:#}")),
    };
    let drift = conservation_drift(&run.series);
    let ok = drift <= 1e-10 && run.cause == TerminationCause::EndTime;
    r.series.push(("fig2 1D".into(), run.series));
    Outcome { passed: ok, detail: format!("cause {}, max relative drift {drift:.3e} (≤ 1e-10)", run.cause) }
}

fn criterion2(r: &mut Report) -> Outcome {
    let mut worst: (f64, f64) = (0.0, 0.0);
    let mut bad = Vec::new();
    for (name, s) in &r.series {
        match check_monotonicity(s) {
            Ok(m) => {
                worst.0 = worst.0.max(m.max_n_increase);
                worst.1 = worst.1.max(m.max_w_decrease);
                if !m.passed() {
                    bad.push(name.clone());
                }
            }
            Err(e) => bad.push(format!("{name} ({e})")),
        }
    }
    Outcome {
        passed: bad.is_empty() && !r.series.is_empty(),
        detail: format!(
            "{} series, max M_n rise {:.2e}, max M_w drop {:.2e} (≤ 1e-12 relative per step){}",
            r.series.len(),
            worst.0,
            worst.1,
            if bad.is_empty() { String::new() } else { format!(", violations in {bad:?}") }
        ),
    }
}

fn criterion3(tmp: &Path) -> Outcome {
    let cfg = config("[kinetics]\nu0 = 0.5\nc0 = 0.1\nn0 = 1\nw0 = 0\ndt = 0.01\nt_max = 2000\n", &tmp.join("c3"));
    let k = match cmd_kinetics(&cfg, &mut io::sink()) {
        Ok(k) => k,
        Err(e) => return fail(format!("kinetics failed: {e:#}")),
    };
    let p = ModelParams::fig2();
    let s0 = KineticState::new(0.5, 0.1, 1.0, 0.0);
    let at = |dt: f64| {
        let s = *integrate(&s0, &p, dt, 5.0, usize::MAX).unwrap().last().unwrap();
        [s.u, s.c, s.n, s.w]
    };
    let (a, b, c) = (at(1e-2), at(5e-3), at(2.5e-3));
    let dist = |x: [f64; 4], y: [f64; 4]| x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let ratio = dist(a, b) / dist(b, c);
    let mu = k.rate.unwrap_or(f64::NAN);
    let f = k.final_state;
    let passed = k.converged && f.u.max(f.c) < 1e-8 && f.t < 2000.0 && mu > 0.0 && k.residual <= 1e-10
        && (8.0..=32.0).contains(&ratio);
    Outcome {
        passed,
        detail: format!(
            "max(u,c) {:.2e} at t {:.1}, mu_hat {mu:.4e} (> 0), residual {:.2e} (≤ 1e-10), Richardson ratio {ratio:.2} (8..32)",
            f.u.max(f.c),
            f.t,
            k.residual
        ),
    }
}

fn criterion4(tmp: &Path) -> Outcome {
    let cfg = config("[eigencheck]\nlength = 1\nnx = 400\n", &tmp.join("c4"));
    match cmd_eigencheck(&cfg, &mut io::sink()) {
        Ok((results, _)) => Outcome {
            passed: results.iter().all(|r| r.passed) && results.len() == 2,
            detail: results
                .iter()
                .map(|r| format!("{} rate {:.5} vs {:.5} (err {:.2e} ≤ 2e-2)", r.quantity, r.fitted, r.expected, r.rel_error))
                .collect::<Vec<_>>()
                .join(", "),
        },
        Err(e) => fail(format!("eigencheck failed: {e:#}")),
    }
}

/// Final-state assertions shared by the two convergence criteria.
fn settled(run: &colony_core::RunResult, tol_u: f64, tol: f64) -> (bool, String) {
    let f = &run.final_state;
    let sup_u = f.u.sup_norm();
    let sup_c = f.c.sup_norm();
    let mean = f.n.mean();
    let flat = f.n.values().iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let rate = run.series.rate("u_l1").map_or(f64::NAN, |r| r.rate);
    let ok = run.cause == TerminationCause::SteadyState && sup_u < tol_u && sup_c < tol && flat < tol && rate > 0.0;
    (
        ok,
        format!(
            "cause {}, t {:.1}, |u| {sup_u:.2e}, |c| {sup_c:.2e}, n flatness {flat:.2e}, rate {rate:.4}",
            run.cause, f.t
        ),
    )
}

const CONV_1D: &str = "\
[grid]
dim = 1
lx = 10
nx = 400
[init.u]
kind = gaussian
mass = 1
width = 0.5
center = 5
[init.n]
kind = constant
value = 1
[schedule]
t_end = 5000
series_interval = 0.5
";

fn criterion5(r: &mut Report, tmp: &Path) -> Outcome {
    let mut runs = Vec::new();
    for (k, scale) in [1.0, 0.5].into_iter().enumerate() {
        let d = StepControl::default();
        let text = format!(
            "{CONV_1D}[control]\ndt_init = {}\ndt_max = {}\ncfl = {}\nreaction_safety = {}\n",
            d.dt_init * scale,
            d.dt_max * scale,
            d.cfl_advective * scale,
            d.reaction_safety * scale
        );
        let cfg = config(&text, &tmp.join(format!("c5_{k}")));
        match cmd_run(&cfg, &mut io::sink()) {
            Ok(run) => runs.push(run.result),
            Err(e) => return fail(format!("run failed: {e:#}")),
        }
    }
    let (ok, detail) = settled(&runs[0], 1e-8, 1e-6);
    let w1 = runs[0].final_state.w.sup_norm();
    let w2 = runs[1].final_state.w.sup_norm();
    let rel = (w1 - w2).abs() / w2;
    let finite = w1.is_finite() && w2.is_finite();
    for (k, run) in runs.into_iter().enumerate() {
        r.series.push((format!("1D convergence dt/{}", k + 1), run.series));
    }
    Outcome {
        passed: ok && finite && rel <= 1e-3,
        detail: format!("{detail}, |w| {w1:.6e} vs {w2:.6e} at dt/2 (rel {rel:.2e} ≤ 1e-3)"),
    }
}

fn criterion6(r: &mut Report, tmp: &Path) -> Outcome {
    let text = "\
preset = fig2
[grid]
dim = 2
lx = 16
nx = 64
[init.u]
kind = gaussian
mass = 0.01
width = 2
[schedule]
t_end = 5000
series_interval = 0.5
";
    let cfg = config(text, &tmp.join("c6"));
    let run = match cmd_run(&cfg, &mut io::sink()) {
        Ok(run) => run.result,
        Err(e) => return fail(format!("run failed: {e:#}")),
    };
    let (ok, detail) = settled(&run, 1e-6, 1e-6);
    r.series.push(("2D small data".into(), run.series));
    Outcome { passed: ok, detail }
}

fn criterion7(tmp: &Path) -> Outcome {
    let direct = 8.0 * std::f64::consts::PI / (1.0 * 0.053);
    let threshold = blow_up_threshold(1.0, 0.053).unwrap();
    let rel = (threshold - direct).abs() / direct;
    let text = "\
[grid]
dim = 2
lx = 4
nx = 256
[model]
alpha = 1
[sensitivity]
kind = linear
chi0 = 0.053
[control]
mode = parabolic_elliptic
dt_max = 0.02
dt_min = 1e-5
[init.n]
kind = constant
value = 1
[schedule]
series_interval = 0.5
[scan]
masses = 100, 600
widths = 0.05
t_end = 50
";
    let cfg = config(text, &tmp.join("c7"));
    let rows = match cmd_blowup_scan(&cfg, &mut io::sink()) {
        Ok(rows) => rows,
        Err(e) => return fail(format!("scan failed: {e:#}")),
    };
    let find = |m: f64| rows.iter().find(|r| r.mass == m).unwrap();
    let (sub, sup) = (find(100.0), find(600.0));
    let passed = rel <= 1e-12 && sup.cause == "blow_up" && sup.t_final < 50.0 && sub.cause != "blow_up";
    Outcome {
        passed,
        detail: format!(
            "threshold {threshold:.6} (rel err vs 8π/(αχ₀) {rel:.1e}), M=600: {} at t {:.3e}, M=100: {} at t {}",
            sup.cause, sup.t_final, sub.cause, sub.t_final
        ),
    }
}

fn criterion8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let side = 10.0;
    let n = 64;
    let grid = Grid::rect(side, side, n, n).unwrap();
    let h = grid.hx();
    let mut worst_interior: f64 = 0.0;
    let mut worst_bridge: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..1000 {
        let q: [f64; 2] = [rng.gen_range(3.5..6.5), rng.gen_range(3.5..6.5)];
        let dist = q[0].min(side - q[0]).min(q[1]).min(side - q[1]);
        let r1 = rng.gen_range(8.0 * h..0.6 * dist);
        let r2 = rng.gen_range(r1 + 4.0 * h..dist - h);
        let w = match MomentWeight::new(&grid, q, r1, r2) {
            Ok(w) => w,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let span = r2 - r1;
        let mut ok = (w.a1 + r1 / span).abs() <= 1e-12 * (1.0 + w.a1.abs())
            && (w.a2 - 2.0 * r1 * r2 / span).abs() <= 1e-12 * w.a2.abs()
            && (w.a3 + r1 * r1 * r2 / span).abs() <= 1e-12 * w.a3.abs();
        let (c1, c2) = w.continuity_residuals();
        ok &= c1.abs() <= 1e-10 * r1 * r2 && c2.abs() <= 1e-10 * r1 * r2;
        ok &= w.values.values().iter().all(|&p| (0.0..=r1 * r2 * (1.0 + 1e-12)).contains(&p));
        let lap = w.sampled_laplacian();
        for (k, &l) in lap.values().iter().enumerate() {
            if w.near_kink(k, 2.0 * h) {
                continue;
            }
            let r = w.radius_of(k);
            if r < r1 {
                worst_interior = worst_interior.max((l - 4.0).abs());
            } else if r < r2 {
                // five-point error of a2·r is a2·h²/(8r³) to leading order
                let bound = w.a2.abs() * h * h / (r * r * r) + 1e-9;
                let err = (l - w.laplacian_exact(r)).abs();
                worst_bridge = worst_bridge.max(err / bound);
                ok &= err <= bound;
            }
        }
        if !ok {
            failures += 1;
        }
    }
    let passed = failures == 0 && worst_interior <= 1e-9;
    Outcome {
        passed,
        detail: format!(
            "1000 instances, {failures} failing, max |Δφ−4| inside r1 {worst_interior:.2e} (≤ 1e-9), bridge error/bound {worst_bridge:.3} (≤ 1, bound |a2|h²/r³)"
        ),
    }
}

fn criterion9(r: &mut Report) -> Outcome {
    let g = Grid::rect(2.0, 2.0, 8, 8).unwrap();
    let p = ModelParams::fig2();
    let k0 = KineticState::new(0.5, 0.1, 1.0, 0.0);
    let dt = 1e-3;
    let reference = integrate(&k0, &p, dt / 10.0, 10.0, 10).unwrap();
    let s0 = SimState::new(
        Field::constant(&g, k0.u),
        Field::constant(&g, k0.c),
        Field::constant(&g, k0.n),
        Field::constant(&g, k0.w),
        0.0,
    )
    .unwrap();
    let worst = RefCell::new(0.0f64);
    let mut compare = |s: &SimState| {
        let k = reference[(s.t / dt).round() as usize];
        let mut w = worst.borrow_mut();
        for (f, v) in [(&s.u, k.u), (&s.c, k.c), (&s.n, k.n), (&s.w, k.w)] {
            let d = f.values().iter().map(|x| (x - v).abs()).fold(0.0, f64::max);
            *w = w.max(d);
        }
    };
    let run = run_simulation(
        &s0,
        &p,
        &StepControl::fixed(dt),
        &EllipticSolveSettings::default(),
        &Schedule::new(10.0, 0.1).with_snapshot_interval(dt),
        &StopRules::default(),
        RunHooks { moment: None, on_snapshot: Some(&mut compare) },
    )
    .unwrap();
    let worst = *worst.borrow();
    let passed = run.cause == TerminationCause::EndTime && worst <= 5.0 * dt && run.steps == 10_000;
    r.series.push(("kinetic reduction".into(), run.series));
    Outcome {
        passed,
        detail: format!("{} steps, sup |PDE − ODE| over [0, 10] {worst:.3e} (≤ 5·dt = {:.0e})", run.steps, 5.0 * dt),
    }
}

fn criterion10(tmp: &Path) -> Outcome {
    let text = "\
seed = 9
[grid]
dim = 2
lx = 8
nx = 48
[init.u]
kind = gaussians
masses = 1, 0.5
widths = 0.6, 0.4
centers = 3, 3, 5, 4.5
[init.n]
kind = constant
value = 1
noise = 0.1
[schedule]
t_end = 2
series_interval = 0.05
snapshot_interval = 1
";
    let mut csvs = Vec::new();
    let mut finals = Vec::new();
    for k in 0..2 {
        let dir = tmp.join(format!("c10_{k}"));
        let cfg = config(text, &dir);
        match cmd_run(&cfg, &mut io::sink()) {
            Ok(run) => finals.push(run.result.final_state),
            Err(e) => return fail(format!("run failed: {e:#}")),
        }
        csvs.push(std::fs::read(dir.join("series.csv")).unwrap());
    }
    let identical = csvs[0] == csvs[1];
    let snaps = list_snapshots(&tmp.join("c10_0")).unwrap();
    let mut exact = !snaps.is_empty();
    for (_, path) in &snaps {
        let bytes = std::fs::read(path).unwrap();
        let snap = Snapshot::load(path).unwrap();
        let again = Snapshot::from_state(&snap.to_state().unwrap());
        let mut out = Vec::new();
        again.write_to(&mut out).unwrap();
        exact &= out == bytes;
    }
    let last = Snapshot::load(&snaps.last().unwrap().1).unwrap().to_state().unwrap();
    let bits = |s: &SimState| s.fields().iter().flat_map(|(_, f)| f.values().iter().map(|v| v.to_bits())).collect::<Vec<_>>();
    exact &= bits(&last) == bits(&finals[0]) && last.t.to_bits() == finals[0].t.to_bits();
    Outcome {
        passed: identical && exact,
        detail: format!(
            "series CSV byte-identical: {identical} ({} bytes), {} snapshots round-trip bit-exact: {exact}",
            csvs[0].len(),
            snaps.len()
        ),
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let tmp = tempfile::tempdir().expect("temp dir");
    let t = tmp.path();
    let mut r = Report { failures: 0, series: Vec::new() };
    r.criterion(1, "conservation of u + n/γ + w (fig2, 1D, nx=200, t_end=50)", Some(10.0), |r| criterion1(r, t));
    r.criterion(3, "kinetics convergence, conservation and RK4 order", Some(1.0), |_| criterion3(t));
    r.criterion(4, "semigroup decay rates λ₁ and d_cλ₁+β", Some(5.0), |_| criterion4(t));
    r.criterion(5, "1D convergence to the nutrient-depleted steady state", Some(60.0), |r| criterion5(r, t));
    r.criterion(6, "2D small-data decay", Some(120.0), |r| criterion6(r, t));
    r.criterion(7, "blow-up threshold and supercritical detection", Some(180.0), |_| criterion7(t));
    r.criterion(8, "moment weight property suite", Some(5.0), |_| criterion8());
    r.criterion(9, "kinetic reduction of homogeneous data", Some(5.0), criterion9);
    r.criterion(10, "determinism and snapshot round-trip", None, |_| criterion10(t));
    r.criterion(2, "monotone M_n and M_w in every recorded series", None, criterion2);
    println!("{} of 10 criteria passed", 10 - r.failures);
    if r.failures > 0 {
        std::process::exit(1);
    }
}
