//! Subcommand implementations. Each writes its human-readable report to
//! `out` and its artifacts under the configured output directory.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use colony_core::diagnostics::{blow_up_threshold, estimate_decay_rate, moment, DecayWindow, MomentWeight};
use colony_core::kinetics::{integrate_to_steady, KineticState};
use colony_core::model::{validate_assumptions, Death, Growth, NonlinearitySpec, Sensitivity, ValidationReport};
use colony_core::stepper::{
    run_simulation, step_parabolic_parabolic, Mode, RunHooks, RunResult, Schedule, SimState, TerminationCause,
};
use colony_core::{par, Field, FluxScheme, Grid, ModelParams};

use crate::config::{Bump, RunConfig};
use crate::init::{gaussian, initial_state};
use crate::io::{fmt_real, list_snapshots, save_series, snapshot_name, Snapshot};

/// Process exit status for a finished command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    BlowUp,
    /// The command ran but its verification failed.
    Failed,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::BlowUp => 2,
            Status::Failed => 1,
        }
    }

    pub fn of_cause(cause: &TerminationCause) -> Self {
        match cause {
            TerminationCause::EndTime | TerminationCause::SteadyState => Status::Success,
            TerminationCause::BlowUp { .. } => Status::BlowUp,
            TerminationCause::Failure(_) => Status::Failed,
        }
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Default moment radii: a quarter and a half of the distance from `q` to
/// the nearest wall.
fn default_radii(grid: &Grid, q: [f64; 2]) -> (f64, f64) {
    let ext = grid.extents();
    let dist = q[0].min(ext[0] - q[0]).min(q[1]).min(ext[1] - q[1]);
    (dist / 4.0, dist / 2.0)
}

struct SnapshotWriter<'a> {
    dir: &'a Path,
    times: Vec<f64>,
    error: Option<anyhow::Error>,
}

impl SnapshotWriter<'_> {
    /// Write the next numbered snapshot; the first failure is kept and
    /// later calls become no-ops.
    fn save(&mut self, s: &SimState) {
        if self.error.is_some() {
            return;
        }
        let path = self.dir.join(snapshot_name(self.times.len()));
        match Snapshot::from_state(s).save(&path) {
            Ok(()) => self.times.push(s.t),
            Err(e) => self.error = Some(e.into()),
        }
    }
}

pub struct RunOutcome {
    pub result: RunResult,
    pub status: Status,
    pub dir: PathBuf,
}

pub fn cmd_run(cfg: &RunConfig, out: &mut dyn Write) -> Result<RunOutcome> {
    let grid = cfg.require_grid()?.build();
    let s0 = initial_state(cfg, &grid)?;
    let dir = cfg.output_dir.clone();
    prepare_dir(&dir)?;
    let echo = cfg.render();
    write_text(&dir.join("config.resolved"), &echo)?;
    writeln!(out, "# resolved configuration{echo}")?;

    let weight = match &cfg.moment {
        Some(m) => Some(MomentWeight::new(&grid, m.q, m.r1, m.r2).context("moment weight")?),
        None => None,
    };
    let schedule =
        Schedule::new(cfg.schedule.t_end, cfg.schedule.series_interval).with_snapshot_interval(cfg.schedule.snapshot_interval);
    let mut snaps = SnapshotWriter { dir: &dir, times: Vec::new(), error: None };
    snaps.save(&s0);
    let result = run_simulation(
        &s0,
        &cfg.params,
        &cfg.control,
        &cfg.elliptic,
        &schedule,
        &cfg.stop,
        RunHooks {
            moment: weight.as_ref(),
            on_snapshot: Some(&mut |s: &SimState| {
                if s.t > 0.0 {
                    snaps.save(s)
                }
            }),
        },
    )?;
    if snaps.times.last() != Some(&result.final_state.t) {
        snaps.save(&result.final_state);
    }
    if let Some(e) = snaps.error {
        return Err(e);
    }
    save_series(&dir.join("series.csv"), &result.series.records, &result.series.moments)?;
    let summary = summarize(cfg, &grid, &s0, &result);
    write_text(&dir.join("summary.txt"), &summary)?;
    writeln!(out, "\n# summary\n{summary}")?;
    Ok(RunOutcome { status: Status::of_cause(&result.cause), result, dir })
}

fn summarize(cfg: &RunConfig, grid: &Grid, s0: &SimState, r: &RunResult) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("cause", r.cause.label().to_string());
    if let TerminationCause::BlowUp { signal, t_detect } = &r.cause {
        kv("blow_up_signal", format!("{signal:?}"));
        kv("t_detect", fmt_real(*t_detect));
    }
    if let TerminationCause::Failure(msg) = &r.cause {
        kv("error", msg.clone());
    }
    let f = &r.final_state;
    kv("t_final", fmt_real(f.t));
    kv("steps", r.steps.to_string());
    kv("min_dt", fmt_real(r.min_dt));
    kv("clipped_cells", r.clipped.to_string());
    kv("cg_iterations", r.cg_iterations.to_string());
    let first = r.series.records.first();
    let last = r.series.records.last();
    if let (Some(a), Some(b)) = (first, last) {
        kv("M_u", fmt_real(b.m_u));
        kv("M_c", fmt_real(b.m_c));
        kv("M_n", fmt_real(b.m_n));
        kv("M_w", fmt_real(b.m_w));
        kv("total_initial", fmt_real(a.total));
        kv("total_final", fmt_real(b.total));
        let drift = if a.total != 0.0 { (b.total - a.total).abs() / a.total.abs() } else { b.total.abs() };
        kv("conservation_drift", fmt_real(drift));
    }
    for rate in &r.series.rates {
        kv(&format!("rate_{}", rate.quantity), fmt_real(rate.fit.rate));
    }
    if r.series.rates.is_empty() {
        kv("rate_u_l1", "none".into());
    }
    kv("n_inf_estimate", fmt_real(f.n.integral() / grid.measure()));
    kv("sup_u_final", fmt_real(f.u.sup_norm()));
    kv("sup_c_final", fmt_real(f.c.sup_norm()));
    kv("w_final_sup", fmt_real(f.w.sup_norm()));
    let spread = f.n.max() - f.n.min();
    kv("n_spread_final", fmt_real(spread));
    kv("initial_mass_u", fmt_real(s0.u.integral()));
    if let (Sensitivity::Linear { chi0 }, Mode::ParabolicElliptic, 2) =
        (cfg.params.nonlinearities.sensitivity, cfg.control.mode, grid.dim())
    {
        if let Ok(th) = blow_up_threshold(cfg.params.alpha, chi0) {
            kv("blow_up_mass_threshold", fmt_real(th));
        }
    }
    s
}

pub struct KineticsOutcome {
    pub converged: bool,
    pub rate: Option<f64>,
    pub residual: f64,
    pub final_state: KineticState,
}

pub fn cmd_kinetics(cfg: &RunConfig, out: &mut dyn Write) -> Result<KineticsOutcome> {
    let k = &cfg.kinetics;
    let s0 = KineticState::new(k.s0[0], k.s0[1], k.s0[2], k.s0[3]);
    let res = integrate_to_steady(&s0, &cfg.params, k.dt, k.tol, k.t_max, k.record_every)?;
    prepare_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("kinetics.csv");
    let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["t", "u", "c", "n", "w", "total"])?;
    for s in &res.trajectory {
        w.write_record([s.t, s.u, s.c, s.n, s.w, s.conserved_total(cfg.params.gamma)].map(fmt_real))?;
    }
    w.flush()?;
    let f = res.state;
    let mut s = String::new();
    let _ = writeln!(s, "converged = {}", res.converged);
    let _ = writeln!(s, "t_final = {}", fmt_real(f.t));
    let _ = writeln!(s, "steps = {}", res.steps);
    let _ = writeln!(s, "final = {}, {}, {}, {}", fmt_real(f.u), fmt_real(f.c), fmt_real(f.n), fmt_real(f.w));
    let _ = writeln!(s, "mu_hat = {}", res.rate.map_or("none".to_string(), |r| fmt_real(r.rate)));
    let _ = writeln!(s, "conservation_residual = {}", fmt_real(res.conservation_residual));
    write_text(&cfg.output_dir.join("kinetics_summary.txt"), &s)?;
    write!(out, "{s}")?;
    Ok(KineticsOutcome {
        converged: res.converged,
        rate: res.rate.map(|r| r.rate),
        residual: res.conservation_residual,
        final_state: f,
    })
}

pub fn cmd_validate_model(
    cfg: &RunConfig,
    s_max: f64,
    samples: usize,
    out: &mut dyn Write,
) -> Result<(ValidationReport, Status)> {
    let report = validate_assumptions(&cfg.params.nonlinearities, s_max, samples)?;
    writeln!(out, "{report}")?;
    let status = if report.has_failures() { Status::Failed } else { Status::Success };
    Ok((report, status))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub mass: f64,
    pub width: f64,
    pub cause: String,
    /// Detection time for blow-up rows, final time otherwise.
    pub t_final: f64,
    pub i0: f64,
    pub threshold: f64,
}

pub fn cmd_blowup_scan(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<ScanRow>> {
    let scan = cfg.scan.as_ref().context("blowup-scan needs a [scan] section")?;
    let spec = cfg.require_grid()?;
    if spec.dim != 2 {
        bail!("blowup-scan requires grid.dim = 2");
    }
    if cfg.control.mode != Mode::ParabolicElliptic {
        bail!("blowup-scan requires control.mode = parabolic_elliptic");
    }
    let Sensitivity::Linear { chi0 } = cfg.params.nonlinearities.sensitivity else {
        bail!("blowup-scan requires sensitivity.kind = linear");
    };
    if scan.masses.is_empty() || scan.widths.is_empty() {
        bail!("blowup-scan sweep is empty: scan.masses and scan.widths need at least one entry each");
    }
    let threshold = blow_up_threshold(cfg.params.alpha, chi0)?;
    let grid = spec.build();
    let q = grid.domain_center();
    let (d1, d2) = default_radii(&grid, q);
    let weight = MomentWeight::new(&grid, q, scan.r1.unwrap_or(d1), scan.r2.unwrap_or(d2)).context("moment weight")?;
    let base = initial_state(cfg, &grid)?;
    let cells: Vec<(f64, f64)> = scan.masses.iter().flat_map(|&m| scan.widths.iter().map(move |&w| (m, w))).collect();
    let schedule = Schedule::new(scan.t_end, cfg.schedule.series_interval);
    let results = par::map_ordered(&cells, |&(mass, width)| -> Result<ScanRow> {
        let u = gaussian(&grid, &Bump { center: q, width, mass });
        let i0 = moment(&u, &weight)?;
        let s0 = SimState::new(u, base.c.clone(), base.n.clone(), base.w.clone(), 0.0)?;
        let r = run_simulation(&s0, &cfg.params, &cfg.control, &cfg.elliptic, &schedule, &cfg.stop, RunHooks::default())?;
        let t_final = match r.cause {
            TerminationCause::BlowUp { t_detect, .. } => t_detect,
            _ => r.final_state.t,
        };
        Ok(ScanRow { mass, width, cause: r.cause.label().to_string(), t_final, i0, threshold })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    prepare_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("blowup_scan.csv");
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["mass", "width", "cause", "t_final", "I0", "threshold"])?;
        for r in &rows {
            w.write_record([
                fmt_real(r.mass),
                fmt_real(r.width),
                r.cause.clone(),
                fmt_real(r.t_final),
                fmt_real(r.i0),
                fmt_real(r.threshold),
            ])?;
        }
        w.flush()?;
    }
    fs::write(&path, &buf).with_context(|| format!("cannot write {}", path.display()))?;
    out.write_all(&buf)?;
    Ok(rows)
}

/// Write `u` and `u + w` at snapshot time `time` from `dir` into `target`.
/// Returns the two file paths.
pub fn cmd_emit_plot(dir: &Path, time: f64, target: &Path, out: &mut dyn Write) -> Result<[PathBuf; 2]> {
    let snaps = list_snapshots(dir)?;
    let tol = 1e-9 * time.abs().max(1.0);
    let Some((_, path)) = snaps.iter().find(|(t, _)| (t - time).abs() <= tol) else {
        let times: Vec<String> = snaps.iter().map(|(t, _)| format!("{t}")).collect();
        bail!(
            "no snapshot at t = {time} in {}; available times: [{}]",
            dir.display(),
            times.join(", ")
        );
    };
    let snap = Snapshot::load(path)?;
    let grid = snap.grid().context("snapshot has an invalid grid")?;
    let u = snap.field("u").context("snapshot has no u field")?;
    let w = snap.field("w").context("snapshot has no w field")?;
    let sum: Vec<f64> = u.iter().zip(w).map(|(a, b)| a + b).collect();
    prepare_dir(target)?;
    let stem = format!("t{}", snap.time);
    let paths = [target.join(format!("u_{stem}.dat")), target.join(format!("u_plus_w_{stem}.dat"))];
    for (p, values) in paths.iter().zip([u, &sum[..]]) {
        write_text(p, &grid_text(&grid, values))?;
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(paths)
}

/// `x value` lines in 1D; `x y value` lines with a blank line after each
/// row in 2D.
pub fn grid_text(grid: &Grid, values: &[f64]) -> String {
    let mut s = String::new();
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let k = grid.index(i, j);
            let [x, y] = grid.center(k);
            let _ = if grid.dim() == 1 {
                writeln!(s, "{} {}", fmt_real(x), fmt_real(values[k]))
            } else {
                writeln!(s, "{} {} {}", fmt_real(x), fmt_real(y), fmt_real(values[k]))
            };
        }
        if grid.dim() == 2 {
            s.push('\n');
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenResult {
    pub quantity: &'static str,
    pub fitted: f64,
    pub expected: f64,
    pub rel_error: f64,
    pub passed: bool,
}

fn deviation_norm(f: &Field) -> f64 {
    let mean = f.mean();
    f.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt()
}

/// Pure diffusion of the first cosine mode, offset by 1 to stay
/// nonnegative: u decays at λ₁ and c at d_c·λ₁ + β.
pub fn cmd_eigencheck(cfg: &RunConfig, out: &mut dyn Write) -> Result<(Vec<EigenResult>, Status)> {
    let e = &cfg.eigencheck;
    let grid = Grid::line(e.length, e.nx)?;
    let params = ModelParams {
        nonlinearities: NonlinearitySpec {
            growth: Growth::Zero,
            death: Death::Constant(0.0),
            sensitivity: Sensitivity::Linear { chi0: 0.0 },
        },
        ..cfg.params.clone()
    };
    let lambda = grid.first_neumann_eigenvalue();
    let mode = Field::from_fn(&grid, |x, _| 1.0 + (std::f64::consts::PI * x / e.length).cos());
    let zeros = Field::zeros(&grid);
    let runs = [
        ("u", mode.clone(), zeros.clone(), e.dt_u, e.t_u, lambda),
        ("c", zeros.clone(), mode, e.dt_c, e.t_c, params.d_c * lambda + params.beta),
    ];
    let mut results = Vec::new();
    for (quantity, u0, c0, dt, t_end, expected) in runs {
        let mut s = SimState::new(u0, c0, zeros.clone(), zeros.clone(), 0.0)?;
        let steps = (t_end / dt).round() as usize;
        let (mut ts, mut vs) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
        for _ in 0..steps {
            s = step_parabolic_parabolic(&s, &params, dt, FluxScheme::Auto)?.0;
            ts.push(s.t);
            vs.push(deviation_norm(if quantity == "u" { &s.u } else { &s.c }));
        }
        let fit = estimate_decay_rate(&ts, &vs, &DecayWindow::default())
            .with_context(|| format!("no usable decay window for {quantity}"))?;
        let rel_error = (fit.rate - expected).abs() / expected;
        let passed = rel_error <= e.tolerance;
        writeln!(
            out,
            "{quantity}: fitted rate {} expected {} relative error {:.3e} {}",
            fmt_real(fit.rate),
            fmt_real(expected),
            rel_error,
            if passed { "PASS" } else { "FAIL" }
        )?;
        results.push(EigenResult { quantity, fitted: fit.rate, expected, rel_error, passed });
    }
    let status = if results.iter().all(|r| r.passed) { Status::Success } else { Status::Failed };
    Ok((results, status))
}
