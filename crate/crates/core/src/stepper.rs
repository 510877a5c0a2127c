//! Time integration of the spatial system.
//!
//! Each step is first-order IMEX: diffusion of u, c and n is implicit
//! (backward Euler, ADI-factored in 2D); chemotaxis and every reaction term
//! are explicit in the old state. The growth and death transfers are
//! evaluated once per cell and applied to u, n (scaled by γ) and w, so the
//! discrete total ∫u + γ⁻¹∫n + ∫w moves only by rounding.
//!
//! In the parabolic–elliptic mode c is not advanced in time but recomputed
//! from u by solving (β − Δ_h) c = αu.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::diagnostics::{
    estimate_decay_rate, masses, moment, DecayWindow, DiagnosticsSeries, MassRecord, MomentWeight, NamedRate,
};
use crate::grid::{advective_rate, chemotactic_divergence_from_potential, map_field, Field, FluxScheme, GridError};
use crate::linalg::{implicit_diffusion, solve_screened_poisson, NeumannSpectral, Preconditioner, SolverError};
use crate::model::ModelParams;
use crate::par;

/// Undershoot below zero that is clipped (and counted) after each step.
pub const NEGATIVE_SLACK: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("field {field} has non-finite values")]
    NonFinite { field: &'static str },
    #[error("field {field} fell to {value:e} at cell {cell}")]
    Negative { field: &'static str, value: f64, cell: usize },
    #[error("elliptic solve for c failed: {0}")]
    Elliptic(#[from] SolverError),
    #[error("invalid step control: {0}")]
    Control(String),
    #[error("invalid initial state: {0}")]
    State(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub u: Field,
    pub c: Field,
    pub n: Field,
    pub w: Field,
    pub t: f64,
}

impl SimState {
    /// Assemble a state, checking that the fields share a grid and are
    /// finite and nonnegative.
    pub fn new(u: Field, c: Field, n: Field, w: Field, t: f64) -> Result<Self, StepError> {
        for f in [&c, &n, &w] {
            u.same_grid(f)?;
        }
        let s = SimState { u, c, n, w, t };
        for (name, f) in s.fields() {
            if !f.is_finite() {
                return Err(StepError::State(format!("field {name} is not finite")));
            }
            if f.min() < 0.0 {
                return Err(StepError::State(format!("field {name} has negative values")));
            }
        }
        Ok(s)
    }

    pub fn grid(&self) -> &crate::grid::Grid {
        self.u.grid()
    }

    /// (name, field) in the canonical u, c, n, w order.
    pub fn fields(&self) -> [(&'static str, &Field); 4] {
        [("u", &self.u), ("c", &self.c), ("n", &self.n), ("w", &self.w)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    ParabolicParabolic,
    ParabolicElliptic,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::ParabolicParabolic => "parabolic_parabolic",
            Mode::ParabolicElliptic => "parabolic_elliptic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub cfl_advective: f64,
    pub reaction_safety: f64,
    pub u_blowup_threshold: f64,
    pub mode: Mode,
    pub flux: FluxScheme,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            dt_init: 1e-3,
            dt_min: 1e-12,
            dt_max: 1e-2,
            cfl_advective: 0.5,
            reaction_safety: 0.5,
            u_blowup_threshold: 1e6,
            mode: Mode::ParabolicParabolic,
            flux: FluxScheme::Auto,
        }
    }
}

impl StepControl {
    /// Fixed step: dt_min = dt_init = dt_max = dt.
    pub fn fixed(dt: f64) -> Self {
        StepControl { dt_init: dt, dt_min: dt, dt_max: dt, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), StepError> {
        let positive = [
            ("dt_init", self.dt_init),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("u_blowup_threshold", self.u_blowup_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(StepError::Control(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(StepError::Control(format!(
                "need dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        for (name, v) in [("cfl_advective", self.cfl_advective), ("reaction_safety", self.reaction_safety)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(StepError::Control(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticSolveSettings {
    pub residual_tol: f64,
    pub max_iterations: usize,
    /// Use the cosine-transform preconditioner instead of Jacobi.
    pub spectral_preconditioner: bool,
}

impl Default for EllipticSolveSettings {
    fn default() -> Self {
        EllipticSolveSettings { residual_tol: 1e-10, max_iterations: 5000, spectral_preconditioner: true }
    }
}

/// Which bound set the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtLimiter {
    Max,
    Advection,
    Reaction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableDt {
    pub dt: f64,
    pub limiter: DtLimiter,
    /// The unclamped bound fell below dt_min.
    pub underflow: bool,
}

/// dt = min(dt_max, cfl / advective rate, reaction_safety / reaction rate),
/// clamped below at dt_min. The reaction rate is the largest of G₀‖n‖∞,
/// sup b, β (parabolic c only) and γ·max g(u)u over cells with nutrient.
pub fn compute_stable_dt(s: &SimState, p: &ModelParams, ctl: &StepControl) -> StableDt {
    let mut dt = ctl.dt_max;
    let mut limiter = DtLimiter::Max;
    let chi_c = map_field(&s.c, |c| p.chi(c));
    let adv = advective_rate(&chi_c);
    if adv > 0.0 && ctl.cfl_advective / adv < dt {
        dt = ctl.cfl_advective / adv;
        limiter = DtLimiter::Advection;
    }
    let g0 = p.nonlinearities.growth.sup().max(0.0);
    let mut react = (g0 * s.n.sup_norm()).max(p.nonlinearities.death.sup());
    if ctl.mode == Mode::ParabolicParabolic {
        react = react.max(p.beta);
    }
    let (u, n) = (s.u.values(), s.n.values());
    let depletion = par::reduce_indexed(
        u.len(),
        0.0,
        |k| if n[k] > 0.0 { p.gamma * p.growth(u[k]) * u[k] } else { 0.0 },
        f64::max,
    );
    react = react.max(depletion);
    if react > 0.0 && ctl.reaction_safety / react < dt {
        dt = ctl.reaction_safety / react;
        limiter = DtLimiter::Reaction;
    }
    if dt < ctl.dt_min {
        StableDt { dt: ctl.dt_min, limiter, underflow: true }
    } else {
        StableDt { dt, limiter, underflow: false }
    }
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// Cells whose small negative undershoot was clipped to zero.
    pub clipped: usize,
    pub cg_iterations: usize,
}

fn sanitize(name: &'static str, f: &mut Field) -> Result<usize, StepError> {
    if !f.is_finite() {
        return Err(StepError::NonFinite { field: name });
    }
    let mut clipped = 0;
    for (cell, v) in f.values_mut().iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -NEGATIVE_SLACK {
                return Err(StepError::Negative { field: name, value: *v, cell });
            }
            *v = 0.0;
            clipped += 1;
        }
    }
    Ok(clipped)
}

/// Shared transport–reaction update of u, n and w given the attractant
/// `c` to drift along. Returns (u, n, w) after the implicit diffusion solves.
fn advance_cells(
    s: &SimState,
    c: &Field,
    p: &ModelParams,
    dt: f64,
    flux: FluxScheme,
) -> Result<(Field, Field, Field), StepError> {
    let chi_c = map_field(c, |c| p.chi(c));
    let drift = chemotactic_divergence_from_potential(&s.u, &chi_c, flux)?;
    let (u0, n0, w0) = (s.u.values(), s.n.values(), s.w.values());
    let dv = drift.values();
    let grid = s.grid();
    let mut u = Field::zeros(grid);
    let mut n = Field::zeros(grid);
    let mut w = Field::zeros(grid);
    let growth = |k: usize| dt * p.growth(u0[k]) * n0[k] * u0[k];
    let death = |k: usize| dt * p.death(n0[k]) * u0[k];
    par::fill_indexed(u.values_mut(), |k| u0[k] - dt * dv[k] + growth(k) - death(k));
    par::fill_indexed(n.values_mut(), |k| n0[k] - p.gamma * growth(k));
    par::fill_indexed(w.values_mut(), |k| w0[k] + death(k));
    implicit_diffusion(&mut u, dt);
    implicit_diffusion(&mut n, dt * p.d_n);
    Ok((u, n, w))
}

/// One IMEX step of the fully parabolic system.
pub fn step_parabolic_parabolic(
    s: &SimState,
    p: &ModelParams,
    dt: f64,
    flux: FluxScheme,
) -> Result<(SimState, StepReport), StepError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(StepError::Control(format!("dt must be positive, got {dt}")));
    }
    let (mut u, mut n, mut w) = advance_cells(s, &s.c, p, dt, flux)?;
    let (u0, c0) = (s.u.values(), s.c.values());
    let mut c = Field::zeros(s.grid());
    par::fill_indexed(c.values_mut(), |k| c0[k] + dt * (p.alpha * u0[k] - p.beta * c0[k]));
    implicit_diffusion(&mut c, dt * p.d_c);
    let mut report = StepReport::default();
    for (name, f) in [("u", &mut u), ("c", &mut c), ("n", &mut n), ("w", &mut w)] {
        report.clipped += sanitize(name, f)?;
    }
    Ok((SimState { u, c, n, w, t: s.t + dt }, report))
}

/// Reusable solver for (β − Δ_h) c = αu on one grid.
pub struct EllipticSolver {
    spectral: Option<NeumannSpectral>,
    settings: EllipticSolveSettings,
}

impl EllipticSolver {
    pub fn new(grid: &crate::grid::Grid, settings: EllipticSolveSettings) -> Self {
        let spectral = settings.spectral_preconditioner.then(|| NeumannSpectral::new(grid));
        EllipticSolver { spectral, settings }
    }

    pub fn settings(&self) -> &EllipticSolveSettings {
        &self.settings
    }

    /// Solve starting from `guess`; returns (c, CG iterations).
    pub fn solve(&self, u: &Field, p: &ModelParams, guess: Option<&Field>) -> Result<(Field, usize), StepError> {
        if !u.is_finite() {
            return Err(StepError::NonFinite { field: "u" });
        }
        let mut rhs = u.clone();
        rhs.values_mut().iter_mut().for_each(|v| *v *= p.alpha);
        let mut c = match guess {
            Some(g) => {
                u.same_grid(g)?;
                g.clone()
            }
            None => Field::zeros(u.grid()),
        };
        let precond = match &self.spectral {
            Some(s) => Preconditioner::Spectral(s),
            None => Preconditioner::Jacobi,
        };
        let out = solve_screened_poisson(
            &mut c,
            &rhs,
            p.beta,
            self.settings.residual_tol,
            self.settings.max_iterations,
            precond,
        )?;
        Ok((c, out.iterations))
    }
}

/// c solving the discrete Neumann problem (β − Δ_h) c = αu.
pub fn solve_elliptic_c(u: &Field, p: &ModelParams, settings: &EllipticSolveSettings) -> Result<Field, StepError> {
    EllipticSolver::new(u.grid(), *settings).solve(u, p, None).map(|(c, _)| c)
}

/// One step of the parabolic–elliptic system: c is refreshed from the
/// current u, u/n/w advance as in the parabolic step, and c is re-solved
/// for the new u so the returned state is consistent.
pub fn step_parabolic_elliptic(
    s: &SimState,
    p: &ModelParams,
    dt: f64,
    flux: FluxScheme,
    solver: &EllipticSolver,
) -> Result<(SimState, StepReport), StepError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(StepError::Control(format!("dt must be positive, got {dt}")));
    }
    let mut report = StepReport::default();
    let (c_old, it) = solver.solve(&s.u, p, Some(&s.c))?;
    report.cg_iterations += it;
    let (mut u, mut n, mut w) = advance_cells(s, &c_old, p, dt, flux)?;
    for (name, f) in [("u", &mut u), ("n", &mut n), ("w", &mut w)] {
        report.clipped += sanitize(name, f)?;
    }
    let (mut c, it) = solver.solve(&u, p, Some(&c_old))?;
    report.cg_iterations += it;
    report.clipped += sanitize("c", &mut c)?;
    Ok((SimState { u, c, n, w, t: s.t + dt }, report))
}

/// When to record diagnostics and hand out snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub t_end: f64,
    /// Diagnostic record spacing; 0 records every accepted step.
    pub series_interval: f64,
    /// Snapshot times (sorted); states are reported exactly at these times.
    pub snapshot_times: Vec<f64>,
}

impl Schedule {
    pub fn new(t_end: f64, series_interval: f64) -> Self {
        Schedule { t_end, series_interval, snapshot_times: Vec::new() }
    }

    /// Snapshot every `interval` up to and including t_end.
    pub fn with_snapshot_interval(mut self, interval: f64) -> Self {
        if interval > 0.0 {
            let count = (self.t_end / interval + 1e-9).floor() as usize;
            self.snapshot_times = (0..=count).map(|k| k as f64 * interval).collect();
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRules {
    pub detect_steady: bool,
    pub steady_eps: f64,
    /// Trailing accepted steps over which ∫n must be stationary.
    pub steady_window: usize,
}

impl Default for StopRules {
    fn default() -> Self {
        StopRules { detect_steady: true, steady_eps: 1e-8, steady_window: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlowUpSignal {
    Threshold,
    DtUnderflow,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerminationCause {
    EndTime,
    SteadyState,
    BlowUp { signal: BlowUpSignal, t_detect: f64 },
    Failure(String),
}

impl TerminationCause {
    /// Short machine-readable label.
    pub fn label(&self) -> &'static str {
        match self {
            TerminationCause::EndTime => "t_end",
            TerminationCause::SteadyState => "steady_state",
            TerminationCause::BlowUp { .. } => "blow_up",
            TerminationCause::Failure(_) => "error",
        }
    }

    pub fn is_blow_up(&self) -> bool {
        matches!(self, TerminationCause::BlowUp { .. })
    }
}

impl fmt::Display for TerminationCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminationCause::BlowUp { signal, t_detect } => {
                write!(f, "blow_up ({signal:?} at t = {t_detect})")
            }
            TerminationCause::Failure(msg) => write!(f, "error ({msg})"),
            other => f.write_str(other.label()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_state: SimState,
    pub series: DiagnosticsSeries,
    pub cause: TerminationCause,
    pub steps: usize,
    pub clipped: usize,
    pub cg_iterations: usize,
    pub min_dt: f64,
}

impl RunResult {
    pub fn last_record(&self) -> Option<&MassRecord> {
        self.series.records.last()
    }
}

/// Optional run inputs beyond the state and parameters.
#[derive(Default)]
pub struct RunHooks<'a> {
    /// Weight for recording I(t) alongside the masses.
    pub moment: Option<&'a MomentWeight>,
    pub on_snapshot: Option<&'a mut dyn FnMut(&SimState)>,
}

fn time_eps(t: f64) -> f64 {
    1e-12 * t.abs().max(1.0)
}

/// Advance `s0` with adaptive steps, recording diagnostics on the schedule,
/// until t_end, steady state or a blow-up signal. Numerical failures end the
/// run with a [`TerminationCause`]; only inconsistent inputs are errors.
pub fn run_simulation(
    s0: &SimState,
    p: &ModelParams,
    ctl: &StepControl,
    elliptic: &EllipticSolveSettings,
    schedule: &Schedule,
    stop: &StopRules,
    mut hooks: RunHooks<'_>,
) -> Result<RunResult, StepError> {
    ctl.validate()?;
    p.check().map_err(|e| StepError::Control(e.to_string()))?;
    let mut s = SimState::new(s0.u.clone(), s0.c.clone(), s0.n.clone(), s0.w.clone(), s0.t)?;
    if let Some(w) = hooks.moment {
        s.u.same_grid(&w.values)?;
    }
    let solver = (ctl.mode == Mode::ParabolicElliptic).then(|| EllipticSolver::new(s.grid(), *elliptic));
    let mut cg_iterations = 0;
    if let Some(solver) = &solver {
        let (c, it) = solver.solve(&s.u, p, None)?;
        s.c = c;
        cg_iterations += it;
    }

    let mut series = DiagnosticsSeries::default();
    let record = |s: &SimState, series: &mut DiagnosticsSeries| {
        let i = hooks.moment.map(|w| moment(&s.u, w).unwrap_or(f64::NAN));
        series.push(masses(s, p), i);
    };
    record(&s, &mut series);

    let start = s.t - time_eps(s.t);
    let mut snapshots: VecDeque<f64> = schedule.snapshot_times.iter().copied().filter(|&t| t >= start).collect();
    if let Some(&t0) = snapshots.front() {
        if (t0 - s.t).abs() <= time_eps(s.t) {
            if let Some(cb) = hooks.on_snapshot.as_mut() {
                cb(&s);
            }
            snapshots.pop_front();
        }
    }
    let interval = schedule.series_interval;
    let t_start = s.t;
    let mut series_count = 1u64;
    let mut next_series = if interval > 0.0 { t_start + interval } else { f64::INFINITY };

    let initially_steady = s.u.sup_norm() < stop.steady_eps;
    let mut n_window: VecDeque<f64> = VecDeque::with_capacity(stop.steady_window + 1);
    let mut steps = 0usize;
    let mut clipped = 0usize;
    let mut min_dt = f64::INFINITY;
    let mut first = true;

    let cause = loop {
        if s.t >= schedule.t_end - time_eps(schedule.t_end) {
            break TerminationCause::EndTime;
        }
        let stable = compute_stable_dt(&s, p, ctl);
        if stable.underflow {
            break TerminationCause::BlowUp { signal: BlowUpSignal::DtUnderflow, t_detect: s.t };
        }
        let mut dt = if first { stable.dt.min(ctl.dt_init) } else { stable.dt };
        first = false;
        let mut target = schedule.t_end.min(next_series);
        if let Some(&ts) = snapshots.front() {
            if ts <= target + time_eps(ts) {
                target = ts;
            }
        }
        if s.t + dt >= target - time_eps(target) {
            dt = target - s.t;
        }
        let stepped = match (ctl.mode, &solver) {
            (Mode::ParabolicElliptic, Some(solver)) => step_parabolic_elliptic(&s, p, dt, ctl.flux, solver),
            _ => step_parabolic_parabolic(&s, p, dt, ctl.flux),
        };
        let (mut next, report) = match stepped {
            Ok(ok) => ok,
            Err(StepError::NonFinite { .. }) => {
                break TerminationCause::BlowUp { signal: BlowUpSignal::NonFinite, t_detect: s.t + dt };
            }
            Err(e) => break TerminationCause::Failure(e.to_string()),
        };
        if (next.t - target).abs() <= time_eps(target) {
            next.t = target;
        }
        s = next;
        steps += 1;
        clipped += report.clipped;
        cg_iterations += report.cg_iterations;
        min_dt = min_dt.min(stable.dt);

        let sup_u = s.u.sup_norm();
        if sup_u > ctl.u_blowup_threshold {
            record(&s, &mut series);
            break TerminationCause::BlowUp { signal: BlowUpSignal::Threshold, t_detect: s.t };
        }
        if s.t >= next_series - time_eps(next_series) || interval == 0.0 {
            record(&s, &mut series);
            while next_series <= s.t + time_eps(s.t) {
                series_count += 1;
                next_series = t_start + series_count as f64 * interval;
            }
        }
        if let Some(&ts) = snapshots.front() {
            if (ts - s.t).abs() <= time_eps(ts) {
                if let Some(cb) = hooks.on_snapshot.as_mut() {
                    cb(&s);
                }
                snapshots.pop_front();
            }
        }
        if stop.detect_steady && !initially_steady {
            n_window.push_back(s.n.integral());
            if n_window.len() > stop.steady_window + 1 {
                n_window.pop_front();
            }
            if sup_u < stop.steady_eps && n_window.len() > stop.steady_window {
                let (old, new) = (n_window[0], n_window[n_window.len() - 1]);
                let change = if old == 0.0 { new.abs() } else { ((new - old) / old).abs() };
                if change < stop.steady_eps {
                    break TerminationCause::SteadyState;
                }
            }
        }
    };
    record(&s, &mut series);
    if let Some(fit) = estimate_decay_rate(&series.times(), &series.column(|r| r.m_u), &DecayWindow::default()) {
        series.rates.push(NamedRate { quantity: "u_l1".into(), fit });
    }
    series.termination = Some(cause.clone());
    Ok(RunResult { final_state: s, series, cause, steps, clipped, cg_iterations, min_dt })
}
