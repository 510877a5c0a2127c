//! Spatially homogeneous dynamics: the four coupled ODEs obtained when all
//! fields are constant in space, integrated with classical fixed-step RK4.

use thiserror::Error;

use crate::diagnostics::{estimate_decay_rate, DecayWindow, FittedRate};
use crate::model::ModelParams;

/// Undershoot below zero that is silently clipped.
pub const NEGATIVE_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KineticsError {
    #[error("time step must be positive and finite, got {0}")]
    Step(f64),
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("component {component} fell to {value:e} at t = {t}")]
    Negative { component: &'static str, value: f64, t: f64 },
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticState {
    pub u: f64,
    pub c: f64,
    pub n: f64,
    pub w: f64,
    pub t: f64,
}

impl KineticState {
    pub fn new(u: f64, c: f64, n: f64, w: f64) -> Self {
        KineticState { u, c, n, w, t: 0.0 }
    }

    /// ū + n̄/γ + w̄, invariant along exact trajectories.
    pub fn conserved_total(&self, gamma: f64) -> f64 {
        self.u + self.n / gamma + self.w
    }

    fn as_array(&self) -> [f64; 4] {
        [self.u, self.c, self.n, self.w]
    }
}

/// (g(ū)n̄ū − b(n̄)ū, αū − βc̄, −γg(ū)n̄ū, b(n̄)ū)
pub fn kinetics_rhs(s: &KineticState, p: &ModelParams) -> [f64; 4] {
    rhs(&s.as_array(), p)
}

fn rhs(y: &[f64; 4], p: &ModelParams) -> [f64; 4] {
    let [u, c, n, _] = *y;
    let grow = p.growth(u) * n * u;
    let die = p.death(n) * u;
    [grow - die, p.alpha * u - p.beta * c, -p.gamma * grow, die]
}

fn axpy(y: &[f64; 4], h: f64, k: &[f64; 4]) -> [f64; 4] {
    [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2], y[3] + h * k[3]]
}

/// One classical fourth-order Runge–Kutta step.
pub fn step_kinetics(s: &KineticState, p: &ModelParams, dt: f64) -> Result<KineticState, KineticsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(KineticsError::Step(dt));
    }
    let y = s.as_array();
    let k1 = rhs(&y, p);
    let k2 = rhs(&axpy(&y, 0.5 * dt, &k1), p);
    let k3 = rhs(&axpy(&y, 0.5 * dt, &k2), p);
    let k4 = rhs(&axpy(&y, dt, &k3), p);
    let mut next = [0.0; 4];
    for i in 0..4 {
        next[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let t = s.t + dt;
    const NAMES: [&str; 4] = ["u", "c", "n", "w"];
    for (i, v) in next.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(KineticsError::NonFinite { t });
        }
        if *v < 0.0 {
            if *v < -NEGATIVE_SLACK {
                return Err(KineticsError::Negative { component: NAMES[i], value: *v, t });
            }
            *v = 0.0;
        }
    }
    Ok(KineticState { u: next[0], c: next[1], n: next[2], w: next[3], t })
}

/// Integrate with fixed `dt` until `t_end`, keeping every `every`-th state
/// (and always the first and last).
pub fn integrate(
    s0: &KineticState,
    p: &ModelParams,
    dt: f64,
    t_end: f64,
    every: usize,
) -> Result<Vec<KineticState>, KineticsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(KineticsError::Step(dt));
    }
    let steps = ((t_end - s0.t) / dt).round().max(0.0) as usize;
    let mut out = vec![*s0];
    let mut s = *s0;
    for k in 1..=steps {
        s = step_kinetics(&s, p, dt)?;
        s.t = s0.t + k as f64 * dt;
        if k % every.max(1) == 0 || k == steps {
            out.push(s);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyOutcome {
    pub state: KineticState,
    pub converged: bool,
    /// Rate fitted to ū over its final decade, when one exists.
    pub rate: Option<FittedRate>,
    /// |total(t_final) − total(0)| / total(0); zero for a zero total.
    pub conservation_residual: f64,
    pub steps: usize,
    pub trajectory: Vec<KineticState>,
}

/// Step until max(ū, c̄) < tol or `t_max`; running out of time is reported
/// through `converged = false`, not as an error. The trajectory is sampled
/// every `record_every` steps.
pub fn integrate_to_steady(
    s0: &KineticState,
    p: &ModelParams,
    dt: f64,
    tol: f64,
    t_max: f64,
    record_every: usize,
) -> Result<SteadyOutcome, KineticsError> {
    if !(tol > 0.0) {
        return Err(KineticsError::Tolerance(tol));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(KineticsError::Step(dt));
    }
    let total0 = s0.conserved_total(p.gamma);
    let mut s = *s0;
    let mut times = vec![s.t];
    let mut us = vec![s.u];
    let mut trajectory = vec![s];
    let mut steps = 0usize;
    let done = |s: &KineticState| s.u.max(s.c) < tol;
    while !done(&s) && s.t < t_max {
        s = step_kinetics(&s, p, dt)?;
        steps += 1;
        s.t = s0.t + steps as f64 * dt;
        times.push(s.t);
        us.push(s.u);
        if steps % record_every.max(1) == 0 {
            trajectory.push(s);
        }
    }
    if trajectory.last().map(|l| l.t) != Some(s.t) {
        trajectory.push(s);
    }
    let converged = done(&s);
    let rate = estimate_decay_rate(&times, &us, &DecayWindow::last_decade());
    let conservation_residual = if total0 == 0.0 {
        s.conserved_total(p.gamma).abs()
    } else {
        (s.conserved_total(p.gamma) - total0).abs() / total0.abs()
    };
    Ok(SteadyOutcome { state: s, converged, rate, conservation_residual, steps, trajectory })
}
