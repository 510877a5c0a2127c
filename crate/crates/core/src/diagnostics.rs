//! Integral functionals of a simulation state, exponential decay-rate fits,
//! and the localized second-moment machinery used to probe aggregation in
//! the parabolic–elliptic regime.

use std::f64::consts::PI;

use thiserror::Error;

use crate::grid::{laplacian_neumann, Field, Grid};
use crate::model::ModelParams;
use crate::stepper::{SimState, TerminationCause};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("moment weight needs a 2D grid")]
    NotPlanar,
    #[error("invalid radii: need 0 < r1 ({r1}) < r2 ({r2}) < dist(q, boundary) ({dist})")]
    Radii { r1: f64, r2: f64, dist: f64 },
    #[error("field and moment weight live on different grids")]
    GridMismatch,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("need at least {needed} records, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

/// Discrete integrals (midpoint rule) and max norms at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassRecord {
    pub t: f64,
    pub m_u: f64,
    pub m_c: f64,
    pub m_n: f64,
    pub m_w: f64,
    /// M_u + M_n / γ + M_w
    pub total: f64,
    pub sup_u: f64,
    pub sup_c: f64,
}

pub fn masses(s: &SimState, p: &ModelParams) -> MassRecord {
    let (m_u, m_c, m_n, m_w) = (s.u.integral(), s.c.integral(), s.n.integral(), s.w.integral());
    MassRecord {
        t: s.t,
        m_u,
        m_c,
        m_n,
        m_w,
        total: m_u + m_n / p.gamma + m_w,
        sup_u: s.u.sup_norm(),
        sup_c: s.c.sup_norm(),
    }
}

/// Fitted exponential rate μ in value ≈ C e^{−μt}, with the window used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedRate {
    pub rate: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
}

/// Which trailing samples feed a decay fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayWindow {
    pub min_samples: usize,
    /// The trailing strictly decreasing run must span at least this many
    /// decades.
    pub min_decades: f64,
    /// When set, only the shortest trailing segment spanning this many
    /// decades is fitted.
    pub fit_decades: Option<f64>,
}

impl Default for DecayWindow {
    fn default() -> Self {
        DecayWindow { min_samples: 10, min_decades: 1.0, fit_decades: None }
    }
}

impl DecayWindow {
    /// Fit only the final decade.
    pub fn last_decade() -> Self {
        DecayWindow { fit_decades: Some(1.0), ..Self::default() }
    }
}

/// Least-squares slope of −ln(value) against t over the trailing strictly
/// decreasing window. `None` when there is no admissible window.
pub fn estimate_decay_rate(times: &[f64], values: &[f64], policy: &DecayWindow) -> Option<FittedRate> {
    let n = times.len().min(values.len());
    let min_samples = policy.min_samples.max(2);
    if n < min_samples {
        return None;
    }
    let last = n - 1;
    if !(values[last] > 0.0) || !values[last].is_finite() {
        return None;
    }
    let mut start = last;
    while start > 0 && values[start - 1] > values[start] && values[start - 1].is_finite() {
        start -= 1;
    }
    let log_span = |a: usize| (values[a] / values[last]).log10();
    if log_span(start) < policy.min_decades {
        return None;
    }
    if let Some(d) = policy.fit_decades {
        while start < last && log_span(start + 1) >= d {
            start += 1;
        }
    }
    if last + 1 - start < min_samples {
        return None;
    }
    let window = start..=last;
    let m = (last + 1 - start) as f64;
    let t_mean = times[window.clone()].iter().sum::<f64>() / m;
    let y_mean = values[window.clone()].iter().map(|v| -v.ln()).sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for k in window {
        let dt = times[k] - t_mean;
        sxy += dt * (-values[k].ln() - y_mean);
        sxx += dt * dt;
    }
    if sxx <= 0.0 {
        return None;
    }
    Some(FittedRate { rate: sxy / sxx, t_start: times[start], t_end: times[last], samples: last + 1 - start })
}

/// Returns 8π / (α χ₀).
pub fn blow_up_threshold(alpha: f64, chi0: f64) -> Result<f64, DiagnosticsError> {
    if !(alpha > 0.0) {
        return Err(DiagnosticsError::NonPositive { name: "alpha", value: alpha });
    }
    if !(chi0 > 0.0) {
        return Err(DiagnosticsError::NonPositive { name: "chi0", value: chi0 });
    }
    Ok(8.0 * PI / (alpha * chi0))
}

/// The radial weight φ(|x − q|): r² inside r1, a quadratic bridge on
/// [r1, r2] matching value and slope at both ends, and the constant r1·r2
/// beyond r2.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentWeight {
    pub q: [f64; 2],
    pub r1: f64,
    pub r2: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub values: Field,
}

impl MomentWeight {
    pub fn new(grid: &Grid, q: [f64; 2], r1: f64, r2: f64) -> Result<Self, DiagnosticsError> {
        if grid.dim() != 2 {
            return Err(DiagnosticsError::NotPlanar);
        }
        let ext = grid.extents();
        let dist = q[0].min(ext[0] - q[0]).min(q[1]).min(ext[1] - q[1]);
        if !(r1 > 0.0 && r1 < r2 && r2 < dist) {
            return Err(DiagnosticsError::Radii { r1, r2, dist });
        }
        let span = r2 - r1;
        let (a1, a2, a3) = (-r1 / span, 2.0 * r1 * r2 / span, -r1 * r1 * r2 / span);
        let mut w = MomentWeight { q, r1, r2, a1, a2, a3, values: Field::zeros(grid) };
        let phi = w.clone();
        w.values = Field::from_fn(grid, move |x, y| phi.phi(((x - q[0]).powi(2) + (y - q[1]).powi(2)).sqrt()));
        Ok(w)
    }

    /// φ as a function of the radius.
    pub fn phi(&self, r: f64) -> f64 {
        if r <= self.r1 {
            r * r
        } else if r <= self.r2 {
            (self.a1 * r + self.a2) * r + self.a3
        } else {
            self.r1 * self.r2
        }
    }

    /// Closed-form radial Laplacian in the plane: 4 inside r1,
    /// 4a1 + a2/r on the bridge, 0 outside r2.
    pub fn laplacian_exact(&self, r: f64) -> f64 {
        if r < self.r1 {
            4.0
        } else if r < self.r2 {
            4.0 * self.a1 + self.a2 / r
        } else {
            0.0
        }
    }

    /// Five-point Laplacian of the sampled weight.
    pub fn sampled_laplacian(&self) -> Field {
        laplacian_neumann(&self.values)
    }

    pub fn radius_of(&self, k: usize) -> f64 {
        let [x, y] = self.values.grid().center(k);
        ((x - self.q[0]).powi(2) + (y - self.q[1]).powi(2)).sqrt()
    }

    /// Whether the five-point stencil at cell `k` straddles a kink of φ,
    /// with `margin` extra distance.
    pub fn near_kink(&self, k: usize, margin: f64) -> bool {
        let r = self.radius_of(k);
        (r - self.r1).abs() <= margin || (r - self.r2).abs() <= margin
    }

    /// Residuals of value continuity at r1 and r2 in the closed forms.
    pub fn continuity_residuals(&self) -> (f64, f64) {
        let (r1, r2) = (self.r1, self.r2);
        let at_r1 = self.a1 * r1 * r1 + self.a2 * r1 + self.a3 - r1 * r1;
        let at_r2 = self.a1 * r2 * r2 + self.a2 * r2 + self.a3 - r1 * r2;
        (at_r1, at_r2)
    }
}

/// Free-function form of [`MomentWeight::new`].
pub fn moment_weight(grid: &Grid, q: [f64; 2], r1: f64, r2: f64) -> Result<MomentWeight, DiagnosticsError> {
    MomentWeight::new(grid, q, r1, r2)
}

/// I = ∫ u φ(x − q) dx by the midpoint rule.
pub fn moment(u: &Field, weight: &MomentWeight) -> Result<f64, DiagnosticsError> {
    u.same_grid(&weight.values).map_err(|_| DiagnosticsError::GridMismatch)?;
    Ok(u.dot(&weight.values) * u.grid().cell_volume())
}

/// Named fitted rate carried by a series.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedRate {
    pub quantity: String,
    pub fit: FittedRate,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticsSeries {
    pub records: Vec<MassRecord>,
    /// I(t) per record when a moment weight is tracked, else empty.
    pub moments: Vec<f64>,
    pub rates: Vec<NamedRate>,
    pub termination: Option<TerminationCause>,
}

impl DiagnosticsSeries {
    pub fn push(&mut self, record: MassRecord, moment: Option<f64>) {
        if let Some(last) = self.records.last() {
            if record.t <= last.t {
                return;
            }
        }
        self.records.push(record);
        if let Some(i) = moment {
            self.moments.push(i);
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, f: impl Fn(&MassRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    pub fn has_moments(&self) -> bool {
        !self.moments.is_empty() && self.moments.len() == self.records.len()
    }

    pub fn rate(&self, quantity: &str) -> Option<FittedRate> {
        self.rates.iter().find(|r| r.quantity == quantity).map(|r| r.fit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub n_nonincreasing: bool,
    pub w_nondecreasing: bool,
    pub total_conserved: bool,
    /// Largest single-step increase of M_n.
    pub max_n_increase: f64,
    /// Largest single-step decrease of M_w.
    pub max_w_decrease: f64,
    /// max |total(t) − total(0)| / total(0).
    pub max_total_drift: f64,
    pub n_limit: f64,
    pub w_limit: f64,
    pub violations: Vec<String>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Per-step tolerance on M_n / M_w monotonicity, relative to the initial
/// conserved total.
pub const MONOTONE_STEP_TOL: f64 = 1e-12;
/// Relative tolerance on the conserved total.
pub const CONSERVATION_TOL: f64 = 1e-10;

pub fn check_monotonicity(series: &DiagnosticsSeries) -> Result<MonotonicityReport, DiagnosticsError> {
    let recs = &series.records;
    if recs.len() < 2 {
        return Err(DiagnosticsError::InsufficientData { needed: 2, got: recs.len() });
    }
    let scale = recs[0].total.abs().max(f64::MIN_POSITIVE);
    let mut report = MonotonicityReport {
        n_nonincreasing: true,
        w_nondecreasing: true,
        total_conserved: true,
        max_n_increase: 0.0,
        max_w_decrease: 0.0,
        max_total_drift: 0.0,
        n_limit: recs[recs.len() - 1].m_n,
        w_limit: recs[recs.len() - 1].m_w,
        violations: Vec::new(),
    };
    for pair in recs.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let dn = b.m_n - a.m_n;
        let dw = a.m_w - b.m_w;
        report.max_n_increase = report.max_n_increase.max(dn);
        report.max_w_decrease = report.max_w_decrease.max(dw);
        if dn > MONOTONE_STEP_TOL * scale {
            report.n_nonincreasing = false;
            report.violations.push(format!("M_n increased by {dn:.3e} on [{}, {}]", a.t, b.t));
        }
        if dw > MONOTONE_STEP_TOL * scale {
            report.w_nondecreasing = false;
            report.violations.push(format!("M_w decreased by {dw:.3e} on [{}, {}]", a.t, b.t));
        }
        let drift = (b.total - recs[0].total).abs() / scale;
        report.max_total_drift = report.max_total_drift.max(drift);
    }
    if report.max_total_drift > CONSERVATION_TOL {
        report.total_conserved = false;
        report.violations.push(format!("conserved total drifted by {:.3e} (relative)", report.max_total_drift));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn record(t: f64, m_n: f64, m_w: f64) -> MassRecord {
        MassRecord { t, m_u: 0.0, m_c: 0.0, m_n, m_w, total: m_n + m_w, sup_u: 0.0, sup_c: 0.0 }
    }

    #[test]
    fn threshold_examples() {
        assert_relative_eq!(blow_up_threshold(8.0 * PI, 1.0).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(blow_up_threshold(2.0, 1.0).unwrap(), 4.0 * PI, max_relative = 1e-15);
        let direct = 8.0 * PI / 0.053;
        assert_relative_eq!(blow_up_threshold(1.0, 0.053).unwrap(), direct, max_relative = 1e-12);
        assert!((direct - 474.2027).abs() < 1e-4);
        assert!(blow_up_threshold(0.0, 1.0).is_err());
        assert!(blow_up_threshold(1.0, -2.0).is_err());
    }

    #[test]
    fn weight_coefficients_and_values() {
        let g = Grid::rect(10.0, 10.0, 20, 20).unwrap();
        let w = moment_weight(&g, [5.0, 5.0], 1.0, 2.0).unwrap();
        assert_eq!((w.a1, w.a2, w.a3), (-1.0, 4.0, -2.0));
        assert_eq!(w.phi(0.5), 0.25);
        assert_eq!(w.phi(3.0), 2.0);
        let (e1, e2) = w.continuity_residuals();
        assert_eq!((e1, e2), (0.0, 0.0));
    }

    #[test]
    fn weight_rejects_bad_radii() {
        let g = Grid::rect(4.0, 4.0, 16, 16).unwrap();
        assert!(matches!(moment_weight(&g, [2.0, 2.0], 1.0, 0.5), Err(DiagnosticsError::Radii { .. })));
        assert!(matches!(moment_weight(&g, [2.0, 2.0], 1.0, 2.5), Err(DiagnosticsError::Radii { .. })));
        assert!(matches!(moment_weight(&g, [0.5, 2.0], 0.2, 0.6), Err(DiagnosticsError::Radii { .. })));
        let line = Grid::line(4.0, 16).unwrap();
        assert_eq!(moment_weight(&line, [2.0, 0.0], 0.5, 1.0).unwrap_err(), DiagnosticsError::NotPlanar);
    }

    #[test]
    fn moment_of_zero_and_point_mass() {
        let g = Grid::rect(2.0, 2.0, 64, 64).unwrap();
        let q = [1.0 + g.hx() / 2.0, 1.0 + g.hy() / 2.0];
        let w = moment_weight(&g, q, 0.3, 0.6).unwrap();
        assert_eq!(moment(&Field::zeros(&g), &w).unwrap(), 0.0);
        let k_center = g.index(32, 32);
        let mut spike = Field::zeros(&g);
        spike.values_mut()[k_center] = 1.0 / g.cell_volume();
        assert!(moment(&spike, &w).unwrap() < 1e-20);
        let wide = Field::from_fn(&g, |x, y| (-((x - q[0]).powi(2) + (y - q[1]).powi(2)) / 0.02).exp());
        let narrow = Field::from_fn(&g, |x, y| (-((x - q[0]).powi(2) + (y - q[1]).powi(2)) / 0.005).exp());
        let norm = |f: &Field| moment(f, &w).unwrap() / f.integral();
        assert!(norm(&narrow) < norm(&wide));
        let other = Field::zeros(&Grid::rect(2.0, 2.0, 32, 32).unwrap());
        assert_eq!(moment(&other, &w).unwrap_err(), DiagnosticsError::GridMismatch);
    }

    #[test]
    fn moment_of_constant_self_converges() {
        // ∫φ over the plane with φ = r1 r2 outside the r2-ball, by polar
        // quadrature of the radial profile.
        let (r1, r2, side) = (0.4, 0.9, 3.0);
        let q = [1.5, 1.5];
        let radial = {
            let w = MomentWeight::new(&Grid::rect(side, side, 8, 8).unwrap(), q, r1, r2).unwrap();
            let m = 200_000;
            let h = r2 / m as f64;
            (0..m).map(|k| (k as f64 + 0.5) * h).map(|r| (w.phi(r) - r1 * r2) * 2.0 * PI * r * h).sum::<f64>()
        };
        let exact = r1 * r2 * side * side + radial;
        let err = |n: usize| {
            let g = Grid::rect(side, side, n, n).unwrap();
            let w = MomentWeight::new(&g, q, r1, r2).unwrap();
            (moment(&Field::constant(&g, 1.0), &w).unwrap() - exact).abs()
        };
        let (e1, e2, e3) = (err(60), err(120), err(240));
        assert!(e3 < e1 && e3 < 1e-3 * exact, "{e1} {e2} {e3}");
    }

    #[test]
    fn decay_fit_recovers_synthetic_rate() {
        let t: Vec<f64> = (0..=500).map(|k| k as f64 * 0.01).collect();
        let v: Vec<f64> = t.iter().map(|t| (-2.0 * t).exp()).collect();
        let fit = estimate_decay_rate(&t, &v, &DecayWindow::default()).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-6);
        assert_eq!(fit.samples, 501);
        let last = estimate_decay_rate(&t, &v, &DecayWindow::last_decade()).unwrap();
        assert!((last.rate - 2.0).abs() < 1e-6);
        assert!(last.t_start > 3.8 && last.t_start < 3.9);
    }

    #[test]
    fn decay_fit_absent_without_window() {
        let t: Vec<f64> = (0..50).map(|k| k as f64).collect();
        assert!(estimate_decay_rate(&t, &vec![3.0; 50], &DecayWindow::default()).is_none());
        let shallow: Vec<f64> = t.iter().map(|t| (-0.01 * t).exp()).collect();
        assert!(estimate_decay_rate(&t, &shallow, &DecayWindow::default()).is_none());
        assert!(estimate_decay_rate(&t[..5], &shallow[..5], &DecayWindow::default()).is_none());
    }

    #[test]
    fn decay_fit_uses_trailing_run_only() {
        // growth phase then decay
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|&t| if t < 5.0 { 1.0 + t } else { 6.0 * (-0.5 * (t - 5.0)).exp() }).collect();
        let fit = estimate_decay_rate(&t, &v, &DecayWindow::default()).unwrap();
        assert!((fit.rate - 0.5).abs() < 1e-9);
        assert!((fit.t_start - 5.0).abs() < 1e-12);
    }

    #[test]
    fn monotonicity_checks() {
        let good = DiagnosticsSeries {
            records: vec![record(0.0, 2.0, 0.0), record(1.0, 1.5, 0.5), record(2.0, 1.0, 1.0)],
            ..Default::default()
        };
        let report = check_monotonicity(&good).unwrap();
        assert!(report.passed());
        assert_eq!((report.n_limit, report.w_limit), (1.0, 1.0));

        let bad = DiagnosticsSeries {
            records: vec![record(0.0, 1.0, 1.0), record(1.0, 1.2, 0.8)],
            ..Default::default()
        };
        let report = check_monotonicity(&bad).unwrap();
        assert!(!report.n_nonincreasing && !report.w_nondecreasing);
        assert!(report.total_conserved);

        let single = DiagnosticsSeries { records: vec![record(0.0, 1.0, 0.0)], ..Default::default() };
        assert_eq!(
            check_monotonicity(&single).unwrap_err(),
            DiagnosticsError::InsufficientData { needed: 2, got: 1 }
        );
    }

    #[test]
    fn series_rejects_non_increasing_times() {
        let mut s = DiagnosticsSeries::default();
        s.push(record(0.0, 1.0, 0.0), None);
        s.push(record(0.0, 1.0, 0.0), None);
        s.push(record(1.0, 1.0, 0.0), None);
        assert_eq!(s.records.len(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn decay_fit_across_three_decades_of_rate(log_rate in -1.5f64..1.5) {
            let rate = 10f64.powf(log_rate);
            let t_end = 12.0 / rate;
            let t: Vec<f64> = (0..=400).map(|k| k as f64 * t_end / 400.0).collect();
            let v: Vec<f64> = t.iter().map(|t| 3.0 * (-rate * t).exp()).collect();
            let fit = estimate_decay_rate(&t, &v, &DecayWindow::default()).unwrap();
            prop_assert!((fit.rate - rate).abs() / rate < 1e-4);
        }

        #[test]
        fn weight_identities(r1 in 0.05f64..1.0, gap in 0.05f64..1.0, q in 2.5f64..3.5) {
            let r2 = r1 + gap;
            let g = Grid::rect(6.0, 6.0, 12, 12).unwrap();
            let w = MomentWeight::new(&g, [q, q], r1, r2).unwrap();
            let (e1, e2) = w.continuity_residuals();
            prop_assert!(e1.abs() <= 1e-12 * r2 * r2 && e2.abs() <= 1e-12 * r2 * r2);
            prop_assert!(w.values.values().iter().all(|&p| p >= 0.0 && p <= r1 * r2 * (1.0 + 1e-12)));
            let u = Field::from_fn(&g, |x, y| (x * y).sin().abs());
            prop_assert!(moment(&u, &w).unwrap() <= r1 * r2 * u.integral() * (1.0 + 1e-12));
        }
    }
}
