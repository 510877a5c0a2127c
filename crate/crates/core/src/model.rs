//! Model nonlinearities g (growth), b (death) and χ (chemotactic
//! sensitivity), the scalar model constants, and a sampled checker for the
//! structural assumptions the analysis relies on.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{function} evaluated at negative argument {value}")]
    Domain { function: &'static str, value: f64 },
    #[error("model constant {name} must be positive and finite, got {value}")]
    Constant { name: &'static str, value: f64 },
    #[error("invalid table: {0}")]
    Table(String),
    #[error("invalid validation range: {0}")]
    Range(String),
}

/// Values on a uniform grid over [0, s_max], linearly interpolated and held
/// constant past either end.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    s_max: f64,
    values: Vec<f64>,
}

impl Table {
    pub fn new(s_max: f64, values: Vec<f64>) -> Result<Self, ModelError> {
        if !(s_max > 0.0 && s_max.is_finite()) {
            return Err(ModelError::Table(format!("s_max must be positive, got {s_max}")));
        }
        if values.len() < 2 {
            return Err(ModelError::Table("need at least two values".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Table("values must be finite".into()));
        }
        Ok(Table { s_max, values })
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, s: f64) -> f64 {
        let last = self.values.len() - 1;
        let pos = (s / self.s_max * last as f64).clamp(0.0, last as f64);
        let k = (pos.floor() as usize).min(last - 1);
        let frac = pos - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Growth {
    /// g(u) = A (1 + tanh(k (u − u*))) / 2
    Tanh { scale: f64, steepness: f64, offset: f64 },
    Zero,
    Tabulated(Table),
}

impl Growth {
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match self {
            Growth::Tanh { scale, steepness, offset } => {
                0.5 * scale * (1.0 + (steepness * (u - offset)).tanh())
            }
            Growth::Zero => 0.0,
            Growth::Tabulated(t) => t.eval(u),
        }
    }

    /// G₀ = sup g, exact for the closed forms and the table maximum otherwise.
    pub fn sup(&self) -> f64 {
        match self {
            Growth::Tanh { scale, .. } => scale.max(0.0),
            Growth::Zero => 0.0,
            Growth::Tabulated(t) => t.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Death {
    Constant(f64),
    /// b(n) = B₀ / (1 + slope · n)
    Rational { b0: f64, slope: f64 },
    Tabulated(Table),
}

impl Death {
    #[inline]
    pub fn value(&self, n: f64) -> f64 {
        match self {
            Death::Constant(b0) => *b0,
            Death::Rational { b0, slope } => b0 / (1.0 + slope * n),
            Death::Tabulated(t) => t.eval(n),
        }
    }

    /// B₀ = b(0).
    pub fn at_zero(&self) -> f64 {
        self.value(0.0)
    }

    /// Upper bound of b on [0, ∞) for nonincreasing laws.
    pub fn sup(&self) -> f64 {
        match self {
            Death::Constant(b0) => *b0,
            Death::Rational { b0, slope } if *slope >= 0.0 => *b0,
            Death::Rational { .. } => f64::INFINITY,
            Death::Tabulated(t) => t.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sensitivity {
    /// χ(c) = χ₀ c
    Linear { chi0: f64 },
    /// χ(c) = χ₀ c² / (c² + K)
    Saturating { chi0: f64, k: f64 },
}

impl Sensitivity {
    #[inline]
    pub fn value(&self, c: f64) -> f64 {
        match *self {
            Sensitivity::Linear { chi0 } => chi0 * c,
            Sensitivity::Saturating { chi0, k } => {
                let c2 = c * c;
                chi0 * c2 / (c2 + k)
            }
        }
    }

    pub fn derivative(&self, c: f64) -> f64 {
        match *self {
            Sensitivity::Linear { chi0 } => chi0,
            Sensitivity::Saturating { chi0, k } => {
                let d = c * c + k;
                2.0 * chi0 * k * c / (d * d)
            }
        }
    }

    pub fn second_derivative(&self, c: f64) -> f64 {
        match *self {
            Sensitivity::Linear { .. } => 0.0,
            Sensitivity::Saturating { chi0, k } => {
                let d = c * c + k;
                2.0 * chi0 * k * (k - 3.0 * c * c) / (d * d * d)
            }
        }
    }

    pub fn chi0(&self) -> f64 {
        match *self {
            Sensitivity::Linear { chi0 } | Sensitivity::Saturating { chi0, .. } => chi0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    pub growth: Growth,
    pub death: Death,
    pub sensitivity: Sensitivity,
}

impl NonlinearitySpec {
    /// g(u) = ½(1 + tanh(100(u − 0.05))), b ≡ 0.05, χ(c) = 0.053 c²/(c² + 0.0625).
    pub fn fig2() -> Self {
        NonlinearitySpec {
            growth: Growth::Tanh { scale: 1.0, steepness: 100.0, offset: 0.05 },
            death: Death::Constant(0.05),
            sensitivity: Sensitivity::Saturating { chi0: 0.053, k: 0.0625 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub d_c: f64,
    pub d_n: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub nonlinearities: NonlinearitySpec,
}

impl ModelParams {
    pub fn new(
        d_c: f64,
        d_n: f64,
        alpha: f64,
        beta: f64,
        gamma: f64,
        nonlinearities: NonlinearitySpec,
    ) -> Result<Self, ModelError> {
        let p = ModelParams { d_c, d_n, alpha, beta, gamma, nonlinearities };
        p.check()?;
        Ok(p)
    }

    /// d_c = 10, d_n = 2, α = β = γ = 1 with [`NonlinearitySpec::fig2`].
    pub fn fig2() -> Self {
        ModelParams {
            d_c: 10.0,
            d_n: 2.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            nonlinearities: NonlinearitySpec::fig2(),
        }
    }

    pub fn check(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("d_c", self.d_c),
            ("d_n", self.d_n),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::Constant { name, value });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn growth(&self, u: f64) -> f64 {
        self.nonlinearities.growth.value(u)
    }
    #[inline]
    pub fn death(&self, n: f64) -> f64 {
        self.nonlinearities.death.value(n)
    }
    #[inline]
    pub fn chi(&self, c: f64) -> f64 {
        self.nonlinearities.sensitivity.value(c)
    }
}

pub fn eval_growth(spec: &NonlinearitySpec, u: f64) -> Result<f64, ModelError> {
    if u < 0.0 {
        return Err(ModelError::Domain { function: "g", value: u });
    }
    Ok(spec.growth.value(u))
}

pub fn eval_death(spec: &NonlinearitySpec, n: f64) -> Result<f64, ModelError> {
    if n < 0.0 {
        return Err(ModelError::Domain { function: "b", value: n });
    }
    Ok(spec.death.value(n))
}

/// Returns (χ(c), χ′(c)).
pub fn eval_sensitivity(spec: &NonlinearitySpec, c: f64) -> Result<(f64, f64), ModelError> {
    if c < 0.0 {
        return Err(ModelError::Domain { function: "chi", value: c });
    }
    let s = &spec.sensitivity;
    Ok((s.value(c), s.derivative(c)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Warn => "warn",
            Status::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clause {
    GrowthVanishesAtZero,
    GrowthMonotone,
    GrowthBounded,
    DeathPositiveAtZero,
    DeathNonincreasing,
    DeathPositive,
    SensitivityBounded,
    SensitivityAttractive,
}

impl Clause {
    pub fn label(self) -> &'static str {
        match self {
            Clause::GrowthVanishesAtZero => "g(0) = 0",
            Clause::GrowthMonotone => "g nondecreasing",
            Clause::GrowthBounded => "0 <= g <= G0",
            Clause::DeathPositiveAtZero => "b(0) = B0 > 0",
            Clause::DeathNonincreasing => "b nonincreasing",
            Clause::DeathPositive => "b > 0",
            Clause::SensitivityBounded => "chi', chi'' bounded",
            Clause::SensitivityAttractive => "chi' >= 0",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub clause: Clause,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    /// Sampled estimate of G₀ = sup g.
    pub growth_sup: f64,
    pub death_at_zero: f64,
    pub s_max: f64,
    pub samples: usize,
}

impl ValidationReport {
    pub fn status(&self, clause: Clause) -> Status {
        self.findings
            .iter()
            .find(|f| f.clause == clause)
            .map(|f| f.status)
            .unwrap_or(Status::Pass)
    }

    pub fn has_failures(&self) -> bool {
        self.findings.iter().any(|f| f.status == Status::Fail)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.status == Status::Warn)
    }

    /// Worst status over all clauses.
    pub fn overall(&self) -> Status {
        if self.has_failures() {
            Status::Fail
        } else if self.warnings().next().is_some() {
            Status::Warn
        } else {
            Status::Pass
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model assumptions on [0, {}] with {} samples", self.s_max, self.samples)?;
        for finding in &self.findings {
            writeln!(f, "  [{}] {}: {}", finding.status, finding.clause.label(), finding.detail)?;
        }
        write!(f, "overall: {}", self.overall())
    }
}

pub const G_ZERO_PASS_TOL: f64 = 1e-6;
pub const G_ZERO_WARN_TOL: f64 = 1e-3;

/// Sampled check of the structural assumptions on g, b and χ over
/// `[0, s_max]`. Never errors on a bad model; every finding goes in the
/// report.
pub fn validate_assumptions(
    spec: &NonlinearitySpec,
    s_max: f64,
    samples: usize,
) -> Result<ValidationReport, ModelError> {
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(ModelError::Range(format!("s_max must be positive, got {s_max}")));
    }
    if samples < 10 {
        return Err(ModelError::Range(format!("need at least 10 samples, got {samples}")));
    }
    let s: Vec<f64> = (0..samples).map(|k| s_max * k as f64 / (samples - 1) as f64).collect();
    let mut findings = Vec::new();
    let mut push = |clause, status, detail: String| findings.push(Finding { clause, status, detail });

    let g: Vec<f64> = s.iter().map(|&x| spec.growth.value(x)).collect();
    let g0 = g[0];
    let status = if !g0.is_finite() {
        Status::Fail
    } else if g0.abs() <= G_ZERO_PASS_TOL {
        Status::Pass
    } else if g0.abs() < G_ZERO_WARN_TOL {
        Status::Warn
    } else {
        Status::Fail
    };
    push(Clause::GrowthVanishesAtZero, status, format!("g(0) = {g0:.6e}"));

    let drop = g
        .windows(2)
        .zip(&s)
        .find(|(w, _)| w[1] < w[0] - 1e-12 * (1.0 + w[0].abs()))
        .map(|(_, &x)| x);
    match drop {
        Some(x) => push(Clause::GrowthMonotone, Status::Fail, format!("g decreases after s = {x:.6e}")),
        None => push(Clause::GrowthMonotone, Status::Pass, "nondecreasing on samples".into()),
    }

    let g_min = g.iter().copied().fold(f64::INFINITY, f64::min);
    let g_sup = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if g.iter().any(|v| !v.is_finite()) {
        push(Clause::GrowthBounded, Status::Fail, "non-finite sample".into());
    } else if g_min < -1e-12 {
        push(Clause::GrowthBounded, Status::Fail, format!("g takes negative value {g_min:.6e}"));
    } else {
        push(Clause::GrowthBounded, Status::Pass, format!("sampled G0 = {g_sup:.6e}"));
    }

    let b: Vec<f64> = s.iter().map(|&x| spec.death.value(x)).collect();
    let b0 = b[0];
    if b0 > 0.0 && b0.is_finite() {
        push(Clause::DeathPositiveAtZero, Status::Pass, format!("B0 = {b0:.6e}"));
    } else {
        push(Clause::DeathPositiveAtZero, Status::Fail, format!("b(0) = {b0:.6e}"));
    }

    let rise = b
        .windows(2)
        .zip(&s)
        .find(|(w, _)| w[1] > w[0] + 1e-12 * (1.0 + w[0].abs()))
        .map(|(_, &x)| x);
    let constant = b.iter().all(|v| *v == b0);
    match (rise, constant) {
        (Some(x), _) => {
            push(Clause::DeathNonincreasing, Status::Fail, format!("b increases after s = {x:.6e}"))
        }
        (None, true) => push(
            Clause::DeathNonincreasing,
            Status::Warn,
            "b is constant, not strictly decreasing".into(),
        ),
        (None, false) => push(Clause::DeathNonincreasing, Status::Pass, "nonincreasing on samples".into()),
    }

    let b_min = b.iter().copied().fold(f64::INFINITY, f64::min);
    if b_min > 0.0 && b.iter().all(|v| v.is_finite()) {
        push(Clause::DeathPositive, Status::Pass, format!("min sampled b = {b_min:.6e}"));
    } else {
        push(Clause::DeathPositive, Status::Fail, format!("min sampled b = {b_min:.6e}"));
    }

    let chi = &spec.sensitivity;
    let d1: Vec<f64> = s.iter().map(|&x| chi.derivative(x)).collect();
    let d2: Vec<f64> = s.iter().map(|&x| chi.second_derivative(x)).collect();
    if d1.iter().chain(&d2).all(|v| v.is_finite()) {
        let m1 = d1.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let m2 = d2.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        push(
            Clause::SensitivityBounded,
            Status::Pass,
            format!("max |chi'| = {m1:.6e}, max |chi''| = {m2:.6e}"),
        );
    } else {
        push(Clause::SensitivityBounded, Status::Fail, "non-finite chi' or chi''".into());
    }

    let d1_min = d1.iter().copied().fold(f64::INFINITY, f64::min);
    if d1_min >= 0.0 {
        push(Clause::SensitivityAttractive, Status::Pass, format!("min chi' = {d1_min:.6e}"));
    } else {
        push(Clause::SensitivityAttractive, Status::Fail, format!("min chi' = {d1_min:.6e}"));
    }

    Ok(ValidationReport { findings, growth_sup: g_sup, death_at_zero: b0, s_max, samples })
}
