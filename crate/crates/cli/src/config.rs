//! Sectioned `key = value` run configuration.
//!
//! ```text
//! preset = fig2
//! seed = 7
//!
//! [grid]
//! dim = 1
//! lx = 10
//! nx = 400
//!
//! [init.u]
//! kind = gaussian
//! mass = 1
//! width = 0.5
//! ```
//!
//! Top-level keys come before the first section header. `#` starts a
//! comment. Every key is looked up by its dotted path (`grid.nx`,
//! `init.u.mass`), which is also the form `--set` overrides use. Keys that
//! no section consumes are rejected, and every error names the key and the
//! line it came from.

use std::collections::BTreeMap;
use std::cell::Cell;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use colony_core::model::{Death, Growth, NonlinearitySpec, Sensitivity, Table};
use colony_core::stepper::{EllipticSolveSettings, Mode, StepControl, StopRules};
use colony_core::{FluxScheme, Grid, ModelParams};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override => f.write_str("--set"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{key} ({origin}): {msg}")]
    Invalid { key: String, origin: Origin, msg: String },
    #[error("unknown key {key} ({origin})")]
    Unknown { key: String, origin: Origin },
    #[error("missing required key {0}")]
    Missing(String),
    #[error("bad override {0:?}: expected key=value")]
    Override(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug)]
struct Entry {
    value: String,
    origin: Origin,
    used: Cell<bool>,
}

/// Key/value pairs before interpretation.
#[derive(Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut section = String::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line: lineno, msg: "unterminated section header".into() })?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                    return Err(ConfigError::Syntax { line: lineno, msg: format!("bad section name {name:?}") });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: lineno, msg: format!("expected key = value, got {line:?}") })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: lineno, msg: "empty key".into() });
            }
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            if let Some(prev) = raw.entries.get(&full) {
                return Err(ConfigError::Syntax {
                    line: lineno,
                    msg: format!("duplicate key {full} (first set on {})", prev.origin),
                });
            }
            raw.entries.insert(
                full,
                Entry { value: value.trim().to_string(), origin: Origin::Line(lineno), used: Cell::new(false) },
            );
        }
        Ok(raw)
    }

    /// Apply `key=value` overrides on top of the file contents.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.to_string()))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Override(o.to_string()));
            }
            self.entries.insert(
                k.to_string(),
                Entry { value: v.trim().to_string(), origin: Origin::Override, used: Cell::new(false) },
            );
        }
        Ok(())
    }

    fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn has_section(&self, prefix: &str) -> bool {
        let p = format!("{prefix}.");
        self.entries.keys().any(|k| k.starts_with(&p))
    }

    fn raw(&self, key: &str) -> Option<(&str, Origin)> {
        self.entries.get(key).map(|e| {
            e.used.set(true);
            (e.value.as_str(), e.origin)
        })
    }

    fn invalid(key: &str, origin: Origin, msg: impl Into<String>) -> ConfigError {
        ConfigError::Invalid { key: key.to_string(), origin, msg: msg.into() }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<(T, Origin)>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, origin)) => v
                .parse::<T>()
                .map(|x| Some((x, origin)))
                .map_err(|_| Self::invalid(key, origin, format!("expected {what}, got {v:?}"))),
        }
    }

    fn real_checked(&self, key: &str, default: f64, check: impl Fn(f64) -> Option<&'static str>) -> Result<f64> {
        match self.parsed::<f64>(key, "a number")? {
            None => Ok(default),
            Some((v, origin)) => {
                if !v.is_finite() {
                    return Err(Self::invalid(key, origin, "must be finite"));
                }
                match check(v) {
                    Some(msg) => Err(Self::invalid(key, origin, msg)),
                    None => Ok(v),
                }
            }
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        self.real_checked(key, default, |v| (v <= 0.0).then_some("must be > 0"))
    }

    fn nonneg(&self, key: &str, default: f64) -> Result<f64> {
        self.real_checked(key, default, |v| (v < 0.0).then_some("must be ≥ 0"))
    }

    fn real(&self, key: &str, default: f64) -> Result<f64> {
        self.real_checked(key, default, |_| None)
    }

    fn count(&self, key: &str, default: usize, min: usize) -> Result<usize> {
        match self.parsed::<usize>(key, "a nonnegative integer")? {
            None => Ok(default),
            Some((v, origin)) if v < min => Err(Self::invalid(key, origin, format!("must be ≥ {min}"))),
            Some((v, _)) => Ok(v),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.parsed::<bool>(key, "true or false")?.map_or(default, |(v, _)| v))
    }

    fn list(&self, key: &str) -> Result<Option<(Vec<f64>, Origin)>> {
        let Some((v, origin)) = self.raw(key) else { return Ok(None) };
        if v.trim().is_empty() {
            return Ok(Some((Vec::new(), origin)));
        }
        let items = v
            .split(',')
            .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Self::invalid(key, origin, format!("expected comma-separated numbers, got {v:?}")))?;
        Ok(Some((items, origin)))
    }

    fn point(&self, key: &str, default: [f64; 2], dim: usize) -> Result<[f64; 2]> {
        match self.list(key)? {
            None => Ok(default),
            Some((v, origin)) => match (dim, v.as_slice()) {
                (1, [x]) => Ok([*x, default[1]]),
                (2, [x, y]) => Ok([*x, *y]),
                _ => Err(Self::invalid(key, origin, format!("expected {dim} coordinate(s)"))),
            },
        }
    }

    fn word<'a>(&'a self, key: &str, default: &'a str) -> (&'a str, Option<Origin>) {
        match self.raw(key) {
            Some((v, o)) => (v, Some(o)),
            None => (default, None),
        }
    }

    fn choice<T: Copy>(&self, key: &str, default: T, options: &[(&str, T)]) -> Result<T> {
        let Some((v, origin)) = self.raw(key) else { return Ok(default) };
        options.iter().find(|(name, _)| *name == v).map(|(_, t)| *t).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            Self::invalid(key, origin, format!("expected one of {}, got {v:?}", names.join(" | ")))
        })
    }

    fn finish(&self) -> Result<()> {
        match self.entries.iter().find(|(_, e)| !e.used.get()) {
            Some((k, e)) => Err(ConfigError::Unknown { key: k.clone(), origin: e.origin }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn build(&self) -> Grid {
        if self.dim == 1 {
            Grid::line(self.lx, self.nx).expect("validated grid")
        } else {
            Grid::rect(self.lx, self.ly, self.nx, self.ny).expect("validated grid")
        }
    }

    pub fn center(&self) -> [f64; 2] {
        [self.lx / 2.0, if self.dim == 2 { self.ly / 2.0 } else { 0.5 }]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub center: [f64; 2],
    pub width: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant(f64),
    Gaussians(Vec<Bump>),
    /// Whitespace-separated values in row-major order.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldInit {
    pub profile: Profile,
    /// Relative multiplicative noise amplitude in [0, 1).
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub t_end: f64,
    pub series_interval: f64,
    /// 0 disables intermediate snapshots (initial and final are still written).
    pub snapshot_interval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticsSpec {
    pub s0: [f64; 4],
    pub dt: f64,
    pub t_max: f64,
    pub tol: f64,
    pub record_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub masses: Vec<f64>,
    pub widths: Vec<f64>,
    pub t_end: f64,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSpec {
    pub q: [f64; 2],
    pub r1: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSpec {
    pub length: f64,
    pub nx: usize,
    pub dt_u: f64,
    pub dt_c: f64,
    pub t_u: f64,
    pub t_c: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub seed: u64,
    pub grid: Option<GridSpec>,
    pub params: ModelParams,
    pub control: StepControl,
    pub stop: StopRules,
    pub elliptic: EllipticSolveSettings,
    pub schedule: ScheduleSpec,
    /// u, c, n, w
    pub init: [FieldInit; 4],
    pub output_dir: PathBuf,
    pub kinetics: KineticsSpec,
    pub scan: Option<ScanSpec>,
    pub moment: Option<MomentSpec>,
    pub eigencheck: EigenSpec,
}

pub const FIELD_NAMES: [&str; 4] = ["u", "c", "n", "w"];

impl RunConfig {
    /// Read `path`, apply overrides and resolve. Relative file references
    /// are taken relative to the config file's directory.
    pub fn load<S: AsRef<str>>(path: &Path, overrides: &[S]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, overrides, base)
    }

    pub fn from_text<S: AsRef<str>>(text: &str, overrides: &[S], base: &Path) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        raw.apply_overrides(overrides)?;
        let cfg = Self::resolve(&raw, base)?;
        raw.finish()?;
        Ok(cfg)
    }

    /// All defaults, no grid: enough for kinetics, validation and the
    /// eigenvalue check.
    pub fn defaults() -> Self {
        Self::from_text::<&str>("", &[], Path::new(".")).expect("empty config resolves")
    }

    fn resolve(raw: &RawConfig, base: &Path) -> Result<Self> {
        let preset = match raw.raw("preset") {
            None => None,
            Some(("fig2", _)) => Some("fig2".to_string()),
            Some((other, origin)) => {
                return Err(RawConfig::invalid("preset", origin, format!("unknown preset {other:?} (known: fig2)")))
            }
        };
        let seed = raw.parsed::<u64>("seed", "an unsigned integer")?.map_or(0, |(v, _)| v);
        let grid = resolve_grid(raw, preset.is_some())?;
        let params = resolve_model(raw)?;
        let (control, stop, elliptic) = resolve_control(raw)?;

        let t_end = raw.positive("schedule.t_end", 50.0)?;
        let schedule = ScheduleSpec {
            t_end,
            series_interval: raw.nonneg("schedule.series_interval", 0.1)?,
            snapshot_interval: raw.nonneg("schedule.snapshot_interval", 0.0)?,
        };

        let dim = grid.map_or(1, |g| g.dim);
        let center = grid.map_or([0.0, 0.0], |g| g.center());
        let init = [
            resolve_init(raw, "u", Profile::Gaussians(vec![Bump { center, width: 0.5, mass: 1.0 }]), dim, center, base)?,
            resolve_init(raw, "c", Profile::Constant(0.0), dim, center, base)?,
            resolve_init(raw, "n", Profile::Constant(1.0), dim, center, base)?,
            resolve_init(raw, "w", Profile::Constant(0.0), dim, center, base)?,
        ];
        let output_dir = PathBuf::from(raw.word("output.dir", "out").0);

        let kinetics = KineticsSpec {
            s0: [
                raw.nonneg("kinetics.u0", 0.5)?,
                raw.nonneg("kinetics.c0", 0.1)?,
                raw.nonneg("kinetics.n0", 1.0)?,
                raw.nonneg("kinetics.w0", 0.0)?,
            ],
            dt: raw.positive("kinetics.dt", 0.01)?,
            t_max: raw.positive("kinetics.t_max", 2000.0)?,
            tol: raw.positive("kinetics.tol", 1e-8)?,
            record_every: raw.count("kinetics.record_every", 100, 1)?,
        };

        let scan = if raw.has_section("scan") {
            let masses = raw.list("scan.masses")?.map(|(v, _)| v).unwrap_or_default();
            let widths = raw.list("scan.widths")?.map(|(v, _)| v).unwrap_or_default();
            for (key, values) in [("scan.masses", &masses), ("scan.widths", &widths)] {
                if values.iter().any(|v| *v <= 0.0) {
                    return Err(RawConfig::invalid(key, raw.entries[key].origin, "entries must be > 0"));
                }
            }
            let r1 = raw.parsed::<f64>("scan.r1", "a number")?.map(|(v, _)| v);
            let r2 = raw.parsed::<f64>("scan.r2", "a number")?.map(|(v, _)| v);
            Some(ScanSpec { masses, widths, t_end: raw.positive("scan.t_end", t_end)?, r1, r2 })
        } else {
            None
        };

        let moment = if raw.has_section("moment") {
            let r1 = raw.positive("moment.r1", f64::NAN)?;
            let r2 = raw.positive("moment.r2", f64::NAN)?;
            if r1.is_nan() || r2.is_nan() {
                return Err(ConfigError::Missing(if r1.is_nan() { "moment.r1" } else { "moment.r2" }.into()));
            }
            Some(MomentSpec { q: raw.point("moment.q", center, 2)?, r1, r2 })
        } else {
            None
        };

        let eigencheck = EigenSpec {
            length: raw.positive("eigencheck.length", 1.0)?,
            nx: raw.count("eigencheck.nx", 400, 3)?,
            dt_u: raw.positive("eigencheck.dt_u", 1e-3)?,
            dt_c: raw.positive("eigencheck.dt_c", 1e-4)?,
            t_u: raw.positive("eigencheck.t_u", 0.8)?,
            t_c: raw.positive("eigencheck.t_c", 0.06)?,
            tolerance: raw.positive("eigencheck.tolerance", 0.02)?,
        };

        Ok(RunConfig {
            preset,
            seed,
            grid,
            params,
            control,
            stop,
            elliptic,
            schedule,
            init,
            output_dir,
            kinetics,
            scan,
            moment,
            eigencheck,
        })
    }

    pub fn require_grid(&self) -> Result<GridSpec> {
        self.grid.ok_or_else(|| ConfigError::Missing("grid.nx".into()))
    }

    /// Fully resolved configuration in the input syntax; parsing it back
    /// yields the same `RunConfig`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        if let Some(p) = &self.preset {
            line(w, "preset", p);
        }
        line(w, "seed", self.seed);
        if let Some(g) = &self.grid {
            section(w, "grid");
            line(w, "dim", g.dim);
            line(w, "lx", num(g.lx));
            if g.dim == 2 {
                line(w, "ly", num(g.ly));
            }
            line(w, "nx", g.nx);
            if g.dim == 2 {
                line(w, "ny", g.ny);
            }
        }
        let p = &self.params;
        section(w, "model");
        for (k, v) in [("d_c", p.d_c), ("d_n", p.d_n), ("alpha", p.alpha), ("beta", p.beta), ("gamma", p.gamma)] {
            line(w, k, num(v));
        }
        section(w, "growth");
        match &p.nonlinearities.growth {
            Growth::Tanh { scale, steepness, offset } => {
                line(w, "kind", "tanh");
                line(w, "scale", num(*scale));
                line(w, "steepness", num(*steepness));
                line(w, "offset", num(*offset));
            }
            Growth::Zero => line(w, "kind", "zero"),
            Growth::Tabulated(t) => render_table(w, t),
        }
        section(w, "death");
        match &p.nonlinearities.death {
            Death::Constant(b) => {
                line(w, "kind", "constant");
                line(w, "value", num(*b));
            }
            Death::Rational { b0, slope } => {
                line(w, "kind", "rational");
                line(w, "b0", num(*b0));
                line(w, "slope", num(*slope));
            }
            Death::Tabulated(t) => render_table(w, t),
        }
        section(w, "sensitivity");
        match p.nonlinearities.sensitivity {
            Sensitivity::Linear { chi0 } => {
                line(w, "kind", "linear");
                line(w, "chi0", num(chi0));
            }
            Sensitivity::Saturating { chi0, k } => {
                line(w, "kind", "saturating");
                line(w, "chi0", num(chi0));
                line(w, "k", num(k));
            }
        }
        let c = &self.control;
        section(w, "control");
        line(w, "mode", c.mode);
        line(w, "dt_init", num(c.dt_init));
        line(w, "dt_min", num(c.dt_min));
        line(w, "dt_max", num(c.dt_max));
        line(w, "cfl", num(c.cfl_advective));
        line(w, "reaction_safety", num(c.reaction_safety));
        line(w, "u_blowup", num(c.u_blowup_threshold));
        line(w, "flux", flux_name(c.flux));
        line(w, "detect_steady", self.stop.detect_steady);
        line(w, "steady_eps", num(self.stop.steady_eps));
        line(w, "steady_window", self.stop.steady_window);
        section(w, "elliptic");
        line(w, "tol", num(self.elliptic.residual_tol));
        line(w, "max_iter", self.elliptic.max_iterations);
        line(w, "preconditioner", if self.elliptic.spectral_preconditioner { "spectral" } else { "jacobi" });
        section(w, "schedule");
        line(w, "t_end", num(self.schedule.t_end));
        line(w, "series_interval", num(self.schedule.series_interval));
        line(w, "snapshot_interval", num(self.schedule.snapshot_interval));
        let dim = self.grid.map_or(1, |g| g.dim);
        for (name, init) in FIELD_NAMES.iter().zip(&self.init) {
            section(w, &format!("init.{name}"));
            render_init(w, init, dim);
        }
        section(w, "output");
        line(w, "dir", self.output_dir.display());
        let k = &self.kinetics;
        section(w, "kinetics");
        for (name, v) in ["u0", "c0", "n0", "w0"].iter().zip(k.s0) {
            line(w, name, num(v));
        }
        line(w, "dt", num(k.dt));
        line(w, "t_max", num(k.t_max));
        line(w, "tol", num(k.tol));
        line(w, "record_every", k.record_every);
        if let Some(scan) = &self.scan {
            section(w, "scan");
            line(w, "masses", nums(&scan.masses));
            line(w, "widths", nums(&scan.widths));
            line(w, "t_end", num(scan.t_end));
            if let Some(r) = scan.r1 {
                line(w, "r1", num(r));
            }
            if let Some(r) = scan.r2 {
                line(w, "r2", num(r));
            }
        }
        if let Some(m) = &self.moment {
            section(w, "moment");
            line(w, "q", nums(&m.q));
            line(w, "r1", num(m.r1));
            line(w, "r2", num(m.r2));
        }
        let e = &self.eigencheck;
        section(w, "eigencheck");
        line(w, "length", num(e.length));
        line(w, "nx", e.nx);
        line(w, "dt_u", num(e.dt_u));
        line(w, "dt_c", num(e.dt_c));
        line(w, "t_u", num(e.t_u));
        line(w, "t_c", num(e.t_c));
        line(w, "tolerance", num(e.tolerance));
        s
    }
}

fn resolve_grid(raw: &RawConfig, preset: bool) -> Result<Option<GridSpec>> {
    if !preset && !raw.has_section("grid") {
        return Ok(None);
    }
    let dim = match raw.parsed::<usize>("grid.dim", "1 or 2")? {
        Some((d @ (1 | 2), _)) => d,
        Some((_, origin)) => return Err(RawConfig::invalid("grid.dim", origin, "must be 1 or 2")),
        None if preset => 2,
        None => return Err(ConfigError::Missing("grid.dim".into())),
    };
    let required = |key: &str, preset_value: f64| -> Result<f64> {
        if !preset && !raw.has(key) {
            return Err(ConfigError::Missing(key.into()));
        }
        raw.positive(key, preset_value)
    };
    let lx = required("grid.lx", 16.0)?;
    let ly = if dim == 2 { raw.positive("grid.ly", lx)? } else { 1.0 };
    let cells = |key: &str, default: usize| -> Result<usize> {
        if !preset && !raw.has(key) {
            return Err(ConfigError::Missing(key.into()));
        }
        raw.count(key, default, 3)
    };
    let nx = cells("grid.nx", 128)?;
    let ny = if dim == 2 { if raw.has("grid.ny") { raw.count("grid.ny", nx, 3)? } else { nx } } else { 1 };
    Ok(Some(GridSpec { dim, lx, ly, nx, ny }))
}

fn resolve_table(raw: &RawConfig, section: &str) -> Result<Table> {
    let s_key = format!("{section}.s_max");
    let v_key = format!("{section}.values");
    let s_max = raw.positive(&s_key, f64::NAN)?;
    if s_max.is_nan() {
        return Err(ConfigError::Missing(s_key));
    }
    let (values, origin) = raw.list(&v_key)?.ok_or(ConfigError::Missing(v_key.clone()))?;
    Table::new(s_max, values).map_err(|e| RawConfig::invalid(&v_key, origin, e.to_string()))
}

fn resolve_model(raw: &RawConfig) -> Result<ModelParams> {
    let fig = ModelParams::fig2();
    let growth = match raw.word("growth.kind", "tanh") {
        ("tanh", _) => Growth::Tanh {
            scale: raw.real("growth.scale", 1.0)?,
            steepness: raw.real("growth.steepness", 100.0)?,
            offset: raw.real("growth.offset", 0.05)?,
        },
        ("zero", _) => Growth::Zero,
        ("tabulated", _) => Growth::Tabulated(resolve_table(raw, "growth")?),
        (other, origin) => {
            return Err(RawConfig::invalid(
                "growth.kind",
                origin.unwrap_or(Origin::Override),
                format!("expected tanh | zero | tabulated, got {other:?}"),
            ))
        }
    };
    let death = match raw.word("death.kind", "constant") {
        ("constant", _) => Death::Constant(raw.real("death.value", 0.05)?),
        ("rational", _) => Death::Rational { b0: raw.real("death.b0", 0.05)?, slope: raw.real("death.slope", 1.0)? },
        ("tabulated", _) => Death::Tabulated(resolve_table(raw, "death")?),
        (other, origin) => {
            return Err(RawConfig::invalid(
                "death.kind",
                origin.unwrap_or(Origin::Override),
                format!("expected constant | rational | tabulated, got {other:?}"),
            ))
        }
    };
    let sensitivity = match raw.word("sensitivity.kind", "saturating") {
        ("linear", _) => Sensitivity::Linear { chi0: raw.real("sensitivity.chi0", 0.053)? },
        ("saturating", _) => {
            Sensitivity::Saturating { chi0: raw.real("sensitivity.chi0", 0.053)?, k: raw.positive("sensitivity.k", 0.0625)? }
        }
        (other, origin) => {
            return Err(RawConfig::invalid(
                "sensitivity.kind",
                origin.unwrap_or(Origin::Override),
                format!("expected linear | saturating, got {other:?}"),
            ))
        }
    };
    Ok(ModelParams {
        d_c: raw.positive("model.d_c", fig.d_c)?,
        d_n: raw.positive("model.d_n", fig.d_n)?,
        alpha: raw.positive("model.alpha", fig.alpha)?,
        beta: raw.positive("model.beta", fig.beta)?,
        gamma: raw.positive("model.gamma", fig.gamma)?,
        nonlinearities: NonlinearitySpec { growth, death, sensitivity },
    })
}

fn resolve_control(raw: &RawConfig) -> Result<(StepControl, StopRules, EllipticSolveSettings)> {
    let d = StepControl::default();
    let mode = raw.choice(
        "control.mode",
        d.mode,
        &[("parabolic_parabolic", Mode::ParabolicParabolic), ("parabolic_elliptic", Mode::ParabolicElliptic)],
    )?;
    let unit = |v: f64| (v <= 0.0 || v > 1.0).then_some("must lie in (0, 1]");
    let control = StepControl {
        dt_init: raw.positive("control.dt_init", d.dt_init)?,
        dt_min: raw.positive("control.dt_min", d.dt_min)?,
        dt_max: raw.positive("control.dt_max", d.dt_max)?,
        cfl_advective: raw.real_checked("control.cfl", d.cfl_advective, unit)?,
        reaction_safety: raw.real_checked("control.reaction_safety", d.reaction_safety, unit)?,
        u_blowup_threshold: raw.positive("control.u_blowup", d.u_blowup_threshold)?,
        mode,
        flux: raw.choice(
            "control.flux",
            d.flux,
            &[("auto", FluxScheme::Auto), ("central", FluxScheme::Central), ("upwind", FluxScheme::Upwind)],
        )?,
    };
    if !(control.dt_min <= control.dt_init && control.dt_init <= control.dt_max) {
        let origin = raw.entries.get("control.dt_init").map_or(Origin::Override, |e| e.origin);
        return Err(RawConfig::invalid("control.dt_init", origin, "need dt_min ≤ dt_init ≤ dt_max"));
    }
    let s = StopRules::default();
    let stop = StopRules {
        detect_steady: raw.bool("control.detect_steady", s.detect_steady)?,
        steady_eps: raw.positive("control.steady_eps", s.steady_eps)?,
        steady_window: raw.count("control.steady_window", s.steady_window, 1)?,
    };
    let e = EllipticSolveSettings::default();
    let elliptic = EllipticSolveSettings {
        residual_tol: raw.positive("elliptic.tol", e.residual_tol)?,
        max_iterations: raw.count("elliptic.max_iter", e.max_iterations, 1)?,
        spectral_preconditioner: raw.choice(
            "elliptic.preconditioner",
            e.spectral_preconditioner,
            &[("spectral", true), ("jacobi", false)],
        )?,
    };
    Ok((control, stop, elliptic))
}

fn resolve_init(
    raw: &RawConfig,
    field: &str,
    default: Profile,
    dim: usize,
    center: [f64; 2],
    base: &Path,
) -> Result<FieldInit> {
    let key = |k: &str| format!("init.{field}.{k}");
    let default_kind = match &default {
        Profile::Constant(_) => "constant",
        Profile::Gaussians(_) => "gaussian",
        Profile::File(_) => "file",
    };
    let explicit = raw.has(&key("kind"));
    let profile = match raw.word(&key("kind"), default_kind) {
        ("constant", _) => {
            let d = if let (Profile::Constant(v), false) = (&default, explicit) { *v } else { 0.0 };
            Profile::Constant(raw.nonneg(&key("value"), d)?)
        }
        ("gaussian", _) => {
            let d = match (&default, explicit) {
                (Profile::Gaussians(b), false) if b.len() == 1 => b[0].clone(),
                _ => Bump { center, width: 0.5, mass: 1.0 },
            };
            Profile::Gaussians(vec![Bump {
                center: raw.point(&key("center"), d.center, dim)?,
                width: raw.positive(&key("width"), d.width)?,
                mass: raw.nonneg(&key("mass"), d.mass)?,
            }])
        }
        ("gaussians", _) => {
            let (masses, mo) = raw.list(&key("masses"))?.ok_or_else(|| ConfigError::Missing(key("masses")))?;
            let (widths, wo) = raw.list(&key("widths"))?.ok_or_else(|| ConfigError::Missing(key("widths")))?;
            let (centers, co) = raw.list(&key("centers"))?.ok_or_else(|| ConfigError::Missing(key("centers")))?;
            if masses.is_empty() || widths.len() != masses.len() {
                return Err(RawConfig::invalid(&key("widths"), wo, "need one width per mass"));
            }
            if centers.len() != dim * masses.len() {
                return Err(RawConfig::invalid(&key("centers"), co, format!("need {dim} coordinate(s) per mass")));
            }
            if masses.iter().any(|m| *m < 0.0) {
                return Err(RawConfig::invalid(&key("masses"), mo, "must be ≥ 0"));
            }
            if widths.iter().any(|w| *w <= 0.0) {
                return Err(RawConfig::invalid(&key("widths"), wo, "must be > 0"));
            }
            let bumps = (0..masses.len())
                .map(|i| Bump {
                    center: if dim == 2 { [centers[2 * i], centers[2 * i + 1]] } else { [centers[i], center[1]] },
                    width: widths[i],
                    mass: masses[i],
                })
                .collect();
            Profile::Gaussians(bumps)
        }
        ("file", _) => {
            let (p, origin) = raw.raw(&key("path")).ok_or_else(|| ConfigError::Missing(key("path")))?;
            let path = base.join(p);
            if !path.is_file() {
                return Err(RawConfig::invalid(&key("path"), origin, format!("file {} does not exist", path.display())));
            }
            Profile::File(path)
        }
        (other, origin) => {
            return Err(RawConfig::invalid(
                &key("kind"),
                origin.unwrap_or(Origin::Override),
                format!("expected constant | gaussian | gaussians | file, got {other:?}"),
            ))
        }
    };
    let noise = raw.real_checked(&key("noise"), 0.0, |v| (!(0.0..1.0).contains(&v)).then_some("must lie in [0, 1)"))?;
    Ok(FieldInit { profile, noise })
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn nums(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ")
}

fn flux_name(f: FluxScheme) -> &'static str {
    match f {
        FluxScheme::Auto => "auto",
        FluxScheme::Central => "central",
        FluxScheme::Upwind => "upwind",
    }
}

fn section(w: &mut String, name: &str) {
    let _ = write!(w, "\n[{name}]\n");
}

fn line(w: &mut String, key: &str, value: impl fmt::Display) {
    let _ = writeln!(w, "{key} = {value}");
}

fn render_table(w: &mut String, t: &Table) {
    line(w, "kind", "tabulated");
    line(w, "s_max", num(t.s_max()));
    line(w, "values", nums(t.values()));
}

fn render_init(w: &mut String, init: &FieldInit, dim: usize) {
    let coords = |c: [f64; 2]| if dim == 2 { nums(&c) } else { num(c[0]) };
    match &init.profile {
        Profile::Constant(v) => {
            line(w, "kind", "constant");
            line(w, "value", num(*v));
        }
        Profile::Gaussians(b) if b.len() == 1 => {
            line(w, "kind", "gaussian");
            line(w, "mass", num(b[0].mass));
            line(w, "width", num(b[0].width));
            line(w, "center", coords(b[0].center));
        }
        Profile::Gaussians(b) => {
            line(w, "kind", "gaussians");
            line(w, "masses", nums(&b.iter().map(|b| b.mass).collect::<Vec<_>>()));
            line(w, "widths", nums(&b.iter().map(|b| b.width).collect::<Vec<_>>()));
            let centers: Vec<String> = b.iter().map(|b| coords(b.center)).collect();
            line(w, "centers", centers.join(", "));
        }
        Profile::File(p) => {
            line(w, "kind", "file");
            line(w, "path", p.display());
        }
    }
    line(w, "noise", num(init.noise));
}
