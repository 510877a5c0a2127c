//! Initial fields from their configured profiles.

use std::path::Path;

use colony_core::stepper::SimState;
use colony_core::{Field, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Bump, FieldInit, Profile, RunConfig, FIELD_NAMES};

#[derive(Debug, thiserror::Error)]
pub enum InitError {
    #[error("cannot read initial data {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("initial data {path}: {msg}")]
    Format { path: String, msg: String },
    #[error("initial field {field}: {msg}")]
    Invalid { field: &'static str, msg: String },
}

/// Isotropic Gaussian exp(−r²/2σ²) sampled at cell centers and rescaled so
/// its discrete integral is exactly `mass`. The profile is cut off by the
/// domain; rescaling puts the truncated mass back.
pub fn gaussian(grid: &Grid, bump: &Bump) -> Field {
    let two_d = grid.dim() == 2;
    let [x0, y0] = bump.center;
    let s2 = 2.0 * bump.width * bump.width;
    let mut f = Field::from_fn(grid, |x, y| {
        let r2 = (x - x0).powi(2) + if two_d { (y - y0).powi(2) } else { 0.0 };
        (-r2 / s2).exp()
    });
    let total = f.integral();
    let scale = if total > 0.0 { bump.mass / total } else { 0.0 };
    f.values_mut().iter_mut().for_each(|v| *v *= scale);
    f
}

fn read_values(grid: &Grid, path: &Path) -> Result<Field, InitError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| InitError::Io { path: shown.clone(), source })?;
    let values = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| InitError::Format { path: shown.clone(), msg: format!("bad number {t:?}") }))
        .collect::<Result<Vec<f64>, _>>()?;
    if values.len() != grid.len() {
        return Err(InitError::Format {
            path: shown,
            msg: format!("expected {} values for the grid, found {}", grid.len(), values.len()),
        });
    }
    Ok(Field::from_values(grid, values).expect("length checked"))
}

pub fn build_field(grid: &Grid, init: &FieldInit, rng: &mut ChaCha8Rng) -> Result<Field, InitError> {
    let mut f = match &init.profile {
        Profile::Constant(v) => Field::constant(grid, *v),
        Profile::Gaussians(bumps) => {
            let mut f = Field::zeros(grid);
            for b in bumps {
                f.axpby(1.0, 1.0, &gaussian(grid, b));
            }
            f
        }
        Profile::File(p) => read_values(grid, p)?,
    };
    if init.noise > 0.0 {
        for v in f.values_mut() {
            *v *= 1.0 + init.noise * rng.gen_range(-1.0..1.0);
        }
    }
    Ok(f)
}

/// The configured initial state at t = 0. Noise for each field comes from
/// its own stream derived from the run seed.
pub fn initial_state(cfg: &RunConfig, grid: &Grid) -> Result<SimState, InitError> {
    let mut fields = Vec::with_capacity(4);
    for (k, (&name, init)) in FIELD_NAMES.iter().zip(&cfg.init).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k as u64);
        let f = build_field(grid, init, &mut rng)?;
        if !f.is_finite() || f.min() < 0.0 {
            return Err(InitError::Invalid { field: name, msg: "values must be finite and ≥ 0".into() });
        }
        fields.push(f);
    }
    let w = fields.pop().unwrap();
    let n = fields.pop().unwrap();
    let c = fields.pop().unwrap();
    let u = fields.pop().unwrap();
    Ok(SimState::new(u, c, n, w, 0.0).expect("fields validated"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::path::Path;

    #[test]
    fn gaussian_has_requested_mass_even_when_truncated() {
        let g = Grid::rect(4.0, 4.0, 64, 64).unwrap();
        for center in [[2.0, 2.0], [0.1, 0.3]] {
            let f = gaussian(&g, &Bump { center, width: 0.7, mass: 600.0 });
            assert_relative_eq!(f.integral(), 600.0, max_relative = 1e-13);
        }
        let g = Grid::line(10.0, 400).unwrap();
        let f = gaussian(&g, &Bump { center: [5.0, 0.0], width: 0.5, mass: 1.0 });
        assert_relative_eq!(f.integral(), 1.0, max_relative = 1e-13);
        assert_eq!(f.values()[199], f.values()[200]);
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let text = "seed = 11\n[grid]\ndim = 1\nlx = 1\nnx = 50\n[init.n]\nkind = constant\nvalue = 2\nnoise = 0.1\n";
        let cfg = RunConfig::from_text::<&str>(text, &[], Path::new(".")).unwrap();
        let g = cfg.grid.unwrap().build();
        let a = initial_state(&cfg, &g).unwrap();
        let b = initial_state(&cfg, &g).unwrap();
        assert_eq!(a, b);
        assert!(a.n.values().iter().all(|v| (1.8..=2.2).contains(v)));
        assert!(a.n.values().iter().any(|v| *v != 2.0));
        assert!(a.c.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn file_profile_checks_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.txt");
        std::fs::write(&path, "1 2 3\n4 5\n").unwrap();
        let g = Grid::line(1.0, 5).unwrap();
        let init = FieldInit { profile: Profile::File(path.clone()), noise: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = build_field(&g, &init, &mut rng).unwrap();
        assert_eq!(f.values(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let g = Grid::line(1.0, 6).unwrap();
        assert!(matches!(build_field(&g, &init, &mut rng), Err(InitError::Format { .. })));
    }
}
