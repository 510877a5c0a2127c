//! Uniform cell-centered grids on intervals and rectangles, scalar fields on
//! them, and the two spatial operators of the model: the zero-flux
//! Laplacian and the conservative chemotactic divergence.
//!
//! Cells are stored row-major with `x` varying fastest: cell `(i, j)` lives at
//! index `j * nx + i`. A 1D grid is a single row (`ny == 1`).

use std::f64::consts::PI;

use thiserror::Error;

use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("expected {expected} extents/cell counts for a {expected}D grid, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("extent along axis {axis} must be positive and finite, got {value}")]
    Extent { axis: usize, value: f64 },
    #[error("cells along axis {axis} must be >= 3, got {value}")]
    Cells { axis: usize, value: usize },
    #[error("field has {got} values but the grid has {expected} cells")]
    Length { expected: usize, got: usize },
    #[error("fields live on different grids")]
    Mismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    cells: [usize; 2],
    spacing: [f64; 2],
}

impl Grid {
    /// Build a grid from per-axis extents and cell counts.
    pub fn new(dim: usize, extents: &[f64], cells: &[usize]) -> Result<Self, GridError> {
        if dim != 1 && dim != 2 {
            return Err(GridError::Dimension(dim));
        }
        if extents.len() != dim {
            return Err(GridError::Arity { expected: dim, got: extents.len() });
        }
        if cells.len() != dim {
            return Err(GridError::Arity { expected: dim, got: cells.len() });
        }
        let mut g = Grid { dim, extents: [1.0; 2], cells: [1; 2], spacing: [1.0; 2] };
        for axis in 0..dim {
            let (l, n) = (extents[axis], cells[axis]);
            if !(l > 0.0 && l.is_finite()) {
                return Err(GridError::Extent { axis, value: l });
            }
            if n < 3 {
                return Err(GridError::Cells { axis, value: n });
            }
            g.extents[axis] = l;
            g.cells[axis] = n;
            g.spacing[axis] = l / n as f64;
        }
        Ok(g)
    }

    pub fn line(length: f64, nx: usize) -> Result<Self, GridError> {
        Self::new(1, &[length], &[nx])
    }

    pub fn rect(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self, GridError> {
        Self::new(2, &[lx, ly], &[nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn nx(&self) -> usize {
        self.cells[0]
    }
    pub fn ny(&self) -> usize {
        self.cells[1]
    }
    pub fn hx(&self) -> f64 {
        self.spacing[0]
    }
    /// Spacing along `y`; 1.0 on a 1D grid.
    pub fn hy(&self) -> f64 {
        self.spacing[1]
    }
    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }
    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }
    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }
    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length, area: the product of the per-axis spacings.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    /// |Ω|, reproduced from spacing times cell count.
    pub fn measure(&self) -> f64 {
        self.spacing().iter().zip(self.cells()).map(|(h, &n)| h * n as f64).product()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    /// Cell center of flat index `k`; `y` is 0 on a 1D grid.
    pub fn center(&self, k: usize) -> [f64; 2] {
        let (i, j) = (k % self.cells[0], k / self.cells[0]);
        let y = if self.dim == 2 { (j as f64 + 0.5) * self.spacing[1] } else { 0.0 };
        [(i as f64 + 0.5) * self.spacing[0], y]
    }

    /// Geometric center of the domain.
    pub fn domain_center(&self) -> [f64; 2] {
        let y = if self.dim == 2 { 0.5 * self.extents[1] } else { 0.0 };
        [0.5 * self.extents[0], y]
    }

    /// Smallest nonzero eigenvalue of the continuous Neumann problem for -Δ
    /// on this interval or rectangle: (π / L_max)².
    pub fn first_neumann_eigenvalue(&self) -> f64 {
        let l_max = self.extents().iter().copied().fold(0.0, f64::max);
        (PI / l_max).powi(2)
    }
}

/// Free-function form of [`Grid::first_neumann_eigenvalue`].
pub fn first_neumann_eigenvalue(grid: &Grid) -> f64 {
    grid.first_neumann_eigenvalue()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Field { grid: *grid, values: vec![value; grid.len()] }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: values.len() });
        }
        Ok(Field { grid: *grid, values })
    }

    /// Sample `f(x, y)` at cell centers.
    pub fn from_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        let mut values = vec![0.0; grid.len()];
        par::fill_indexed(&mut values, |k| {
            let [x, y] = grid.center(k);
            f(x, y)
        });
        Field { grid: *grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &Field) -> Result<(), GridError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(GridError::Mismatch)
        }
    }

    pub fn sum(&self) -> f64 {
        par::sum(&self.values)
    }

    /// Midpoint-rule integral over Ω.
    pub fn integral(&self) -> f64 {
        self.sum() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        let v = &self.values;
        par::reduce_indexed(v.len(), f64::NEG_INFINITY, |i| v[i], f64::max)
    }

    pub fn min(&self) -> f64 {
        let v = &self.values;
        par::reduce_indexed(v.len(), f64::INFINITY, |i| v[i], f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        let v = &self.values;
        par::reduce_indexed(v.len(), 0.0, |i| v[i].abs(), f64::max)
    }

    pub fn l1_norm(&self) -> f64 {
        let v = &self.values;
        par::sum_indexed(v.len(), |i| v[i].abs()) * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.dot(self) * self.grid.cell_volume()).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// Plain Euclidean inner product of the value vectors.
    pub fn dot(&self, other: &Field) -> f64 {
        let (a, b) = (&self.values, &other.values);
        par::sum_indexed(a.len(), |i| a[i] * b[i])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self = a * self + b * other`.
    pub fn axpby(&mut self, a: f64, b: f64, other: &Field) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x = a * *x + b * y;
        }
    }
}

/// Second-order central-difference Laplacian with mirror ghost cells, i.e.
/// zero normal derivative on every boundary face.
pub fn laplacian_neumann(f: &Field) -> Field {
    let g = *f.grid();
    let mut out = Field::zeros(&g);
    let src = f.values();
    let (nx, ny) = (g.nx(), g.ny());
    let (ihx2, ihy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let two_d = g.dim() == 2;
    par::fill_indexed(out.values_mut(), |k| {
        let (i, j) = (k % nx, k / nx);
        let fc = src[k];
        let mut acc = 0.0;
        if i > 0 {
            acc += (src[k - 1] - fc) * ihx2;
        }
        if i + 1 < nx {
            acc += (src[k + 1] - fc) * ihx2;
        }
        if two_d {
            if j > 0 {
                acc += (src[k - nx] - fc) * ihy2;
            }
            if j + 1 < ny {
                acc += (src[k + nx] - fc) * ihy2;
            }
        }
        acc
    });
    out
}

/// How the cell density is carried to a face in the chemotactic flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluxScheme {
    /// Arithmetic average, switching to donor-cell where the face Péclet
    /// number |v|h/2 exceeds one.
    #[default]
    Auto,
    Central,
    Upwind,
}

impl FluxScheme {
    #[inline]
    fn face_density(self, v: f64, h: f64, left: f64, right: f64) -> f64 {
        let upwind = match self {
            FluxScheme::Central => false,
            FluxScheme::Upwind => true,
            FluxScheme::Auto => 0.5 * v.abs() * h > 1.0,
        };
        if upwind {
            if v >= 0.0 {
                left
            } else {
                right
            }
        } else {
            0.5 * (left + right)
        }
    }
}

/// Evaluate `chi` on every cell of `c`.
pub fn map_field<F>(c: &Field, chi: F) -> Field
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let mut out = Field::zeros(c.grid());
    let src = c.values();
    par::fill_indexed(out.values_mut(), |k| chi(src[k]));
    out
}

/// Conservative face-flux discretization of ∇·(u ∇χ(c)) with zero flux
/// through boundary faces. `chi_c` holds χ(c) per cell.
pub fn chemotactic_divergence_from_potential(
    u: &Field,
    chi_c: &Field,
    scheme: FluxScheme,
) -> Result<Field, GridError> {
    u.same_grid(chi_c)?;
    let g = *u.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let two_d = g.dim() == 2;
    let (uv, pv) = (u.values(), chi_c.values());
    // Flux from cell a to its +axis neighbour b.
    let flux = |a: usize, b: usize, h: f64| {
        let v = (pv[b] - pv[a]) / h;
        v * scheme.face_density(v, h, uv[a], uv[b])
    };
    let mut out = Field::zeros(&g);
    par::fill_indexed(out.values_mut(), |k| {
        let (i, j) = (k % nx, k / nx);
        let mut div = 0.0;
        if i + 1 < nx {
            div += flux(k, k + 1, hx) / hx;
        }
        if i > 0 {
            div -= flux(k - 1, k, hx) / hx;
        }
        if two_d {
            if j + 1 < ny {
                div += flux(k, k + nx, hy) / hy;
            }
            if j > 0 {
                div -= flux(k - nx, k, hy) / hy;
            }
        }
        div
    });
    Ok(out)
}

/// ∇·(u ∇χ(c)) for a sensitivity function `chi`.
pub fn chemotactic_divergence<F>(
    u: &Field,
    c: &Field,
    chi: F,
    scheme: FluxScheme,
) -> Result<Field, GridError>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    u.same_grid(c)?;
    chemotactic_divergence_from_potential(u, &map_field(c, chi), scheme)
}

/// Largest |v|/h over interior faces, summed over axes, where
/// v = (χ(c_{k+1}) − χ(c_k)) / h. This is the donor-cell CFL rate.
pub fn advective_rate(chi_c: &Field) -> f64 {
    let g = chi_c.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let p = chi_c.values();
    let hx2 = g.hx() * g.hx();
    let mut rate = par::reduce_indexed(
        g.len(),
        0.0,
        |k| if k % nx + 1 < nx { (p[k + 1] - p[k]).abs() / hx2 } else { 0.0 },
        f64::max,
    );
    if g.dim() == 2 {
        let hy2 = g.hy() * g.hy();
        rate += par::reduce_indexed(
            g.len(),
            0.0,
            |k| if k / nx + 1 < ny { (p[k + nx] - p[k]).abs() / hy2 } else { 0.0 },
            f64::max,
        );
    }
    rate
}
