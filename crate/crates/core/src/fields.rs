//! Scalar and vector fields on a MAC grid, stored with one ghost layer.
//!
//! Scalars (density, pressure) use zero-Neumann ghosts. Velocities use the
//! no-slip rule: normal components vanish on boundary faces and tangential
//! ghosts are the negated mirror of the first interior value.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Index, Shape, Staggering};

/// Boundary treatment applied when filling ghost layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryRule {
    NeumannZero,
    DirichletZero,
}

impl BoundaryRule {
    fn name(self) -> &'static str {
        match self {
            BoundaryRule::NeumannZero => "neumann-zero",
            BoundaryRule::DirichletZero => "dirichlet-zero",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarNorms {
    pub l2: f64,
    pub h1_semi: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorNorms {
    pub l2: f64,
    pub grad_l2: f64,
    pub linf: f64,
}

fn padded_scalar_shape(g: &GridSpec) -> Shape {
    let mut d = [1usize; 3];
    for a in 0..g.dim {
        d[a] = g.n[a] + 2;
    }
    Shape::new(d)
}

fn padded_component_shape(g: &GridSpec, comp: usize) -> Shape {
    let mut d = [1usize; 3];
    for a in 0..g.dim {
        d[a] = if a == comp { g.n[a] + 1 } else { g.n[a] + 2 };
    }
    Shape::new(d)
}

/// Cell-centered scalar with a Neumann ghost layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    data: Vec<f64>,
    filled: bool,
}

impl ScalarField {
    pub fn zeros(grid: &GridSpec) -> Self {
        ScalarField::constant(grid, 0.0)
    }

    pub fn constant(grid: &GridSpec, value: f64) -> Self {
        ScalarField { grid: *grid, data: vec![value; padded_scalar_shape(grid).len()], filled: true }
    }

    /// Values in cell (flat) order; ghosts are filled.
    pub fn from_values(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        Self::from_values_unfilled(grid, values)?.fill_ghosts(BoundaryRule::NeumannZero)
    }

    pub fn from_values_unfilled(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        let cells = grid.cell_shape();
        if values.len() != cells.len() {
            return Err(Error::invalid(format!("expected {} cell values, got {}", cells.len(), values.len())));
        }
        let ps = padded_scalar_shape(grid);
        let mut data = vec![0.0; ps.len()];
        for (f, v) in values.into_iter().enumerate() {
            data[ps.flat(pad_cell(grid, cells.unflat(f)))] = v;
        }
        Ok(ScalarField { grid: *grid, data, filled: false })
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: &GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = grid.cell_shape().indices().map(|i| f(grid.cell_center(i))).collect();
        Self::from_values(grid, values).expect("shape matches by construction")
    }

    pub fn fill_ghosts(mut self, rule: BoundaryRule) -> Result<Self> {
        if rule != BoundaryRule::NeumannZero {
            return Err(Error::BoundaryRule { rule: rule.name(), role: "scalar" });
        }
        let ps = padded_scalar_shape(&self.grid);
        for a in 0..self.grid.dim {
            let n = self.grid.n[a];
            for f in 0..ps.len() {
                let mut i = ps.unflat(f);
                let src = match i[a] {
                    0 => 1,
                    k if k == n + 1 => n,
                    _ => continue,
                };
                i[a] = src;
                self.data[f] = self.data[ps.flat(i)];
            }
        }
        self.filled = true;
        Ok(self)
    }

    pub fn ghosts_filled(&self) -> bool {
        self.filled
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn get(&self, i: Index) -> f64 {
        self.data[padded_scalar_shape(&self.grid).flat(pad_cell(&self.grid, i))]
    }

    /// Value at a cell index that may lie one layer outside the grid.
    #[inline]
    pub fn get_ext(&self, i: [isize; 3]) -> f64 {
        let mut p = [0usize; 3];
        for a in 0..3 {
            p[a] = if a < self.grid.dim { (i[a] + 1) as usize } else { 0 };
        }
        self.data[padded_scalar_shape(&self.grid).flat(p)]
    }

    pub fn values(&self) -> Vec<f64> {
        self.grid.cell_shape().indices().map(|i| self.get(i)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect(), filled: self.filled }
    }

    pub fn min(&self) -> f64 {
        self.values().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Midpoint quadrature of the field over the domain.
    pub fn integrate(&self) -> f64 {
        self.values().iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.integrate() / self.grid.domain_volume()
    }

    /// Field minus its mean.
    pub fn fluctuation(&self) -> ScalarField {
        let m = self.mean();
        self.map(|v| v - m)
    }

    pub fn l2_sq(&self) -> f64 {
        self.values().iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        let a = self.values();
        let b = other.values();
        a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() * self.grid.cell_volume()
    }

    /// Squared discrete H¹ seminorm from face differences.
    pub fn h1_semi_sq(&self) -> Result<f64> {
        if !self.filled {
            return Err(Error::GhostsUnfilled("scalar"));
        }
        let g = &self.grid;
        let mut s = 0.0;
        for a in g.axes() {
            for i in g.cell_shape().indices() {
                if i[a] == 0 {
                    continue;
                }
                let mut j = i;
                j[a] -= 1;
                let d = (self.get(i) - self.get(j)) / g.h[a];
                s += d * d;
            }
        }
        Ok(s * g.cell_volume())
    }

    pub fn norms(&self) -> Result<ScalarNorms> {
        if !self.filled {
            return Err(Error::GhostsUnfilled("scalar"));
        }
        let linf = self.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(ScalarNorms { l2: self.l2_sq().sqrt(), h1_semi: self.h1_semi_sq()?.sqrt(), linf })
    }

    pub fn add_scaled(&self, alpha: f64, other: &ScalarField) -> ScalarField {
        let v: Vec<f64> = self.values().iter().zip(other.values()).map(|(a, b)| a + alpha * b).collect();
        ScalarField::from_values(&self.grid, v).expect("same grid")
    }
}

#[inline]
fn pad_cell(g: &GridSpec, i: Index) -> Index {
    let mut p = i;
    for a in 0..g.dim {
        p[a] += 1;
    }
    p
}

/// Face-centered velocity with a no-slip ghost layer.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    comps: Vec<Vec<f64>>,
    filled: bool,
}

impl VectorField {
    pub fn zeros(grid: &GridSpec) -> Self {
        let comps = (0..grid.dim).map(|c| vec![0.0; padded_component_shape(grid, c).len()]).collect();
        VectorField { grid: *grid, comps, filled: true }
    }

    /// Component arrays in face order. Ghosts are not filled and boundary
    /// values are kept as given.
    pub fn from_face_values(grid: &GridSpec, faces: Vec<Vec<f64>>) -> Result<Self> {
        if faces.len() != grid.dim {
            return Err(Error::invalid(format!("expected {} components, got {}", grid.dim, faces.len())));
        }
        let mut comps = Vec::with_capacity(grid.dim);
        for (c, vals) in faces.into_iter().enumerate() {
            let fs = grid.face_shape(c);
            if vals.len() != fs.len() {
                return Err(Error::invalid(format!(
                    "component {c}: expected {} face values, got {}",
                    fs.len(),
                    vals.len()
                )));
            }
            let ps = padded_component_shape(grid, c);
            let mut data = vec![0.0; ps.len()];
            for (f, v) in vals.into_iter().enumerate() {
                data[ps.flat(pad_face(grid, c, fs.unflat(f)))] = v;
            }
            comps.push(data);
        }
        Ok(VectorField { grid: *grid, comps, filled: false })
    }

    /// Samples `f(component, x)` at face centers without touching boundary faces.
    pub fn from_fn_raw(grid: &GridSpec, f: impl Fn(usize, [f64; 3]) -> f64) -> Self {
        let faces = (0..grid.dim)
            .map(|c| grid.face_shape(c).indices().map(|i| f(c, grid.face_center(c, i))).collect())
            .collect();
        Self::from_face_values(grid, faces).expect("shape matches by construction")
    }

    /// Samples `f` at faces and applies the no-slip rule.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(usize, [f64; 3]) -> f64) -> Self {
        Self::from_fn_raw(grid, f)
            .fill_ghosts(BoundaryRule::DirichletZero)
            .expect("dirichlet rule is valid for vectors")
    }

    /// Zeroes normal boundary faces and mirrors tangential ghosts.
    pub fn fill_ghosts(mut self, rule: BoundaryRule) -> Result<Self> {
        if rule != BoundaryRule::DirichletZero {
            return Err(Error::BoundaryRule { rule: rule.name(), role: "velocity" });
        }
        let g = self.grid;
        for c in 0..g.dim {
            let ps = padded_component_shape(&g, c);
            let data = &mut self.comps[c];
            for f in 0..ps.len() {
                let i = ps.unflat(f);
                if i[c] == 0 || i[c] == g.n[c] {
                    data[f] = 0.0;
                }
            }
            for a in 0..g.dim {
                if a == c {
                    continue;
                }
                let n = g.n[a];
                for f in 0..ps.len() {
                    let mut i = ps.unflat(f);
                    let src = match i[a] {
                        0 => 1,
                        k if k == n + 1 => n,
                        _ => continue,
                    };
                    i[a] = src;
                    data[f] = -data[ps.flat(i)];
                }
            }
        }
        self.filled = true;
        Ok(self)
    }

    pub fn ghosts_filled(&self) -> bool {
        self.filled
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn get(&self, comp: usize, i: Index) -> f64 {
        self.comps[comp][padded_component_shape(&self.grid, comp).flat(pad_face(&self.grid, comp, i))]
    }

    /// Value at a face index; tangential indices may lie one layer outside.
    #[inline]
    pub fn get_ext(&self, comp: usize, i: [isize; 3]) -> f64 {
        let mut p = [0usize; 3];
        for a in 0..3 {
            p[a] = if a >= self.grid.dim {
                0
            } else if a == comp {
                i[a] as usize
            } else {
                (i[a] + 1) as usize
            };
        }
        self.comps[comp][padded_component_shape(&self.grid, comp).flat(p)]
    }

    pub fn face_values(&self, comp: usize) -> Vec<f64> {
        self.grid.face_shape(comp).indices().map(|i| self.get(comp, i)).collect()
    }

    /// Largest normal component found on a boundary face.
    pub fn max_boundary_normal(&self) -> f64 {
        let g = &self.grid;
        let mut m = 0.0f64;
        for c in g.axes() {
            for i in g.face_shape(c).indices() {
                if i[c] == 0 || i[c] == g.n[c] {
                    m = m.max(self.get(c, i).abs());
                }
            }
        }
        m
    }

    /// Weighted inner product over all faces.
    pub fn dot(&self, other: &VectorField) -> f64 {
        let mut s = 0.0;
        for c in self.grid.axes() {
            let a = self.face_values(c);
            let b = other.face_values(c);
            s += a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>();
        }
        s * self.grid.cell_volume()
    }

    pub fn l2_sq(&self) -> f64 {
        self.dot(self)
    }

    /// Squared discrete gradient norm summed over cell and edge locations.
    pub fn grad_l2_sq(&self) -> Result<f64> {
        if !self.filled {
            return Err(Error::GhostsUnfilled("velocity"));
        }
        let g = &self.grid;
        let mut s = 0.0;
        for i in g.axes() {
            for c in g.cell_shape().indices() {
                let mut up = c;
                up[i] += 1;
                let d = (self.get(i, up) - self.get(i, c)) / g.h[i];
                s += d * d;
            }
            for j in g.axes() {
                if j == i {
                    continue;
                }
                for e in g.shape(Staggering::tensor(i, j)).indices() {
                    let hi = [e[0] as isize, e[1] as isize, e[2] as isize];
                    let mut lo = hi;
                    lo[j] -= 1;
                    let d = (self.get_ext(i, hi) - self.get_ext(i, lo)) / g.h[j];
                    s += d * d;
                }
            }
        }
        Ok(s * g.cell_volume())
    }

    pub fn norms(&self) -> Result<VectorNorms> {
        let grad = self.grad_l2_sq()?;
        let mut linf = 0.0f64;
        for c in self.grid.axes() {
            linf = self.face_values(c).iter().fold(linf, |m, v| m.max(v.abs()));
        }
        Ok(VectorNorms { l2: self.l2_sq().sqrt(), grad_l2: grad.sqrt(), linf })
    }

    /// `self + alpha * other` with ghosts refilled.
    pub fn add_scaled(&self, alpha: f64, other: &VectorField) -> VectorField {
        let faces = (0..self.grid.dim)
            .map(|c| self.face_values(c).iter().zip(other.face_values(c)).map(|(a, b)| a + alpha * b).collect())
            .collect();
        let out = VectorField::from_face_values(&self.grid, faces).expect("same grid");
        if self.filled && other.filled {
            out.fill_ghosts(BoundaryRule::DirichletZero).expect("valid rule")
        } else {
            out
        }
    }

    pub fn scale(&self, alpha: f64) -> VectorField {
        VectorField::zeros(&self.grid).add_scaled(alpha, self)
    }
}

#[inline]
fn pad_face(g: &GridSpec, comp: usize, i: Index) -> Index {
    let mut p = i;
    for a in 0..g.dim {
        if a != comp {
            p[a] += 1;
        }
    }
    p
}

/// Two-point average of a cell scalar onto the faces normal to `axis`.
pub fn cell_to_face(field: &ScalarField, axis: usize) -> Result<Vec<f64>> {
    if !field.ghosts_filled() {
        return Err(Error::GhostsUnfilled("scalar"));
    }
    let g = field.grid();
    Ok(g.face_shape(axis)
        .indices()
        .map(|i| {
            let hi = [i[0] as isize, i[1] as isize, i[2] as isize];
            let mut lo = hi;
            lo[axis] -= 1;
            0.5 * (field.get_ext(hi) + field.get_ext(lo))
        })
        .collect())
}

/// Cell averages of each velocity component.
pub fn face_to_cell(field: &VectorField) -> Vec<ScalarField> {
    let g = field.grid();
    g.axes()
        .map(|c| {
            let vals = g
                .cell_shape()
                .indices()
                .map(|i| {
                    let mut up = i;
                    up[c] += 1;
                    0.5 * (field.get(c, i) + field.get(c, up))
                })
                .collect();
            ScalarField::from_values(g, vals).expect("shape matches")
        })
        .collect()
}
