//! Discrete operators on the MAC grid.
//!
//! Scalar stencils (gradient, divergence, Neumann Laplacian, upwind
//! advection) act on cell values. Velocity operators act on the interior
//! face unknowns enumerated by [`UnknownLayout`]. Gradient tensor entries
//! `∂_j v_i` are evaluated at their natural location: cell centers for
//! `i == j`, edges otherwise. Bilinear forms are built as sums of
//! weighted products of these location operators.

use crate::error::{Error, Result};
use crate::fields::{BoundaryRule, ScalarField, VectorField};
use crate::grid::{GridSpec, Index, Shape, Staggering};
use crate::sparse::{SparseSystem, Triplets};

/// Averaging of cell viscosities onto edge locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Arithmetic,
    Harmonic,
}

/// Numbering of velocity and pressure unknowns.
///
/// Velocity unknowns are the interior faces of each component, blocked by
/// component and flat face order inside a block. Pressure unknowns are all
/// cells except the pinned one, which removes the constant null space.
#[derive(Debug, Clone)]
pub struct UnknownLayout {
    grid: GridSpec,
    vel_map: Vec<Vec<usize>>,
    vel_faces: Vec<(usize, Index)>,
    pinned: usize,
}

impl UnknownLayout {
    pub fn new(grid: &GridSpec) -> Self {
        Self::with_pinned(grid, 0)
    }

    pub fn with_pinned(grid: &GridSpec, pinned: usize) -> Self {
        let mut vel_map = Vec::new();
        let mut vel_faces = Vec::new();
        for c in grid.axes() {
            let fs = grid.face_shape(c);
            let mut map = vec![usize::MAX; fs.len()];
            for (f, slot) in map.iter_mut().enumerate() {
                let i = fs.unflat(f);
                if i[c] > 0 && i[c] < grid.n[c] {
                    *slot = vel_faces.len();
                    vel_faces.push((c, i));
                }
            }
            vel_map.push(map);
        }
        UnknownLayout { grid: *grid, vel_map, vel_faces, pinned: pinned.min(grid.cells() - 1) }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n_velocity(&self) -> usize {
        self.vel_faces.len()
    }

    pub fn n_pressure(&self) -> usize {
        self.grid.cells() - 1
    }

    pub fn pinned_cell(&self) -> usize {
        self.pinned
    }

    /// Unknown number of an interior face, `None` on boundary faces.
    pub fn vel_index(&self, comp: usize, i: Index) -> Option<usize> {
        let k = self.vel_map[comp][self.grid.face_shape(comp).flat(i)];
        (k != usize::MAX).then_some(k)
    }

    pub fn vel_face(&self, k: usize) -> (usize, Index) {
        self.vel_faces[k]
    }

    /// Resolves a face reference that may point into the ghost layer into
    /// an unknown and the sign of the no-slip mirror.
    fn vel_ref(&self, comp: usize, i: [isize; 3]) -> Option<(usize, f64)> {
        let g = &self.grid;
        let mut j = [0usize; 3];
        let mut sign = 1.0;
        for a in 0..3 {
            if a >= g.dim {
                continue;
            }
            if a == comp {
                if i[a] <= 0 || i[a] >= g.n[a] as isize {
                    return None;
                }
                j[a] = i[a] as usize;
            } else if i[a] < 0 {
                j[a] = 0;
                sign = -sign;
            } else if i[a] >= g.n[a] as isize {
                j[a] = g.n[a] - 1;
                sign = -sign;
            } else {
                j[a] = i[a] as usize;
            }
        }
        self.vel_index(comp, j).map(|k| (k, sign))
    }

    pub fn velocity_to_vec(&self, v: &VectorField) -> Vec<f64> {
        self.vel_faces.iter().map(|&(c, i)| v.get(c, i)).collect()
    }

    pub fn vec_to_velocity(&self, x: &[f64]) -> VectorField {
        let g = &self.grid;
        let mut faces: Vec<Vec<f64>> = g.axes().map(|c| vec![0.0; g.face_shape(c).len()]).collect();
        for (k, &(c, i)) in self.vel_faces.iter().enumerate() {
            faces[c][g.face_shape(c).flat(i)] = x[k];
        }
        VectorField::from_face_values(g, faces)
            .and_then(|v| v.fill_ghosts(BoundaryRule::DirichletZero))
            .expect("layout shapes match the grid")
    }

    /// Cells carrying a pressure unknown, in unknown order.
    pub fn pressure_cells(&self) -> Vec<usize> {
        (0..self.grid.cells()).filter(|&c| c != self.pinned).collect()
    }

    pub fn pressure_to_field(&self, p: &[f64]) -> ScalarField {
        let mut vals = vec![0.0; self.grid.cells()];
        for (k, c) in self.pressure_cells().into_iter().enumerate() {
            vals[c] = p[k];
        }
        ScalarField::from_values(&self.grid, vals).expect("shape matches")
    }
}

fn signed(i: Index) -> [isize; 3] {
    [i[0] as isize, i[1] as isize, i[2] as isize]
}

/// Face gradient of a cell scalar; boundary faces are zero.
pub fn gradient(rho: &ScalarField) -> Result<VectorField> {
    if !rho.ghosts_filled() {
        return Err(Error::GhostsUnfilled("scalar"));
    }
    let g = rho.grid();
    let faces = g
        .axes()
        .map(|c| {
            g.face_shape(c)
                .indices()
                .map(|i| {
                    let hi = signed(i);
                    let mut lo = hi;
                    lo[c] -= 1;
                    (rho.get_ext(hi) - rho.get_ext(lo)) / g.h[c]
                })
                .collect()
        })
        .collect();
    VectorField::from_face_values(g, faces)?.fill_ghosts(BoundaryRule::DirichletZero)
}

/// Cell divergence of face values, boundary faces included as stored.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid();
    let vals = g
        .cell_shape()
        .indices()
        .map(|i| {
            let mut s = 0.0;
            for c in g.axes() {
                let mut up = i;
                up[c] += 1;
                s += (v.get(c, up) - v.get(c, i)) / g.h[c];
            }
            s
        })
        .collect();
    ScalarField::from_values(g, vals).expect("shape matches")
}

/// Discrete L² norm of the divergence.
pub fn divergence_l2(v: &VectorField) -> f64 {
    divergence(v).l2_sq().sqrt()
}

/// Zero-Neumann Laplacian as a cell-by-cell matrix.
pub fn laplacian_matrix(grid: &GridSpec) -> SparseSystem {
    let cs = grid.cell_shape();
    let mut t = Triplets::new(cs.len(), cs.len());
    for i in cs.indices() {
        let r = cs.flat(i);
        for a in grid.axes() {
            let w = 1.0 / (grid.h[a] * grid.h[a]);
            if i[a] > 0 {
                let mut j = i;
                j[a] -= 1;
                t.push(r, cs.flat(j), w);
                t.push(r, r, -w);
            }
            if i[a] + 1 < grid.n[a] {
                let mut j = i;
                j[a] += 1;
                t.push(r, cs.flat(j), w);
                t.push(r, r, -w);
            }
        }
    }
    t.build()
}

/// Applies the zero-Neumann Laplacian as a sum of neighbor differences, which
/// is exactly zero on constants (the assembled diagonal is not, in general).
pub fn laplacian(rho: &ScalarField) -> ScalarField {
    let g = *rho.grid();
    let cs = g.cell_shape();
    let vals = cs
        .indices()
        .map(|i| {
            let c = rho.get(i);
            let mut acc = 0.0;
            for a in g.axes() {
                let w = 1.0 / (g.h[a] * g.h[a]);
                if i[a] > 0 {
                    let mut j = i;
                    j[a] -= 1;
                    acc += w * (rho.get(j) - c);
                }
                if i[a] + 1 < g.n[a] {
                    let mut j = i;
                    j[a] += 1;
                    acc += w * (rho.get(j) - c);
                }
            }
            acc
        })
        .collect();
    ScalarField::from_values(&g, vals).expect("shape matches")
}

/// Conservative first-order upwind discretization of `div(ρ v)`.
///
/// Every face flux leaves one cell and enters its neighbor, so columns sum
/// to zero for any `v`. Rows sum to the cell divergence of `v`.
pub fn upwind_matrix(v: &VectorField) -> Result<SparseSystem> {
    let bn = v.max_boundary_normal();
    if bn != 0.0 {
        return Err(Error::BoundaryFlux(bn));
    }
    let g = v.grid();
    let cs = g.cell_shape();
    let mut t = Triplets::new(cs.len(), cs.len());
    for c in g.axes() {
        for i in g.face_shape(c).indices() {
            if i[c] == 0 || i[c] == g.n[c] {
                continue;
            }
            let flux = v.get(c, i) / g.h[c];
            let mut left = i;
            left[c] -= 1;
            let (l, r) = (cs.flat(left), cs.flat(i));
            let up = if flux > 0.0 { l } else { r };
            t.push(l, up, flux);
            t.push(r, up, -flux);
        }
    }
    Ok(t.build())
}

/// Cell divergence of interior face unknowns.
pub fn divergence_matrix(layout: &UnknownLayout) -> SparseSystem {
    let g = layout.grid();
    let cs = g.cell_shape();
    let mut t = Triplets::new(cs.len(), layout.n_velocity());
    for k in 0..layout.n_velocity() {
        let (c, i) = layout.vel_face(k);
        let mut left = i;
        left[c] -= 1;
        t.push(cs.flat(i), k, -1.0 / g.h[c]);
        t.push(cs.flat(left), k, 1.0 / g.h[c]);
    }
    t.build()
}

/// Divergence and gradient coupling blocks with `G = -Dᵀ` exactly.
///
/// Rows of the divergence block and columns of the gradient block run over
/// all cells; the pinned cell is removed when the saddle system is built.
pub fn pressure_blocks(layout: &UnknownLayout) -> (SparseSystem, SparseSystem) {
    let d = divergence_matrix(layout);
    let grad = d.transpose().scale(-1.0);
    (d, grad)
}

/// Enumerates products of the listed index options.
fn combos(options: &[Vec<(isize, f64)>], base: [isize; 3], axes: &[usize]) -> Vec<([isize; 3], f64)> {
    let mut out = vec![(base, 1.0)];
    for (opts, &a) in options.iter().zip(axes) {
        let mut next = Vec::with_capacity(out.len() * opts.len());
        for (idx, w) in &out {
            for &(o, ow) in opts {
                let mut j = *idx;
                j[a] = o;
                next.push((j, w * ow));
            }
        }
        out = next;
    }
    out
}

/// Location operators for velocity gradients on a fixed grid.
#[derive(Debug, Clone)]
pub struct VelocityCalculus {
    layout: UnknownLayout,
    /// `d[i][j]` evaluates `∂_j v_i` at the `(i, j)` location.
    d: Vec<Vec<SparseSystem>>,
    /// `p[i][j][0]` interpolates `v_i`, `p[i][j][1]` interpolates `v_j`.
    p: Vec<Vec<[SparseSystem; 2]>>,
}

impl VelocityCalculus {
    pub fn new(layout: &UnknownLayout) -> Self {
        let g = *layout.grid();
        let mut d = Vec::new();
        let mut p = Vec::new();
        for i in g.axes() {
            let mut di = Vec::new();
            let mut pi = Vec::new();
            for j in g.axes() {
                di.push(Self::build_derivative(layout, i, j));
                pi.push([Self::build_interp(layout, i, j, i), Self::build_interp(layout, i, j, j)]);
            }
            d.push(di);
            p.push(pi);
        }
        VelocityCalculus { layout: layout.clone(), d, p }
    }

    pub fn layout(&self) -> &UnknownLayout {
        &self.layout
    }

    pub fn grid(&self) -> &GridSpec {
        self.layout.grid()
    }

    pub fn location_shape(&self, i: usize, j: usize) -> Shape {
        self.grid().shape(Staggering::tensor(i, j))
    }

    pub fn derivative(&self, i: usize, j: usize) -> &SparseSystem {
        &self.d[i][j]
    }

    /// Interpolation of `v_k` onto the `(i, j)` location, `k ∈ {i, j}`.
    pub fn interp(&self, i: usize, j: usize, k: usize) -> &SparseSystem {
        if k == i {
            &self.p[i][j][0]
        } else {
            debug_assert_eq!(k, j);
            &self.p[i][j][1]
        }
    }

    fn build_derivative(layout: &UnknownLayout, i: usize, j: usize) -> SparseSystem {
        let g = layout.grid();
        let ls = g.shape(Staggering::tensor(i, j));
        let mut t = Triplets::new(ls.len(), layout.n_velocity());
        for e in ls.indices() {
            let r = ls.flat(e);
            let hi = if i == j {
                let mut up = signed(e);
                up[i] += 1;
                up
            } else {
                signed(e)
            };
            let mut lo = hi;
            lo[j] -= 1;
            if let Some((k, s)) = layout.vel_ref(i, hi) {
                t.push(r, k, s / g.h[j]);
            }
            if let Some((k, s)) = layout.vel_ref(i, lo) {
                t.push(r, k, -s / g.h[j]);
            }
        }
        t.build()
    }

    fn build_interp(layout: &UnknownLayout, i: usize, j: usize, k: usize) -> SparseSystem {
        let g = layout.grid();
        let st = Staggering::tensor(i, j);
        let ls = g.shape(st);
        let mut t = Triplets::new(ls.len(), layout.n_velocity());
        let mut axes = Vec::new();
        let mut opts = Vec::new();
        if i == j {
            axes.push(k);
            opts.push(vec![(0, 0.5), (1, 0.5)]);
        } else {
            let other = if k == i { j } else { i };
            axes.push(other);
            opts.push(vec![(-1, 0.5), (0, 0.5)]);
        }
        for e in ls.indices() {
            let r = ls.flat(e);
            let base = signed(e);
            let rel: Vec<Vec<(isize, f64)>> =
                opts.iter().zip(&axes).map(|(o, &a)| o.iter().map(|&(d, w)| (base[a] + d, w)).collect()).collect();
            for (idx, w) in combos(&rel, base, &axes) {
                if let Some((u, s)) = layout.vel_ref(k, idx) {
                    t.push(r, u, s * w);
                }
            }
        }
        t.build()
    }

    /// Cell-averaged scalar at the `(i, j)` locations, Neumann ghosts.
    pub fn scalar_at(&self, values: &ScalarField, i: usize, j: usize, avg: Averaging) -> Vec<f64> {
        let st = Staggering::tensor(i, j);
        let ls = self.grid().shape(st);
        let axes: Vec<usize> = self.grid().axes().filter(|&a| st.on_gridline[a]).collect();
        ls.indices()
            .map(|e| {
                let base = signed(e);
                let rel: Vec<Vec<(isize, f64)>> =
                    axes.iter().map(|&a| vec![(base[a] - 1, 1.0), (base[a], 1.0)]).collect();
                let pts = combos(&rel, base, &axes);
                let n = pts.len() as f64;
                match avg {
                    Averaging::Arithmetic => pts.iter().map(|(p, _)| values.get_ext(*p)).sum::<f64>() / n,
                    Averaging::Harmonic => n / pts.iter().map(|(p, _)| 1.0 / values.get_ext(*p)).sum::<f64>(),
                }
            })
            .collect()
    }

    /// `∂_k ρ` averaged from faces onto the `(i, j)` locations.
    pub fn grad_at(&self, rho: &ScalarField, k: usize, i: usize, j: usize) -> Vec<f64> {
        let g = *self.grid();
        let st = Staggering::tensor(i, j);
        let ls = g.shape(st);
        let face_grad = |f: [isize; 3]| -> f64 {
            let mut c = f;
            for a in g.axes() {
                if a != k {
                    c[a] = c[a].clamp(0, g.n[a] as isize - 1);
                }
            }
            let mut lo = c;
            lo[k] -= 1;
            (rho.get_ext(c) - rho.get_ext(lo)) / g.h[k]
        };
        let mut axes = Vec::new();
        let mut offs = Vec::new();
        for a in g.axes() {
            if a == k && !st.on_gridline[a] {
                axes.push(a);
                offs.push([0isize, 1]);
            } else if a != k && st.on_gridline[a] {
                axes.push(a);
                offs.push([-1isize, 0]);
            }
        }
        ls.indices()
            .map(|e| {
                let base = signed(e);
                let rel: Vec<Vec<(isize, f64)>> =
                    axes.iter().zip(&offs).map(|(&a, o)| o.iter().map(|&d| (base[a] + d, 1.0)).collect()).collect();
                let pts = combos(&rel, base, &axes);
                pts.iter().map(|(p, _)| face_grad(*p)).sum::<f64>() / pts.len() as f64
            })
            .collect()
    }

    /// All `∂_j v_i` location values of a velocity, by pair.
    pub fn gradient_tensor(&self, v: &[f64]) -> Vec<Vec<Vec<f64>>> {
        self.d.iter().map(|row| row.iter().map(|m| m.matvec(v)).collect()).collect()
    }

    /// `‖∇v‖²` from the location operators.
    pub fn grad_l2_sq(&self, v: &[f64]) -> f64 {
        let vol = self.grid().cell_volume();
        self.gradient_tensor(v).iter().flatten().flatten().map(|x| x * x).sum::<f64>() * vol
    }
}

/// Accumulates `scale * Σ_L w_L test[L,·]ᵀ trial[L,·]` as matrix entries.
pub fn add_weighted_product(t: &mut Triplets, test: &SparseSystem, w: &[f64], trial: &SparseSystem, scale: f64) {
    for l in 0..test.n_rows {
        let wl = scale * w[l];
        if wl == 0.0 {
            continue;
        }
        for (r, a) in test.row(l) {
            for (c, b) in trial.row(l) {
                t.push(r, c, wl * a * b);
            }
        }
    }
}

/// Accumulates `scale * Σ_L w_L test[L,·]` into a load vector.
pub fn add_weighted_load(load: &mut [f64], test: &SparseSystem, w: &[f64], scale: f64) {
    for l in 0..test.n_rows {
        let wl = scale * w[l];
        if wl == 0.0 {
            continue;
        }
        for (r, a) in test.row(l) {
            load[r] += wl * a;
        }
    }
}
