//! Refinement studies: cross-level restriction, a seeded family of smooth
//! test functions, the weak dual norm, discrete weak-form residuals and
//! Cauchy distances between trajectories.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::{cell_to_face, BoundaryRule, ScalarField, VectorField};
use crate::grid::GridSpec;
use crate::momentum::{assemble_momentum_blocks, MomentumInputs};
use crate::operators::{laplacian, upwind_matrix, UnknownLayout, VelocityCalculus};
use crate::scenario::Scenario;
use crate::time_loop::{run, RunFailure, Trajectory};

pub const DEFAULT_FAMILY_SIZE: usize = 16;
pub const DEFAULT_FAMILY_SEED: u64 = 0x6b73_6d69;

fn nested_factor(fine: &GridSpec, coarse: &GridSpec) -> Result<usize> {
    fine.refinement_factor(coarse)
        .ok_or_else(|| Error::invalid(format!("grid {:?} is not a refinement of {:?}", fine.n, coarse.n)))
}

/// Volume-average restriction of a cell field.
pub fn restrict_scalar(fine: &ScalarField, coarse: &GridSpec) -> Result<ScalarField> {
    let r = nested_factor(fine.grid(), coarse)?;
    let fg = fine.grid();
    let mut sums = vec![0.0; coarse.cells()];
    let cs = coarse.cell_shape();
    for i in fg.cell_shape().indices() {
        let mut c = [0; 3];
        for a in fg.axes() {
            c[a] = i[a] / r;
        }
        sums[cs.flat(c)] += fine.get(i);
    }
    let w = (r as f64).powi(coarse.dim as i32);
    ScalarField::from_values(coarse, sums.into_iter().map(|s| s / w).collect())
}

/// Area-average restriction of a face field onto coarse faces.
pub fn restrict_vector(fine: &VectorField, coarse: &GridSpec) -> Result<VectorField> {
    let r = nested_factor(fine.grid(), coarse)?;
    let fg = fine.grid();
    let w = (r as f64).powi(coarse.dim as i32 - 1);
    let faces = coarse
        .axes()
        .map(|c| {
            let shape = coarse.face_shape(c);
            let mut sums = vec![0.0; shape.len()];
            for i in fg.face_shape(c).indices() {
                if i[c] % r != 0 {
                    continue;
                }
                let mut k = [0; 3];
                for a in fg.axes() {
                    k[a] = i[a] / r;
                }
                sums[shape.flat(k)] += fine.get(c, i);
            }
            sums.into_iter().map(|s| s / w).collect()
        })
        .collect();
    VectorField::from_face_values(coarse, faces)?.fill_ghosts(BoundaryRule::DirichletZero)
}

/// Face-averaged density times velocity.
pub fn momentum_density(rho: &ScalarField, v: &VectorField) -> Result<VectorField> {
    let g = rho.grid();
    let faces = g
        .axes()
        .map(|c| Ok(cell_to_face(rho, c)?.iter().zip(v.face_values(c)).map(|(r, u)| r * u).collect()))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    VectorField::from_face_values(g, faces)?.fill_ghosts(BoundaryRule::DirichletZero)
}

/// Smooth compactly supported bump on `(c - r, c + r)`.
fn bump(s: f64, c: f64, r: f64) -> f64 {
    let q = (s - c) / r;
    if q.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - q * q)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BumpParams {
    center: [f64; 3],
    radius: [f64; 3],
}

impl BumpParams {
    fn sample(rng: &mut ChaCha8Rng, grid: &GridSpec) -> Self {
        let mut center = [0.0; 3];
        let mut radius = [1.0; 3];
        for a in grid.axes() {
            let l = grid.extent[a];
            let margin = 2.0 * grid.h[a];
            let rmax = 0.5 * l - margin;
            let r = rng.random_range(0.5..1.0) * rmax.min(0.35 * l);
            let (lo, hi) = (margin + r, l - margin - r);
            radius[a] = r;
            center[a] = if hi > lo { rng.random_range(lo..hi) } else { 0.5 * l };
        }
        BumpParams { center, radius }
    }

    fn eval(&self, grid: &GridSpec, x: [f64; 3]) -> f64 {
        grid.axes().map(|a| bump(x[a], self.center[a], self.radius[a])).product()
    }
}

/// Finite family of test functions: scalars vanishing on the two
/// boundary cell layers and discretely solenoidal face fields, all with
/// unit discrete `W^{1,∞}` norm.
#[derive(Debug, Clone)]
pub struct TestFamily {
    pub grid: GridSpec,
    pub seed: u64,
    pub scalars: Vec<ScalarField>,
    pub vectors: Vec<VectorField>,
}

/// `max(‖φ‖_∞, max |D φ|)` over cells and faces.
pub fn scalar_w1inf(phi: &ScalarField) -> Result<f64> {
    let grad = crate::operators::gradient(phi)?;
    Ok(phi.norms()?.linf.max(grad.norms()?.linf))
}

/// `max(‖φ‖_∞, max |∂_j φ_i|)` over faces and tensor locations.
pub fn vector_w1inf(phi: &VectorField) -> f64 {
    let g = *phi.grid();
    let mut m = g.axes().flat_map(|c| phi.face_values(c)).fold(0.0f64, |m, v| m.max(v.abs()));
    for i in g.axes() {
        for j in g.axes() {
            let shape = if i == j { g.cell_shape() } else { g.shape(crate::grid::Staggering::tensor(i, j)) };
            for k in shape.indices() {
                let base = [k[0] as isize, k[1] as isize, k[2] as isize];
                let (lo, hi) = if i == j {
                    let mut hi = base;
                    hi[i] += 1;
                    (base, hi)
                } else {
                    let mut lo = base;
                    lo[j] -= 1;
                    (lo, base)
                };
                m = m.max(((phi.get_ext(i, hi) - phi.get_ext(i, lo)) / g.h[j]).abs());
            }
        }
    }
    m
}

impl TestFamily {
    pub fn new(grid: &GridSpec, size: usize, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("test family must not be empty"));
        }
        if grid.axes().any(|a| grid.n[a] < 6) {
            return Err(Error::invalid("test family needs at least 6 cells per axis"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_scalar = size.div_ceil(2);
        let mut scalars = Vec::with_capacity(n_scalar);
        for _ in 0..n_scalar {
            let b = BumpParams::sample(&mut rng, grid);
            let raw = ScalarField::from_fn(grid, |x| b.eval(grid, x));
            let vals: Vec<f64> = grid
                .cell_shape()
                .indices()
                .zip(raw.values())
                .map(|(i, v)| if grid.axes().all(|a| i[a] >= 2 && i[a] + 2 < grid.n[a]) { v } else { 0.0 })
                .collect();
            let phi = ScalarField::from_values(grid, vals)?;
            let norm = scalar_w1inf(&phi)?;
            scalars.push(phi.map(|v| v / norm));
        }
        let mut vectors = Vec::with_capacity(size - n_scalar);
        for _ in n_scalar..size {
            let b = BumpParams::sample(&mut rng, grid);
            let (p, q) = if grid.dim == 3 {
                let k = rng.random_range(0..3usize);
                ((k + 1) % 3, (k + 2) % 3)
            } else {
                (0, 1)
            };
            let phi = curl_field(grid, p, q, |x| b.eval(grid, x));
            let norm = vector_w1inf(&phi);
            vectors.push(phi.scale(1.0 / norm));
        }
        Ok(TestFamily { grid: *grid, seed, scalars, vectors })
    }

    pub fn default_for(grid: &GridSpec) -> Result<Self> {
        TestFamily::new(grid, DEFAULT_FAMILY_SIZE, DEFAULT_FAMILY_SEED)
    }

    pub fn len(&self) -> usize {
        self.scalars.len() + self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Discrete curl of a stream function sampled at edges of the `(p, q)` plane:
/// `φ_p = ∂_q ψ`, `φ_q = -∂_p ψ`.
pub fn curl_field(grid: &GridSpec, p: usize, q: usize, psi: impl Fn([f64; 3]) -> f64) -> VectorField {
    let shift = |x: [f64; 3], a: usize, s: f64| {
        let mut y = x;
        y[a] += s * grid.h[a];
        y
    };
    VectorField::from_fn(grid, |c, x| {
        if c == p {
            (psi(shift(x, q, 0.5)) - psi(shift(x, q, -0.5))) / grid.h[q]
        } else if c == q {
            -(psi(shift(x, p, 0.5)) - psi(shift(x, p, -0.5))) / grid.h[p]
        } else {
            0.0
        }
    })
}

/// `max_φ |(w, φ)|` over the vector members.
pub fn weak_dual_norm(field: &VectorField, family: &TestFamily) -> Result<f64> {
    if family.vectors.is_empty() {
        return Err(Error::invalid("test family has no vector members"));
    }
    if field.grid() != &family.grid {
        return Err(Error::invalid("field and test family live on different grids"));
    }
    Ok(family.vectors.iter().map(|phi| field.dot(phi).abs()).fold(0.0, f64::max))
}

/// Temporal factor `cos²(πt / (1.5T))` on `[0, 0.75T]`, zero afterwards.
pub fn temporal_factor(t: f64, t_final: f64) -> (f64, f64) {
    let w = std::f64::consts::PI / (1.5 * t_final);
    if t >= 0.75 * t_final {
        return (0.0, 0.0);
    }
    let c = (w * t).cos();
    (c * c, -w * (2.0 * w * t).sin())
}

/// Time profile `g` of the separable tests `g(t)φ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TemporalProfile {
    /// [`temporal_factor`], vanishing on the last quarter of the run.
    #[default]
    Cutoff,
    /// `g ≡ 1`; the terminal term then carries the time derivative.
    Constant,
}

impl TemporalProfile {
    fn eval(self, t: f64, t_final: f64) -> (f64, f64) {
        match self {
            TemporalProfile::Cutoff => temporal_factor(t, t_final),
            TemporalProfile::Constant => (1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakResiduals {
    /// Density residual per scalar test.
    pub density: Vec<f64>,
    pub density_scale: Vec<f64>,
    /// Momentum residual per vector test.
    pub momentum: Vec<f64>,
    pub momentum_scale: Vec<f64>,
}

impl WeakResiduals {
    pub fn density_max(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }

    pub fn momentum_max(&self) -> f64 {
        self.momentum.iter().copied().fold(0.0, f64::max)
    }

    /// Largest residual relative to the magnitude of its summed terms.
    pub fn worst_relative(&self) -> f64 {
        let rel =
            |r: &[f64], s: &[f64]| r.iter().zip(s).map(|(r, s)| if *s > 0.0 { r / s } else { *r }).fold(0.0, f64::max);
        rel(&self.density, &self.density_scale).max(rel(&self.momentum, &self.momentum_scale))
    }
}

/// Discrete weak-form sums of a trajectory against `g(t)φ(x)` tests.
///
/// Spatial terms use the assembled step operators, so the residuals
/// measure time consistency of the trajectory against smooth tests.
pub fn weak_residuals(traj: &Trajectory, family: &TestFamily) -> Result<WeakResiduals> {
    weak_residuals_with(traj, family, TemporalProfile::Cutoff)
}

/// As [`weak_residuals`] with a chosen time profile. The terminal term
/// `g(t_N)(ρ^N, φ)` is included; it vanishes for the cutoff profile.
pub fn weak_residuals_with(traj: &Trajectory, family: &TestFamily, profile: TemporalProfile) -> Result<WeakResiduals> {
    if family.grid != traj.grid {
        return Err(Error::invalid("test family and trajectory grids differ"));
    }
    let tau = traj.tau;
    let t_end = traj.t_final.max(tau);
    let theta = traj.params.theta;
    let ns = family.scalars.len();
    let nvec = family.vectors.len();
    let mut density = vec![0.0; ns];
    let mut density_scale = vec![0.0; ns];
    let mut momentum = vec![0.0; nvec];
    let mut momentum_scale = vec![0.0; nvec];

    let layout = UnknownLayout::new(&traj.grid);
    let calc = VelocityCalculus::new(&layout);
    let psis: Vec<Vec<f64>> = family.vectors.iter().map(|p| layout.velocity_to_vec(p)).collect();
    let s0 = &traj.states[0];
    let (g0, _) = profile.eval(0.0, t_end);
    for (k, chi) in family.scalars.iter().enumerate() {
        let term = s0.rho.dot(chi) * g0;
        density[k] -= term;
        density_scale[k] += term.abs();
    }
    let m0 = momentum_density(&s0.rho, &s0.v)?;
    for (k, phi) in family.vectors.iter().enumerate() {
        let term = m0.dot(phi) * g0;
        momentum[k] -= term;
        momentum_scale[k] += term.abs();
    }
    let vol = traj.grid.cell_volume();

    for w in traj.states.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        let (gn, _) = profile.eval(prev.t, t_end);
        let (_, dg) = profile.eval(next.t, t_end);
        let transport = upwind_matrix(&next.transport)?.matvec(&next.rho.values());
        let lap = laplacian(&next.rho).values();
        let op: Vec<f64> = transport.iter().zip(&lap).map(|(a, l)| a - theta * l).collect();
        for (k, chi) in family.scalars.iter().enumerate() {
            let cv = chi.values();
            let dt_term = -tau * dg * next.rho.dot(chi);
            let sp_term = tau * gn * vol * op.iter().zip(&cv).map(|(a, b)| a * b).sum::<f64>();
            density[k] += dt_term + sp_term;
            density_scale[k] += dt_term.abs() + sp_term.abs();
        }

        let force = traj.params.forcing.step_average(&traj.grid, prev.t, next.t);
        let inputs = MomentumInputs {
            rho_next: &next.rho,
            rho_prev: &prev.rho,
            v_prev: &prev.v,
            v_transport: &next.transport,
            force: &force,
            tau,
        };
        let b = assemble_momentum_blocks(&calc, &inputs, &traj.params)?;
        let v1 = layout.velocity_to_vec(&next.v);
        let mut kv = vec![0.0; v1.len()];
        for m in [&b.viscous, &b.coupling, &b.advection, &b.transport_correction] {
            for (acc, x) in kv.iter_mut().zip(m.matvec(&v1)) {
                *acc += x;
            }
        }
        let mv = b.mass.matvec(&v1);
        for (k, psi) in psis.iter().enumerate() {
            let mut sp = 0.0;
            let mut sp_abs = 0.0;
            for m in 0..psi.len() {
                let load = b.load_viscous_theta[m] + b.load_theta_sq[m] + b.load_force[m];
                sp += psi[m] * (kv[m] - load);
                sp_abs += (psi[m] * kv[m]).abs() + (psi[m] * load).abs();
            }
            let dt_term = -tau * dg * tau * crate::sparse::dot(psi, &mv);
            momentum[k] += dt_term + tau * gn * sp;
            momentum_scale[k] += dt_term.abs() + tau * gn.abs() * sp_abs;
        }
    }
    let last = traj.final_state();
    let (g_end, _) = profile.eval(last.t, t_end);
    if g_end != 0.0 {
        for (k, chi) in family.scalars.iter().enumerate() {
            let term = g_end * last.rho.dot(chi);
            density[k] += term;
            density_scale[k] += term.abs();
        }
        let m_end = momentum_density(&last.rho, &last.v)?;
        for (k, phi) in family.vectors.iter().enumerate() {
            let term = g_end * m_end.dot(phi);
            momentum[k] += term;
            momentum_scale[k] += term.abs();
        }
    }
    Ok(WeakResiduals {
        density: density.into_iter().map(f64::abs).collect(),
        density_scale,
        momentum: momentum.into_iter().map(f64::abs).collect(),
        momentum_scale,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub tau: f64,
    pub cells: [usize; 3],
    pub steps: usize,
    pub res_weak1_max: f64,
    pub res_weak2_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDistance {
    pub level_k: usize,
    pub level_l: usize,
    pub dist_v: f64,
    pub dist_rho: f64,
    pub dist_grad_rho: f64,
    pub weak_dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub levels: Vec<LevelSummary>,
    pub pairs: Vec<PairDistance>,
}

pub const REFINEMENT_HEADER: [&str; 12] = [
    "level_k",
    "level_l",
    "dist_v",
    "dist_rho",
    "dist_grad_rho",
    "weak_dual",
    "res_weak1_max",
    "res_weak2_max",
    "observed_order_v",
    "observed_order_rho",
    "observed_order_grad_rho",
    "observed_order_weak_dual",
];

impl RefinementReport {
    pub fn pair(&self, k: usize, l: usize) -> Option<&PairDistance> {
        let (k, l) = (k.min(l), k.max(l));
        self.pairs.iter().find(|p| p.level_k == k && p.level_l == l)
    }

    /// Consecutive-level distances `d(k, k+1)`.
    pub fn consecutive(&self) -> Vec<&PairDistance> {
        (0..self.levels.len().saturating_sub(1)).filter_map(|k| self.pair(k, k + 1)).collect()
    }

    fn ratio(&self, k: usize) -> f64 {
        let (a, b) = (&self.levels[k], &self.levels[k + 1]);
        let rt = a.tau / b.tau;
        if (rt - 1.0).abs() > 1e-12 {
            rt
        } else {
            b.cells[0] as f64 / a.cells[0] as f64
        }
    }

    /// `log(d(k-1,k) / d(k,k+1)) / log(r)` for `k ≥ 1`.
    pub fn observed_order(&self, k: usize, metric: impl Fn(&PairDistance) -> f64) -> Option<f64> {
        if k == 0 || k + 1 >= self.levels.len() {
            return None;
        }
        let d0 = metric(self.pair(k - 1, k)?);
        let d1 = metric(self.pair(k, k + 1)?);
        (d0 > 0.0 && d1 > 0.0).then(|| (d0 / d1).ln() / self.ratio(k).ln())
    }

    /// Whether a metric strictly decreases along consecutive pairs.
    pub fn monotone(&self, metric: impl Fn(&PairDistance) -> f64) -> bool {
        self.consecutive().windows(2).all(|w| metric(w[1]) < metric(w[0]))
    }

    pub fn to_csv(&self) -> String {
        let mut o = REFINEMENT_HEADER.join(",");
        o.push('\n');
        let opt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:.16e}"));
        for p in &self.pairs {
            let fine = &self.levels[p.level_l];
            let consecutive = p.level_l == p.level_k + 1;
            let order =
                |m: fn(&PairDistance) -> f64| if consecutive { self.observed_order(p.level_k, m) } else { None };
            let _ = writeln!(
                o,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{}",
                p.level_k,
                p.level_l,
                p.dist_v,
                p.dist_rho,
                p.dist_grad_rho,
                p.weak_dual,
                fine.res_weak1_max,
                fine.res_weak2_max,
                opt(order(|d| d.dist_v)),
                opt(order(|d| d.dist_rho)),
                opt(order(|d| d.dist_grad_rho)),
                opt(order(|d| d.weak_dual)),
            );
        }
        o
    }
}

/// Distances between two trajectories in `L²(0,T; L²)`, sampled at the
/// nodes of the coarser time level and restricted to the coarser grid.
pub fn trajectory_distance(
    a: &Trajectory,
    b: &Trajectory,
    family: Option<&TestFamily>,
) -> Result<(f64, f64, f64, f64)> {
    let (coarse_t, fine_t) = if a.tau >= b.tau { (a, b) } else { (b, a) };
    let grid = if a.grid.cells() <= b.grid.cells() { a.grid } else { b.grid };
    let own;
    let family = match family {
        Some(f) if f.grid == grid => f,
        _ => {
            own = TestFamily::default_for(&grid)?;
            &own
        }
    };
    let tau = coarse_t.tau;
    let (mut dv, mut dr, mut dg, mut dw) = (0.0, 0.0, 0.0, 0.0);
    for n in 1..=coarse_t.steps() {
        let t = n as f64 * tau;
        if t > fine_t.steps() as f64 * fine_t.tau * (1.0 + 1e-12) {
            break;
        }
        let ra = restrict_scalar(coarse_t.rho_tau(t)?, &grid)?;
        let rb = restrict_scalar(fine_t.rho_tau(t)?, &grid)?;
        let va = restrict_vector(coarse_t.v_tau(t)?, &grid)?;
        let vb = restrict_vector(fine_t.v_tau(t)?, &grid)?;
        let drho = ra.add_scaled(-1.0, &rb);
        dr += tau * drho.l2_sq();
        dg += tau * drho.h1_semi_sq()?;
        dv += tau * va.add_scaled(-1.0, &vb).l2_sq();
        let ma = momentum_density(&ra, &va)?;
        let mb = momentum_density(&rb, &vb)?;
        dw += tau * weak_dual_norm(&ma.add_scaled(-1.0, &mb), family)?.powi(2);
    }
    Ok((dv.sqrt(), dr.sqrt(), dg.sqrt(), dw.sqrt()))
}

/// Runs the scenario at each `(τ, refinement factor)` level and compares
/// all pairs. A single-entry list is broadcast against the other.
pub fn cauchy_study(
    scenario: &Scenario,
    tau_levels: &[f64],
    h_levels: &[usize],
) -> std::result::Result<RefinementReport, RunFailure> {
    let n = tau_levels.len().max(h_levels.len());
    let bad = |m: String| RunFailure { error: Error::invalid(m), partial: None };
    if n < 3 {
        return Err(bad(format!("a refinement study needs at least 3 levels, got {n}")));
    }
    for (name, len) in [("tau", tau_levels.len()), ("grid", h_levels.len())] {
        if len != n && len != 1 {
            return Err(bad(format!("{name} level list has {len} entries, expected 1 or {n}")));
        }
    }
    let pick = |v: &[f64], k: usize| if v.len() == 1 { v[0] } else { v[k] };
    let pick_h = |k: usize| if h_levels.len() == 1 { h_levels[0] } else { h_levels[k] };
    let mut trajs = Vec::with_capacity(n);
    for k in 0..n {
        let mut s = scenario.clone();
        s.tau = pick(tau_levels, k);
        s.grid = scenario.grid.refine(pick_h(k)).map_err(RunFailure::from)?;
        trajs.push(run(&s)?);
    }
    let coarsest = trajs.iter().map(|t| t.grid).min_by_key(|g| g.cells()).expect("levels exist");
    let family = TestFamily::default_for(&coarsest)?;
    let mut levels = Vec::with_capacity(n);
    for t in &trajs {
        let fam = if t.grid == coarsest { family.clone() } else { TestFamily::default_for(&t.grid)? };
        let w = weak_residuals(t, &fam)?;
        levels.push(LevelSummary {
            tau: t.tau,
            cells: t.grid.n,
            steps: t.steps(),
            res_weak1_max: w.density_max(),
            res_weak2_max: w.momentum_max(),
        });
    }
    let mut pairs = Vec::new();
    for k in 0..n {
        for l in k + 1..n {
            let (dist_v, dist_rho, dist_grad_rho, weak_dual) =
                trajectory_distance(&trajs[k], &trajs[l], Some(&family))?;
            pairs.push(PairDistance { level_k: k, level_l: l, dist_v, dist_rho, dist_grad_rho, weak_dual });
        }
    }
    Ok(RefinementReport { levels, pairs })
}
