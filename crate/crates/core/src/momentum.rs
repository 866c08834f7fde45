//! Variable-viscosity momentum step as a velocity-pressure saddle system.
//!
//! The velocity block is the sum of independently assembled pieces:
//!
//! * viscous: `½ Σ μ (∂_j v_i + ∂_i v_j)(∂_j w_i + ∂_i w_j)`
//! * mass-diffusion coupling: `θ Σ [(∂_i ρ) v_j + (∂_j ρ) v_i] ∂_i w_j`
//! * advection in skew form `½(C - Cᵀ)` where
//!   `C(v, w) = -Σ ρ v_τ,j v_i ∂_j w_i`
//! * transport correction `½ ⟨S v, w⟩`, `S` the face average of the upwind
//!   `div(ρ v_τ)` used by the density step
//! * mass `τ⁻¹ ⟨ρ v, w⟩`
//!
//! In the continuum the last three pieces add up to `C + τ⁻¹ρ`. On the
//! grid the split makes the kinetic energy balance exact, because the
//! correction cancels the density change seen by the mass term.

use crate::energy::{kinetic_energy, prop34_scale, Check, DomainConstants, Mode, PROP34_REL_TOL};
use crate::error::{Error, Result};
use crate::fields::{cell_to_face, ScalarField, VectorField};
use crate::linsolve::{gmres, BandedCholesky, Ilu0, Jacobi, KrylovConfig, Preconditioner};
use crate::operators::{
    add_weighted_load, add_weighted_product, divergence_l2, divergence_matrix, upwind_matrix, Averaging, UnknownLayout,
    VelocityCalculus,
};
use crate::physics::PhysicalParams;
use crate::sparse::{norm2, SparseSystem, Triplets};

/// Outcome of the hypothesis check that makes the energy bounds binding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H4Check {
    /// `μ_* - θ(M - m)/2 - C̃²M²(μ'_* + θ)/m`
    pub alpha1: f64,
    /// `θ(μ'_* + θ)/m`
    pub alpha2: f64,
    pub mu_min: f64,
    pub mu_prime_max: f64,
    pub c_tilde: f64,
    /// `C̃²M²(μ'_* + θ)/m`
    pub kappa: f64,
    pub mode: Mode,
}

pub fn check_h4(params: &PhysicalParams, constants: &DomainConstants) -> Result<H4Check> {
    let b = params.validate()?;
    let (m, big_m, theta) = (params.rho_min, params.rho_max, params.theta);
    let kappa = constants.c_tilde.powi(2) * big_m * big_m * (b.mu_prime_max + theta) / m;
    let alpha1 = b.mu_min - 0.5 * theta * (big_m - m) - kappa;
    let alpha2 = theta * (b.mu_prime_max + theta) / m;
    Ok(H4Check {
        alpha1,
        alpha2,
        mu_min: b.mu_min,
        mu_prime_max: b.mu_prime_max,
        c_tilde: constants.c_tilde,
        kappa,
        mode: if alpha1 > 0.0 { Mode::Verified } else { Mode::Exploratory },
    })
}

/// Fields entering one momentum step.
#[derive(Debug, Clone, Copy)]
pub struct MomentumInputs<'a> {
    pub rho_next: &'a ScalarField,
    pub rho_prev: &'a ScalarField,
    pub v_prev: &'a VectorField,
    pub v_transport: &'a VectorField,
    /// Step average of the body force.
    pub force: &'a VectorField,
    pub tau: f64,
}

/// Independently assembled pieces of the velocity block and load.
#[derive(Debug, Clone)]
pub struct MomentumBlocks {
    pub viscous: SparseSystem,
    pub coupling: SparseSystem,
    pub advection: SparseSystem,
    pub transport_correction: SparseSystem,
    pub mass: SparseSystem,
    pub load_inertia: Vec<f64>,
    /// `-2θ Σ (μ'/ρ) ∂_iρ ∂_jρ ∂_j w_i`
    pub load_viscous_theta: Vec<f64>,
    /// `θ² Σ (1/ρ) ∂_iρ ∂_jρ ∂_i w_j`
    pub load_theta_sq: Vec<f64>,
    pub load_force: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MomentumSystem {
    pub layout: UnknownLayout,
    pub blocks: MomentumBlocks,
    /// Velocity block, the sum of the five matrix pieces.
    pub velocity: SparseSystem,
    /// Constraint block `-V div` restricted to pressure unknowns.
    pub constraint: SparseSystem,
    pub saddle: SparseSystem,
    pub rhs: Vec<f64>,
}

impl MomentumSystem {
    pub fn n_velocity(&self) -> usize {
        self.layout.n_velocity()
    }

    pub fn n_pressure(&self) -> usize {
        self.layout.n_pressure()
    }
}

fn face_values_on_unknowns(layout: &UnknownLayout, faces: &[Vec<f64>]) -> Vec<f64> {
    let g = layout.grid();
    (0..layout.n_velocity())
        .map(|k| {
            let (c, i) = layout.vel_face(k);
            faces[c][g.face_shape(c).flat(i)]
        })
        .collect()
}

fn face_density(layout: &UnknownLayout, rho: &ScalarField) -> Result<Vec<f64>> {
    let faces: Vec<Vec<f64>> = layout.grid().axes().map(|c| cell_to_face(rho, c)).collect::<Result<_>>()?;
    Ok(face_values_on_unknowns(layout, &faces))
}

/// Viscous block for cell viscosities `μ(ρ)` and averaged edge viscosities.
pub fn viscous_block(calc: &VelocityCalculus, rho: &ScalarField, params: &PhysicalParams) -> SparseSystem {
    let g = *calc.grid();
    let vol = g.cell_volume();
    let n = calc.layout().n_velocity();
    let mu = rho.map(|r| params.viscosity.value(r));
    let mut t = Triplets::new(n, n);
    for i in g.axes() {
        let d = calc.derivative(i, i);
        let w = mu.values();
        add_weighted_product(&mut t, d, &w, d, 2.0 * vol);
        for j in i + 1..g.dim {
            let e = calc.derivative(i, j).add(1.0, calc.derivative(j, i)).expect("same location shape");
            let w = calc.scalar_at(&mu, i, j, params.averaging);
            add_weighted_product(&mut t, &e, &w, &e, vol);
        }
    }
    t.build()
}

/// Mass-diffusion coupling `θ Σ [(∂_iρ) v_j + (∂_jρ) v_i] ∂_i w_j`.
pub fn coupling_block(calc: &VelocityCalculus, rho: &ScalarField, theta: f64) -> SparseSystem {
    let g = *calc.grid();
    let vol = g.cell_volume();
    let n = calc.layout().n_velocity();
    let mut t = Triplets::new(n, n);
    for i in g.axes() {
        for j in g.axes() {
            let test = calc.derivative(j, i);
            let gi = calc.grad_at(rho, i, i, j);
            let gj = calc.grad_at(rho, j, i, j);
            add_weighted_product(&mut t, test, &gi, calc.interp(i, j, j), theta * vol);
            add_weighted_product(&mut t, test, &gj, calc.interp(i, j, i), theta * vol);
        }
    }
    t.build()
}

/// Convective form `C(v, w) = -Σ ρ v_τ,j v_i ∂_j w_i` as a matrix.
pub fn convection_matrix(calc: &VelocityCalculus, rho: &ScalarField, v_transport: &[f64]) -> SparseSystem {
    let g = *calc.grid();
    let vol = g.cell_volume();
    let n = calc.layout().n_velocity();
    let mut t = Triplets::new(n, n);
    for i in g.axes() {
        for j in g.axes() {
            let rho_l = calc.scalar_at(rho, i, j, Averaging::Arithmetic);
            let vt = calc.interp(i, j, j).matvec(v_transport);
            let w: Vec<f64> = rho_l.iter().zip(&vt).map(|(r, u)| r * u).collect();
            add_weighted_product(&mut t, calc.derivative(i, j), &w, calc.interp(i, j, i), -vol);
        }
    }
    t.build()
}

/// The two θ-dependent load vectors.
pub fn theta_loads(calc: &VelocityCalculus, rho: &ScalarField, params: &PhysicalParams) -> (Vec<f64>, Vec<f64>) {
    let g = *calc.grid();
    let vol = g.cell_volume();
    let n = calc.layout().n_velocity();
    let theta = params.theta;
    let mut l2 = vec![0.0; n];
    let mut l3 = vec![0.0; n];
    for i in g.axes() {
        for j in g.axes() {
            let rho_l = calc.scalar_at(rho, i, j, Averaging::Arithmetic);
            let gi = calc.grad_at(rho, i, i, j);
            let gj = calc.grad_at(rho, j, i, j);
            let w2: Vec<f64> =
                (0..rho_l.len()).map(|l| params.viscosity.derivative(rho_l[l]) / rho_l[l] * gi[l] * gj[l]).collect();
            let w3: Vec<f64> = (0..rho_l.len()).map(|l| gi[l] * gj[l] / rho_l[l]).collect();
            add_weighted_load(&mut l2, calc.derivative(i, j), &w2, -2.0 * theta * vol);
            add_weighted_load(&mut l3, calc.derivative(j, i), &w3, theta * theta * vol);
        }
    }
    (l2, l3)
}

pub fn assemble_momentum_blocks(
    calc: &VelocityCalculus,
    inputs: &MomentumInputs<'_>,
    params: &PhysicalParams,
) -> Result<MomentumBlocks> {
    let layout = calc.layout();
    let g = *layout.grid();
    if inputs.rho_next.grid() != &g || inputs.v_prev.grid() != &g || inputs.v_transport.grid() != &g {
        return Err(Error::invalid("momentum inputs live on different grids"));
    }
    if !(inputs.tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {}", inputs.tau)));
    }
    let lo = inputs.rho_next.min().min(inputs.rho_prev.min());
    if !(lo > 0.0) {
        return Err(Error::DensityRange(format!("density must stay positive, min {lo:e}")));
    }
    let vol = g.cell_volume();
    let tau = inputs.tau;
    let vt = layout.velocity_to_vec(inputs.v_transport);

    let viscous = viscous_block(calc, inputs.rho_next, params);
    let coupling = coupling_block(calc, inputs.rho_next, params.theta);
    let conv = convection_matrix(calc, inputs.rho_next, &vt);
    let advection = conv.add(-1.0, &conv.transpose())?.scale(0.5);

    let s_cells = upwind_matrix(inputs.v_transport)?.matvec(&inputs.rho_next.values());
    let s_field = ScalarField::from_values(&g, s_cells)?;
    let s_face = face_density(layout, &s_field)?;
    let transport_correction = SparseSystem::diagonal_matrix(&s_face.iter().map(|s| 0.5 * vol * s).collect::<Vec<_>>());

    let rho1 = face_density(layout, inputs.rho_next)?;
    let rho0 = face_density(layout, inputs.rho_prev)?;
    let mass = SparseSystem::diagonal_matrix(&rho1.iter().map(|r| vol * r / tau).collect::<Vec<_>>());

    let vp = layout.velocity_to_vec(inputs.v_prev);
    let fv = layout.velocity_to_vec(inputs.force);
    let load_inertia = rho0.iter().zip(&vp).map(|(r, v)| vol * r * v / tau).collect();
    let load_force = rho1.iter().zip(&fv).map(|(r, f)| vol * r * f).collect();
    let (load_viscous_theta, load_theta_sq) = theta_loads(calc, inputs.rho_next, params);

    Ok(MomentumBlocks {
        viscous,
        coupling,
        advection,
        transport_correction,
        mass,
        load_inertia,
        load_viscous_theta,
        load_theta_sq,
        load_force,
    })
}

pub fn assemble_momentum_system(
    calc: &VelocityCalculus,
    inputs: &MomentumInputs<'_>,
    params: &PhysicalParams,
) -> Result<MomentumSystem> {
    let blocks = assemble_momentum_blocks(calc, inputs, params)?;
    let layout = calc.layout().clone();
    let nv = layout.n_velocity();
    let np = layout.n_pressure();
    let vol = layout.grid().cell_volume();
    let mut t = Triplets::new(nv, nv);
    for m in [&blocks.viscous, &blocks.coupling, &blocks.advection, &blocks.transport_correction, &blocks.mass] {
        t.add_block(m, 0, 0, 1.0);
    }
    let velocity = t.build();
    let div = divergence_matrix(&layout);
    let cols: Vec<usize> = (0..nv).collect();
    let constraint = div.select(&layout.pressure_cells(), &cols).scale(-vol);
    let mut s = Triplets::new(nv + np, nv + np);
    s.add_block(&velocity, 0, 0, 1.0);
    s.add_block(&constraint.transpose(), 0, nv, 1.0);
    s.add_block(&constraint, nv, 0, 1.0);
    let saddle = s.build();
    let mut rhs = vec![0.0; nv + np];
    for k in 0..nv {
        rhs[k] = blocks.load_inertia[k] + blocks.load_viscous_theta[k] + blocks.load_theta_sq[k] + blocks.load_force[k];
    }
    Ok(MomentumSystem { layout, blocks, velocity, constraint, saddle, rhs })
}

/// Velocity-block approximation inside the saddle preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VelocityPreconditioner {
    Jacobi,
    #[default]
    Ilu0,
}

/// Block lower-triangular preconditioner `[Â 0; B -Ŝ]` with
/// `Ŝ = B diag(A)⁻¹ Bᵀ` factored by banded Cholesky.
pub struct SaddlePreconditioner {
    nv: usize,
    velocity: Box<dyn Preconditioner>,
    constraint: SparseSystem,
    schur: BandedCholesky,
}

impl SaddlePreconditioner {
    pub fn new(sys: &MomentumSystem, kind: VelocityPreconditioner) -> Result<Self> {
        let diag: Vec<f64> = sys.velocity.diagonal().iter().map(|d| d.abs().max(f64::MIN_POSITIVE)).collect();
        let velocity: Box<dyn Preconditioner> = match kind {
            VelocityPreconditioner::Jacobi => Box::new(Jacobi::from_diagonal(&diag)),
            VelocityPreconditioner::Ilu0 => Box::new(Ilu0::new(&sys.velocity)?),
        };
        let b = &sys.constraint;
        let bt = b.transpose();
        let mut scaled = bt.clone();
        for r in 0..scaled.n_rows {
            for k in scaled.row_ptr[r]..scaled.row_ptr[r + 1] {
                scaled.values[k] /= diag[r];
            }
        }
        let mut t = Triplets::new(b.n_rows, b.n_rows);
        for r in 0..b.n_rows {
            for (k, bv) in b.row(r) {
                for (c, sv) in scaled.row(k) {
                    t.push(r, c, bv * sv);
                }
            }
        }
        let schur = BandedCholesky::factor(&t.build())?;
        Ok(SaddlePreconditioner { nv: sys.n_velocity(), velocity, constraint: b.clone(), schur })
    }
}

impl Preconditioner for SaddlePreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let nv = self.nv;
        let (ru, rp) = r.split_at(nv);
        let (zu, zp) = z.split_at_mut(nv);
        self.velocity.apply(ru, zu);
        self.constraint.matvec_into(zu, zp);
        for (p, q) in zp.iter_mut().zip(rp) {
            *p -= q;
        }
        self.schur.solve_in_place(zp);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumConfig {
    /// Relative residual of the saddle system.
    pub tol: f64,
    /// Bound on the discrete L² divergence of the velocity.
    pub div_tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    pub preconditioner: VelocityPreconditioner,
}

impl Default for MomentumConfig {
    fn default() -> Self {
        MomentumConfig {
            tol: 1e-9,
            div_tol: 1e-9,
            max_iter: 3000,
            restart: 120,
            preconditioner: VelocityPreconditioner::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumSolveStats {
    pub iterations: usize,
    pub residual_momentum: f64,
    pub residual_div: f64,
    pub history: Vec<f64>,
}

/// Solves the saddle system; the iterate is refined until both the
/// relative residual and the divergence meet their tolerances.
pub fn solve_momentum_step(
    sys: &MomentumSystem,
    cfg: &MomentumConfig,
    x0: Option<&[f64]>,
) -> Result<(VectorField, ScalarField, MomentumSolveStats)> {
    let nv = sys.n_velocity();
    let n = sys.saddle.n_rows;
    let bnorm = norm2(&sys.rhs);
    let mut stats =
        MomentumSolveStats { iterations: 0, residual_momentum: 0.0, residual_div: 0.0, history: Vec::new() };
    if bnorm == 0.0 {
        let g = *sys.layout.grid();
        return Ok((VectorField::zeros(&g), ScalarField::zeros(&g), stats));
    }
    let pre = SaddlePreconditioner::new(sys, cfg.preconditioner)?;
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let mut tol = cfg.tol;
    for _attempt in 0..6 {
        let budget = cfg.max_iter.saturating_sub(stats.iterations).max(1);
        let kcfg = KrylovConfig { tol, max_iter: budget, restart: cfg.restart };
        let (sol, st) = gmres(&sys.saddle, &sys.rhs, Some(&x), &pre, &kcfg)?;
        x = sol;
        stats.iterations += st.iterations;
        stats.history.extend(st.history);
        let v = sys.layout.vec_to_velocity(&x[..nv]);
        stats.residual_momentum = st.residual;
        stats.residual_div = divergence_l2(&v);
        if stats.residual_div <= cfg.div_tol && stats.residual_momentum <= cfg.tol {
            let p = sys.layout.pressure_to_field(&x[nv..]);
            return Ok((v, p, stats));
        }
        tol *= 1e-2;
        if tol < 1e-15 {
            break;
        }
    }
    Err(crate::error::SolverError::NotConverged {
        method: "saddle gmres",
        iterations: stats.iterations,
        residual: stats.residual_div,
        history: stats.history,
    }
    .into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumStepReport {
    pub iterations: usize,
    pub residual_momentum: f64,
    pub residual_div: f64,
    pub kinetic: f64,
    pub grad_v_sq: f64,
    pub v_l2_sq: f64,
    pub prop34_lhs: f64,
    pub prop34_rhs: f64,
    pub prop34: Check,
    /// Whether the inequality is binding (verified mode).
    pub binding: bool,
    pub alpha1: f64,
}

/// Both sides of the step energy inequality from discrete quantities.
#[allow(clippy::too_many_arguments)]
pub fn audit_momentum_step(
    rho_prev: &ScalarField,
    v_prev: &VectorField,
    rho_next: &ScalarField,
    v_next: &VectorField,
    v_transport: &VectorField,
    force: &VectorField,
    params: &PhysicalParams,
    h4: &H4Check,
    tau: f64,
    stats: &MomentumSolveStats,
) -> Result<MomentumStepReport> {
    let kin0 = kinetic_energy(rho_prev, v_prev)?;
    let kin1 = kinetic_energy(rho_next, v_next)?;
    let g0 = rho_prev.h1_semi_sq()?;
    let g1 = rho_next.h1_semi_sq()?;
    let dv1 = v_next.grad_l2_sq()?;
    let dvt = v_transport.grad_l2_sq()?;
    let fnorm = kinetic_energy(rho_next, force)?.sqrt();
    let half_kappa = 0.5 * h4.kappa;
    let coef = h4.mu_min - 0.5 * params.theta * (params.rho_max - params.rho_min) - half_kappa;
    let lhs = coef * dv1 * tau - half_kappa * dvt * tau + 0.5 * kin1 + 0.5 * h4.alpha2 * g1;
    let rhs = 0.5 * kin0 + 0.5 * h4.alpha2 * g0 + fnorm * kin1.sqrt() * tau;
    let scale = prop34_scale(kin0, kin1, g0, g1, h4.alpha2);
    Ok(MomentumStepReport {
        iterations: stats.iterations,
        residual_momentum: stats.residual_momentum,
        residual_div: stats.residual_div,
        kinetic: kin1,
        grad_v_sq: dv1,
        v_l2_sq: v_next.l2_sq(),
        prop34_lhs: lhs,
        prop34_rhs: rhs,
        prop34: Check::with_scale(lhs, rhs, scale, PROP34_REL_TOL),
        binding: h4.mode == Mode::Verified,
        alpha1: h4.alpha1,
    })
}
