//! Implicit upwind advection-diffusion step for the density.
//!
//! Solves `(I/τ + A_up(v) - θ L_N) ρ^{n+1} = ρ^n / τ` where `A_up` is the
//! conservative upwind transport matrix and `L_N` the zero-Neumann
//! Laplacian. For a divergence-free transport velocity the matrix is an
//! M-matrix with unit column sums times `1/τ`, which gives exact mass
//! conservation and a discrete maximum principle.

use crate::energy::{Check, DomainConstants};
use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::linsolve::{bicgstab, gmres, Jacobi, KrylovConfig, SolveStats};
use crate::operators::{divergence_l2, laplacian, laplacian_matrix, upwind_matrix};
use crate::physics::PhysicalParams;
use crate::sparse::{SparseSystem, Triplets};

#[derive(Debug, Clone)]
pub struct DensitySystem {
    pub matrix: SparseSystem,
    pub rhs: Vec<f64>,
    /// Discrete L² divergence of the transport velocity.
    pub transport_divergence: f64,
}

pub fn assemble_density_system(
    rho_n: &ScalarField,
    v_transport: &VectorField,
    tau: f64,
    theta: f64,
) -> Result<DensitySystem> {
    if !(tau > 0.0) || !(theta > 0.0) {
        return Err(Error::invalid(format!("need tau > 0 and theta > 0, got {tau}, {theta}")));
    }
    if !rho_n.ghosts_filled() {
        return Err(Error::GhostsUnfilled("density"));
    }
    if rho_n.grid() != v_transport.grid() {
        return Err(Error::invalid("density and velocity grids differ"));
    }
    let g = rho_n.grid();
    let a_up = upwind_matrix(v_transport)?;
    let lap = laplacian_matrix(g);
    let n = g.cells();
    let mut t = Triplets::new(n, n);
    for i in 0..n {
        t.push(i, i, 1.0 / tau);
    }
    t.add_block(&a_up, 0, 0, 1.0);
    t.add_block(&lap, 0, 0, -theta);
    Ok(DensitySystem {
        matrix: t.build(),
        rhs: rho_n.values().iter().map(|r| r / tau).collect(),
        transport_divergence: divergence_l2(v_transport),
    })
}

/// BiCGSTAB with Jacobi preconditioning, falling back to GMRES.
pub fn solve_density_step(
    sys: &DensitySystem,
    rho_n: &ScalarField,
    cfg: &KrylovConfig,
) -> Result<(ScalarField, SolveStats)> {
    let x0 = rho_n.values();
    let pre = Jacobi::new(&sys.matrix);
    let (x, stats) = match bicgstab(&sys.matrix, &sys.rhs, Some(&x0), &pre, cfg) {
        Ok(ok) => ok,
        Err(_) => gmres(&sys.matrix, &sys.rhs, Some(&x0), &pre, cfg)?,
    };
    Ok((ScalarField::from_values(rho_n.grid(), x)?, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityStepReport {
    pub iterations: usize,
    pub residual: f64,
    pub mass_before: f64,
    pub mass_after: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub l2_sq_before: f64,
    pub l2_sq_after: f64,
    pub grad_sq_before: f64,
    pub grad_sq_after: f64,
    pub lap_sq_after: f64,
    pub transport_divergence: f64,
    /// `‖ρ'‖² ≤ ‖ρ‖²`
    pub l2_decay: Check,
    /// `‖ρ'‖² + θτ‖∇ρ'‖² ≤ ‖ρ‖²`
    pub l2_energy: Check,
    /// `‖∇ρ'‖² + θτ‖Lρ'‖² ≤ ‖∇ρ‖²`, checked only without transport.
    pub grad_energy: Option<Check>,
    /// `θτ‖Lρ'‖² + ‖∇ρ'‖² ≤ ‖∇ρ‖² + (C̃²M²/θ) τ ‖∇v‖²`
    pub grad_transport: Check,
    pub max_principle: Check,
    pub mass: Check,
    /// `‖|∇ρ|²‖ / (‖ρ‖_∞ ‖Lρ‖)`, the empirical constant of the gradient
    /// interpolation inequality.
    pub interpolation_ratio: f64,
}

/// Cellwise `|∇ρ|²` from averaged face gradients.
pub fn grad_sq_cells(rho: &ScalarField) -> Vec<f64> {
    let g = rho.grid();
    g.cell_shape()
        .indices()
        .map(|i| {
            let mut s = 0.0;
            for a in g.axes() {
                let c = [i[0] as isize, i[1] as isize, i[2] as isize];
                let mut lo = c;
                lo[a] -= 1;
                let mut hi = c;
                hi[a] += 1;
                let gl = (rho.get_ext(c) - rho.get_ext(lo)) / g.h[a];
                let gr = (rho.get_ext(hi) - rho.get_ext(c)) / g.h[a];
                let m = 0.5 * (gl + gr);
                s += m * m;
            }
            s
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn audit_density_step(
    rho_n: &ScalarField,
    rho_next: &ScalarField,
    v_transport: &VectorField,
    tau: f64,
    params: &PhysicalParams,
    constants: &DomainConstants,
    stats: &SolveStats,
    solver_tol: f64,
) -> Result<DensityStepReport> {
    let theta = params.theta;
    let l2b = rho_n.l2_sq();
    let l2a = rho_next.l2_sq();
    let gb = rho_n.h1_semi_sq()?;
    let ga = rho_next.h1_semi_sq()?;
    let lap = laplacian(rho_next);
    let la = lap.l2_sq();
    let vgrad = v_transport.grad_l2_sq()?;
    let mass_before = rho_n.integrate();
    let mass_after = rho_next.integrate();

    let l2_decay = Check::upper(l2a, l2b, 1e-10);
    let l2_energy = Check::upper(l2a + theta * tau * ga, l2b, 1e-10);
    let grad_energy = (v_transport.l2_sq() == 0.0).then(|| Check::upper(ga + theta * tau * la, gb, 1e-10));
    let coupling = constants.c_tilde.powi(2) * params.rho_max.powi(2) / theta;
    let grad_transport = Check::upper(theta * tau * la + ga, gb + coupling * vgrad * tau, 1e-10);

    let delta = 10.0 * solver_tol * (params.rho_max - params.rho_min + 1.0);
    let (lo, hi) = (rho_next.min(), rho_next.max());
    let slack = (lo - (params.rho_min - delta)).min(params.rho_max + delta - hi);
    let max_principle = Check { holds: slack >= 0.0, slack, scale: 1.0 };
    let drift = (mass_after - mass_before).abs();
    let mass_allow = 10.0 * solver_tol * mass_before.abs().max(f64::MIN_POSITIVE);
    let mass = Check { holds: drift <= mass_allow, slack: mass_allow - drift, scale: mass_before.abs() };

    let gsq = grad_sq_cells(rho_next);
    let gsq_l2 = (gsq.iter().map(|x| x * x).sum::<f64>() * rho_next.grid().cell_volume()).sqrt();
    let denom = rho_next.norms()?.linf * la.sqrt();
    let interpolation_ratio = if denom > 0.0 { gsq_l2 / denom } else { 0.0 };

    Ok(DensityStepReport {
        iterations: stats.iterations,
        residual: stats.residual,
        mass_before,
        mass_after,
        rho_min: lo,
        rho_max: hi,
        l2_sq_before: l2b,
        l2_sq_after: l2a,
        grad_sq_before: gb,
        grad_sq_after: ga,
        lap_sq_after: la,
        transport_divergence: divergence_l2(v_transport),
        l2_decay,
        l2_energy,
        grad_energy,
        grad_transport,
        max_principle,
        mass,
        interpolation_ratio,
    })
}

/// Smooths an initial density by explicit diffusion sweeps
/// `ρ ← ρ + ω L ρ` with `ω = 1 / (2 Σ h_a⁻²)`.
///
/// Each sweep is a convex combination of neighbors, so the range never
/// grows. Sweeps stop early before the discrete H¹ distance to the input
/// would exceed `tau`.
pub fn prepare_initial_density(eta: &ScalarField, tau: f64, max_sweeps: usize) -> Result<(ScalarField, usize)> {
    let g = eta.grid();
    let omega = 0.5 / g.axes().map(|a| 1.0 / (g.h[a] * g.h[a])).sum::<f64>();
    let mut cur = eta.clone();
    let mut done = 0;
    for _ in 0..max_sweeps {
        let next = cur.add_scaled(omega, &laplacian(&cur));
        let diff = next.add_scaled(-1.0, eta);
        let dist = (diff.l2_sq() + diff.h1_semi_sq()?).sqrt();
        if dist > tau {
            break;
        }
        cur = next;
        done += 1;
    }
    Ok((cur, done))
}
