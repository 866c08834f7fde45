//! Time marching: initial projection, per-step density and momentum
//! solves, audits, the energy ledger and time interpolants.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::density::{
    assemble_density_system, audit_density_step, prepare_initial_density, solve_density_step, DensityStepReport,
};
use crate::energy::{
    audit_trajectory, compute_domain_constants, kinetic_energy, AuditContext, BoundConstants, CriterionSummary,
    DomainConstants, EnergyLedger, Mode, StepQuantities, TrajectoryReport,
};
use crate::error::{Error, Result};
use crate::fields::{BoundaryRule, ScalarField, VectorField};
use crate::grid::GridSpec;
use crate::linsolve::{conjugate_gradient, KrylovConfig};
use crate::momentum::{
    assemble_momentum_system, audit_momentum_step, check_h4, solve_momentum_step, H4Check, MomentumConfig,
    MomentumInputs, MomentumStepReport, VelocityPreconditioner,
};
use crate::operators::{divergence, divergence_l2, laplacian_matrix, UnknownLayout, VelocityCalculus};
use crate::physics::PhysicalParams;
use crate::scenario::Scenario;

/// Largest admissible time step.
pub const MAX_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub density_tol: f64,
    pub momentum_tol: f64,
    pub div_tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    /// `C_Ω`; `None` uses the reported default of 1.
    pub c_omega: Option<f64>,
    /// Explicit diffusion sweeps applied to the initial density.
    pub smoothing_sweeps: usize,
    /// Smooth and re-project the transport velocity.
    pub transport_smoothing: bool,
    pub preconditioner: VelocityPreconditioner,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            density_tol: 1e-10,
            momentum_tol: 1e-9,
            div_tol: 1e-9,
            max_iter: 3000,
            restart: 120,
            c_omega: None,
            smoothing_sweeps: 0,
            transport_smoothing: false,
            preconditioner: VelocityPreconditioner::default(),
        }
    }
}

/// State at one time level with the reports of the step that produced it.
#[derive(Debug, Clone)]
pub struct StateSnapshot {
    pub step: usize,
    pub t: f64,
    pub rho: ScalarField,
    pub v: VectorField,
    pub p: ScalarField,
    /// Transport velocity used to reach this state (zero at step 0).
    pub transport: VectorField,
    pub density: Option<DensityStepReport>,
    pub momentum: Option<MomentumStepReport>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: GridSpec,
    pub tau: f64,
    pub t_final: f64,
    pub params: PhysicalParams,
    pub settings: SolverSettings,
    pub constants: DomainConstants,
    pub h4: H4Check,
    pub bound_constants: BoundConstants,
    pub eta: ScalarField,
    pub u: VectorField,
    pub states: Vec<StateSnapshot>,
    pub ledger: EnergyLedger,
    pub fingerprint: String,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn final_state(&self) -> &StateSnapshot {
        self.states.last().expect("trajectory has an initial state")
    }

    pub fn audit_context(&self) -> AuditContext {
        AuditContext {
            alpha1: self.h4.alpha1,
            alpha2: self.h4.alpha2,
            tau: self.tau,
            theta: self.params.theta,
            lambda1: self.constants.lambda1,
            rho_min: self.params.rho_min,
            rho_max: self.params.rho_max,
            domain_volume: self.grid.domain_volume(),
            density_tol: self.settings.density_tol,
            div_tol: self.settings.div_tol,
        }
    }

    /// Piecewise-constant density `ρ_τ(t) = ρ^{n+1}` on `(nτ, (n+1)τ]`.
    pub fn rho_tau(&self, t: f64) -> Result<&ScalarField> {
        Ok(&self.states[self.piece(t)?].rho)
    }

    pub fn v_tau(&self, t: f64) -> Result<&VectorField> {
        Ok(&self.states[self.piece(t)?].v)
    }

    /// Piecewise-linear density through the nodal values.
    pub fn rho_tilde(&self, t: f64) -> Result<ScalarField> {
        let k = self.piece(t)?;
        if k == 0 {
            return Ok(self.states[0].rho.clone());
        }
        let s = (t - (k - 1) as f64 * self.tau) / self.tau;
        let a = &self.states[k - 1].rho;
        let b = &self.states[k].rho;
        Ok(a.add_scaled(s, &b.add_scaled(-1.0, a)))
    }

    /// Index of the state that `ρ_τ` takes at time `t`.
    fn piece(&self, t: f64) -> Result<usize> {
        let end = self.steps() as f64 * self.tau;
        if !(t >= 0.0 && t <= end * (1.0 + 1e-12)) {
            return Err(Error::invalid(format!("time {t} outside [0, {end}]")));
        }
        if self.steps() == 0 {
            return Ok(0);
        }
        let k = (t / self.tau - 1e-9).ceil().max(1.0) as usize;
        Ok(k.min(self.steps()))
    }

    /// `∫ ‖ρ_τ - ρ̃_τ‖² dt`, exactly `τ/3 Σ ‖ρ^{n+1} - ρ^n‖²`.
    pub fn interpolant_gap_sq(&self) -> f64 {
        self.states.windows(2).map(|w| w[1].rho.add_scaled(-1.0, &w[0].rho).l2_sq()).sum::<f64>() * self.tau / 3.0
    }
}

#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: Error,
    /// States computed before the failure, when setup succeeded.
    pub partial: Option<Box<Trajectory>>,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure { error, partial: None }
    }
}

/// Removes the discrete gradient part of a face field.
pub fn project_divergence_free(u: &VectorField, tol: f64) -> Result<VectorField> {
    let g = *u.grid();
    let u = u.clone().fill_ghosts(BoundaryRule::DirichletZero)?;
    let d = divergence(&u).values();
    let a = laplacian_matrix(&g).scale(-1.0);
    let rhs: Vec<f64> = d.iter().map(|x| -x).collect();
    let proj = |x: &mut [f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter_mut().for_each(|v| *v -= m);
    };
    let cfg = KrylovConfig { tol, max_iter: 50 * g.cells() + 100, restart: 0 };
    let (phi, _) = conjugate_gradient(&a, &rhs, None, &cfg, Some(&proj))?;
    let phi = ScalarField::from_values(&g, phi)?;
    let grad = crate::operators::gradient(&phi)?;
    Ok(u.add_scaled(-1.0, &grad))
}

/// Everything a step needs besides the previous state.
pub struct StepContext {
    pub calc: VelocityCalculus,
    pub params: PhysicalParams,
    pub tau: f64,
    pub constants: DomainConstants,
    pub h4: H4Check,
    pub settings: SolverSettings,
}

impl StepContext {
    pub fn new(grid: &GridSpec, params: PhysicalParams, tau: f64, settings: SolverSettings) -> Result<Self> {
        if !(tau > 0.0 && tau <= MAX_TAU) {
            return Err(Error::invalid(format!("tau must lie in (0, {MAX_TAU}], got {tau}")));
        }
        let constants = compute_domain_constants(grid, settings.c_omega)?;
        let h4 = check_h4(&params, &constants)?;
        let layout = UnknownLayout::new(grid);
        Ok(StepContext { calc: VelocityCalculus::new(&layout), params, tau, constants, h4, settings })
    }

    fn momentum_config(&self) -> MomentumConfig {
        MomentumConfig {
            tol: self.settings.momentum_tol,
            div_tol: self.settings.div_tol,
            max_iter: self.settings.max_iter,
            restart: self.settings.restart,
            preconditioner: self.settings.preconditioner,
        }
    }

    /// `v_τ^n`: zero at the first step, else `v^n` or its smoothed projection.
    pub fn transport_velocity(&self, state: &StateSnapshot) -> Result<VectorField> {
        if state.step == 0 {
            return Ok(VectorField::zeros(self.calc.grid()));
        }
        if !self.settings.transport_smoothing {
            return Ok(state.v.clone());
        }
        let smoothed = project_divergence_free(&jacobi_smooth(&state.v), 1e-14)?;
        let diff = smoothed.add_scaled(-1.0, &state.v);
        let dist = (diff.l2_sq() + diff.grad_l2_sq()?).sqrt();
        Ok(if dist <= self.tau { smoothed } else { state.v.clone() })
    }

    /// One full step `n → n+1`.
    pub fn advance(&self, state: &StateSnapshot) -> Result<StateSnapshot> {
        let g = *self.calc.grid();
        let tau = self.tau;
        let vt = self.transport_velocity(state)?;
        let dcfg = KrylovConfig { tol: self.settings.density_tol, max_iter: self.settings.max_iter, restart: 60 };
        let dsys = assemble_density_system(&state.rho, &vt, tau, self.params.theta)?;
        let (rho, dstats) = solve_density_step(&dsys, &state.rho, &dcfg)?;
        let density = audit_density_step(
            &state.rho,
            &rho,
            &vt,
            tau,
            &self.params,
            &self.constants,
            &dstats,
            self.settings.density_tol,
        )?;
        if !density.max_principle.holds {
            return Err(Error::DensityRange(format!(
                "step {}: density range [{:e}, {:e}] leaves [{}, {}]",
                state.step + 1,
                density.rho_min,
                density.rho_max,
                self.params.rho_min,
                self.params.rho_max
            )));
        }

        let t0 = state.step as f64 * tau;
        let t1 = t0 + tau;
        let force = self.params.forcing.step_average(&g, t0, t1);
        let inputs = MomentumInputs {
            rho_next: &rho,
            rho_prev: &state.rho,
            v_prev: &state.v,
            v_transport: &vt,
            force: &force,
            tau,
        };
        let msys = assemble_momentum_system(&self.calc, &inputs, &self.params)?;
        let layout = self.calc.layout();
        let mut x0 = layout.velocity_to_vec(&state.v);
        let pv = state.p.values();
        x0.extend(layout.pressure_cells().into_iter().map(|c| pv[c]));
        let (v, p, mstats) = solve_momentum_step(&msys, &self.momentum_config(), Some(&x0))?;
        let momentum =
            audit_momentum_step(&state.rho, &state.v, &rho, &v, &vt, &force, &self.params, &self.h4, tau, &mstats)?;
        Ok(StateSnapshot {
            step: state.step + 1,
            t: t1,
            rho,
            v,
            p,
            transport: vt,
            density: Some(density),
            momentum: Some(momentum),
        })
    }
}

/// One damped Jacobi sweep of the face-wise Laplacian with no-slip ghosts.
fn jacobi_smooth(v: &VectorField) -> VectorField {
    let g = *v.grid();
    let omega = 0.25 / g.axes().map(|a| 1.0 / (g.h[a] * g.h[a])).sum::<f64>();
    let faces = g
        .axes()
        .map(|c| {
            g.face_shape(c)
                .indices()
                .map(|i| {
                    if i[c] == 0 || i[c] == g.n[c] {
                        return 0.0;
                    }
                    let base = [i[0] as isize, i[1] as isize, i[2] as isize];
                    let mid = v.get(c, i);
                    let mut lap = 0.0;
                    for a in g.axes() {
                        let mut lo = base;
                        let mut hi = base;
                        lo[a] -= 1;
                        hi[a] += 1;
                        lap += (v.get_ext(c, lo) - 2.0 * mid + v.get_ext(c, hi)) / (g.h[a] * g.h[a]);
                    }
                    mid + omega * lap
                })
                .collect()
        })
        .collect();
    VectorField::from_face_values(&g, faces)
        .and_then(|f| f.fill_ghosts(BoundaryRule::DirichletZero))
        .expect("shapes match")
}

fn quantities(state: &StateSnapshot) -> Result<StepQuantities> {
    let rho = &state.rho;
    Ok(StepQuantities {
        t: state.t,
        mass: rho.integrate(),
        rho_min: rho.min(),
        rho_max: rho.max(),
        rho_fluct_l2: rho.fluctuation().l2_sq().sqrt(),
        grad_rho_sq: rho.h1_semi_sq()?,
        kinetic: kinetic_energy(rho, &state.v)?,
        grad_v_sq: state.v.grad_l2_sq()?,
        v_l2_sq: state.v.l2_sq(),
        prop34_slack: state.momentum.map_or(0.0, |m| m.prop34.slack),
        res_density: state.density.as_ref().map_or(0.0, |d| d.residual),
        res_momentum: state.momentum.map_or(0.0, |m| m.residual_momentum),
        res_div: state.momentum.map_or_else(|| divergence_l2(&state.v), |m| m.residual_div),
    })
}

/// Number of steps covering `[0, T]` with step `τ`.
pub fn step_count(t_final: f64, tau: f64) -> usize {
    let r = t_final / tau;
    if (r - r.round()).abs() < 1e-9 * r.max(1.0) {
        r.round() as usize
    } else {
        r.ceil() as usize
    }
}

pub fn fingerprint(scenario: &Scenario) -> String {
    let mut h = Sha256::new();
    h.update(b"ksmix ");
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update(b"\n");
    h.update(scenario.to_text().as_bytes());
    hex::encode(h.finalize())
}

/// Runs a scenario to its final time.
pub fn run(scenario: &Scenario) -> std::result::Result<Trajectory, RunFailure> {
    scenario.validate()?;
    let g = scenario.grid;
    let ctx = StepContext::new(&g, scenario.physics, scenario.tau, scenario.solver)?;
    let eta = scenario.eta.materialize(&g)?;
    let u = scenario.u.materialize(&g)?;
    let rho0 = if scenario.solver.smoothing_sweeps > 0 {
        prepare_initial_density(&eta, scenario.tau, scenario.solver.smoothing_sweeps)?.0
    } else {
        eta.clone()
    };
    let v0 = project_divergence_free(&u, 1e-14)?;
    let state0 = StateSnapshot {
        step: 0,
        t: 0.0,
        rho: rho0.clone(),
        v: v0.clone(),
        p: ScalarField::zeros(&g),
        transport: VectorField::zeros(&g),
        density: None,
        momentum: None,
    };
    let bound_constants = BoundConstants {
        alpha1: ctx.h4.alpha1,
        alpha2: ctx.h4.alpha2,
        kappa: ctx.h4.kappa,
        rho_max: scenario.physics.rho_max,
        tau: scenario.tau,
        u_sq: v0.l2_sq(),
        eta_grad_sq: rho0.h1_semi_sq()?,
    };
    let ledger = EnergyLedger::start(bound_constants, ctx.h4.mode, &quantities(&state0)?);
    let mut traj = Trajectory {
        grid: g,
        tau: scenario.tau,
        t_final: scenario.t_final,
        params: scenario.physics,
        settings: scenario.solver,
        constants: ctx.constants,
        h4: ctx.h4,
        bound_constants,
        eta,
        u: v0,
        states: vec![state0],
        ledger,
        fingerprint: fingerprint(scenario),
    };
    let nsteps = step_count(scenario.t_final, scenario.tau);
    for _ in 0..nsteps {
        let next = match ctx.advance(traj.final_state()) {
            Ok(s) => s,
            Err(error) => return Err(RunFailure { error, partial: Some(Box::new(traj)) }),
        };
        let f_sq = scenario.physics.forcing.l2_time_norm_sq(&g, next.t, scenario.tau);
        let q = match quantities(&next) {
            Ok(q) => q,
            Err(error) => return Err(RunFailure { error, partial: Some(Box::new(traj)) }),
        };
        if let Err(error) = traj.ledger.push_step(&q, f_sq) {
            return Err(RunFailure { error, partial: Some(Box::new(traj)) });
        }
        traj.states.push(next);
    }
    Ok(traj)
}

/// Ledger audit plus the per-step density estimates recorded during the run.
pub fn audit_run(traj: &Trajectory) -> Result<TrajectoryReport> {
    let mut report = audit_trajectory(&traj.ledger, &traj.audit_context())?;
    let mut l2_decay = CriterionSummary::new("density_l2_decay", true);
    let mut l2_energy = CriterionSummary::new("density_l2_energy", true);
    let mut grad = CriterionSummary::new("density_grad_energy", true);
    let mut grad_transport = CriterionSummary::new("density_grad_transport", true);
    for s in &traj.states {
        if let Some(d) = &s.density {
            l2_decay.record(s.step, d.l2_decay);
            l2_energy.record(s.step, d.l2_energy);
            if let Some(g) = d.grad_energy {
                grad.record(s.step, g);
            }
            grad_transport.record(s.step, d.grad_transport);
        }
    }
    report.criteria.extend([l2_decay, l2_energy, grad, grad_transport]);
    Ok(report)
}

pub fn is_verified(traj: &Trajectory) -> bool {
    traj.h4.mode == Mode::Verified
}
