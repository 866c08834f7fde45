mod common;

use ksmix::density::{assemble_density_system, audit_density_step, prepare_initial_density, solve_density_step};
use ksmix::energy::{c_tilde, compute_domain_constants, ConstantSource, DomainConstants, Mode};
use ksmix::fields::{ScalarField, VectorField};
use ksmix::grid::GridSpec;
use ksmix::linsolve::{KrylovConfig, SolveStats};
use ksmix::momentum::{
    assemble_momentum_system, audit_momentum_step, check_h4, solve_momentum_step, MomentumConfig, MomentumInputs,
    MomentumSolveStats,
};
use ksmix::operators::{divergence_l2, Averaging, UnknownLayout, VelocityCalculus};
use ksmix::physics::{ForcingSpec, PhysicalParams, ViscosityLaw};
use ksmix::sparse::{dot, SparseSystem};
use ksmix::time_loop::{SolverSettings, StateSnapshot, StepContext};
use rand::Rng;

use common::{dense_solve, random_density, random_faces, random_solenoidal, rel_diff, rng};

const PI: f64 = std::f64::consts::PI;

fn params(theta: f64, m: f64, big_m: f64, viscosity: ViscosityLaw, forcing: ForcingSpec) -> PhysicalParams {
    PhysicalParams { theta, rho_min: m, rho_max: big_m, viscosity, averaging: Averaging::Arithmetic, forcing }
}

fn unit_mu() -> ViscosityLaw {
    ViscosityLaw::Constant { mu0: 1.0 }
}

fn tight() -> KrylovConfig {
    KrylovConfig { tol: 1e-13, max_iter: 4000, restart: 80 }
}

fn sparse_eq(a: &SparseSystem, b: &SparseSystem, tol: f64) -> bool {
    let (da, db) = (a.to_dense(), b.to_dense());
    da.iter().zip(&db).all(|(ra, rb)| ra.iter().zip(rb).all(|(x, y)| (x - y).abs() <= tol))
}

fn initial(rho: ScalarField, v: VectorField) -> StateSnapshot {
    let g = *rho.grid();
    StateSnapshot {
        step: 0,
        t: 0.0,
        rho,
        v,
        p: ScalarField::zeros(&g),
        transport: VectorField::zeros(&g),
        density: None,
        momentum: None,
    }
}

#[test]
fn zero_velocity_density_matrix_is_symmetric() {
    let g = GridSpec::uniform(2, 6, 1.0).unwrap();
    let rho = random_density(&g, &mut rng(1), 0.9, 1.1);
    let sys = assemble_density_system(&rho, &VectorField::zeros(&g), 0.05, 0.02).unwrap();
    assert!(sys.matrix.asymmetry() < 1e-14);
}

#[test]
fn two_by_two_density_matrix_by_hand() {
    let g = GridSpec::new(2, &[2, 2], &[1.0, 0.5]).unwrap();
    let (tau, theta) = (0.1, 0.3);
    let rho = ScalarField::constant(&g, 1.0);
    let sys = assemble_density_system(&rho, &VectorField::zeros(&g), tau, theta).unwrap();
    let (wx, wy) = (theta / (g.h[0] * g.h[0]), theta / (g.h[1] * g.h[1]));
    // Flat order has axis 0 slowest: cell (i, j) is 2i + j.
    let expect = [
        [1.0 / tau + wx + wy, -wy, -wx, 0.0],
        [-wy, 1.0 / tau + wx + wy, 0.0, -wx],
        [-wx, 0.0, 1.0 / tau + wx + wy, -wy],
        [0.0, -wx, -wy, 1.0 / tau + wx + wy],
    ];
    let d = sys.matrix.to_dense();
    for r in 0..4 {
        for c in 0..4 {
            assert!((d[r][c] - expect[r][c]).abs() < 1e-12, "{d:?}");
        }
    }
    assert!(sys.rhs.iter().all(|&b| (b - 1.0 / tau).abs() < 1e-12));
}

#[test]
fn density_system_is_m_matrix_with_conservative_columns() {
    let g = GridSpec::uniform(2, 8, 1.0).unwrap();
    let mut r = rng(2);
    let rho = random_density(&g, &mut r, 0.9, 1.1);
    let v = random_solenoidal(&g, &mut r, 0.3);
    let tau = 0.02;
    let sys = assemble_density_system(&rho, &v, tau, 0.01).unwrap();
    for (i, s) in sys.matrix.column_sums().iter().enumerate() {
        assert!((s - 1.0 / tau).abs() < 1e-11, "column {i}: {s}");
    }
    for i in 0..sys.matrix.n_rows {
        let mut off = 0.0;
        for (j, x) in sys.matrix.row(i) {
            if i == j {
                assert!(x > 0.0);
            } else {
                assert!(x <= 0.0);
                off += x.abs();
            }
        }
        assert!(sys.matrix.get(i, i) >= off - 1e-12);
    }
}

#[test]
fn density_step_rejects_bad_parameters() {
    let g = GridSpec::uniform(2, 4, 1.0).unwrap();
    let rho = ScalarField::constant(&g, 1.0);
    let z = VectorField::zeros(&g);
    assert!(assemble_density_system(&rho, &z, 0.0, 0.1).is_err());
    assert!(assemble_density_system(&rho, &z, 0.1, -1.0).is_err());
}

#[test]
fn constant_density_is_reproduced() {
    let g = GridSpec::uniform(2, 7, 1.0).unwrap();
    let rho = ScalarField::constant(&g, 1.234);
    let v = random_solenoidal(&g, &mut rng(3), 0.2);
    let sys = assemble_density_system(&rho, &v, 0.1, 0.05).unwrap();
    let (next, _) = solve_density_step(&sys, &rho, &tight()).unwrap();
    assert!(next.values().iter().all(|x| (x - 1.234).abs() < 1e-12));
}

#[test]
fn eigenmode_decays_by_the_discrete_factor() {
    let g = GridSpec::uniform(2, 12, 1.0).unwrap();
    let (tau, theta) = (0.05, 0.02);
    let h = g.h[0];
    let lam = 2.0 / (h * h) * (1.0 - (PI * h).cos());
    let rho = ScalarField::from_fn(&g, |x| 1.0 + 0.1 * (PI * x[0]).cos());
    let sys = assemble_density_system(&rho, &VectorField::zeros(&g), tau, theta).unwrap();
    let (next, _) = solve_density_step(&sys, &rho, &tight()).unwrap();
    let q = 1.0 / (1.0 + theta * lam * tau);
    let expect = ScalarField::from_fn(&g, |x| 1.0 + 0.1 * q * (PI * x[0]).cos());
    assert!(rel_diff(&next.values(), &expect.values()) < 1e-12);

    let c = compute_domain_constants(&g, None).unwrap();
    let p = params(theta, 0.9, 1.1, unit_mu(), ForcingSpec::Zero);
    let stats = SolveStats::default();
    let rep = audit_density_step(&rho, &next, &VectorField::zeros(&g), tau, &p, &c, &stats, 1e-13).unwrap();
    // With ρ̄ = a cos: ‖ρ¹‖² + θτ‖∇ρ¹‖² = mean² |Ω| + a² q (q + θλτq) ‖cos‖² = mean²|Ω| + a² q ‖cos‖²,
    // so the slack of the L² energy estimate is a²(1 - q)‖cos‖².
    let cos_sq = ScalarField::from_fn(&g, |x| (PI * x[0]).cos()).l2_sq();
    let slack = 0.01 * (1.0 - q) * cos_sq;
    assert!((rep.l2_energy.slack - slack).abs() < 1e-12, "{} vs {slack}", rep.l2_energy.slack);
    assert!(rep.l2_energy.slack > 0.0 && rep.l2_decay.holds && rep.mass.holds);
}

#[test]
fn density_solves_match_dense_factorization() {
    let mut r = rng(4);
    for n in [3usize, 5, 9, 16] {
        let g = GridSpec::uniform(2, n, 1.0).unwrap();
        let rho = random_density(&g, &mut r, 0.5, 1.5);
        let v = random_solenoidal(&g, &mut r, 0.5);
        let sys = assemble_density_system(&rho, &v, r.random_range(0.01..0.5), r.random_range(0.001..0.2)).unwrap();
        let (x, _) = solve_density_step(&sys, &rho, &KrylovConfig::default()).unwrap();
        assert!(rel_diff(&x.values(), &dense_solve(&sys.matrix, &sys.rhs)) < 1e-9);
    }
}

#[test]
fn density_audit_flags() {
    let g = GridSpec::uniform(2, 5, 1.0).unwrap();
    let c = compute_domain_constants(&g, None).unwrap();
    let p = params(0.01, 1.0, 1.0, unit_mu(), ForcingSpec::Zero);
    let rho = ScalarField::constant(&g, 1.0);
    let z = VectorField::zeros(&g);
    let stats = SolveStats::default();
    let rep = audit_density_step(&rho, &rho, &z, 0.1, &p, &c, &stats, 1e-10).unwrap();
    for ch in [rep.l2_decay, rep.l2_energy, rep.grad_transport, rep.grad_energy.unwrap()] {
        assert!(ch.holds, "{ch:?}");
        assert_eq!(ch.slack, 0.0);
    }
    assert!(rep.mass.holds && rep.max_principle.holds);

    let mut vals = rho.values();
    vals[7] = 1.0 + 1e-6;
    let bumped = ScalarField::from_values(&g, vals).unwrap();
    let rep = audit_density_step(&rho, &bumped, &z, 0.1, &p, &c, &stats, 1e-10).unwrap();
    assert!(!rep.max_principle.holds);
    assert!(!rep.mass.holds);
}

#[test]
fn initial_density_preparation() {
    let g = GridSpec::uniform(2, 8, 1.0).unwrap();
    let checker = ScalarField::from_fn(&g, |x| {
        if ((x[0] * 8.0) as usize + (x[1] * 8.0) as usize).is_multiple_of(2) {
            0.9
        } else {
            1.1
        }
    });
    let (same, sweeps) = prepare_initial_density(&checker, 0.1, 0).unwrap();
    assert_eq!((same, sweeps), (checker.clone(), 0));
    let (one, _) = prepare_initial_density(&checker, 100.0, 1).unwrap();
    assert!(one.min() >= 0.9 - 1e-15 && one.max() <= 1.1 + 1e-15, "{} {}", one.min(), one.max());

    let smooth = ScalarField::from_fn(&g, |x| 1.0 + 0.1 * (PI * x[0]).cos() * (PI * x[1]).cos());
    let h1 = |a: &ScalarField| {
        let d = a.add_scaled(-1.0, &smooth);
        (d.l2_sq() + d.h1_semi_sq().unwrap()).sqrt()
    };
    let mut last = 0.0;
    for k in 1..6 {
        let (s, used) = prepare_initial_density(&smooth, 10.0, k).unwrap();
        assert_eq!(used, k);
        let d = h1(&s);
        assert!(d > last);
        last = d;
    }
    let tau = 0.5 * last;
    let (s, used) = prepare_initial_density(&smooth, tau, 50).unwrap();
    assert!(h1(&s) <= tau && used < 5);
    let (more, _) = prepare_initial_density(&smooth, 10.0, used + 1).unwrap();
    assert!(h1(&more) > tau, "sweep count is maximal");
}

#[test]
fn h4_examples() {
    let g = GridSpec::uniform(2, 8, 1.0).unwrap();
    let a_p = 1.0 / PI;
    let ct = c_tilde(1.0, a_p);
    let consts = DomainConstants {
        lambda1: PI * PI,
        a_p,
        c_omega: 1.0,
        c_omega_source: ConstantSource::AssumedDefault,
        c_tilde: ct,
        power_iterations: 0,
    };
    let h = check_h4(&params(0.001, 0.9, 1.1, unit_mu(), ForcingSpec::Zero), &consts).unwrap();
    let expect = 1.0 - 0.0005 * 0.2 - ct * ct * 1.21 / 0.9 * 0.001;
    assert!((h.alpha1 - expect).abs() < 1e-15);
    assert!((h.alpha1 - 0.976_363).abs() < 1e-6, "{}", h.alpha1);
    assert_eq!(h.mode, Mode::Verified);

    let hom =
        check_h4(&params(0.01, 1.2, 1.2, ViscosityLaw::Constant { mu0: 2.0 }, ForcingSpec::Zero), &consts).unwrap();
    assert!((hom.alpha1 - (2.0 - ct * ct * 1.2 * 0.01)).abs() < 1e-14);

    let big =
        check_h4(&params(1.0, 0.9, 1.1, unit_mu(), ForcingSpec::Zero), &compute_domain_constants(&g, None).unwrap())
            .unwrap();
    assert!(big.alpha1 < 0.0);
    assert_eq!(big.mode, Mode::Exploratory);
}

struct Case {
    g: GridSpec,
    layout: UnknownLayout,
    calc: VelocityCalculus,
    rho1: ScalarField,
    rho0: ScalarField,
    v0: VectorField,
    vt: VectorField,
    force: VectorField,
    tau: f64,
    params: PhysicalParams,
}

fn random_case(n: usize, seed: u64, law: ViscosityLaw) -> Case {
    let g = GridSpec::uniform(2, n, 1.0).unwrap();
    let mut r = rng(seed);
    let layout = UnknownLayout::new(&g);
    let calc = VelocityCalculus::new(&layout);
    let p = params(
        0.02,
        0.9,
        1.1,
        law,
        ForcingSpec::Sinusoid { amplitude: [1.0, 0.5, 0.0], omega: 2.0, phase: 0.1, mode: 1 },
    );
    let force = p.forcing.step_average(&g, 0.0, 0.05);
    Case {
        rho1: random_density(&g, &mut r, 0.9, 1.1),
        rho0: random_density(&g, &mut r, 0.9, 1.1),
        v0: random_solenoidal(&g, &mut r, 0.3),
        vt: random_solenoidal(&g, &mut r, 0.3),
        force,
        tau: 0.05,
        params: p,
        g,
        layout,
        calc,
    }
}

impl Case {
    fn inputs(&self) -> MomentumInputs<'_> {
        MomentumInputs {
            rho_next: &self.rho1,
            rho_prev: &self.rho0,
            v_prev: &self.v0,
            v_transport: &self.vt,
            force: &self.force,
            tau: self.tau,
        }
    }
}

#[test]
fn assembled_system_is_the_sum_of_its_blocks() {
    let c = random_case(4, 5, ViscosityLaw::Exponential { a: 1.0, b: 0.5 });
    let sys = assemble_momentum_system(&c.calc, &c.inputs(), &c.params).unwrap();
    let b = &sys.blocks;
    let sum = b
        .viscous
        .add(1.0, &b.coupling)
        .unwrap()
        .add(1.0, &b.advection)
        .unwrap()
        .add(1.0, &b.transport_correction)
        .unwrap()
        .add(1.0, &b.mass)
        .unwrap();
    assert!(sparse_eq(&sys.velocity, &sum, 1e-13));
    let nv = sys.n_velocity();
    for r in 0..nv {
        let load = b.load_inertia[r] + b.load_viscous_theta[r] + b.load_theta_sq[r] + b.load_force[r];
        assert!((sys.rhs[r] - load).abs() < 1e-14);
    }
    assert!(sys.rhs[nv..].iter().all(|&x| x == 0.0));
    let d = sys.saddle.to_dense();
    let cons = sys.constraint.to_dense();
    for (pi, row) in cons.iter().enumerate() {
        for (k, &x) in row.iter().enumerate() {
            assert_eq!(d[nv + pi][k], x);
            assert_eq!(d[k][nv + pi], x);
        }
    }
}

#[test]
fn constant_density_reduces_to_oseen() {
    let mut c = random_case(6, 6, ViscosityLaw::Exponential { a: 1.0, b: 0.5 });
    c.rho1 = ScalarField::constant(&c.g, 1.05);
    c.rho0 = ScalarField::constant(&c.g, 1.05);
    let sys = assemble_momentum_system(&c.calc, &c.inputs(), &c.params).unwrap();
    let b = &sys.blocks;
    assert_eq!(b.coupling.nnz(), 0);
    assert!(b.load_viscous_theta.iter().chain(&b.load_theta_sq).all(|&x| x == 0.0));
    let oseen =
        b.viscous.add(1.0, &b.advection).unwrap().add(1.0, &b.transport_correction).unwrap().add(1.0, &b.mass).unwrap();
    assert!(sparse_eq(&sys.velocity, &oseen, 1e-14));
    // Constant density and solenoidal transport: no transport correction either.
    assert!(b.transport_correction.values.iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn momentum_solves_match_dense_factorization() {
    for (n, seed) in [(4usize, 7u64), (8, 8), (12, 9), (16, 10)] {
        let c = random_case(n, seed, if n % 8 == 0 { unit_mu() } else { ViscosityLaw::Affine { a: 0.5, b: 0.6 } });
        let sys = assemble_momentum_system(&c.calc, &c.inputs(), &c.params).unwrap();
        let cfg = MomentumConfig { tol: 1e-12, div_tol: 1e-12, ..MomentumConfig::default() };
        let (v, p, stats) = solve_momentum_step(&sys, &cfg, None).unwrap();
        assert!(stats.residual_div <= 1e-12 && divergence_l2(&v) <= 1e-12);
        let mut x = c.layout.velocity_to_vec(&v);
        let pv = p.values();
        x.extend(c.layout.pressure_cells().into_iter().map(|k| pv[k]));
        let e = rel_diff(&x, &dense_solve(&sys.saddle, &sys.rhs));
        assert!(e < 1e-9, "{n}: {e}");
    }
}

#[test]
fn stokes_step_with_sinusoidal_force_matches_dense() {
    let g = GridSpec::uniform(2, 8, 1.0).unwrap();
    let layout = UnknownLayout::new(&g);
    let calc = VelocityCalculus::new(&layout);
    let one = ScalarField::constant(&g, 1.0);
    let z = VectorField::zeros(&g);
    let p = params(
        0.01,
        1.0,
        1.0,
        unit_mu(),
        ForcingSpec::Sinusoid { amplitude: [1.0, 1.0, 0.0], omega: 1.0, phase: 0.5, mode: 1 },
    );
    let force = p.forcing.step_average(&g, 0.0, 0.1);
    let inputs =
        MomentumInputs { rho_next: &one, rho_prev: &one, v_prev: &z, v_transport: &z, force: &force, tau: 0.1 };
    let sys = assemble_momentum_system(&calc, &inputs, &p).unwrap();
    let (v, _, _) = solve_momentum_step(&sys, &MomentumConfig::default(), None).unwrap();
    let dense = dense_solve(&sys.saddle, &sys.rhs);
    let nv = layout.n_velocity();
    assert!(rel_diff(&layout.velocity_to_vec(&v), &dense[..nv]) < 1e-8);
    assert!(v.l2_sq() > 0.0);
}

#[test]
fn velocity_does_not_depend_on_the_pinned_cell() {
    let c = random_case(8, 11, unit_mu());
    let solve = |pin: usize| {
        let layout = UnknownLayout::with_pinned(&c.g, pin);
        let calc = VelocityCalculus::new(&layout);
        let sys = assemble_momentum_system(&calc, &c.inputs(), &c.params).unwrap();
        let cfg = MomentumConfig { tol: 1e-12, div_tol: 1e-12, ..MomentumConfig::default() };
        solve_momentum_step(&sys, &cfg, None).unwrap()
    };
    let (va, pa, _) = solve(0);
    let (vb, pb, _) = solve(37);
    let dv = va.add_scaled(-1.0, &vb).l2_sq().sqrt();
    assert!(dv <= 1e-9, "{dv}");
    let shift = pa.get([5, 4, 0]) - pb.get([5, 4, 0]);
    let dp = pa.add_scaled(-1.0, &pb).map(|x| x - shift);
    assert!(dp.norms().unwrap().linf < 1e-8);
}

#[test]
fn coercivity_floor_on_random_no_slip_fields() {
    let g = GridSpec::uniform(2, 8, 1.0).unwrap();
    let c = random_case(8, 12, unit_mu());
    let sys = assemble_momentum_system(&c.calc, &c.inputs(), &c.params).unwrap();
    let consts = compute_domain_constants(&g, None).unwrap();
    let h = check_h4(&c.params, &consts).unwrap();
    assert_eq!(h.mode, Mode::Verified);
    let floor = (c.params.rho_min / c.tau).min(h.mu_min - 0.5 * c.params.theta * (c.params.rho_max - c.params.rho_min));
    let mut r = rng(13);
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        let v = random_faces(&g, &mut r, 1.0);
        let x = c.layout.velocity_to_vec(&v);
        let q = dot(&x, &sys.velocity.matvec(&x)) / (v.l2_sq() + v.grad_l2_sq().unwrap());
        worst = worst.min(q);
    }
    assert!(worst >= 0.9 * floor, "{worst} vs {floor}");
}

#[test]
fn rest_momentum_step_has_zero_energy_slack() {
    let g = GridSpec::uniform(2, 6, 1.0).unwrap();
    let rho = ScalarField::constant(&g, 1.0);
    let z = VectorField::zeros(&g);
    let p = params(0.01, 1.0, 1.0, unit_mu(), ForcingSpec::Zero);
    let h = check_h4(&p, &compute_domain_constants(&g, None).unwrap()).unwrap();
    let stats = MomentumSolveStats { iterations: 0, residual_momentum: 0.0, residual_div: 0.0, history: vec![] };
    let rep = audit_momentum_step(&rho, &z, &rho, &z, &z, &z, &p, &h, 0.1, &stats).unwrap();
    assert_eq!((rep.prop34_lhs, rep.prop34_rhs, rep.prop34.slack), (0.0, 0.0, 0.0));
    assert!(rep.prop34.holds);
}

fn context(g: &GridSpec, p: PhysicalParams, tau: f64) -> StepContext {
    let s = SolverSettings { density_tol: 1e-13, momentum_tol: 1e-12, div_tol: 1e-12, ..SolverSettings::default() };
    StepContext::new(g, p, tau, s).unwrap()
}

#[test]
fn rest_state_is_a_fixed_point() {
    let g = GridSpec::uniform(2, 8, 1.0).unwrap();
    let ctx = context(&g, params(0.01, 1.0, 1.0, unit_mu(), ForcingSpec::Zero), 0.1);
    let s0 = initial(ScalarField::constant(&g, 1.0), VectorField::zeros(&g));
    let s1 = ctx.advance(&s0).unwrap();
    let s2 = ctx.advance(&s1).unwrap();
    for s in [&s1, &s2] {
        assert!(s.rho.values().iter().all(|x| (x - 1.0).abs() < 1e-15));
        assert_eq!(s.v.l2_sq(), 0.0);
    }
}

#[test]
fn diffusion_only_step_matches_dense_oracle() {
    let g = GridSpec::uniform(2, 8, 1.0).unwrap();
    let p = params(0.05, 0.9, 1.1, ViscosityLaw::Exponential { a: 1.0, b: 0.3 }, ForcingSpec::Zero);
    let tau = 0.05;
    let ctx = context(&g, p, tau);
    let rho0 = ScalarField::from_fn(&g, |x| 1.0 + 0.1 * (PI * x[0]).cos());
    let z = VectorField::zeros(&g);
    let s1 = ctx.advance(&initial(rho0.clone(), z.clone())).unwrap();

    let dsys = assemble_density_system(&rho0, &z, tau, p.theta).unwrap();
    let rho1 = ScalarField::from_values(&g, dense_solve(&dsys.matrix, &dsys.rhs)).unwrap();
    assert!(rel_diff(&s1.rho.values(), &rho1.values()) < 1e-12);
    let inputs = MomentumInputs { rho_next: &rho1, rho_prev: &rho0, v_prev: &z, v_transport: &z, force: &z, tau };
    let msys = assemble_momentum_system(&ctx.calc, &inputs, &p).unwrap();
    let x = dense_solve(&msys.saddle, &msys.rhs);
    let v = ctx.calc.layout().velocity_to_vec(&s1.v);
    let gap = v.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(gap < 1e-9, "{gap:e}");
    // The θ loads of a one-dimensional mode are pure gradients; the pressure absorbs them.
    assert!(v.iter().all(|x| x.abs() < 1e-9), "{:e}", v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    let m = s1.momentum.unwrap();
    assert!(m.prop34.holds && m.prop34.slack >= 0.0);
}

#[test]
fn two_dimensional_density_mode_drives_a_flow() {
    let g = GridSpec::uniform(2, 8, 1.0).unwrap();
    let p = params(0.05, 0.8, 1.2, ViscosityLaw::Exponential { a: 1.0, b: 0.3 }, ForcingSpec::Zero);
    let ctx = context(&g, p, 0.05);
    let rho0 = ScalarField::from_fn(&g, |x| 1.0 + 0.1 * (PI * x[0]).cos() + 0.05 * (PI * x[1]).cos());
    let s1 = ctx.advance(&initial(rho0, VectorField::zeros(&g))).unwrap();
    assert!(s1.v.l2_sq() > 1e-20);
}
