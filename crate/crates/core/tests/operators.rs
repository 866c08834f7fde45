mod common;

use ksmix::fields::{BoundaryRule, ScalarField, VectorField};
use ksmix::grid::GridSpec;
use ksmix::momentum::{assemble_momentum_blocks, coupling_block, theta_loads, viscous_block, MomentumInputs};
use ksmix::operators::{
    divergence, divergence_matrix, gradient, laplacian, laplacian_matrix, pressure_blocks, upwind_matrix, Averaging,
    UnknownLayout, VelocityCalculus,
};
use ksmix::physics::{ForcingSpec, PhysicalParams, ViscosityLaw};
use ksmix::sparse::dot;
use proptest::prelude::*;

use common::{random_density, random_faces, random_solenoidal, rng};

fn params(viscosity: ViscosityLaw, theta: f64) -> PhysicalParams {
    PhysicalParams {
        theta,
        rho_min: 0.5,
        rho_max: 2.0,
        viscosity,
        averaging: Averaging::Arithmetic,
        forcing: ForcingSpec::Zero,
    }
}

fn grid_strategy() -> impl Strategy<Value = GridSpec> {
    prop_oneof![
        (2usize..10, 2usize..10, 0.5f64..2.0).prop_map(|(a, b, ly)| GridSpec::new(2, &[a, b], &[1.0, ly]).unwrap()),
        (2usize..5, 2usize..5, 2usize..5).prop_map(|(a, b, c)| GridSpec::new(3, &[a, b, c], &[1.0, 0.8, 1.2]).unwrap()),
    ]
}

fn planar_strategy() -> impl Strategy<Value = GridSpec> {
    (3usize..10, 3usize..10, 0.5f64..2.0).prop_map(|(a, b, ly)| GridSpec::new(2, &[a, b], &[1.0, ly]).unwrap())
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn divergence_and_gradient_are_negative_adjoints(g in grid_strategy(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let rho = random_density(&g, &mut r, -1.0, 1.0);
        let v = random_faces(&g, &mut r, 1.0);
        let lhs = divergence(&v).dot(&rho);
        let rhs = v.dot(&gradient(&rho).unwrap());
        let hmin = g.h[..g.dim].iter().copied().fold(f64::INFINITY, f64::min);
        let scale = (rho.l2_sq() * v.l2_sq()).sqrt() / hmin;
        prop_assert!((lhs + rhs).abs() <= 1e-13 * scale, "{lhs} {rhs}");
    }

    #[test]
    fn laplacian_is_symmetric_with_constant_kernel_and_nonpositive(g in grid_strategy(), seed in any::<u64>()) {
        let lap = laplacian_matrix(&g);
        let s = max_abs(&lap.values);
        prop_assert!(lap.asymmetry() <= 1e-14 * s);
        prop_assert!(max_abs(&lap.row_sums()) <= 1e-12 * s);
        prop_assert!(max_abs(&lap.column_sums()) <= 1e-12 * s);
        let x = random_density(&g, &mut rng(seed), -1.0, 1.0).values();
        prop_assert!(dot(&x, &lap.matvec(&x)) <= 1e-12 * s * dot(&x, &x));
    }

    #[test]
    fn laplacian_matrix_is_div_of_grad(g in grid_strategy(), seed in any::<u64>()) {
        let rho = random_density(&g, &mut rng(seed), -1.0, 1.0);
        let composed = divergence(&gradient(&rho).unwrap()).values();
        let via_matrix = laplacian_matrix(&g).matvec(&rho.values());
        let direct = laplacian(&rho).values();
        let s = max_abs(&composed).max(1.0);
        for k in 0..composed.len() {
            prop_assert!((composed[k] - via_matrix[k]).abs() <= 1e-12 * s);
            prop_assert!((composed[k] - direct[k]).abs() <= 1e-12 * s);
        }
    }

    #[test]
    fn upwind_is_conservative_m_matrix(g in planar_strategy(), seed in any::<u64>(), amp in 0.01f64..10.0) {
        let mut r = rng(seed);
        let v = random_solenoidal(&g, &mut r, amp);
        let a = upwind_matrix(&v).unwrap();
        let s = max_abs(&a.values).max(f64::MIN_POSITIVE);
        prop_assert!(max_abs(&a.column_sums()) <= 1e-13 * s);
        prop_assert!(max_abs(&a.row_sums()) <= 1e-13 * s);
        for i in 0..a.n_rows {
            for (j, x) in a.row(i) {
                if i == j { prop_assert!(x >= 0.0); } else { prop_assert!(x <= 0.0); }
            }
        }
        let rho = random_density(&g, &mut r, 0.0, 2.0);
        let ar = a.matvec(&rho.values());
        prop_assert!(ar.iter().sum::<f64>().abs() * g.cell_volume() <= 1e-13 * s * rho.integrate().max(1.0));
    }

    #[test]
    fn pressure_blocks_are_exact_negative_adjoints(g in grid_strategy(), seed in any::<u64>(), pin in any::<prop::sample::Index>()) {
        let layout = UnknownLayout::with_pinned(&g, pin.index(g.cells()));
        let (b, bt) = pressure_blocks(&layout);
        let mut r = rng(seed);
        let v: Vec<f64> = random_faces(&g, &mut r, 1.0).pipe(|f| layout.velocity_to_vec(&f));
        let q = random_density(&g, &mut r, -1.0, 1.0).values();
        let lhs = dot(&b.matvec(&v), &q);
        let rhs = dot(&v, &bt.matvec(&q));
        prop_assert!((lhs + rhs).abs() <= 1e-13 * max_abs(&b.values) * (dot(&v, &v) * dot(&q, &q)).sqrt());
    }

    #[test]
    fn skew_advection_has_no_energy(g in planar_strategy(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let calc = VelocityCalculus::new(&UnknownLayout::new(&g));
        let rho = random_density(&g, &mut r, 0.5, 2.0);
        let vt = random_solenoidal(&g, &mut r, 1.0);
        let z = VectorField::zeros(&g);
        let inputs = MomentumInputs { rho_next: &rho, rho_prev: &rho, v_prev: &z, v_transport: &vt, force: &z, tau: 0.1 };
        let b = assemble_momentum_blocks(&calc, &inputs, &params(ViscosityLaw::Constant { mu0: 1.0 }, 0.01)).unwrap();
        let u = random_faces(&g, &mut r, 1.0).pipe(|f| calc.layout().velocity_to_vec(&f));
        let e = dot(&u, &b.advection.matvec(&u));
        prop_assert!(e.abs() <= 1e-13 * max_abs(&b.advection.values).max(1e-300) * dot(&u, &u));
    }

    #[test]
    fn integrate_is_linear(g in grid_strategy(), seed in any::<u64>(), a in -3.0f64..3.0) {
        let mut r = rng(seed);
        let x = random_density(&g, &mut r, -1.0, 1.0);
        let y = random_density(&g, &mut r, -1.0, 1.0);
        let lhs = x.add_scaled(a, &y).integrate();
        let rhs = x.integrate() + a * y.integrate();
        prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + a.abs()) * g.domain_volume());
    }

    #[test]
    fn viscous_form_is_symmetric_positive(g in planar_strategy(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let calc = VelocityCalculus::new(&UnknownLayout::new(&g));
        let rho = random_density(&g, &mut r, 0.5, 2.0);
        let law = ViscosityLaw::Exponential { a: 0.3, b: 0.7 };
        for avg in [Averaging::Arithmetic, Averaging::Harmonic] {
            let p = PhysicalParams { averaging: avg, ..params(law, 0.01) };
            let a = viscous_block(&calc, &rho, &p);
            prop_assert!(a.asymmetry() <= 1e-13 * max_abs(&a.values));
            let u = random_faces(&g, &mut r, 1.0).pipe(|f| calc.layout().velocity_to_vec(&f));
            prop_assert!(dot(&u, &a.matvec(&u)) >= 0.0);
        }
    }
}

trait Pipe: Sized {
    fn pipe<R>(self, f: impl FnOnce(Self) -> R) -> R {
        f(self)
    }
}
impl<T> Pipe for T {}

fn g44() -> GridSpec {
    GridSpec::uniform(2, 4, 1.0).unwrap()
}

#[test]
fn gradient_matches_stencil_brute_force() {
    let g = GridSpec::new(2, &[4, 5], &[1.0, 2.0]).unwrap();
    let rho = random_density(&g, &mut rng(11), -1.0, 1.0);
    let gr = gradient(&rho).unwrap();
    for c in 0..2 {
        for (k, i) in g.face_shape(c).indices().enumerate() {
            let expect = if i[c] == 0 || i[c] == g.n[c] {
                0.0
            } else {
                let mut lo = i;
                lo[c] -= 1;
                (rho.get(i) - rho.get(lo)) / g.h[c]
            };
            assert_eq!(gr.face_values(c)[k], expect, "comp {c} face {i:?}");
        }
    }
}

#[test]
fn gradient_of_coordinate_is_one_inside_zero_on_walls() {
    let rho = ScalarField::from_fn(&g44(), |x| x[0]);
    let gr = gradient(&rho).unwrap();
    for (i, v) in g44().face_shape(0).indices().zip(gr.face_values(0)) {
        let expect = if i[0] == 0 || i[0] == 4 { 0.0 } else { 1.0 };
        assert!((v - expect).abs() < 1e-14, "{i:?} {v}");
    }
    assert!(gr.face_values(1).iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn divergence_matches_flux_brute_force() {
    let g = GridSpec::new(2, &[3, 4], &[1.0, 1.0]).unwrap();
    let faces: Vec<Vec<f64>> =
        (0..2).map(|c| (0..g.face_shape(c).len()).map(|k| (k as f64 * 0.37 + c as f64).sin()).collect()).collect();
    let v = VectorField::from_face_values(&g, faces.clone()).unwrap();
    let d = divergence(&v);
    for i in g.cell_shape().indices() {
        let mut s = 0.0;
        for c in 0..2 {
            let mut up = i;
            up[c] += 1;
            s += (faces[c][g.face_shape(c).flat(up)] - faces[c][g.face_shape(c).flat(i)]) / g.h[c];
        }
        assert!((d.get(i) - s).abs() < 1e-13);
    }
}

#[test]
fn uniform_flow_with_walls_only_compresses_boundary_cells() {
    let g = GridSpec::uniform(2, 5, 1.0).unwrap();
    let v = VectorField::from_fn(&g, |c, _| if c == 0 { 1.0 } else { 0.0 });
    let d = divergence(&v);
    for i in g.cell_shape().indices() {
        let boundary = i[0] == 0 || i[0] == 4;
        assert_eq!(d.get(i) != 0.0, boundary, "{i:?}");
    }
}

#[test]
fn cosine_is_a_neumann_eigenvector() {
    for n in [4usize, 7, 16] {
        let g = GridSpec::uniform(2, n, 1.0).unwrap();
        let h = g.h[0];
        let lam = 2.0 / (h * h) * (1.0 - (std::f64::consts::PI * h).cos());
        let rho = ScalarField::from_fn(&g, |x| (std::f64::consts::PI * x[0]).cos());
        let lr = laplacian_matrix(&g).matvec(&rho.values());
        for (a, b) in lr.iter().zip(rho.values()) {
            assert!((a + lam * b).abs() < 1e-11 * lam, "{a} vs {}", -lam * b);
        }
    }
}

#[test]
fn upwind_of_zero_velocity_is_zero_and_wall_flux_is_rejected() {
    let g = g44();
    assert_eq!(upwind_matrix(&VectorField::zeros(&g)).unwrap().nnz(), 0);
    let leaky =
        VectorField::from_face_values(&g, vec![vec![1.0; g.face_shape(0).len()], vec![0.0; g.face_shape(1).len()]])
            .unwrap();
    assert!(upwind_matrix(&leaky).is_err());
}

#[test]
fn upwind_transports_constants_without_interior_change() {
    let g = GridSpec::uniform(2, 6, 1.0).unwrap();
    let v = random_solenoidal(&g, &mut rng(3), 0.5);
    let a = upwind_matrix(&v).unwrap();
    let out = a.matvec(&vec![2.5; g.cells()]);
    assert!(max_abs(&out) < 1e-12);
}

#[test]
fn viscous_form_of_zero_is_zero() {
    let g = g44();
    let calc = VelocityCalculus::new(&UnknownLayout::new(&g));
    let rho = ScalarField::constant(&g, 1.0);
    let a = viscous_block(&calc, &rho, &params(ViscosityLaw::Constant { mu0: 2.0 }, 0.01));
    let z = vec![0.0; calc.layout().n_velocity()];
    assert_eq!(dot(&z, &a.matvec(&z)), 0.0);
}

/// Single interior x-face impulse on a uniform grid with constant μ.
/// By hand: `2μ Σ (∂_x u)² h²` over the two cells sharing the face gives
/// `2μ·2·(1/h)²·h² = 4μ`, and `μ Σ (∂_y u)²` over the two edges above and
/// below gives `μ·2·(1/h)²·h² = 2μ`.
#[test]
fn viscous_impulse_matches_hand_quadrature() {
    let g = GridSpec::uniform(2, 4, 1.0).unwrap();
    let layout = UnknownLayout::new(&g);
    let calc = VelocityCalculus::new(&layout);
    let mu0 = 1.7;
    let a = viscous_block(&calc, &ScalarField::constant(&g, 1.0), &params(ViscosityLaw::Constant { mu0 }, 0.01));
    let k = layout.vel_index(0, [2, 1, 0]).unwrap();
    assert!((a.get(k, k) - 6.0 * mu0).abs() < 1e-12, "{}", a.get(k, k));
}

/// A translation sampled on interior faces only sees the wall layers.
#[test]
fn viscous_form_of_translation_lives_at_walls() {
    let g = GridSpec::uniform(2, 6, 1.0).unwrap();
    let layout = UnknownLayout::new(&g);
    let calc = VelocityCalculus::new(&layout);
    let mu0 = 1.0;
    let a = viscous_block(&calc, &ScalarField::constant(&g, 1.0), &params(ViscosityLaw::Constant { mu0 }, 0.01));
    let u = layout.velocity_to_vec(&VectorField::from_fn(&g, |c, _| if c == 0 { 1.0 } else { 0.0 }));
    // Side walls: in each of the 6 rows, the wall cell sees u jump from 1 to the
    // zero wall face, contributing 2μ(1/h)²h². Top and bottom: each of the 5
    // interior x-faces per wall row meets a tangential ghost of -1, so the
    // edge derivative is 2/h and contributes μ(2/h)²h².
    let h = g.h[0];
    let vol = h * h;
    let side = 2.0 * mu0 * (1.0 / h).powi(2) * vol * 2.0 * 6.0;
    let top_bottom = mu0 * (2.0 / h).powi(2) * vol * 2.0 * 5.0;
    let form = dot(&u, &a.matvec(&u));
    assert!((form - side - top_bottom).abs() < 1e-10 * form, "{form} vs {}", side + top_bottom);
}

#[test]
fn coupling_and_theta_loads_vanish_for_constant_density() {
    let g = g44();
    let calc = VelocityCalculus::new(&UnknownLayout::new(&g));
    let rho = ScalarField::constant(&g, 1.3);
    assert_eq!(coupling_block(&calc, &rho, 0.1).nnz(), 0);
    let (l2, l3) = theta_loads(&calc, &rho, &params(ViscosityLaw::Exponential { a: 1.0, b: 1.0 }, 0.1));
    assert!(l2.iter().chain(&l3).all(|&x| x == 0.0));
}

#[test]
fn constant_viscosity_kills_the_first_theta_load() {
    let g = g44();
    let calc = VelocityCalculus::new(&UnknownLayout::new(&g));
    let rho = ScalarField::from_fn(&g, |x| 1.0 + 0.3 * x[0] * x[0] + 0.1 * x[1]);
    let (l2, l3) = theta_loads(&calc, &rho, &params(ViscosityLaw::Constant { mu0: 1.0 }, 0.1));
    assert!(l2.iter().all(|&x| x == 0.0));
    assert!(l3.iter().any(|&x| x != 0.0));
}

/// `ρ = 1 + x`, `θ = 1`, `μ(ρ) = ρ`: for an x-face test the two loads are
/// `-2θ Σ_cells (μ'/ρ)(∂xρ)² ∂x w h²` and `θ² Σ_cells (1/ρ)(∂xρ)² ∂x w h²`.
#[test]
fn theta_loads_match_brute_force_for_linear_density() {
    let g = GridSpec::uniform(2, 4, 1.0).unwrap();
    let layout = UnknownLayout::new(&g);
    let calc = VelocityCalculus::new(&layout);
    let rho = ScalarField::from_fn(&g, |x| 1.0 + x[0]);
    let p = params(ViscosityLaw::Affine { a: 0.0, b: 1.0 }, 1.0);
    let (l2, l3) = theta_loads(&calc, &rho, &p);
    let h = g.h[0];
    let vol = h * h;
    for j in 0..4 {
        for fi in 1..4 {
            let k = layout.vel_index(0, [fi, j, 0]).unwrap();
            let mut e2 = 0.0;
            let mut e3 = 0.0;
            for (cell, sign) in [(fi - 1, 1.0), (fi, -1.0)] {
                let r = rho.get([cell, j, 0]);
                let gx = if cell == 0 || cell == 3 { 0.5 } else { 1.0 };
                let dw = sign / h;
                e2 += -2.0 * (1.0 / r) * gx * gx * dw * vol;
                e3 += (1.0 / r) * gx * gx * dw * vol;
            }
            assert!((l2[k] - e2).abs() < 1e-12, "face {fi},{j}: {} vs {e2}", l2[k]);
            assert!((l3[k] - e3).abs() < 1e-12, "face {fi},{j}: {} vs {e3}", l3[k]);
        }
    }
}

#[test]
fn gradient_of_constant_pressure_is_zero_before_pinning() {
    let g = g44();
    let layout = UnknownLayout::new(&g);
    let d = divergence_matrix(&layout);
    let ones = vec![1.0; g.cells()];
    assert!(max_abs(&d.transpose().matvec(&ones)) < 1e-12);
}

#[test]
fn linear_solenoidal_field_has_zero_constraint_inside() {
    let g = GridSpec::uniform(2, 6, 1.0).unwrap();
    let v = VectorField::from_fn(&g, |c, x| if c == 0 { x[0] } else { -x[1] });
    let d = divergence(&v);
    for i in g.cell_shape().indices() {
        if g.is_interior_cell(i) {
            assert!(d.get(i).abs() < 1e-12);
        }
    }
}

#[test]
fn neumann_ghosts_feed_the_operators() {
    let g = g44();
    let raw = ScalarField::from_values_unfilled(&g, vec![1.0; 16]).unwrap();
    assert!(gradient(&raw).is_err());
    let filled = raw.fill_ghosts(BoundaryRule::NeumannZero).unwrap();
    assert_eq!(gradient(&filled).unwrap().l2_sq(), 0.0);
}
