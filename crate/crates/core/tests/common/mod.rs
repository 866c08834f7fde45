#![allow(dead_code)]

use ksmix::convergence::curl_field;
use ksmix::fields::{ScalarField, VectorField};
use ksmix::grid::GridSpec;
use ksmix::sparse::SparseSystem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn random_density(grid: &GridSpec, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
    let vals = (0..grid.cells()).map(|_| rng.random_range(lo..=hi)).collect();
    ScalarField::from_values(grid, vals).unwrap()
}

/// Face field with random values and whatever boundary faces `from_fn` keeps.
pub fn random_faces(grid: &GridSpec, rng: &mut ChaCha8Rng, amp: f64) -> VectorField {
    let faces = grid
        .axes()
        .map(|c| {
            let shape = grid.face_shape(c);
            (0..shape.len()).map(|_| rng.random_range(-amp..=amp)).collect()
        })
        .collect();
    VectorField::from_face_values(grid, faces).unwrap().fill_ghosts(ksmix::fields::BoundaryRule::DirichletZero).unwrap()
}

/// Discretely solenoidal no-slip-normal field: the curl of random nodal
/// stream values that vanish on the boundary.
pub fn random_solenoidal(grid: &GridSpec, rng: &mut ChaCha8Rng, amp: f64) -> VectorField {
    assert_eq!(grid.dim, 2, "random_solenoidal is planar");
    let (nx, ny) = (grid.n[0] + 1, grid.n[1] + 1);
    let mut psi = vec![0.0; nx * ny];
    for i in 1..nx - 1 {
        for j in 1..ny - 1 {
            psi[i * ny + j] = rng.random_range(-amp..=amp);
        }
    }
    let h = grid.h;
    curl_field(grid, 0, 1, move |x| {
        let i = (x[0] / h[0]).round() as usize;
        let j = (x[1] / h[1]).round() as usize;
        psi[i.min(nx - 1) * ny + j.min(ny - 1)]
    })
}

pub fn dense(a: &SparseSystem) -> DMatrix<f64> {
    let d = a.to_dense();
    DMatrix::from_fn(a.n_rows, a.n_cols, |i, j| d[i][j])
}

pub fn dense_solve(a: &SparseSystem, b: &[f64]) -> Vec<f64> {
    let x = dense(a).lu().solve(&DVector::from_column_slice(b)).expect("nonsingular");
    x.iter().copied().collect()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}
