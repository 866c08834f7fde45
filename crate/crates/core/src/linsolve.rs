//! Iterative and banded direct solvers.
//!
//! All Krylov methods measure convergence by the true relative residual
//! `‖b - Ax‖ / ‖b‖`, recomputed at the end so reported residuals are never
//! recurrence estimates.

use crate::error::SolverError;
use crate::sparse::{dot, norm2, SparseSystem};

pub trait LinearOperator {
    fn size(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseSystem {
    fn size(&self) -> usize {
        self.n_rows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y);
    }
}

pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Inverse of the matrix diagonal; zero diagonal entries are left alone.
pub struct Jacobi {
    inv: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &SparseSystem) -> Self {
        Self::from_diagonal(&a.diagonal())
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Jacobi { inv: d.iter().map(|&v| if v != 0.0 { 1.0 / v } else { 1.0 }).collect() }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv) {
            *zi = ri * di;
        }
    }
}

/// Incomplete LU with the sparsity pattern of the matrix.
pub struct Ilu0 {
    lu: SparseSystem,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &SparseSystem) -> Result<Self, SolverError> {
        let n = a.n_rows;
        let mut lu = a.clone();
        let mut diag = vec![usize::MAX; n];
        for r in 0..n {
            for k in lu.row_ptr[r]..lu.row_ptr[r + 1] {
                if lu.col_idx[k] == r {
                    diag[r] = k;
                }
            }
            if diag[r] == usize::MAX {
                return Err(SolverError::Factorization(format!("ILU(0): row {r} has no diagonal")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in s..e {
                pos[lu.col_idx[k]] = k;
            }
            for k in s..e {
                let j = lu.col_idx[k];
                if j >= i {
                    break;
                }
                let pivot = lu.values[diag[j]];
                if pivot == 0.0 {
                    return Err(SolverError::Factorization(format!("ILU(0): zero pivot at {j}")));
                }
                let f = lu.values[k] / pivot;
                lu.values[k] = f;
                for kk in diag[j] + 1..lu.row_ptr[j + 1] {
                    let c = lu.col_idx[kk];
                    if pos[c] != usize::MAX && pos[c] >= s && pos[c] < e {
                        lu.values[pos[c]] -= f * lu.values[kk];
                    }
                }
            }
            for k in s..e {
                pos[lu.col_idx[k]] = usize::MAX;
            }
            if lu.values[diag[i]] == 0.0 {
                return Err(SolverError::Factorization(format!("ILU(0): zero pivot at {i}")));
            }
        }
        Ok(Ilu0 { lu, diag })
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let lu = &self.lu;
        for i in 0..n {
            let mut s = r[i];
            for k in lu.row_ptr[i]..self.diag[i] {
                s -= lu.values[k] * z[lu.col_idx[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.values[k] * z[lu.col_idx[k]];
            }
            z[i] = s / lu.values[self.diag[i]];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig { tol: 1e-10, max_iter: 2000, restart: 80 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// True relative residual of the returned iterate.
    pub residual: f64,
    /// Relative residual estimate after every iteration.
    pub history: Vec<f64>,
}

fn residual(a: &dyn LinearOperator, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
    a.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm2(r)
}

/// Restarted GMRES with right preconditioning.
pub fn gmres(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    m: &dyn Preconditioner,
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, SolveStats), SolverError> {
    const METHOD: &str = "gmres";
    let n = a.size();
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let bnorm = norm2(b);
    let mut stats = SolveStats::default();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], stats));
    }
    let restart = cfg.restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut rel = residual(a, b, &x, &mut r) / bnorm;
    let mut stalled = 0;
    while rel > cfg.tol {
        if stats.iterations >= cfg.max_iter {
            return Err(SolverError::NotConverged {
                method: METHOD,
                iterations: stats.iterations,
                residual: rel,
                history: stats.history,
            });
        }
        let beta = norm2(&r);
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut hess: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut cs: Vec<(f64, f64)> = Vec::with_capacity(restart);
        let mut gvec = vec![beta];
        let mut k = 0;
        while k < restart && stats.iterations < cfg.max_iter {
            m.apply(&basis[k], &mut z);
            a.apply(&z, &mut w);
            pre.push(z.clone());
            let mut hcol = vec![0.0; k + 2];
            for (jj, vj) in basis.iter().enumerate() {
                let hij = dot(&w, vj);
                hcol[jj] = hij;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hij * vi;
                }
            }
            // second pass keeps the basis orthogonal on stiff systems
            for (jj, vj) in basis.iter().enumerate() {
                let hij = dot(&w, vj);
                hcol[jj] += hij;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hij * vi;
                }
            }
            let wn = norm2(&w);
            hcol[k + 1] = wn;
            for (jj, &(c, s)) in cs.iter().enumerate() {
                let t = c * hcol[jj] + s * hcol[jj + 1];
                hcol[jj + 1] = -s * hcol[jj] + c * hcol[jj + 1];
                hcol[jj] = t;
            }
            let den = hcol[k].hypot(hcol[k + 1]);
            let (c, s) = if den == 0.0 { (1.0, 0.0) } else { (hcol[k] / den, hcol[k + 1] / den) };
            hcol[k] = den;
            hcol[k + 1] = 0.0;
            cs.push((c, s));
            let gk = gvec[k];
            gvec[k] = c * gk;
            gvec.push(-s * gk);
            hess.push(hcol);
            stats.iterations += 1;
            k += 1;
            let est = gvec[k].abs() / bnorm;
            stats.history.push(est);
            if est <= cfg.tol * 0.5 || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = gvec[i];
            for j in i + 1..k {
                s -= hess[j][i] * y[j];
            }
            if hess[i][i] == 0.0 {
                return Err(SolverError::Breakdown {
                    method: METHOD,
                    iterations: stats.iterations,
                    detail: "singular Hessenberg matrix".into(),
                });
            }
            y[i] = s / hess[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, pi) in x.iter_mut().zip(&pre[j]) {
                *xi += yj * pi;
            }
        }
        let new_rel = residual(a, b, &x, &mut r) / bnorm;
        if new_rel >= rel * 0.999 {
            stalled += 1;
            if stalled >= 3 {
                return Err(SolverError::Stagnation {
                    method: METHOD,
                    iterations: stats.iterations,
                    estimate: new_rel,
                });
            }
        } else {
            stalled = 0;
        }
        rel = new_rel;
    }
    stats.residual = rel;
    Ok((x, stats))
}

/// BiCGSTAB with right preconditioning.
pub fn bicgstab(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    m: &dyn Preconditioner,
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, SolveStats), SolverError> {
    const METHOD: &str = "bicgstab";
    let n = a.size();
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let bnorm = norm2(b);
    let mut stats = SolveStats::default();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], stats));
    }
    let mut r = vec![0.0; n];
    let mut rel = residual(a, b, &x, &mut r) / bnorm;
    let mut restarts = 0;
    let (mut p, mut v, mut ph, mut sh, mut s, mut t) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    'outer: while rel > cfg.tol {
        let rhat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        p.iter_mut().for_each(|e| *e = 0.0);
        v.iter_mut().for_each(|e| *e = 0.0);
        loop {
            if stats.iterations >= cfg.max_iter {
                return Err(SolverError::NotConverged {
                    method: METHOD,
                    iterations: stats.iterations,
                    residual: rel,
                    history: stats.history,
                });
            }
            let rho_new = dot(&rhat, &r);
            if rho_new.abs() < 1e-300 || omega == 0.0 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            m.apply(&p, &mut ph);
            a.apply(&ph, &mut v);
            let rv = dot(&rhat, &v);
            if rv == 0.0 {
                break;
            }
            alpha = rho_new / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            stats.iterations += 1;
            let sn = norm2(&s) / bnorm;
            if sn <= cfg.tol {
                for i in 0..n {
                    x[i] += alpha * ph[i];
                }
                stats.history.push(sn);
                rel = residual(a, b, &x, &mut r) / bnorm;
                if rel <= cfg.tol {
                    break 'outer;
                }
                break;
            }
            m.apply(&s, &mut sh);
            a.apply(&sh, &mut t);
            let tt = dot(&t, &t);
            omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
            for i in 0..n {
                x[i] += alpha * ph[i] + omega * sh[i];
                r[i] = s[i] - omega * t[i];
            }
            rho = rho_new;
            let est = norm2(&r) / bnorm;
            stats.history.push(est);
            if est <= cfg.tol {
                rel = residual(a, b, &x, &mut r) / bnorm;
                if rel <= cfg.tol {
                    break 'outer;
                }
                break;
            }
        }
        restarts += 1;
        let new_rel = residual(a, b, &x, &mut r) / bnorm;
        if restarts > 20 {
            return Err(SolverError::Breakdown {
                method: METHOD,
                iterations: stats.iterations,
                detail: format!("repeated breakdown, residual {new_rel:e}"),
            });
        }
        rel = new_rel;
    }
    stats.residual = rel;
    Ok((x, stats))
}

/// In-place map applied to CG residuals.
pub type Projection<'a> = &'a dyn Fn(&mut [f64]);

/// Conjugate gradients for symmetric positive (semi)definite operators.
///
/// `project` is applied to every residual and to the result; passing a
/// mean-removal projection solves singular Neumann problems on the
/// complement of the constants.
pub fn conjugate_gradient(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &KrylovConfig,
    project: Option<Projection<'_>>,
) -> Result<(Vec<f64>, SolveStats), SolverError> {
    const METHOD: &str = "cg";
    let n = a.size();
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let mut rhs = b.to_vec();
    if let Some(pr) = project {
        pr(&mut rhs);
        pr(&mut x);
    }
    let bnorm = norm2(&rhs);
    let mut stats = SolveStats::default();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], stats));
    }
    let mut r = vec![0.0; n];
    let mut rel = residual(a, &rhs, &x, &mut r) / bnorm;
    let mut ap = vec![0.0; n];
    for _round in 0..5 {
        if rel <= cfg.tol {
            break;
        }
        if let Some(pr) = project {
            pr(&mut r);
        }
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        while stats.iterations < cfg.max_iter {
            a.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                return Err(SolverError::Breakdown {
                    method: METHOD,
                    iterations: stats.iterations,
                    detail: format!("non-positive curvature {pap:e}"),
                });
            }
            let alpha = rr / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if let Some(pr) = project {
                pr(&mut r);
            }
            stats.iterations += 1;
            let rr_new = dot(&r, &r);
            let est = rr_new.sqrt() / bnorm;
            stats.history.push(est);
            if est <= cfg.tol {
                break;
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        if let Some(pr) = project {
            pr(&mut x);
        }
        rel = residual(a, &rhs, &x, &mut r) / bnorm;
        if stats.iterations >= cfg.max_iter {
            break;
        }
    }
    if rel > cfg.tol {
        return Err(SolverError::NotConverged {
            method: METHOD,
            iterations: stats.iterations,
            residual: rel,
            history: stats.history,
        });
    }
    stats.residual = rel;
    Ok((x, stats))
}

/// Cholesky factor of a symmetric positive definite banded matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &SparseSystem) -> Result<Self, SolverError> {
        let n = a.n_rows;
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for r in 0..n {
            for (c, v) in a.row(r) {
                if c <= r {
                    l[r * w + (c + bw - r)] += v;
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = l[i * w + (j + bw - i)];
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(SolverError::Factorization(format!("banded Cholesky: pivot {s:e} at {i}")));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (k + bw - i)] * x[k];
            }
            x[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l[k * w + (i + bw - k)] * x[k];
            }
            x[i] = s / self.l[i * w + bw];
        }
    }
}
