//! Compressed sparse row matrices and a triplet builder.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub n_rows: usize,
    pub n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Triplets { n_rows, n_cols, entries: Vec::new() }
    }

    #[inline]
    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.n_rows && c < self.n_cols);
        if v != 0.0 {
            self.entries.push((r, c, v));
        }
    }

    /// Adds `alpha * m` with its rows and columns shifted.
    pub fn add_block(&mut self, m: &SparseSystem, row_off: usize, col_off: usize, alpha: f64) {
        for r in 0..m.n_rows {
            for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                self.push(r + row_off, m.col_idx[k] + col_off, alpha * m.values[k]);
            }
        }
    }

    /// Sorts, sums duplicates in insertion order and drops exact zeros.
    pub fn build(mut self) -> SparseSystem {
        self.entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        let mut rows = Vec::with_capacity(self.entries.len());
        let mut k = 0;
        while k < self.entries.len() {
            let (r, c, mut v) = self.entries[k];
            k += 1;
            while k < self.entries.len() && self.entries[k].0 == r && self.entries[k].1 == c {
                v += self.entries[k].2;
                k += 1;
            }
            if v != 0.0 {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..self.n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseSystem { n_rows: self.n_rows, n_cols: self.n_cols, row_ptr, col_idx, values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSystem {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Triplets::new(n_rows, n_cols).build()
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal_matrix(&vec![1.0; n])
    }

    pub fn diagonal_matrix(d: &[f64]) -> Self {
        let mut t = Triplets::new(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            t.push(i, i, v);
        }
        t.build()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        for r in 0..self.n_rows {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> SparseSystem {
        let mut t = Triplets::new(self.n_cols, self.n_rows);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                t.push(c, r, v);
            }
        }
        t.build()
    }

    /// `self + alpha * other`.
    pub fn add(&self, alpha: f64, other: &SparseSystem) -> Result<SparseSystem> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::invalid("matrix shapes differ"));
        }
        let mut t = Triplets::new(self.n_rows, self.n_cols);
        t.add_block(self, 0, 0, 1.0);
        t.add_block(other, 0, 0, alpha);
        Ok(t.build())
    }

    pub fn scale(&self, alpha: f64) -> SparseSystem {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_cols];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                s[c] += v;
            }
        }
        s
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// Largest `|a_ij - a_ji|`, or infinity for non-square matrices.
    pub fn asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let t = self.transpose();
        match self.add(-1.0, &t) {
            Ok(d) => d.values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            Err(_) => f64::INFINITY,
        }
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for r in 0..self.n_rows {
            for (c, _) in self.row(r) {
                bw = bw.max(r.abs_diff(c));
            }
        }
        bw
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                d[r][c] = v;
            }
        }
        d
    }

    /// Keeps the listed rows and columns, renumbered in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> SparseSystem {
        let mut col_map = vec![usize::MAX; self.n_cols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut t = Triplets::new(rows.len(), cols.len());
        for (k, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if col_map[c] != usize::MAX {
                    t.push(k, col_map[c], v);
                }
            }
        }
        t.build()
    }

    /// Writes one `row col value` line per entry, 1-based.
    pub fn write_dump(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "% {} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut t = Triplets::new(2, 3);
        t.push(0, 1, 1.0);
        t.push(1, 2, 2.0);
        t.push(0, 1, 0.5);
        t.push(1, 0, 1.0);
        t.push(1, 0, -1.0);
        let m = t.build();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0]), vec![3.0, 6.0]);
        assert_eq!(m.transpose().get(2, 1), 2.0);
        assert_eq!(m.column_sums(), vec![0.0, 1.5, 2.0]);
    }

    #[test]
    fn dump_is_one_based() {
        let m = SparseSystem::identity(2);
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.lines().nth(2).unwrap().starts_with("2 2 "));
    }
}
