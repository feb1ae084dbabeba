//! Compressed sparse row matrices, Jacobi-preconditioned Krylov solvers and
//! M-matrix structure checks.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows below this size are multiplied sequentially.
const PAR_ROWS: usize = 4096;

/// Coordinate-form staging area. Duplicate entries are summed on compression.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        TripletBuilder {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        TripletBuilder {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            row < self.n_rows && col < self.n_cols,
            "triplet ({row}, {col}) out of bounds"
        );
        self.entries.push((row, col, value));
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// `y = T x` computed directly from the staged triplets.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
        y
    }

    /// Compresses to CSR, summing duplicates in insertion order.
    pub fn to_csr(&self) -> CsrMatrix {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by_key(|&e| (self.entries[e].0, self.entries[e].1));
        let mut row_ptr = vec![0; self.n_rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for e in order {
            let (i, j, v) = self.entries[e];
            if last == Some((i, j)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Sparse matrix in compressed row storage with strictly increasing column
/// indices within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Diagonal matrix with the given entries.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::identity(diag.len());
        m.values.copy_from_slice(diag);
        m
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut t = TripletBuilder::new(rows.len(), n_cols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t.to_csr()
    }

    /// Matrix with the same sparsity pattern and all stored values zero.
    pub fn zeros_like(&self) -> Self {
        CsrMatrix {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Storage slot of entry `(i, j)`, if present in the pattern.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|p| start + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.values[s])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols, "matvec: x has wrong length");
        assert_eq!(y.len(), self.n_rows, "matvec: y has wrong length");
        let row = |i: usize| -> f64 {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            self.col_idx[r.clone()]
                .iter()
                .zip(&self.values[r])
                .map(|(&j, &v)| v * x[j])
                .sum()
        };
        if self.n_rows >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `self + alpha * other`. Uses an elementwise update when the patterns
    /// agree and a merge otherwise.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                actual: other.n_rows,
            });
        }
        if self.same_pattern(other) {
            let mut out = self.clone();
            out.values
                .iter_mut()
                .zip(&other.values)
                .for_each(|(a, b)| *a += alpha * b);
            return Ok(out);
        }
        let mut t = TripletBuilder::with_capacity(self.n_rows, self.n_cols, self.nnz() + other.nnz());
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            c.iter().zip(v).for_each(|(&j, &x)| t.push(i, j, x));
            let (c, v) = other.row(i);
            c.iter().zip(v).for_each(|(&j, &x)| t.push(i, j, alpha * x));
        }
        Ok(t.to_csr())
    }

    /// Exact symmetry up to `tol · max|a_ij|`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (0..self.n_rows).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .all(|(&j, &v)| (v - self.get(j, i)).abs() <= tol * scale)
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in out.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            c.iter().zip(v).for_each(|(&j, &x)| row[j] = x);
        }
        out
    }

    /// Writes the matrix in MatrixMarket coordinate format (1-based).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                writeln!(w, "{} {} {:.17e}", i + 1, j + 1, x)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual target `‖Ax − b‖ ≤ tol ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KrylovMethod {
    Cg,
    BiCgStab,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final true relative residual.
    pub residual: f64,
    pub method: KrylovMethod,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.matvec(x);
    b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
}

/// Solves `A x = b` starting from zero.
pub fn solve_linear(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<Solution> {
    solve_linear_from(a, b, None, opts)
}

/// Solves `A x = b` with an optional initial guess. Symmetric matrices use
/// preconditioned conjugate gradients, all others BiCGStab; both with the
/// Jacobi preconditioner.
pub fn solve_linear_from(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: &SolverOptions) -> Result<Solution> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: a.n_cols(),
        });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.len(),
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let method = if a.is_symmetric(1e-14) {
        KrylovMethod::Cg
    } else {
        KrylovMethod::BiCgStab
    };
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            method,
        });
    }
    let mut x = match x0 {
        Some(g) => {
            if g.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: g.len(),
                });
            }
            g.to_vec()
        }
        None => vec![0.0; n],
    };
    let target = opts.tol * bnorm;
    let iterations = match method {
        KrylovMethod::Cg => pcg(a, b, &mut x, &inv_diag, target, opts.max_iter),
        KrylovMethod::BiCgStab => bicgstab(a, b, &mut x, &inv_diag, target, opts.max_iter),
    };
    let res = norm(&residual(a, &x, b)) / bnorm;
    if res > opts.tol || !res.is_finite() {
        return Err(Error::SolverFailure {
            iterations,
            residual: res,
        });
    }
    Ok(Solution {
        x,
        iterations,
        residual: res,
        method,
    })
}

fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], inv_diag: &[f64], target: f64, max_iter: usize) -> usize {
    let n = b.len();
    let mut r = residual(a, x, b);
    if norm(&r) <= target {
        return 0;
    }
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap == 0.0 || !pap.is_finite() {
            return it;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= target {
            // Guard against drift of the recursively updated residual.
            r = residual(a, x, b);
            if norm(&r) <= target {
                return it;
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    max_iter
}

fn bicgstab(a: &CsrMatrix, b: &[f64], x: &mut [f64], inv_diag: &[f64], target: f64, max_iter: usize) -> usize {
    let n = b.len();
    let mut r = residual(a, x, b);
    if norm(&r) <= target {
        return 0;
    }
    let mut r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < f64::MIN_POSITIVE * 1e10 {
            // Breakdown: restart with the current residual as shadow vector.
            r = residual(a, x, b);
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|vi| *vi = 0.0);
            p.iter_mut().for_each(|pi| *pi = 0.0);
            if norm(&r) <= target {
                return it;
            }
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * inv_diag[i];
        }
        a.matvec_into(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return it;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            r = residual(a, x, b);
            if norm(&r) <= target {
                return it;
            }
            continue;
        }
        for i in 0..n {
            z[i] = s[i] * inv_diag[i];
        }
        a.matvec_into(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= target {
            r = residual(a, x, b);
            if norm(&r) <= target {
                return it;
            }
        }
        if omega == 0.0 {
            return it;
        }
    }
    max_iter
}

/// Sign-structure summary used to certify the M-matrix sufficient condition
/// (Z-matrix plus strict diagonal dominance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPropertyReport {
    pub is_z_matrix: bool,
    pub strictly_diag_dominant: bool,
    pub row_sums_min: f64,
    pub max_offdiag: f64,
    pub failing_rows: Vec<usize>,
}

impl MatrixPropertyReport {
    pub fn is_m_matrix_certified(&self) -> bool {
        self.is_z_matrix && self.strictly_diag_dominant
    }
}

/// Scans `A` for the Z-matrix sign pattern (off-diagonals `<= tau_z`) and
/// strict row diagonal dominance. Identity rows count as dominant.
pub fn matrix_properties(a: &CsrMatrix, tau_z: f64) -> MatrixPropertyReport {
    let mut report = MatrixPropertyReport {
        is_z_matrix: true,
        strictly_diag_dominant: true,
        row_sums_min: f64::INFINITY,
        max_offdiag: f64::NEG_INFINITY,
        failing_rows: Vec::new(),
    };
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        let mut diag = 0.0;
        let mut off_abs = 0.0;
        let mut sum = 0.0;
        let mut z_ok = true;
        let mut identity_row = true;
        for (&j, &v) in cols.iter().zip(vals) {
            sum += v;
            if j == i {
                diag = v;
                identity_row &= v == 1.0;
            } else {
                off_abs += v.abs();
                identity_row &= v == 0.0;
                report.max_offdiag = report.max_offdiag.max(v);
                if v > tau_z {
                    z_ok = false;
                }
            }
        }
        let dominant = identity_row || diag > off_abs + tau_z;
        report.row_sums_min = report.row_sums_min.min(sum);
        report.is_z_matrix &= z_ok;
        report.strictly_diag_dominant &= dominant;
        if !(z_ok && dominant) {
            report.failing_rows.push(i);
        }
    }
    if report.max_offdiag == f64::NEG_INFINITY {
        report.max_offdiag = 0.0;
    }
    report
}
