//! Orthogonal matching pursuit with an incrementally updated QR factorization.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::training::SensingMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// Selected column indices in selection order; duplicate-free.
    pub support: Vec<usize>,
    /// Least-squares coefficients aligned with `support`.
    pub coefficients: Vec<Complex64>,
    /// `‖r‖` before the first iteration and after each one.
    pub residual_history: Vec<f64>,
    /// A selected column was (numerically) in the span of earlier ones; the
    /// coefficients are then the minimum-norm least-squares solution.
    pub rank_deficient: bool,
    /// Coefficients after each iteration, when requested.
    pub snapshots: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmpOptions {
    pub iterations: usize,
    /// Stop once `‖r‖ ≤ residual_tol·‖y‖`.
    pub residual_tol: f64,
    pub snapshots: bool,
}

impl OmpOptions {
    pub fn new(iterations: usize, residual_tol: f64) -> Self {
        Self {
            iterations,
            residual_tol,
            snapshots: false,
        }
    }
}

const DEPENDENT_TOL: f64 = 1e-10;

pub fn omp<A: SensingMatrix + ?Sized>(y: &DVector<Complex64>, a: &A, opts: OmpOptions) -> OmpResult {
    let y_norm = y.norm();
    let mut out = OmpResult {
        support: Vec::new(),
        coefficients: Vec::new(),
        residual_history: vec![y_norm],
        rank_deficient: false,
        snapshots: Vec::new(),
    };
    if y_norm == 0.0 || a.nrows() != y.len() {
        return out;
    }
    let norms = a.column_norms();
    let mut selected = vec![false; norms.len()];
    let mut q: Vec<DVector<Complex64>> = Vec::new();
    // Upper-triangular R as columns, with `None` for dependent picks.
    let mut r_cols: Vec<Option<Vec<Complex64>>> = Vec::new();
    let mut qty: Vec<Complex64> = Vec::new();
    let mut residual = y.clone();

    for _ in 0..opts.iterations {
        let corr = a.correlate(&residual);
        let mut best: Option<(usize, f64)> = None;
        for (k, (c, n)) in corr.iter().zip(&norms).enumerate() {
            if selected[k] || *n <= 0.0 {
                continue;
            }
            let score = c.norm() / n;
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((k, score));
            }
        }
        let Some((k, score)) = best else { break };
        if !(score > 0.0) {
            break;
        }
        selected[k] = true;
        out.support.push(k);

        let col = a.column(k);
        let mut v = col.clone();
        let mut rk = vec![Complex64::default(); q.len()];
        for _pass in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = qi.dotc(&v);
                rk[i] += c;
                v.axpy(-c, qi, Complex64::new(1.0, 0.0));
            }
        }
        let vn = v.norm();
        if vn <= DEPENDENT_TOL * col.norm() {
            out.rank_deficient = true;
            r_cols.push(None);
        } else {
            let qn = v / Complex64::new(vn, 0.0);
            let c = qn.dotc(&residual);
            residual.axpy(-c, &qn, Complex64::new(1.0, 0.0));
            qty.push(qn.dotc(y));
            rk.push(Complex64::new(vn, 0.0));
            q.push(qn);
            r_cols.push(Some(rk));
        }
        let rn = residual.norm();
        // Guard the history against round-off growth.
        let prev = *out.residual_history.last().expect("seeded with ‖y‖");
        out.residual_history.push(rn.min(prev));
        if opts.snapshots {
            out.snapshots.push(back_substitute(&r_cols, &qty));
        }
        if rn <= opts.residual_tol * y_norm {
            break;
        }
    }

    out.coefficients = if out.rank_deficient {
        min_norm_solve(y, a, &out.support)
    } else {
        back_substitute(&r_cols, &qty)
    };
    out
}

/// Solves `R c = Qᴴy`; dependent picks get a zero coefficient.
fn back_substitute(r_cols: &[Option<Vec<Complex64>>], qty: &[Complex64]) -> Vec<Complex64> {
    let idx: Vec<usize> = (0..r_cols.len()).filter(|&j| r_cols[j].is_some()).collect();
    let k = idx.len();
    let mut coeffs = vec![Complex64::default(); r_cols.len()];
    let mut x = vec![Complex64::default(); k];
    for i in (0..k).rev() {
        let mut acc = qty[i];
        for j in i + 1..k {
            let rj = r_cols[idx[j]].as_ref().expect("independent column");
            acc -= rj[i] * x[j];
        }
        let ri = r_cols[idx[i]].as_ref().expect("independent column");
        x[i] = acc / ri[i];
    }
    for (slot, j) in idx.iter().enumerate() {
        coeffs[*j] = x[slot];
    }
    coeffs
}

fn min_norm_solve<A: SensingMatrix + ?Sized>(y: &DVector<Complex64>, a: &A, support: &[usize]) -> Vec<Complex64> {
    let mut m = DMatrix::zeros(a.nrows(), support.len());
    for (j, &k) in support.iter().enumerate() {
        m.set_column(j, &a.column(k));
    }
    let svd = m.svd(true, true);
    let eps = svd.singular_values.max() * 1e-12 * a.nrows().max(support.len()) as f64;
    match svd.solve(y, eps) {
        Ok(x) => x.iter().copied().collect(),
        Err(_) => vec![Complex64::default(); support.len()],
    }
}
