//! Quadratic forms of the correlation matrices, Schur complement
//! sequences, and the correlation condition.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::numeric::KahanSum;

/// `y^T Gamma y` for the `1 x n` walk written as a weighted sum of squares.
///
/// With `mu_k = (1/k) sum_{j<k} y_j`,
/// `y^T Gamma y = n/(n-1) (y_1^2 / 2 + sum_{k>=2} (y_k - mu_k)^2 k/(k+1))`.
/// Returns the total and the individual (already scaled) terms.
pub fn quadratic_decomposition(y: &[f64], n: usize) -> Result<(f64, Vec<f64>)> {
    if n < 2 || y.len() != n - 1 {
        return Err(LabError::InvalidArgument(format!(
            "need a vector of length n - 1 = {}, got {}",
            n.saturating_sub(1),
            y.len()
        )));
    }
    let scale = n as f64 / (n as f64 - 1.0);
    let mut terms = Vec::with_capacity(y.len());
    let mut prefix = 0.0;
    for (i, &v) in y.iter().enumerate() {
        let k = (i + 1) as f64;
        let term = if i == 0 {
            0.5 * v * v
        } else {
            let d = v - prefix / k;
            d * d * k / (k + 1.0)
        };
        terms.push(scale * term);
        prefix += v;
    }
    let total = terms.iter().copied().collect::<KahanSum>().value();
    Ok((total, terms))
}

/// Inverse Schur complements `a_k` of a positive definite matrix under a
/// row/column ordering.
#[derive(Debug, Clone, Serialize)]
pub struct SchurSequence {
    pub a: Vec<f64>,
    /// Largest absolute entry of the matrix.
    pub psi_sup_norm: f64,
    pub g_alpha: Option<f64>,
}

/// `a_k = 1 / (Psi_22 - Psi_21 Psi_11^{-1} Psi_12)` for the leading `k`
/// block of the permuted matrix. The Schur complements are the squared
/// pivots of a Cholesky factorization.
pub fn schur_sequence(psi: &DMatrix<f64>, ordering: &[usize]) -> Result<SchurSequence> {
    let m = psi.nrows();
    if psi.ncols() != m || ordering.len() != m {
        return Err(LabError::InvalidArgument(format!(
            "matrix is {}x{}, ordering has {} entries",
            m,
            psi.ncols(),
            ordering.len()
        )));
    }
    let mut seen = vec![false; m];
    for &i in ordering {
        if i >= m || std::mem::replace(&mut seen[i], true) {
            return Err(LabError::InvalidArgument("ordering is not a permutation".into()));
        }
    }
    let p = DMatrix::from_fn(m, m, |i, j| psi[(ordering[i], ordering[j])]);
    let mut l = DMatrix::<f64>::zeros(m, m);
    let mut a = Vec::with_capacity(m);
    for j in 0..m {
        let mut d = p[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(LabError::NotPositiveDefinite { index: j, pivot: d });
        }
        let piv = d.sqrt();
        l[(j, j)] = piv;
        for i in (j + 1)..m {
            let mut s = p[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / piv;
        }
        a.push(1.0 / d);
    }
    let psi_sup_norm = psi.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    Ok(SchurSequence {
        a,
        psi_sup_norm,
        g_alpha: None,
    })
}

/// `1 + (l + k + 1) / (l k)`.
pub fn schur_complement_closed(l: usize, k: usize) -> f64 {
    let (l, k) = (l as f64, k as f64);
    1.0 + (l + k + 1.0) / (l * k)
}

/// The `lk x lk` block over the first `l` rows and `k` columns of a table,
/// row-major, with entry 4 on the diagonal, 2 for cells sharing a row or a
/// column, and 1 otherwise. Cell `(l, k)` is last.
pub fn interior_block(l: usize, k: usize) -> DMatrix<f64> {
    let m = l * k;
    DMatrix::from_fn(m, m, |a, b| {
        let (i, j) = (a / k, a % k);
        let (i2, j2) = (b / k, b % k);
        if a == b {
            4.0
        } else if i == i2 || j == j2 {
            2.0
        } else {
            1.0
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationEntry {
    pub dim: usize,
    pub sum: f64,
    pub slack: f64,
    pub pass: bool,
    /// First `k` (1-based) where the partial sum exceeds `g(alpha)`.
    pub failing_k: Option<usize>,
    pub min_a: f64,
}

/// Outcome of checking the correlation condition on a family of matrices.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    pub alpha: f64,
    pub g_alpha: f64,
    /// Largest absolute entry over the family, condition (i).
    pub psi_sup: f64,
    pub entries: Vec<CorrelationEntry>,
    pub worst_slack: f64,
    pub pass: bool,
}

/// Checks (i) that the entries of every `Psi` are bounded and (ii) that
/// `sum_k (1 / (alpha m))^{a_k} <= g(alpha)` for each `m x m` member, with
/// `a_k` taken in the natural ordering. Equality is accepted up to a
/// relative `1e-12`.
pub fn correlation_condition_check(
    family: &[DMatrix<f64>],
    alpha: f64,
    g: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<CorrelationReport> {
    if !(alpha >= 1.0) {
        return Err(LabError::InvalidArgument(format!("alpha = {alpha} (need alpha >= 1)")));
    }
    let g_alpha = g(alpha);
    let seqs = family
        .par_iter()
        .map(|psi| {
            let order: Vec<usize> = (0..psi.nrows()).collect();
            schur_sequence(psi, &order)
        })
        .collect::<Result<Vec<_>>>()?;
    let limit = g_alpha * (1.0 + 1e-12);
    let mut psi_sup = 0.0f64;
    let entries: Vec<CorrelationEntry> = seqs
        .iter()
        .map(|s| {
            psi_sup = psi_sup.max(s.psi_sup_norm);
            let base = 1.0 / (alpha * s.a.len() as f64);
            let mut acc = KahanSum::new();
            let mut failing_k = None;
            for (k, &a) in s.a.iter().enumerate() {
                acc.add(base.powf(a));
                if failing_k.is_none() && acc.value() > limit {
                    failing_k = Some(k + 1);
                }
            }
            let sum = acc.value();
            CorrelationEntry {
                dim: s.a.len(),
                sum,
                slack: g_alpha - sum,
                pass: failing_k.is_none(),
                failing_k,
                min_a: s.a.iter().copied().fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    let worst_slack = entries.iter().map(|e| e.slack).fold(f64::INFINITY, f64::min);
    let pass = psi_sup.is_finite() && entries.iter().all(|e| e.pass);
    Ok(CorrelationReport {
        alpha,
        g_alpha,
        psi_sup,
        entries,
        worst_slack,
        pass,
    })
}
