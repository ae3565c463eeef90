//! Exact high-frequency part of the `l2` sum.

use serde::Serialize;

use crate::error::Result;
use crate::numeric::KahanSum;
use crate::spectral::{check_budget, check_time, map_chunks, Budget, PhiEvaluator};
use crate::torus::odometer_step;
use crate::walks::{WalkKind, WalkSpec};

/// Sum over `{y : some |y_i| > sqrt(q) / (2 pi)}` of `exp(2 t (Phi - 1))`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub t: f64,
    pub sum: f64,
    /// Largest eigenvalue `Phi` over the high-frequency set.
    pub max_phi: f64,
    pub count: u128,
    pub lattice_size: u128,
    pub cutoff: f64,
    /// Analytic bound on `Phi` over the set for the built-in walks.
    pub regime_bound: Option<f64>,
    pub within_regime_bound: Option<bool>,
}

/// `1 - 1/(25 n q)` for `1 x n`, `1 - 1/(400 n^2 q)` for `n x n`,
/// `1 - 2/(25 n q)` for the simple random walk.
pub fn regime_bound(walk: &WalkSpec) -> Option<f64> {
    let q = walk.q as f64;
    match walk.kind {
        WalkKind::Dg1xn(n) => Some(1.0 - 1.0 / (25.0 * n as f64 * q)),
        WalkKind::Dgnxn(n) => Some(1.0 - 1.0 / (400.0 * (n * n) as f64 * q)),
        WalkKind::Srw(n) => Some(1.0 - 2.0 / (25.0 * n as f64 * q)),
        WalkKind::Custom => None,
    }
}

pub fn decay_condition_scan(walk: &WalkSpec, t: f64, budget: &Budget) -> Result<DecayReport> {
    check_time(t)?;
    let lattice = walk.increments.lattice();
    let size = check_budget("decay scan", lattice.size(), budget.enumeration)?;
    let cutoff = (walk.q as f64).sqrt() / (2.0 * std::f64::consts::PI);
    let eval = PhiEvaluator::new(walk);
    let q = walk.q;
    let parts = map_chunks(lattice, size, |_, len, coords| {
        let mut acc = KahanSum::new();
        let mut max_phi = f64::NEG_INFINITY;
        let mut count = 0u128;
        for _ in 0..len {
            if coords.iter().any(|&c| c.abs() as f64 > cutoff) {
                let phi = eval.eval(coords);
                acc.add((2.0 * t * (phi - 1.0)).exp());
                max_phi = max_phi.max(phi);
                count += 1;
            }
            odometer_step(coords, q);
        }
        (acc.value(), max_phi, count)
    });
    let sum = parts.iter().map(|p| p.0).collect::<KahanSum>().value();
    let max_phi = parts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let count = parts.iter().map(|p| p.2).sum();
    let bound = regime_bound(walk);
    Ok(DecayReport {
        t,
        sum,
        max_phi,
        count,
        lattice_size: lattice.size(),
        cutoff,
        regime_bound: bound,
        within_regime_bound: bound.map(|b| count == 0 || max_phi <= b),
    })
}
