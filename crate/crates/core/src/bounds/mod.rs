//! Closed-form mixing-time bounds and numerical checks of the conditions and
//! inequalities behind them.

mod decay;
mod lemmas;
mod schur;

use std::f64::consts::{E, PI};

use serde::Serialize;

use crate::error::{LabError, Result};

pub use decay::{decay_condition_scan, regime_bound, DecayReport};
pub use lemmas::{
    comb_threshold, gaussian_comb, gaussian_comb_argmax, lemma_double_sum_check, lemma_sum_check, LemmaCheck,
};
pub use schur::{
    correlation_condition_check, interior_block, quadratic_decomposition, schur_complement_closed, schur_sequence,
    CorrelationEntry, CorrelationReport, SchurSequence,
};

/// `1 + e^{2/e}`.
pub fn sum_bound_constant() -> f64 {
    1.0 + (2.0 / E).exp()
}

/// `1 + 2 e^{4/e} + 2 e^{8/e} + e^{32/e}`.
pub fn double_sum_bound_constant() -> f64 {
    1.0 + 2.0 * (4.0 / E).exp() + 2.0 * (8.0 / E).exp() + (32.0 / E).exp()
}

/// Exponent constant for the `1 x n` walk, `4 + 4 e^{2/e}`.
pub fn dg1xn_constant() -> f64 {
    4.0 * sum_bound_constant()
}

/// Exponent constant for the `n x n` walk,
/// `6 + 12 e^{4/e} + 12 e^{8/e} + 6 e^{32/e}`.
pub fn dgnxn_constant() -> f64 {
    6.0 * double_sum_bound_constant()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Dg1xn,
    Dgnxn,
    General,
}

/// The inequality that defines `alpha`.
pub enum AlphaCondition<'a> {
    /// `exp((4 + 4e^{2/e}) / sqrt(z)) - 1 <= 4 eps^2`.
    Dg1xn,
    /// `exp((6 + 12e^{4/e} + 12e^{8/e} + 6e^{32/e}) / z^{1/4}) - 1 <= 4 eps^2`.
    Dgnxn,
    /// `exp((2 + psi_sup) g(z)) - 1 <= 4 eps^2`, with `g` decreasing to 0.
    General { g: &'a dyn Fn(f64) -> f64, psi_sup: f64 },
}

impl AlphaCondition<'_> {
    /// Left-hand side `exp(...) - 1` at `z`.
    pub fn excess(&self, z: f64) -> f64 {
        match self {
            AlphaCondition::Dg1xn => (dg1xn_constant() / z.sqrt()).exp_m1(),
            AlphaCondition::Dgnxn => (dgnxn_constant() / z.powf(0.25)).exp_m1(),
            AlphaCondition::General { g, psi_sup } => ((2.0 + psi_sup) * g(z)).exp_m1(),
        }
    }

    pub fn flavor(&self) -> Flavor {
        match self {
            AlphaCondition::Dg1xn => Flavor::Dg1xn,
            AlphaCondition::Dgnxn => Flavor::Dgnxn,
            AlphaCondition::General { .. } => Flavor::General,
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(LabError::InvalidArgument(format!("epsilon = {epsilon} outside (0, 1)")))
    }
}

/// Smallest `z >= 1` satisfying the condition, by bisection on `log z` to a
/// relative tolerance of `1e-10`.
pub fn alpha_for_epsilon(epsilon: f64, condition: &AlphaCondition) -> Result<f64> {
    check_epsilon(epsilon)?;
    let target = 4.0 * epsilon * epsilon;
    let holds = |z: f64| condition.excess(z) <= target;
    if holds(1.0) {
        return Ok(1.0);
    }
    let mut lo = 0.0f64; // log z
    let mut hi = 1.0f64;
    while !holds(hi.exp()) {
        lo = hi;
        hi *= 2.0;
        if hi > 700.0 {
            return Err(LabError::InvalidArgument(
                "bounding function does not decay fast enough to reach the target".into(),
            ));
        }
    }
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        if holds(mid.exp()) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}

/// `gamma = (1/eps - 1) / 5`.
pub fn gamma_for_epsilon(epsilon: f64) -> f64 {
    (1.0 / epsilon - 1.0) / 5.0
}

/// `n q^2 log(alpha n) / (4 pi^2 sigma^2) (1 - r^2 / (12 q))^{-1}`.
pub fn general_upper_time(n: f64, q: f64, sigma_sq: f64, r: f64, alpha: f64) -> Result<f64> {
    if r * r >= 12.0 * q {
        return Err(LabError::InvalidRegime(format!(
            "r^2 = {} is not below 12 q = {}",
            r * r,
            12.0 * q
        )));
    }
    if !(sigma_sq > 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "sigma^2 = {sigma_sq} must be positive"
        )));
    }
    Ok(n * q * q * (alpha * n).ln() / (4.0 * PI * PI * sigma_sq) / (1.0 - r * r / (12.0 * q)))
}

/// `n q^2 / (4 pi^2 sigma^2) (log n + log gamma)`, or `None` when negative.
pub fn general_lower_time(n: f64, q: f64, sigma_sq: f64, gamma: f64) -> Option<f64> {
    positive(n * q * q / (4.0 * PI * PI * sigma_sq) * (n.ln() + gamma.ln()))
}

fn positive(x: f64) -> Option<f64> {
    (x > 0.0 && x.is_finite()).then_some(x)
}

/// Parameters of a time computation.
pub enum TimeFlavor<'a> {
    Dg1xn,
    Dgnxn,
    /// Generic walk on `Z_q^n` with `sigma^2`, `r`, and a correlation bound.
    General {
        g: &'a dyn Fn(f64) -> f64,
        psi_sup: f64,
        sigma_sq: f64,
        r: f64,
    },
}

/// Upper and lower mixing-time bounds at accuracy `epsilon`.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremTimes {
    pub flavor: Flavor,
    pub n: usize,
    pub q: i64,
    pub epsilon: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub t_upper: f64,
    /// `None` when the lower bound is not positive (small `n`).
    pub t_lower: Option<f64>,
    /// `1 x n` only: upper time with the factor `(1 - 3/q)^{-1}`.
    pub t_upper_proof_variant: Option<f64>,
    /// Upper time from the generic formula with the walk's own `sigma^2`, `r`.
    pub t_upper_general_substitution: Option<f64>,
}

pub fn theorem_times(n: usize, q: i64, epsilon: f64, flavor: &TimeFlavor) -> Result<TheoremTimes> {
    check_epsilon(epsilon)?;
    if n < 2 || q < 3 {
        return Err(LabError::InvalidArgument(format!(
            "need n >= 2 and q >= 3, got n = {n}, q = {q}"
        )));
    }
    let (nf, qf) = (n as f64, q as f64);
    let gamma = gamma_for_epsilon(epsilon);
    let base = nf * qf * qf / (8.0 * PI * PI);
    let times = match flavor {
        TimeFlavor::Dg1xn => {
            let alpha = alpha_for_epsilon(epsilon, &AlphaCondition::Dg1xn)?;
            let core = base * (alpha * nf).ln();
            TheoremTimes {
                flavor: Flavor::Dg1xn,
                n,
                q,
                epsilon,
                alpha,
                gamma,
                t_upper: core / (1.0 - 1.0 / (3.0 * qf)),
                t_lower: positive(base * (nf.ln() + (1.0 - 1.0 / nf).ln() + gamma.ln())),
                t_upper_proof_variant: (q > 3).then(|| core / (1.0 - 3.0 / qf)),
                t_upper_general_substitution: general_upper_time(nf, qf, 2.0 * (nf - 1.0) / nf, 2.0, alpha).ok(),
            }
        }
        TimeFlavor::Dgnxn => {
            let alpha = alpha_for_epsilon(epsilon, &AlphaCondition::Dgnxn)?;
            let base = nf * base;
            let m = (nf - 1.0) * (nf - 1.0);
            TheoremTimes {
                flavor: Flavor::Dgnxn,
                n,
                q,
                epsilon,
                alpha,
                gamma,
                t_upper: base * (alpha.sqrt() * (nf - 1.0)).ln() / (1.0 - 4.0 / (3.0 * qf)),
                t_lower: positive(base * (nf.ln() + (1.0 - 1.0 / nf).ln() + 0.5 * gamma.ln())),
                t_upper_proof_variant: None,
                t_upper_general_substitution: general_upper_time(m, qf, 4.0 * m / (nf * nf), 4.0, alpha).ok(),
            }
        }
        TimeFlavor::General {
            g,
            psi_sup,
            sigma_sq,
            r,
        } => {
            let alpha = alpha_for_epsilon(
                epsilon,
                &AlphaCondition::General {
                    g: *g,
                    psi_sup: *psi_sup,
                },
            )?;
            let t_upper = general_upper_time(nf, qf, *sigma_sq, *r, alpha)?;
            TheoremTimes {
                flavor: Flavor::General,
                n,
                q,
                epsilon,
                alpha,
                gamma,
                t_upper,
                t_lower: general_lower_time(nf, qf, *sigma_sq, gamma),
                t_upper_proof_variant: None,
                t_upper_general_substitution: Some(t_upper),
            }
        }
    };
    Ok(times)
}
