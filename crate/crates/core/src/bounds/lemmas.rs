//! Direct numerical checks of the summation inequalities and of the
//! location of the maximum of a Gaussian comb.

use serde::Serialize;

use super::{double_sum_bound_constant, sum_bound_constant};
use crate::error::{LabError, Result};
use crate::numeric::KahanSum;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LemmaCheck {
    pub n: u64,
    pub alpha: f64,
    pub sum: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `sum_{k=1}^n (alpha n)^{-k/(k+1)}` against `(1 + e^{2/e}) / sqrt(alpha)`.
pub fn lemma_sum_check(n: u64, alpha: f64) -> Result<LemmaCheck> {
    if n == 0 || !(alpha >= 1.0) {
        return Err(LabError::InvalidArgument(format!(
            "need n >= 1 and alpha >= 1, got {n}, {alpha}"
        )));
    }
    let ln_base = (alpha * n as f64).ln();
    let sum = (1..=n)
        .map(|k| {
            let k = k as f64;
            (-ln_base * k / (k + 1.0)).exp()
        })
        .collect::<KahanSum>()
        .value();
    let bound = sum_bound_constant() / alpha.sqrt();
    Ok(LemmaCheck {
        n,
        alpha,
        sum,
        bound,
        pass: sum <= bound,
    })
}

/// `sum_{l,k<=n} (1/n^2)^{(l/(l+1)) (k/(k+1))}` against
/// `1 + 2e^{4/e} + 2e^{8/e} + e^{32/e}`.
pub fn lemma_double_sum_check(n: u64) -> Result<LemmaCheck> {
    if n == 0 {
        return Err(LabError::InvalidArgument("need n >= 1".into()));
    }
    let ln_base = -2.0 * (n as f64).ln();
    let ratio: Vec<f64> = (1..=n).map(|k| k as f64 / (k as f64 + 1.0)).collect();
    let mut acc = KahanSum::new();
    for &a in &ratio {
        let row: KahanSum = ratio.iter().map(|&b| (ln_base * a * b).exp()).collect();
        acc.add(row.value());
    }
    let sum = acc.value();
    let bound = double_sum_bound_constant();
    Ok(LemmaCheck {
        n,
        alpha: 1.0,
        sum,
        bound,
        pass: sum <= bound,
    })
}

/// `F(x) = sum_{j=-N}^{N} exp(-c (j - x)^2)`.
pub fn gaussian_comb(big_n: u64, c: f64, x: f64) -> f64 {
    let n = big_n as i64;
    (-n..=n)
        .map(|j| {
            let d = j as f64 - x;
            (-c * d * d).exp()
        })
        .collect::<KahanSum>()
        .value()
}

/// Maximiser of the comb over `(-1/2, 1/2]`: grid search at spacing
/// `resolution` followed by golden-section refinement around the best grid
/// point. Ties go to the point closest to 0.
pub fn gaussian_comb_argmax(big_n: u64, c: f64, resolution: f64) -> Result<f64> {
    if !(c > 0.0) || !(resolution > 0.0 && resolution <= 1e-4) {
        return Err(LabError::InvalidArgument(format!(
            "need c > 0 and resolution in (0, 1e-4], got c = {c}, resolution = {resolution}"
        )));
    }
    let steps = (0.5 / resolution).ceil() as i64;
    let h = 0.5 / steps as f64;
    let mut best = (f64::NEG_INFINITY, 0.0f64);
    for i in (1 - steps)..=steps {
        let x = i as f64 * h;
        let f = gaussian_comb(big_n, c, x);
        if f > best.0 || (f == best.0 && x.abs() < best.1.abs()) {
            best = (f, x);
        }
    }
    let (mut a, mut b) = ((best.1 - h).max(-0.5), (best.1 + h).min(0.5));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let f = |x: f64| gaussian_comb(big_n, c, x);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-12 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        }
    }
    let refined = 0.5 * (a + b);
    Ok(if f(refined) > best.0 { refined } else { best.1 })
}

/// Smallest `c` on the (increasing) grid from which the comb maximiser is
/// within `resolution` of 0 for every larger grid value.
pub fn comb_threshold(big_n: u64, c_grid: &[f64], resolution: f64) -> Result<Option<f64>> {
    let mut threshold = None;
    for &c in c_grid.iter().rev() {
        if gaussian_comb_argmax(big_n, c, resolution)?.abs() <= resolution {
            threshold = Some(c);
        } else {
            break;
        }
    }
    Ok(threshold)
}
