//! Small numerical helpers shared across modules.

/// Kahan-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a slice, in slice order.
pub fn kahan_sum(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<KahanSum>().value()
}

/// Binomial coefficient as f64 (exact for the small arguments used here).
pub fn choose(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Piecewise-linear interpolation of the first crossing of `level` by a
/// nonincreasing sampled curve `(xs, ys)`. Returns `None` when the level is
/// not bracketed by the samples.
pub fn first_crossing(xs: &[f64], ys: &[f64], level: f64) -> Option<f64> {
    debug_assert_eq!(xs.len(), ys.len());
    for i in 0..xs.len().saturating_sub(1) {
        let (y0, y1) = (ys[i], ys[i + 1]);
        if y0 >= level && y1 <= level {
            if y0 == y1 {
                return Some(xs[i]);
            }
            let frac = (y0 - level) / (y0 - y1);
            return Some(xs[i] + frac * (xs[i + 1] - xs[i]));
        }
    }
    None
}
