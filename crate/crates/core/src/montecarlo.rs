//! Seeded simulation of the continuous-time walks and the moment-based lower
//! bound on total variation.
//!
//! Every sample `i` draws from its own `ChaCha8` stream: the generator is
//! seeded with `seed_from_u64(seed)` and then switched to stream `i`. Results
//! therefore depend only on `(seed, i)` and not on the worker count.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{LabError, Result};
use crate::numeric::KahanSum;
use crate::spectral::{check_time, KernelVector};
use crate::torus::{canonical_coord, TorusVector};
use crate::walks::WalkSpec;

const SAMPLE_CHUNK: usize = 4096;
/// Jump counts are drawn by inversion up to this rate.
const INVERSION_MAX_RATE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub t: f64,
    pub samples: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        check_time(self.t)?;
        if self.samples == 0 {
            return Err(LabError::InvalidArgument("samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiStats {
    pub mean: f64,
    pub variance: f64,
    pub samples: usize,
    /// `1.96 sqrt(variance / samples)`.
    pub ci95_halfwidth: f64,
}

impl PsiStats {
    pub fn new(mean: f64, variance: f64, samples: usize) -> Self {
        let ci95_halfwidth = 1.96 * (variance / samples as f64).sqrt();
        PsiStats {
            mean,
            variance,
            samples,
            ci95_halfwidth,
        }
    }
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn poisson_count<R: Rng>(t: f64, rng: &mut R) -> u64 {
    if t == 0.0 {
        return 0;
    }
    if t > INVERSION_MAX_RATE {
        let dist = Poisson::new(t).expect("positive finite rate");
        return dist.sample(rng) as u64;
    }
    let u: f64 = rng.random();
    let mut p = (-t).exp();
    let mut cdf = p;
    let mut k = 0u64;
    while u > cdf {
        k += 1;
        p *= t / k as f64;
        if p == 0.0 {
            break;
        }
        cdf += p;
    }
    k
}

/// Draws endpoints of the walk started at 0.
struct Sampler<'a> {
    walk: &'a WalkSpec,
    index: WeightedIndex<f64>,
}

impl<'a> Sampler<'a> {
    fn new(walk: &'a WalkSpec) -> Result<Self> {
        let index = WeightedIndex::new(walk.increments.probabilities().iter().copied())
            .map_err(|e| LabError::InvalidArgument(format!("increment weights: {e}")))?;
        Ok(Sampler { walk, index })
    }

    fn endpoint(&self, t: f64, seed: u64, sample: usize, out: &mut [i64]) {
        let q = self.walk.q;
        let mut rng = sample_rng(seed, sample);
        out.fill(0);
        let support = self.walk.increments.support();
        for _ in 0..poisson_count(t, &mut rng) {
            let g = support[self.index.sample(&mut rng)].v.coords();
            for (x, &d) in out.iter_mut().zip(g) {
                *x += d;
            }
        }
        for x in out.iter_mut() {
            *x = canonical_coord(*x, q);
        }
    }
}

/// Endpoint of sample `index` under `(seed, t)`.
pub fn simulate_one(walk: &WalkSpec, t: f64, seed: u64, index: usize) -> Result<TorusVector> {
    check_time(t)?;
    let sampler = Sampler::new(walk)?;
    let mut out = vec![0i64; walk.m];
    sampler.endpoint(t, seed, index, &mut out);
    crate::torus::canonicalize(&out, walk.q)
}

/// Runs `f` on each simulated endpoint in parallel and returns the per-chunk
/// results in sample order.
fn map_samples<T, F>(walk: &WalkSpec, config: &SimConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(std::ops::Range<usize>, &mut dyn FnMut(usize) -> Vec<i64>) -> T + Sync,
{
    config.validate()?;
    let sampler = Sampler::new(walk)?;
    let chunks = config.samples.div_ceil(SAMPLE_CHUNK);
    Ok((0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * SAMPLE_CHUNK;
            let end = (start + SAMPLE_CHUNK).min(config.samples);
            let mut buf = vec![0i64; walk.m];
            let mut draw = |i: usize| {
                sampler.endpoint(config.t, config.seed, i, &mut buf);
                buf.clone()
            };
            f(start..end, &mut draw)
        })
        .collect())
}

/// All `samples` endpoints, in sample order.
pub fn simulate(walk: &WalkSpec, config: &SimConfig) -> Result<Vec<TorusVector>> {
    let parts = map_samples(walk, config, |range, draw| {
        range
            .map(|i| TorusVector::from_canonical(draw(i), walk.q))
            .collect::<Vec<_>>()
    })?;
    Ok(parts.into_iter().flatten().collect())
}

/// Visit counts of every lattice point, indexed as in [`crate::TorusLattice`].
pub fn empirical_counts(walk: &WalkSpec, config: &SimConfig) -> Result<Vec<u64>> {
    let lattice = walk.increments.lattice();
    let size = usize::try_from(lattice.size())
        .ok()
        .filter(|&s| s <= 100_000_000)
        .ok_or(LabError::TooLarge {
            what: "histogram",
            needed: lattice.size(),
            budget: 100_000_000,
        })?;
    let parts = map_samples(walk, config, |range, draw| {
        range.map(|i| lattice.index_of(&draw(i))).collect::<Vec<_>>()
    })?;
    let mut counts = vec![0u64; size];
    for idx in parts.into_iter().flatten() {
        counts[idx] += 1;
    }
    Ok(counts)
}

/// `sum_i cos(2 pi x_i / q)`.
pub fn psi_value(x: &TorusVector) -> f64 {
    psi_coords(x.coords(), x.q())
}

fn psi_coords(x: &[i64], q: i64) -> f64 {
    let scale = 2.0 * PI / q as f64;
    x.iter()
        .map(|&c| (c.unsigned_abs() as f64 * scale).cos())
        .collect::<KahanSum>()
        .value()
}

fn eigen(walk: &WalkSpec, theta: &[f64], t: f64) -> Result<f64> {
    Ok((t * (walk.char_fn(theta)? - 1.0)).exp())
}

/// `sum_i exp(t (Phi(2 pi delta_i / q) - 1))`.
pub fn psi_exact_mean(walk: &WalkSpec, t: f64) -> Result<f64> {
    check_time(t)?;
    let step = 2.0 * PI / walk.q as f64;
    let mut theta = vec![0.0; walk.m];
    let mut acc = KahanSum::new();
    for i in 0..walk.m {
        theta[i] = step;
        acc.add(eigen(walk, &theta, t)?);
        theta[i] = 0.0;
    }
    Ok(acc.value())
}

/// Exact mean and variance of `psi` under the walk at time `t`, from
/// `cos a cos b = (cos(a + b) + cos(a - b)) / 2` and the eigenvalues.
pub fn psi_exact_moments(walk: &WalkSpec, t: f64) -> Result<(f64, f64)> {
    let mean = psi_exact_mean(walk, t)?;
    let step = 2.0 * PI / walk.q as f64;
    let mut theta = vec![0.0; walk.m];
    let mut second = KahanSum::new();
    for i in 0..walk.m {
        for j in 0..walk.m {
            theta[i] += step;
            theta[j] += step;
            let plus = eigen(walk, &theta, t)?;
            theta[j] -= 2.0 * step;
            let minus = eigen(walk, &theta, t)?;
            theta[i] = 0.0;
            theta[j] = 0.0;
            second.add(0.5 * (plus + minus));
        }
    }
    Ok((mean, (second.value() - mean * mean).max(0.0)))
}

/// Mean and variance of `psi` under an explicit law on the lattice.
pub fn psi_moments_from_kernel(kernel: &KernelVector) -> (f64, f64) {
    let lattice = kernel.lattice();
    let mut coords = vec![0i64; lattice.m];
    let (mut first, mut second) = (KahanSum::new(), KahanSum::new());
    for (i, &p) in kernel.probs().iter().enumerate() {
        lattice.coords_of(i, &mut coords);
        let v = psi_coords(&coords, lattice.q);
        first.add(p * v);
        second.add(p * v * v);
    }
    let mean = first.value();
    (mean, (second.value() - mean * mean).max(0.0))
}

fn stats_from_chunks(parts: Vec<(usize, f64, f64)>) -> Result<PsiStats> {
    // Chan et al. pairwise merge of (count, mean, M2) in chunk order.
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for (nb, mb, m2b) in parts {
        if nb == 0 {
            continue;
        }
        let total = n + nb;
        let delta = mb - mean;
        mean += delta * nb as f64 / total as f64;
        m2 += m2b + delta * delta * (n as f64) * (nb as f64) / total as f64;
        n = total;
    }
    if n < 2 {
        return Err(LabError::InvalidArgument("variance needs at least 2 samples".into()));
    }
    Ok(PsiStats::new(mean, m2 / (n - 1) as f64, n))
}

fn welford(values: impl Iterator<Item = f64>) -> (usize, f64, f64) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for v in values {
        n += 1;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    (n, mean, m2)
}

/// Sample mean and unbiased variance of `psi` over simulated endpoints.
pub fn estimate_psi_stats(walk: &WalkSpec, config: &SimConfig) -> Result<PsiStats> {
    if config.samples < 2 {
        return Err(LabError::InvalidArgument("variance needs at least 2 samples".into()));
    }
    let q = walk.q;
    let parts = map_samples(walk, config, |range, draw| {
        welford(range.map(|i| psi_coords(&draw(i), q)))
    })?;
    stats_from_chunks(parts)
}

/// Statistics of `psi` over direct uniform draws on `Z_q^m`.
pub fn stationary_psi_stats(m: usize, q: i64, samples: usize, seed: u64) -> Result<PsiStats> {
    if samples < 2 {
        return Err(LabError::InvalidArgument("variance needs at least 2 samples".into()));
    }
    let lo = crate::torus::lower_rep(q);
    let chunks = samples.div_ceil(SAMPLE_CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * SAMPLE_CHUNK;
            let end = (start + SAMPLE_CHUNK).min(samples);
            let mut buf = vec![0i64; m];
            welford((start..end).map(|i| {
                let mut rng = sample_rng(seed, i);
                for x in buf.iter_mut() {
                    *x = rng.random_range(0..q) + lo;
                }
                psi_coords(&buf, q)
            }))
        })
        .collect();
    stats_from_chunks(parts)
}

/// `b^2 / (4 + b^2)` with `b = |mean gap| / eta` and
/// `eta^2 = (var_mu + var_nu) / 2`.
pub fn tv_lower_bound(mean_mu: f64, var_mu: f64, mean_nu: f64, var_nu: f64) -> Result<f64> {
    if !(var_mu >= 0.0 && var_nu >= 0.0) || !mean_mu.is_finite() || !mean_nu.is_finite() {
        return Err(LabError::InvalidArgument(format!(
            "moments must be finite with nonnegative variances, got ({mean_mu}, {var_mu}), ({mean_nu}, {var_nu})"
        )));
    }
    let gap = (mean_mu - mean_nu).abs();
    let eta_sq = 0.5 * (var_mu + var_nu);
    if eta_sq == 0.0 {
        return Ok(if gap > 0.0 { 1.0 } else { 0.0 });
    }
    let b_sq = gap * gap / eta_sq;
    Ok(b_sq / (4.0 + b_sq))
}

/// [`tv_lower_bound`] against the uniform law, whose `psi` has mean 0 and
/// variance `m / 2`.
pub fn tv_lower_bound_vs_uniform(stats: &PsiStats, m: usize) -> Result<f64> {
    tv_lower_bound(stats.mean, stats.variance, 0.0, m as f64 / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit of `counts` against `probs`. Cells with expected
/// count below 5 are pooled into one cell.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<ChiSquareTest> {
    if counts.len() != probs.len() {
        return Err(LabError::InvalidArgument(
            "counts and probabilities differ in length".into(),
        ));
    }
    let total: u64 = counts.iter().sum();
    let n = total as f64;
    let mut stat = KahanSum::new();
    let mut cells = 0usize;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * n;
        if e < 5.0 {
            pooled_obs += c as f64;
            pooled_exp += e;
        } else {
            stat.add((c as f64 - e).powi(2) / e);
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat.add((pooled_obs - pooled_exp).powi(2) / pooled_exp);
        cells += 1;
    }
    if cells < 2 {
        return Err(LabError::InvalidArgument("need at least two cells".into()));
    }
    let dof = cells - 1;
    let statistic = stat.value();
    let dist = ChiSquared::new(dof as f64).map_err(|e| LabError::InvalidArgument(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}
