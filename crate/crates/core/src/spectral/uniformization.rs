//! Brute-force heat kernels: `exp(t (P - I))` as a Poisson mixture of the
//! discrete powers `P^k`.

use statrs::function::gamma::ln_gamma;

use super::{check_budget, check_time, KernelVector};
use crate::error::{LabError, Result};
use crate::numeric::KahanSum;
use crate::walks::WalkSpec;

const ORACLE_STATES: u128 = 100_000;

/// Poisson(t) weights on `lo..lo + weights.len()`, with the discarded mass
/// below `eps`.
#[derive(Debug, Clone)]
pub struct PoissonWindow {
    pub lo: usize,
    pub weights: Vec<f64>,
    /// Mass outside the window.
    pub tail: f64,
}

impl PoissonWindow {
    pub fn hi(&self) -> usize {
        self.lo + self.weights.len() - 1
    }

    pub fn weight(&self, k: usize) -> f64 {
        if k < self.lo {
            return 0.0;
        }
        self.weights.get(k - self.lo).copied().unwrap_or(0.0)
    }
}

/// Smallest window of Poisson(t) weights whose complement has mass below
/// `eps`. With `trim_lower` unset the window always starts at 0 and only the
/// upper tail is cut.
pub fn poisson_window(t: f64, eps: f64, trim_lower: bool) -> Result<PoissonWindow> {
    check_time(t)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LabError::InvalidArgument(format!(
            "truncation eps = {eps} outside (0, 1)"
        )));
    }
    if t == 0.0 {
        return Ok(PoissonWindow {
            lo: 0,
            weights: vec![1.0],
            tail: 0.0,
        });
    }
    let kmax = (t + 40.0 * t.sqrt() + 40.0).ceil() as usize;
    let ln_t = t.ln();
    let pmf: Vec<f64> = (0..=kmax)
        .map(|k| (-t + k as f64 * ln_t - ln_gamma(k as f64 + 1.0)).exp())
        .collect();

    // suffix[k] = P(N >= k), accumulated from the far tail inwards.
    let mut suffix = vec![0.0; kmax + 2];
    let mut acc = KahanSum::new();
    for k in (0..=kmax).rev() {
        acc.add(pmf[k]);
        suffix[k] = acc.value();
    }
    let budget = if trim_lower { eps / 2.0 } else { eps };
    let mut hi = 0;
    while suffix[hi + 1] >= budget {
        hi += 1;
    }
    let mut lo = 0;
    let mut lower = 0.0;
    if trim_lower {
        let mut below = KahanSum::new();
        while lo < hi {
            below.add(pmf[lo]);
            if below.value() >= budget {
                break;
            }
            lower = below.value();
            lo += 1;
        }
    }
    Ok(PoissonWindow {
        lo,
        weights: pmf[lo..=hi].to_vec(),
        tail: lower + suffix[hi + 1],
    })
}

/// A Markov kernel stored row-wise: mass at `row` moves to `targets` with
/// the given probabilities.
#[derive(Debug, Clone)]
pub struct SparseChain {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    probs: Vec<f64>,
}

impl SparseChain {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut targets = Vec::new();
        let mut probs = Vec::new();
        offsets.push(0);
        for row in rows {
            for (j, p) in row {
                targets.push(j);
                probs.push(p);
            }
            offsets.push(targets.len());
        }
        SparseChain {
            offsets,
            targets,
            probs,
        }
    }

    pub fn states(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.targets[r.clone()]
            .iter()
            .copied()
            .zip(self.probs[r].iter().copied())
    }

    /// `to = from P` (distribution push-forward).
    pub fn push(&self, from: &[f64], to: &mut [f64]) {
        to.iter_mut().for_each(|x| *x = 0.0);
        for (i, &mass) in from.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (j, p) in self.row(i) {
                to[j] += mass * p;
            }
        }
    }

    /// `(P f)(i) = sum_j P(i, j) f(j)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.states())
            .map(|i| self.row(i).map(|(j, p)| p * f[j]).collect::<KahanSum>().value())
            .collect()
    }

    /// Distributions at every time in `ts`, started from a point mass at
    /// `start`. Each result misses at most `eps` of mass.
    pub fn uniformize(&self, start: usize, ts: &[f64], eps: f64, trim_lower: bool) -> Result<Vec<Vec<f64>>> {
        let windows = ts
            .iter()
            .map(|&t| poisson_window(t, eps, trim_lower))
            .collect::<Result<Vec<_>>>()?;
        let kmax = windows.iter().map(|w| w.hi()).max().unwrap_or(0);
        let n = self.states();
        let mut out = vec![vec![0.0; n]; ts.len()];
        let mut cur = vec![0.0; n];
        let mut next = vec![0.0; n];
        cur[start] = 1.0;
        for k in 0..=kmax {
            for (w, acc) in windows.iter().zip(out.iter_mut()) {
                let wk = w.weight(k);
                if wk > 0.0 {
                    for (a, &c) in acc.iter_mut().zip(&cur) {
                        *a += wk * c;
                    }
                }
            }
            if k < kmax {
                self.push(&cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
        }
        Ok(out)
    }
}

/// Transition chain `x -> x + g` with probability `mu(g)` on the whole lattice.
pub fn transition_chain(walk: &WalkSpec) -> Result<SparseChain> {
    let lattice = walk.increments.lattice();
    let size = check_budget("dense transition matrix", lattice.size(), ORACLE_STATES)?;
    let mut x = vec![0i64; walk.m];
    let mut y = vec![0i64; walk.m];
    let moves: Vec<(&[i64], f64)> = walk
        .increments
        .support()
        .iter()
        .zip(walk.increments.probabilities())
        .map(|(pt, &p)| (pt.v.coords(), p))
        .collect();
    let rows = (0..size)
        .map(|i| {
            lattice.coords_of(i, &mut x);
            moves
                .iter()
                .map(|(g, p)| {
                    for k in 0..x.len() {
                        y[k] = x[k] + g[k];
                    }
                    (lattice.index_of(&y), *p)
                })
                .collect()
        })
        .collect();
    Ok(SparseChain::from_rows(rows))
}

/// `sum_{k <= K} e^{-t} t^k / k! P^k(0, .)` with `K` the smallest cutoff
/// leaving Poisson tail mass below `truncation_eps`. Single-threaded.
pub fn uniformization_oracle(walk: &WalkSpec, t: f64, truncation_eps: f64) -> Result<KernelVector> {
    check_time(t)?;
    let chain = transition_chain(walk)?;
    let lattice = walk.increments.lattice();
    let start = lattice.index_of(&vec![0; walk.m]);
    let probs = chain
        .uniformize(start, &[t], truncation_eps, false)?
        .pop()
        .expect("one time requested");
    Ok(KernelVector::new(t, lattice, probs))
}

/// `E(f) = <(I - P) f, f>_pi` with `pi` uniform; `f` is indexed in lattice
/// order.
pub fn dirichlet_form(walk: &WalkSpec, f: &[f64]) -> Result<f64> {
    let chain = transition_chain(walk)?;
    if f.len() != chain.states() {
        return Err(LabError::InvalidArgument(format!(
            "function has {} values, lattice has {}",
            f.len(),
            chain.states()
        )));
    }
    let pf = chain.apply(f);
    let acc: KahanSum = f.iter().zip(&pf).map(|(a, b)| a * (a - b)).collect();
    Ok(acc.value() / f.len() as f64)
}
