//! The `1 x n` walk lumped by coordinate permutations.
//!
//! In full coordinates the walk lives on `{x in Z_q^n : sum x = 0}` and its
//! generators are invariant under permuting coordinates. Started at `0`, the
//! law at time `t` is therefore constant on permutation orbits, and an orbit
//! is determined by the value counts `c_a = #{i : x_i = a}`. The same
//! symmetry, together with invariance of `Phi` under adding a constant to
//! every coordinate, collapses the `l2` sum to a sum over multisets.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{check_budget, check_time, Budget};
use crate::error::{LabError, Result};
use crate::numeric::KahanSum;
use crate::spectral::SparseChain;

/// Calls `f` on every composition of `total` into `parts` nonnegative parts.
fn for_each_composition(total: usize, parts: usize, f: &mut impl FnMut(&[u8])) {
    fn rec(buf: &mut Vec<u8>, left: usize, parts: usize, f: &mut impl FnMut(&[u8])) {
        if buf.len() + 1 == parts {
            buf.push(left as u8);
            f(buf);
            buf.pop();
            return;
        }
        for c in (0..=left).rev() {
            buf.push(c as u8);
            rec(buf, left - c, parts, f);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(parts);
    rec(&mut buf, total, parts, f);
}

fn composition_count(total: usize, parts: usize) -> u128 {
    // C(total + parts - 1, parts - 1)
    let (top, k) = (total + parts - 1, (parts - 1).min(total));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((top - i) as u128) / (i as u128 + 1);
    }
    acc
}

fn multinomial(counts: &[u8]) -> u128 {
    let mut acc: u128 = 1;
    let mut seen: u128 = 0;
    for &c in counts {
        for j in 1..=c as u128 {
            seen += 1;
            acc = acc * seen / j;
        }
    }
    acc
}

fn check_sizes(n: usize, q: i64) -> Result<()> {
    if !(2..=200).contains(&n) {
        return Err(LabError::InvalidArgument(format!(
            "orbit methods need 2 <= n <= 200, got {n}"
        )));
    }
    if q < 3 {
        return Err(LabError::InvalidArgument(format!("q = {q} (need q >= 3)")));
    }
    Ok(())
}

/// `l2_bound_sq` for the `1 x n` walk as a sum over value multisets.
pub fn dg1xn_l2_bound_sq(n: usize, q: i64, ts: &[f64], budget: &Budget) -> Result<Vec<f64>> {
    check_sizes(n, q)?;
    for &t in ts {
        check_time(t)?;
    }
    let qs = q as usize;
    check_budget("l2 bound (multisets)", composition_count(n, qs), budget.enumeration)?;
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..qs)
        .map(|a| {
            let th = 2.0 * PI * a as f64 / q as f64;
            (th.cos(), th.sin())
        })
        .unzip();
    let nf = n as f64;
    let mut acc = vec![KahanSum::new(); ts.len()];
    for_each_composition(n, qs, &mut |c| {
        if c.iter().any(|&x| x as usize == n) {
            // constant vectors: the trivial frequency
            return;
        }
        let (mut re, mut im) = (0.0, 0.0);
        for (a, &k) in c.iter().enumerate() {
            re += k as f64 * cos[a];
            im += k as f64 * sin[a];
        }
        let gap = (re * re + im * im - nf) / (nf * (nf - 1.0)) - 1.0;
        let weight = multinomial(c) as f64 / q as f64;
        for (s, &t) in acc.iter_mut().zip(ts) {
            s.add(weight * (2.0 * t * gap).exp());
        }
    });
    Ok(acc.iter().map(|s| s.value()).collect())
}

/// Orbits of `{x in Z_q^n : sum x = 0}` under coordinate permutations and
/// the walk they carry.
#[derive(Debug, Clone)]
pub struct Dg1xnOrbits {
    n: usize,
    q: i64,
    counts: Vec<Vec<u8>>,
    /// Uniform mass of each orbit, `|orbit| / q^{n-1}`.
    stationary: Vec<f64>,
    start: usize,
    chain: SparseChain,
}

impl Dg1xnOrbits {
    pub fn new(n: usize, q: i64, budget: &Budget) -> Result<Self> {
        check_sizes(n, q)?;
        let qs = q as usize;
        check_budget("orbit enumeration", composition_count(n, qs), budget.enumeration)?;
        let mut counts = Vec::new();
        for_each_composition(n, qs, &mut |c| {
            let s: usize = c.iter().enumerate().map(|(a, &k)| a * k as usize).sum();
            if s.is_multiple_of(qs) {
                counts.push(c.to_vec());
            }
        });
        check_budget("orbit states", counts.len() as u128, budget.dense)?;
        let index: HashMap<Vec<u8>, usize> = counts.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        let total = (q as f64).powi(n as i32 - 1);
        let stationary = counts.iter().map(|c| multinomial(c) as f64 / total).collect();

        let pairs = (n * (n - 1)) as f64;
        let mut next = vec![0u8; qs];
        let rows = counts
            .iter()
            .map(|c| {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for a in 0..qs {
                    if c[a] == 0 {
                        continue;
                    }
                    for b in 0..qs {
                        let avail = c[b] as usize - usize::from(a == b);
                        if avail == 0 {
                            continue;
                        }
                        // the coordinate holding `a` steps up, the one holding `b` steps down
                        next.copy_from_slice(c);
                        next[a] -= 1;
                        next[(a + 1) % qs] += 1;
                        next[b] -= 1;
                        next[(b + qs - 1) % qs] += 1;
                        let j = index[&next];
                        let p = (c[a] as usize * avail) as f64 / pairs;
                        match row.iter_mut().find(|(k, _)| *k == j) {
                            Some(entry) => entry.1 += p,
                            None => row.push((j, p)),
                        }
                    }
                }
                row
            })
            .collect();
        let mut origin = vec![0u8; qs];
        origin[0] = n as u8;
        let start = index[&origin];
        Ok(Dg1xnOrbits {
            n,
            q,
            counts,
            stationary,
            start,
            chain: SparseChain::from_rows(rows),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Orbit masses at each time in `ts`.
    pub fn laws(&self, ts: &[f64], eps: f64) -> Result<Vec<Vec<f64>>> {
        self.chain.uniformize(self.start, ts, eps, true)
    }

    /// Exact `d(t)` on a grid; each value is within `eps / 2` of the truth.
    pub fn tv_grid(&self, ts: &[f64], eps: f64) -> Result<Vec<f64>> {
        Ok(self
            .laws(ts, eps)?
            .iter()
            .map(|law| {
                0.5 * law
                    .iter()
                    .zip(&self.stationary)
                    .map(|(p, s)| (p - s).abs())
                    .collect::<KahanSum>()
                    .value()
            })
            .collect())
    }
}
