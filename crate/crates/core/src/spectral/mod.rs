//! Exact spectral computations on `Z_q^m`.
//!
//! The characters `x -> exp(2 pi i <y, x> / q)` diagonalise every walk on the
//! torus, with eigenvalue `Phi(2 pi y / q)` for the discrete step and
//! `exp(t (Phi - 1))` for the rate-1 continuous-time walk. Everything here is
//! built on that fact: the `l2` bound sums squared eigenvalues, and the exact
//! heat kernel is an inverse DFT of the eigenvalue array.
//!
//! Lattice sums are split into fixed chunks of [`CHUNK`] points that are
//! reduced in parallel and then combined in chunk order, so results do not
//! depend on the number of worker threads.

mod orbits;
mod uniformization;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::numeric::KahanSum;
use crate::torus::{lower_rep, odometer_step, TorusLattice, TorusVector};
use crate::walks::{WalkKind, WalkSpec};

pub use orbits::{dg1xn_l2_bound_sq, Dg1xnOrbits};
pub use uniformization::{
    dirichlet_form, poisson_window, transition_chain, uniformization_oracle, PoissonWindow, SparseChain,
};

/// Points per reduction chunk.
pub const CHUNK: usize = 4096;

/// Size limits for lattice enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    /// Points visited by streaming sums such as the `l2` bound.
    pub enumeration: u128,
    /// States held in memory at once (kernels).
    pub dense: u128,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            enumeration: 100_000_000,
            dense: 10_000_000,
        }
    }
}

/// `l2` bound and, optionally, exact distance to uniformity at one time.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub t: f64,
    pub l2_bound_sq: f64,
    pub l2_tv_bound: f64,
    pub exact_tv: Option<f64>,
    pub lattice_size: u128,
}

impl SpectralSummary {
    fn new(t: f64, l2_bound_sq: f64, exact_tv: Option<f64>, lattice_size: u128) -> Self {
        SpectralSummary {
            t,
            l2_bound_sq,
            l2_tv_bound: l2_bound_sq.max(0.0).sqrt() / 2.0,
            exact_tv,
            lattice_size,
        }
    }
}

/// Heat kernel `H_t(0, .)` over the lattice, in [`TorusLattice`] order.
#[derive(Debug, Clone)]
pub struct KernelVector {
    pub t: f64,
    lattice: TorusLattice,
    probs: Vec<f64>,
}

impl KernelVector {
    pub(crate) fn new(t: f64, lattice: TorusLattice, probs: Vec<f64>) -> Self {
        KernelVector { t, lattice, probs }
    }

    pub fn lattice(&self) -> TorusLattice {
        self.lattice
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn probability(&self, x: &TorusVector) -> f64 {
        self.probs[self.lattice.index_of(x.coords())]
    }

    /// Total mass (one up to roundoff, or one minus truncation for the oracle).
    pub fn mass(&self) -> f64 {
        self.probs.iter().copied().collect::<KahanSum>().value()
    }

    pub fn tv_to_uniform(&self) -> f64 {
        let u = 1.0 / self.probs.len() as f64;
        0.5 * self.probs.iter().map(|p| (p - u).abs()).collect::<KahanSum>().value()
    }

    /// `(max |a - b|, sum |a - b|)`.
    pub fn discrepancy(&self, other: &KernelVector) -> Result<(f64, f64)> {
        if self.lattice != other.lattice {
            return Err(LabError::InvalidArgument("kernels live on different lattices".into()));
        }
        let mut max = 0.0f64;
        let mut l1 = KahanSum::new();
        for (a, b) in self.probs.iter().zip(&other.probs) {
            let d = (a - b).abs();
            max = max.max(d);
            l1.add(d);
        }
        Ok((max, l1.value()))
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(LabError::InvalidTime(t))
    }
}

pub(crate) fn check_budget(what: &'static str, needed: u128, budget: u128) -> Result<usize> {
    if needed > budget || needed > usize::MAX as u128 {
        return Err(LabError::TooLarge { what, needed, budget });
    }
    Ok(needed as usize)
}

/// `exp(t (Phi(2 pi y / q) - 1))`.
pub fn eigenvalue_at(walk: &WalkSpec, y: &TorusVector, t: f64) -> Result<f64> {
    check_time(t)?;
    if y.dim() != walk.m || y.q() != walk.q {
        return Err(LabError::InvalidArgument(format!(
            "frequency {y} is not in Z_{}^{}",
            walk.q, walk.m
        )));
    }
    let scale = 2.0 * PI / walk.q as f64;
    let theta: Vec<f64> = y.coords().iter().map(|&c| c as f64 * scale).collect();
    let phi = walk.char_fn(&theta)?;
    Ok((t * (phi - 1.0)).exp())
}

/// Evaluates `Phi(2 pi y / q)` at integer frequencies via lookup tables.
pub(crate) struct PhiEvaluator {
    q: i64,
    cos: Vec<f64>,
    sin: Vec<f64>,
    form: PhiForm,
}

enum PhiForm {
    /// `(|1 + sum_i w^{y_i}|^2 - n) / (n (n - 1))` with `w = exp(2 pi i / q)`.
    Dg1xn(usize),
    Terms(Vec<(Vec<(usize, i64)>, f64)>),
}

impl PhiEvaluator {
    pub(crate) fn new(walk: &WalkSpec) -> Self {
        let q = walk.q;
        let step = 2.0 * PI / q as f64;
        let cos = (0..q).map(|k| (k as f64 * step).cos()).collect();
        let sin = (0..q).map(|k| (k as f64 * step).sin()).collect();
        let form = match walk.kind {
            WalkKind::Dg1xn(n) => PhiForm::Dg1xn(n),
            _ => PhiForm::Terms(
                walk.increments
                    .half_terms()
                    .iter()
                    .map(|h| (h.nonzeros.clone(), h.weight))
                    .collect(),
            ),
        };
        PhiEvaluator { q, cos, sin, form }
    }

    #[inline]
    pub(crate) fn eval(&self, y: &[i64]) -> f64 {
        match &self.form {
            PhiForm::Dg1xn(n) => {
                let (mut re, mut im) = (1.0, 0.0);
                for &c in y {
                    let k = c.rem_euclid(self.q) as usize;
                    re += self.cos[k];
                    im += self.sin[k];
                }
                let n = *n as f64;
                (re * re + im * im - n) / (n * (n - 1.0))
            }
            PhiForm::Terms(terms) => {
                let mut acc = KahanSum::new();
                for (nz, w) in terms {
                    let dot: i64 = nz.iter().map(|&(i, c)| c * y[i]).sum();
                    acc.add(w * self.cos[dot.rem_euclid(self.q) as usize]);
                }
                acc.value()
            }
        }
    }
}

/// Runs `f` over fixed lattice chunks in parallel and returns the per-chunk
/// results in chunk order. `f` receives the first index of the chunk, the
/// number of points, and the coordinates of the first point.
pub(crate) fn map_chunks<T, F>(lattice: TorusLattice, size: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize, &mut [i64]) -> T + Sync,
{
    let chunks = size.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let len = CHUNK.min(size - start);
            let mut coords = vec![0i64; lattice.m];
            lattice.coords_of(start, &mut coords);
            f(start, len, &mut coords)
        })
        .collect()
}

/// `sum_{y != 0} exp(2 t (Phi - 1))` for each `t` by visiting every lattice
/// point once.
pub fn l2_bound_sq_generic(walk: &WalkSpec, ts: &[f64], budget: &Budget) -> Result<Vec<f64>> {
    for &t in ts {
        check_time(t)?;
    }
    let lattice = walk.increments.lattice();
    let size = check_budget("l2 bound", lattice.size(), budget.enumeration)?;
    let eval = PhiEvaluator::new(walk);
    let q = walk.q;
    let partials = map_chunks(lattice, size, |_, len, coords| {
        let mut acc = vec![KahanSum::new(); ts.len()];
        for _ in 0..len {
            if !coords.iter().all(|&c| c == 0) {
                let gap = eval.eval(coords) - 1.0;
                for (a, &t) in acc.iter_mut().zip(ts) {
                    a.add((2.0 * t * gap).exp());
                }
            }
            odometer_step(coords, q);
        }
        acc.iter().map(|a| a.value()).collect::<Vec<f64>>()
    });
    Ok((0..ts.len())
        .map(|i| partials.iter().map(|p| p[i]).collect::<KahanSum>().value())
        .collect())
}

/// Product form for the simple random walk, where the sum factorises over
/// coordinates.
fn srw_l2_bound_sq(n: usize, q: i64, ts: &[f64]) -> Vec<f64> {
    let lo = lower_rep(q);
    ts.iter()
        .map(|&t| {
            let rest: KahanSum = (lo..lo + q)
                .filter(|&y| y != 0)
                .map(|y| (2.0 * t / n as f64 * ((2.0 * PI * y as f64 / q as f64).cos() - 1.0)).exp())
                .collect();
            (n as f64 * rest.value().ln_1p()).exp_m1()
        })
        .collect()
}

/// `l2_bound_sq` on a time grid, using the fastest exact method available
/// for the walk.
pub fn l2_bound_sq_grid(walk: &WalkSpec, ts: &[f64], budget: &Budget) -> Result<Vec<f64>> {
    for &t in ts {
        check_time(t)?;
    }
    match walk.kind {
        WalkKind::Srw(n) => Ok(srw_l2_bound_sq(n, walk.q, ts)),
        WalkKind::Dg1xn(n) if n >= 3 => dg1xn_l2_bound_sq(n, walk.q, ts, budget),
        _ => l2_bound_sq_generic(walk, ts, budget),
    }
}

pub fn l2_bound(walk: &WalkSpec, t: f64) -> Result<SpectralSummary> {
    let v = l2_bound_sq_grid(walk, &[t], &Budget::default())?;
    Ok(SpectralSummary::new(t, v[0], None, walk.lattice_size()))
}

/// `Phi` tabulated over the whole lattice, reusable across times.
pub struct SpectralPlan {
    lattice: TorusLattice,
    phi: Vec<f64>,
}

impl SpectralPlan {
    pub fn new(walk: &WalkSpec, budget: &Budget) -> Result<Self> {
        let lattice = walk.increments.lattice();
        let size = check_budget("dense kernel", lattice.size(), budget.dense)?;
        let eval = PhiEvaluator::new(walk);
        let q = walk.q;
        let mut phi = vec![0.0; size];
        phi.par_chunks_mut(CHUNK).enumerate().for_each(|(c, out)| {
            let mut coords = vec![0i64; lattice.m];
            lattice.coords_of(c * CHUNK, &mut coords);
            for slot in out.iter_mut() {
                *slot = eval.eval(&coords);
                odometer_step(&mut coords, q);
            }
        });
        Ok(SpectralPlan { lattice, phi })
    }

    pub fn lattice(&self) -> TorusLattice {
        self.lattice
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// `l2_bound_sq` from the tabulated eigenvalues.
    pub fn l2_bound_sq(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let zero = self.lattice.index_of(&vec![0; self.lattice.m]);
        let partials: Vec<f64> = self
            .phi
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                chunk
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| c * CHUNK + i != zero)
                    .map(|(_, &p)| (2.0 * t * (p - 1.0)).exp())
                    .collect::<KahanSum>()
                    .value()
            })
            .collect();
        Ok(kahan_of(&partials))
    }

    /// Exact heat kernel by inverse DFT of the eigenvalue array, one axis
    /// at a time.
    pub fn kernel(&self, t: f64) -> Result<KernelVector> {
        check_time(t)?;
        let q = self.lattice.q as usize;
        let m = self.lattice.m;
        let size = self.phi.len();
        let mut data: Vec<Complex64> = self
            .phi
            .par_iter()
            .map(|&p| Complex64::new((t * (p - 1.0)).exp(), 0.0))
            .collect();

        let fft = FftPlanner::<f64>::new().plan_fft_inverse(q);
        let lo = lower_rep(self.lattice.q);
        // position of lattice digit d in natural (mod q) order
        let natural: Vec<usize> = (0..q).map(|d| (d as i64 + lo).rem_euclid(q as i64) as usize).collect();
        let mut stride = size;
        for _ in 0..m {
            stride /= q;
            let block = stride * q;
            data.par_chunks_mut(block).for_each(|blk| {
                let mut line = vec![Complex64::new(0.0, 0.0); q];
                let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
                for j in 0..stride {
                    for d in 0..q {
                        line[natural[d]] = blk[d * stride + j];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for d in 0..q {
                        blk[d * stride + j] = line[natural[d]];
                    }
                }
            });
        }

        let scale = 1.0 / size as f64;
        let max_imag = data.iter().map(|z| z.im.abs()).fold(0.0, f64::max) * scale;
        if max_imag > 1e-10 {
            return Err(LabError::Normalization(format!(
                "kernel has imaginary residual {max_imag:e}; increment law is not symmetric"
            )));
        }
        let mut probs: Vec<f64> = data.iter().map(|z| z.re * scale).collect();
        clip_and_normalize(&mut probs)?;
        Ok(KernelVector::new(t, self.lattice, probs))
    }
}

fn kahan_of(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<KahanSum>().value()
}

/// Clips negative roundoff to zero and renormalises. Fails when the clipped
/// mass plus the deviation of the total from one reaches `1e-9`.
pub(crate) fn clip_and_normalize(probs: &mut [f64]) -> Result<()> {
    let mut clipped = KahanSum::new();
    for p in probs.iter_mut() {
        if *p < 0.0 {
            clipped.add(-*p);
            *p = 0.0;
        }
    }
    let total = kahan_of(probs);
    let deviation = clipped.value() + (total - 1.0).abs();
    if !(deviation < 1e-9) {
        return Err(LabError::Normalization(format!(
            "kernel deviates from a probability vector by {deviation:e}"
        )));
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
    Ok(())
}

pub fn exact_kernel(walk: &WalkSpec, t: f64) -> Result<KernelVector> {
    check_time(t)?;
    SpectralPlan::new(walk, &Budget::default())?.kernel(t)
}

/// `d(t) = 1/2 sum_g |H_t(0, g) - q^{-m}|`. The walk is vertex-transitive,
/// so the start `0` is worst-case.
pub fn exact_tv(walk: &WalkSpec, t: f64) -> Result<f64> {
    Ok(exact_kernel(walk, t)?.tv_to_uniform())
}

/// Exact `d(t)` on a grid. Uses dense kernels when the lattice fits the
/// dense budget, and the orbit-lumped chain for larger `1 x n` walks.
pub fn exact_tv_grid(walk: &WalkSpec, ts: &[f64], budget: &Budget) -> Result<Vec<f64>> {
    for &t in ts {
        check_time(t)?;
    }
    if walk.lattice_size() <= budget.dense {
        let plan = SpectralPlan::new(walk, budget)?;
        return ts.iter().map(|&t| Ok(plan.kernel(t)?.tv_to_uniform())).collect();
    }
    if let WalkKind::Dg1xn(n) = walk.kind {
        let orbits = Dg1xnOrbits::new(n, walk.q, budget)?;
        return orbits.tv_grid(ts, 1e-12);
    }
    Err(LabError::TooLarge {
        what: "exact tv",
        needed: walk.lattice_size(),
        budget: budget.dense,
    })
}

/// Spectral summaries on a grid; exact distances are included when
/// `with_exact` is set.
pub fn spectral_summaries(
    walk: &WalkSpec,
    ts: &[f64],
    with_exact: bool,
    budget: &Budget,
) -> Result<Vec<SpectralSummary>> {
    let l2 = l2_bound_sq_grid(walk, ts, budget)?;
    let exact = if with_exact {
        Some(exact_tv_grid(walk, ts, budget)?)
    } else {
        None
    };
    Ok(ts
        .iter()
        .enumerate()
        .map(|(i, &t)| SpectralSummary::new(t, l2[i], exact.as_ref().map(|e| e[i]), walk.lattice_size()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::canonicalize;
    use crate::walks::{make_dg_1xn, make_dg_nxn, make_srw, WalkSpec};
    use crate::IncrementDistribution;
    use proptest::prelude::*;

    fn budget() -> Budget {
        Budget::default()
    }

    #[test]
    fn eigenvalue_examples() {
        let w = make_dg_1xn(2, 4).unwrap();
        let y = canonicalize(&[1], 4).unwrap();
        assert!((eigenvalue_at(&w, &y, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let zero = TorusVector::zero(1, 4).unwrap();
        assert_eq!(eigenvalue_at(&w, &zero, 7.5).unwrap(), 1.0);
        assert!(matches!(eigenvalue_at(&w, &y, -1.0), Err(LabError::InvalidTime(_))));

        let q = 9;
        let w = make_srw(2, q).unwrap();
        let y = canonicalize(&[1, 0], q).unwrap();
        let t = 3.0;
        let expect = (t * (((2.0 * PI / q as f64).cos() + 1.0) / 2.0 - 1.0)).exp();
        assert!((eigenvalue_at(&w, &y, t).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn phi_evaluator_matches_char_fn() {
        for w in [
            make_dg_1xn(4, 7).unwrap(),
            make_dg_nxn(3, 5).unwrap(),
            make_srw(3, 6).unwrap(),
        ] {
            let eval = PhiEvaluator::new(&w);
            let lat = w.increments.lattice();
            let mut y = vec![0i64; w.m];
            for i in 0..lat.size() as usize {
                lat.coords_of(i, &mut y);
                let theta: Vec<f64> = y.iter().map(|&c| 2.0 * PI * c as f64 / w.q as f64).collect();
                let a = eval.eval(&y);
                let b = w.char_fn(&theta).unwrap();
                assert!((a - b).abs() < 1e-13, "{}: {a} vs {b} at {y:?}", w.kind);
            }
        }
    }

    #[test]
    fn l2_bound_at_zero_and_large_t() {
        for w in [
            make_dg_1xn(3, 5).unwrap(),
            make_dg_1xn(5, 6).unwrap(),
            make_dg_nxn(3, 4).unwrap(),
            make_srw(3, 5).unwrap(),
        ] {
            let n = w.lattice_size() as f64;
            let big = 1e6 * (w.q * w.q) as f64 * w.m as f64;
            let v = l2_bound_sq_grid(&w, &[0.0, big], &budget()).unwrap();
            assert!((v[0] - (n - 1.0)).abs() < 1e-9 * n, "{}", w.kind);
            assert!(v[1] <= 1e-6);
        }
    }

    #[test]
    fn l2_bound_matches_nested_loop_reference() {
        let w = make_dg_1xn(3, 5).unwrap();
        let t = 5.0;
        let mut reference = 0.0;
        for a in -2i64..=2 {
            for b in -2i64..=2 {
                let (x, y) = (2.0 * PI * a as f64 / 5.0, 2.0 * PI * b as f64 / 5.0);
                let phi = (x.cos() + y.cos() + (x - y).cos()) / 3.0;
                reference += (2.0 * t * (phi - 1.0)).exp();
            }
        }
        reference -= 1.0;
        let s = l2_bound(&w, t).unwrap();
        assert!((s.l2_bound_sq - reference).abs() <= 1e-12);
        let g = l2_bound_sq_generic(&w, &[t], &budget()).unwrap()[0];
        assert!((g - reference).abs() <= 1e-12);
        assert_eq!(s.lattice_size, 25);
        assert!((s.l2_tv_bound - reference.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn fast_paths_match_generic() {
        let ts = [0.0, 0.3, 2.0, 11.0, 60.0];
        for w in [
            make_srw(1, 7).unwrap(),
            make_srw(3, 8).unwrap(),
            make_dg_1xn(3, 9).unwrap(),
            make_dg_1xn(5, 6).unwrap(),
        ] {
            let fast = l2_bound_sq_grid(&w, &ts, &budget()).unwrap();
            let slow = l2_bound_sq_generic(&w, &ts, &budget()).unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12 * b.max(1.0), "{}: {a} vs {b}", w.kind);
            }
        }
    }

    #[test]
    fn plan_l2_matches_streaming() {
        let w = make_dg_nxn(3, 4).unwrap();
        let plan = SpectralPlan::new(&w, &budget()).unwrap();
        for t in [0.0, 1.0, 9.0] {
            let a = plan.l2_bound_sq(t).unwrap();
            let b = l2_bound_sq_generic(&w, &[t], &budget()).unwrap()[0];
            assert!((a - b).abs() <= 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn budget_errors() {
        let w = make_dg_1xn(4, 7).unwrap();
        let tiny = Budget {
            enumeration: 10,
            dense: 10,
        };
        assert!(matches!(
            l2_bound_sq_generic(&w, &[1.0], &tiny),
            Err(LabError::TooLarge { .. })
        ));
        assert!(matches!(SpectralPlan::new(&w, &tiny), Err(LabError::TooLarge { .. })));
        let w = make_dg_nxn(4, 7).unwrap();
        assert!(matches!(
            exact_tv_grid(&w, &[1.0], &tiny),
            Err(LabError::TooLarge { .. })
        ));
    }

    #[test]
    fn kernel_limits() {
        let w = make_dg_1xn(3, 5).unwrap();
        let k = exact_kernel(&w, 0.0).unwrap();
        let zero = TorusVector::zero(2, 5).unwrap();
        assert!((k.probability(&zero) - 1.0).abs() < 1e-12);
        assert!(k.probs().iter().all(|&p| !(1e-12..=0.999).contains(&p)));
        assert!((k.tv_to_uniform() - (1.0 - 1.0 / 25.0)).abs() < 1e-12);
        let k = exact_kernel(&w, 500.0).unwrap();
        assert!(k.probs().iter().all(|&p| (p - 1.0 / 25.0).abs() < 1e-12));
        assert!(k.tv_to_uniform() < 1e-10);
    }

    #[test]
    fn kernel_symmetric_and_normalised() {
        for w in [
            make_dg_1xn(4, 6).unwrap(),
            make_dg_nxn(3, 3).unwrap(),
            make_srw(2, 7).unwrap(),
        ] {
            for t in [0.5, 3.0] {
                let k = exact_kernel(&w, t).unwrap();
                let lat = k.lattice();
                let mut scratch = vec![0; lat.m];
                for i in 0..k.probs().len() {
                    let j = lat.neg_index(i, &mut scratch);
                    assert!((k.probs()[i] - k.probs()[j]).abs() <= 1e-12);
                    assert!(k.probs()[i] >= 0.0);
                }
                assert!((k.mass() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn kernel_matches_direct_inversion() {
        let w = make_dg_1xn(3, 4).unwrap();
        let t = 1.3;
        let k = exact_kernel(&w, t).unwrap();
        let lat = k.lattice();
        let (mut g, mut y) = (vec![0; 2], vec![0; 2]);
        for gi in 0..16 {
            lat.coords_of(gi, &mut g);
            let mut acc = 0.0;
            for yi in 0..16 {
                lat.coords_of(yi, &mut y);
                let yv = canonicalize(&y, 4).unwrap();
                let phase = 2.0 * PI * (g[0] * y[0] + g[1] * y[1]) as f64 / 4.0;
                acc += eigenvalue_at(&w, &yv, t).unwrap() * phase.cos();
            }
            assert!((k.probs()[gi] - acc / 16.0).abs() < 1e-14);
        }
    }

    #[test]
    fn clip_rules() {
        let mut p = vec![0.5, 0.5 + 1e-13, -1e-13];
        clip_and_normalize(&mut p).unwrap();
        assert_eq!(p[2], 0.0);
        let mut p = vec![0.6, 0.6, -0.2];
        assert!(matches!(clip_and_normalize(&mut p), Err(LabError::Normalization(_))));
    }

    #[test]
    fn dense_tv_is_monotone() {
        let w = make_dg_1xn(4, 5).unwrap();
        let ts: Vec<f64> = (0..60).map(|i| i as f64 * 0.5).collect();
        let d = exact_tv_grid(&w, &ts, &budget()).unwrap();
        assert!((d[0] - (1.0 - 1.0 / 125.0)).abs() < 1e-12);
        for pair in d.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10);
        }
    }

    #[test]
    fn results_independent_of_thread_count() {
        let w = make_dg_nxn(3, 5).unwrap();
        let ts = [0.7, 4.0];
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let l2 = l2_bound_sq_generic(&w, &ts, &budget()).unwrap();
                let k = exact_kernel(&w, 2.0).unwrap();
                (l2, k.probs().to_vec())
            })
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn asymmetric_law_rejected_upstream() {
        let bad = IncrementDistribution::uniform(5, 1, vec![vec![1], vec![2]]);
        assert!(bad.is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn dominance_random_times(t in 0.0f64..40.0, n in 2usize..5, q in 3i64..7) {
            let w: WalkSpec = make_dg_1xn(n, q).unwrap();
            let d = exact_tv(&w, t).unwrap();
            let l2 = l2_bound_sq_grid(&w, &[t], &Budget::default()).unwrap()[0];
            prop_assert!(4.0 * d * d <= l2 + 1e-9);
            prop_assert!(d >= 0.0 && d <= 1.0 - 1.0 / w.lattice_size() as f64 + 1e-12);
        }
    }
}
