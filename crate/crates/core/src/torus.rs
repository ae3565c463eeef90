//! Torus elements, increment laws and their characteristic functions.
//!
//! Elements of `Z_q^m` are represented by integer vectors whose coordinates
//! lie in `[-q/2, q/2)`. For even `q` the value `q/2` therefore maps to
//! `-q/2`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numeric::KahanSum;

/// Smallest canonical representative, `-floor(q/2)`.
#[inline]
pub fn lower_rep(q: i64) -> i64 {
    -(q / 2)
}

#[inline]
pub(crate) fn canonical_coord(x: i64, q: i64) -> i64 {
    let lo = lower_rep(q);
    (x - lo).rem_euclid(q) + lo
}

/// An element of `Z_q^m` in canonical coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusVector {
    coords: Vec<i64>,
    q: i64,
}

impl TorusVector {
    pub fn zero(m: usize, q: i64) -> Result<Self> {
        canonicalize(&vec![0; m], q)
    }

    /// Wraps coordinates already in canonical form.
    pub(crate) fn from_canonical(coords: Vec<i64>, q: i64) -> Self {
        debug_assert!(coords.iter().all(|&c| c == canonical_coord(c, q)));
        TorusVector { coords, q }
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0)
    }

    pub fn add(&self, other: &TorusVector) -> Result<TorusVector> {
        if self.q != other.q || self.dim() != other.dim() {
            return Err(LabError::InvalidArgument(format!(
                "cannot add elements of Z_{}^{} and Z_{}^{}",
                self.q,
                self.dim(),
                other.q,
                other.dim()
            )));
        }
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| canonical_coord(a + b, self.q))
            .collect();
        Ok(TorusVector { coords, q: self.q })
    }

    pub fn neg(&self) -> TorusVector {
        TorusVector {
            coords: self.coords.iter().map(|&c| canonical_coord(-c, self.q)).collect(),
            q: self.q,
        }
    }

    pub fn l1_norm(&self) -> i64 {
        self.coords.iter().map(|c| c.abs()).sum()
    }

    pub fn linf_norm(&self) -> i64 {
        self.coords.iter().map(|c| c.abs()).max().unwrap_or(0)
    }
}

impl fmt::Display for TorusVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "] mod {}", self.q)
    }
}

/// Reduces every coordinate mod `q` into `[-q/2, q/2)`.
pub fn canonicalize(v: &[i64], q: i64) -> Result<TorusVector> {
    if q < 2 {
        return Err(LabError::InvalidModulus(q));
    }
    Ok(TorusVector {
        coords: v.iter().map(|&x| canonical_coord(x, q)).collect(),
        q,
    })
}

/// Mixed-radix enumeration of all `q^m` canonical vectors.
///
/// Index `0` is `(-floor(q/2), ..., -floor(q/2))`; the last coordinate varies
/// fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusLattice {
    pub q: i64,
    pub m: usize,
}

impl TorusLattice {
    pub fn new(q: i64, m: usize) -> Self {
        TorusLattice { q, m }
    }

    /// Number of lattice points, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        let mut acc: u128 = 1;
        for _ in 0..self.m {
            acc = acc.saturating_mul(self.q as u128);
        }
        acc
    }

    pub fn coords_of(&self, mut index: usize, out: &mut [i64]) {
        let lo = lower_rep(self.q);
        let q = self.q as usize;
        for slot in out.iter_mut().rev() {
            *slot = (index % q) as i64 + lo;
            index /= q;
        }
    }

    pub fn index_of(&self, coords: &[i64]) -> usize {
        let lo = lower_rep(self.q);
        let q = self.q as usize;
        coords
            .iter()
            .fold(0usize, |acc, &c| acc * q + (canonical_coord(c, self.q) - lo) as usize)
    }

    /// Index of `-x` given the index of `x`.
    pub fn neg_index(&self, index: usize, scratch: &mut [i64]) -> usize {
        self.coords_of(index, scratch);
        for c in scratch.iter_mut() {
            *c = -*c;
        }
        self.index_of(scratch)
    }
}

/// Advances `coords` to the next lattice point in enumeration order.
#[inline]
pub(crate) fn odometer_step(coords: &mut [i64], q: i64) {
    let lo = lower_rep(q);
    let hi = lo + q - 1;
    for c in coords.iter_mut().rev() {
        if *c < hi {
            *c += 1;
            return;
        }
        *c = lo;
    }
}

/// One support point of an increment law.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPoint {
    pub v: TorusVector,
    pub p: Rational64,
}

/// A support vector `g` paired with the weight of `{g, -g}` combined.
#[derive(Debug, Clone)]
pub(crate) struct HalfTerm {
    pub nonzeros: Vec<(usize, i64)>,
    pub weight: f64,
}

/// A finite symmetric increment law on `Z_q^m`.
#[derive(Debug, Clone)]
pub struct IncrementDistribution {
    q: i64,
    m: usize,
    support: Vec<SupportPoint>,
    probs: Vec<f64>,
    half: Vec<HalfTerm>,
    r: i64,
}

impl IncrementDistribution {
    /// Validates and builds an increment law. Duplicate vectors, non-positive
    /// probabilities, asymmetric supports, total mass other than one and
    /// vectors with `||g||_inf >= q/2` are all rejected.
    pub fn new(q: i64, m: usize, support: Vec<(Vec<i64>, Rational64)>) -> Result<Self> {
        if q < 2 {
            return Err(LabError::InvalidModulus(q));
        }
        if support.is_empty() {
            return Err(LabError::Validation("empty support".into()));
        }
        let mut points: Vec<SupportPoint> = Vec::with_capacity(support.len());
        let mut lookup: HashMap<Vec<i64>, Rational64> = HashMap::with_capacity(support.len());
        let mut total = Rational64::from_integer(0);
        for (raw, p) in support {
            if raw.len() != m {
                return Err(LabError::Validation(format!(
                    "support vector {raw:?} has dimension {}, expected {m}",
                    raw.len()
                )));
            }
            if p <= Rational64::from_integer(0) || p > Rational64::from_integer(1) {
                return Err(LabError::Validation(format!("probability {p} outside (0, 1]")));
            }
            let v = canonicalize(&raw, q)?;
            if 2 * v.linf_norm() >= q {
                return Err(LabError::Validation(format!("support vector {v} has sup norm >= q/2")));
            }
            if lookup.insert(v.coords.clone(), p).is_some() {
                return Err(LabError::Validation(format!("duplicate support vector {v}")));
            }
            total += p;
            points.push(SupportPoint { v, p });
        }
        if total != Rational64::from_integer(1) {
            return Err(LabError::Validation(format!("probabilities sum to {total}, not 1")));
        }
        for pt in &points {
            let neg = pt.v.neg();
            match lookup.get(&neg.coords) {
                Some(&pn) if pn == pt.p => {}
                _ => {
                    return Err(LabError::Validation(format!(
                        "support is not symmetric: {} has no partner of equal mass",
                        pt.v
                    )))
                }
            }
        }

        let probs: Vec<f64> = points.iter().map(|pt| rational_to_f64(pt.p)).collect();
        let mut half = Vec::new();
        for (pt, &p) in points.iter().zip(&probs) {
            let neg = pt.v.neg();
            let nonzeros: Vec<(usize, i64)> =
                pt.v.coords
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c != 0)
                    .map(|(i, &c)| (i, c))
                    .collect();
            if neg == pt.v {
                half.push(HalfTerm { nonzeros, weight: p });
            } else if pt.v.coords > neg.coords {
                half.push(HalfTerm {
                    nonzeros,
                    weight: 2.0 * p,
                });
            }
        }
        let r = points.iter().map(|pt| pt.v.l1_norm()).max().unwrap_or(0);
        Ok(IncrementDistribution {
            q,
            m,
            support: points,
            probs,
            half,
            r,
        })
    }

    /// Uniform law over the given vectors.
    pub fn uniform(q: i64, m: usize, vectors: Vec<Vec<i64>>) -> Result<Self> {
        let k = vectors.len() as i64;
        if k == 0 {
            return Err(LabError::Validation("empty support".into()));
        }
        let p = Rational64::new(1, k);
        Self::new(q, m, vectors.into_iter().map(|v| (v, p)).collect())
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn support(&self) -> &[SupportPoint] {
        &self.support
    }

    /// Floating-point probabilities aligned with [`Self::support`].
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Largest L1 norm over the support.
    pub fn max_l1(&self) -> i64 {
        self.r
    }

    pub(crate) fn half_terms(&self) -> &[HalfTerm] {
        &self.half
    }

    pub fn lattice(&self) -> TorusLattice {
        TorusLattice::new(self.q, self.m)
    }

    /// Serializes to the `{"q", "m", "support": [{"v", "p": "num/den"}]}` document.
    pub fn to_json(&self) -> Result<String> {
        let doc = IncrementDocument {
            q: self.q,
            m: self.m,
            support: self
                .support
                .iter()
                .map(|pt| SupportEntry {
                    v: pt.v.coords.clone(),
                    p: format!("{}/{}", pt.p.numer(), pt.p.denom()),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: IncrementDocument = serde_json::from_str(text)?;
        let mut support = Vec::with_capacity(doc.support.len());
        for entry in doc.support {
            let p = Rational64::from_str(entry.p.trim())
                .map_err(|_| LabError::Validation(format!("cannot parse probability {:?}", entry.p)))?;
            support.push((entry.v, p));
        }
        Self::new(doc.q, doc.m, support)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IncrementDocument {
    q: i64,
    m: usize,
    support: Vec<SupportEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SupportEntry {
    v: Vec<i64>,
    p: String,
}

pub(crate) fn rational_to_f64(p: Rational64) -> f64 {
    *p.numer() as f64 / *p.denom() as f64
}

/// `sum_g mu(g) cos(<theta, g>)`, accumulating `{g, -g}` pairs as `2 p cos`
/// with compensated summation.
pub fn char_fn_generic(mu: &IncrementDistribution, theta: &[f64]) -> Result<f64> {
    if theta.len() != mu.m {
        return Err(LabError::InvalidArgument(format!(
            "theta has dimension {}, expected {}",
            theta.len(),
            mu.m
        )));
    }
    let mut acc = KahanSum::new();
    for term in &mu.half {
        let phase: f64 = term.nonzeros.iter().map(|&(i, c)| theta[i] * c as f64).sum();
        acc.add(term.weight * phase.cos());
    }
    Ok(acc.value())
}

/// Exact first and second moments of an increment law.
#[derive(Debug, Clone)]
pub struct MomentSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Common marginal variance, `None` when the coordinates are not equivariant.
    pub marginal_variance: Option<f64>,
    /// `m` times the common marginal variance.
    pub sigma_sq: Option<f64>,
}

impl MomentSummary {
    pub fn is_equivariant(&self) -> bool {
        self.marginal_variance.is_some()
    }

    /// Correlation matrix `cov / marginal_variance`, when equivariant.
    pub fn correlation(&self) -> Option<DMatrix<f64>> {
        self.marginal_variance.map(|v| &self.covariance / v)
    }
}

pub fn moments(mu: &IncrementDistribution) -> MomentSummary {
    let m = mu.m;
    let mut mean = vec![KahanSum::new(); m];
    let mut second = vec![KahanSum::new(); m * m];
    for (pt, &p) in mu.support.iter().zip(&mu.probs) {
        let v = &pt.v.coords;
        for i in 0..m {
            if v[i] == 0 {
                continue;
            }
            mean[i].add(p * v[i] as f64);
            for j in 0..m {
                if v[j] != 0 {
                    second[i * m + j].add(p * (v[i] * v[j]) as f64);
                }
            }
        }
    }
    let mean = DVector::from_iterator(m, mean.iter().map(|k| k.value()));
    let covariance = DMatrix::from_fn(m, m, |i, j| second[i * m + j].value() - mean[i] * mean[j]);
    let first = if m > 0 { covariance[(0, 0)] } else { 0.0 };
    let equivariant = (0..m).all(|i| (covariance[(i, i)] - first).abs() <= 1e-12 * first.abs().max(1.0));
    let (marginal_variance, sigma_sq) = if equivariant && m > 0 {
        (Some(first), Some(first * m as f64))
    } else {
        (None, None)
    };
    MomentSummary {
        mean,
        covariance,
        marginal_variance,
        sigma_sq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize(&[0], 5).unwrap().coords(), &[0]);
        assert_eq!(canonicalize(&[3], 5).unwrap().coords(), &[-2]);
        assert_eq!(canonicalize(&[2], 4).unwrap().coords(), &[-2]);
        assert_eq!(canonicalize(&[-3, 7], 4).unwrap().coords(), &[1, -1]);
        assert!(matches!(canonicalize(&[1], 1), Err(LabError::InvalidModulus(1))));
    }

    #[test]
    fn group_axioms_exhaustive_small() {
        for q in 2..=5i64 {
            for m in 1..=2usize {
                let lat = TorusLattice::new(q, m);
                let n = lat.size() as usize;
                let mut buf = vec![0; m];
                let elems: Vec<TorusVector> = (0..n)
                    .map(|i| {
                        lat.coords_of(i, &mut buf);
                        canonicalize(&buf, q).unwrap()
                    })
                    .collect();
                let zero = TorusVector::zero(m, q).unwrap();
                for a in &elems {
                    assert_eq!(canonicalize(a.coords(), q).unwrap(), *a);
                    assert_eq!(a.add(&zero).unwrap(), *a);
                    assert!(a.add(&a.neg()).unwrap().is_zero());
                    for b in &elems {
                        let ab = a.add(b).unwrap();
                        assert_eq!(ab, b.add(a).unwrap());
                        assert!(elems.contains(&ab));
                        for c in elems.iter().take(4) {
                            assert_eq!(ab.add(c).unwrap(), a.add(&b.add(c).unwrap()).unwrap());
                        }
                    }
                }
                let distinct: std::collections::HashSet<_> = elems.iter().collect();
                assert_eq!(distinct.len() as u128, lat.size());
            }
        }
    }

    #[test]
    fn lattice_index_roundtrip_and_order() {
        let lat = TorusLattice::new(4, 3);
        let mut buf = [0i64; 3];
        lat.coords_of(0, &mut buf);
        assert_eq!(buf, [-2, -2, -2]);
        let mut odo = buf;
        for i in 0..lat.size() as usize {
            lat.coords_of(i, &mut buf);
            assert_eq!(buf, odo);
            assert_eq!(lat.index_of(&buf), i);
            odometer_step(&mut odo, 4);
        }
    }

    fn dg3() -> IncrementDistribution {
        IncrementDistribution::uniform(
            5,
            2,
            vec![
                vec![1, -1],
                vec![-1, 1],
                vec![1, 0],
                vec![-1, 0],
                vec![0, 1],
                vec![0, -1],
            ],
        )
        .unwrap()
    }

    #[test]
    fn char_fn_examples() {
        let mu = dg3();
        assert_eq!(char_fn_generic(&mu, &[0.0, 0.0]).unwrap(), 1.0);
        // cos(0) twice plus cos(pi) four times, over six vectors.
        let v = char_fn_generic(&mu, &[PI, PI]).unwrap();
        assert!((v + 1.0 / 3.0).abs() < 1e-15);
        assert!(char_fn_generic(&mu, &[0.0]).is_err());
    }

    #[test]
    fn srw_char_fn_matches_average_of_cosines() {
        let mu = IncrementDistribution::uniform(
            7,
            3,
            vec![
                vec![1, 0, 0],
                vec![-1, 0, 0],
                vec![0, 1, 0],
                vec![0, -1, 0],
                vec![0, 0, 1],
                vec![0, 0, -1],
            ],
        )
        .unwrap();
        let theta = [0.3, -1.2, 2.5];
        let expect = theta.iter().map(|t: &f64| t.cos()).sum::<f64>() / 3.0;
        assert!((char_fn_generic(&mu, &theta).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn moments_examples() {
        let s = moments(&dg3());
        assert!((s.marginal_variance.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.sigma_sq.unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((s.covariance[(0, 1)] + 1.0 / 3.0).abs() < 1e-15);
        assert!(s.mean.iter().all(|x| x.abs() < 1e-12));

        let point = IncrementDistribution::new(5, 2, vec![(vec![0, 0], r(1, 1))]).unwrap();
        let s = moments(&point);
        assert!(s.covariance.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_invalid_laws() {
        // asymmetric
        let e = IncrementDistribution::new(5, 1, vec![(vec![1], r(1, 2)), (vec![2], r(1, 2))]);
        assert!(matches!(e, Err(LabError::Validation(_))));
        // mass != 1
        let e = IncrementDistribution::new(5, 1, vec![(vec![1], r(1, 3)), (vec![-1], r(1, 3))]);
        assert!(matches!(e, Err(LabError::Validation(_))));
        // sup norm q/2 for even q
        let e = IncrementDistribution::new(4, 1, vec![(vec![2], r(1, 1))]);
        assert!(matches!(e, Err(LabError::Validation(_))));
        // unequal partner masses
        let e = IncrementDistribution::new(7, 1, vec![(vec![1], r(1, 4)), (vec![-1], r(1, 2)), (vec![0], r(1, 4))]);
        assert!(matches!(e, Err(LabError::Validation(_))));
        // dimension mismatch
        let e = IncrementDistribution::new(7, 2, vec![(vec![0], r(1, 1))]);
        assert!(matches!(e, Err(LabError::Validation(_))));
    }

    #[test]
    fn json_roundtrip() {
        let mu = dg3();
        let text = mu.to_json().unwrap();
        let back = IncrementDistribution::from_json(&text).unwrap();
        assert_eq!(back.support(), mu.support());
        let parsed = IncrementDistribution::from_json(
            r#"{"q": 5, "m": 1, "support": [{"v": [1], "p": "1/2"}, {"v": [4], "p": "1/2"}]}"#,
        )
        .unwrap();
        assert_eq!(parsed.support()[1].v.coords(), &[-1]);
        assert!(IncrementDistribution::from_json(r#"{"q":5,"m":1,"support":[{"v":[1],"p":"x"}]}"#).is_err());
    }

    proptest! {
        #[test]
        fn char_fn_bounded_and_even(t0 in -10.0f64..10.0, t1 in -10.0f64..10.0) {
            let mu = dg3();
            let a = char_fn_generic(&mu, &[t0, t1]).unwrap();
            let b = char_fn_generic(&mu, &[-t0, -t1]).unwrap();
            prop_assert!(a.abs() <= 1.0 + 1e-15);
            prop_assert!((a - b).abs() <= 1e-14);
        }

        #[test]
        fn canonicalize_idempotent_and_congruent(x in -1000i64..1000, q in 2i64..50) {
            let c = canonicalize(&[x], q).unwrap();
            let v = c.coords()[0];
            prop_assert!(2 * v >= -q && 2 * v < q);
            prop_assert_eq!((v - x).rem_euclid(q), 0);
            prop_assert_eq!(canonicalize(c.coords(), q).unwrap(), c);
        }
    }
}
