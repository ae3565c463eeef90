//! Concrete walks: the Diaconis-Gangolli moves on `1 x n` and `n x n`
//! tables, the simple random walk, and user-supplied laws.
//!
//! Table walks only track the coordinates that determine the state. For the
//! `1 x n` walk these are the first `n - 1` entries. For the `n x n` walk
//! they are the entries `(i, j)` with `i, j < n`, flattened row-major, so
//! index `(i - 1)(n - 1) + (j - 1)` holds entry `(i, j)`.

use std::fmt;

use nalgebra::DMatrix;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numeric::{choose, KahanSum};
use crate::torus::{char_fn_generic, moments, IncrementDistribution};

/// Hard cap on `|support| * m` for explicitly enumerated supports.
const MAX_SUPPORT_ENTRIES: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "n", rename_all = "lowercase")]
pub enum WalkKind {
    /// Diaconis-Gangolli walk on `1 x n` tables.
    Dg1xn(usize),
    /// Diaconis-Gangolli walk on `n x n` tables.
    Dgnxn(usize),
    /// Simple random walk on `Z_q^n`.
    Srw(usize),
    Custom,
}

impl fmt::Display for WalkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WalkKind::Dg1xn(n) => write!(f, "dg1xn(n={n})"),
            WalkKind::Dgnxn(n) => write!(f, "dgnxn(n={n})"),
            WalkKind::Srw(n) => write!(f, "srw(n={n})"),
            WalkKind::Custom => write!(f, "custom"),
        }
    }
}

/// A symmetric walk on `Z_q^m` together with the metadata the bounds need.
#[derive(Debug, Clone)]
pub struct WalkSpec {
    pub increments: IncrementDistribution,
    pub m: usize,
    pub q: i64,
    /// Bound on the L1 norm of a single increment.
    pub r: i64,
    /// `m` times the common marginal variance; `None` for non-equivariant custom laws.
    pub sigma_sq: Option<f64>,
    pub kind: WalkKind,
}

impl WalkSpec {
    /// Table size `n` for the built-in kinds.
    pub fn table_n(&self) -> Option<usize> {
        match self.kind {
            WalkKind::Dg1xn(n) | WalkKind::Dgnxn(n) | WalkKind::Srw(n) => Some(n),
            WalkKind::Custom => None,
        }
    }

    pub fn lattice_size(&self) -> u128 {
        self.increments.lattice().size()
    }

    /// Characteristic function, closed form when available.
    pub fn char_fn(&self, theta: &[f64]) -> Result<f64> {
        match self.kind {
            WalkKind::Custom => char_fn_generic(&self.increments, theta),
            _ => char_fn_closed(self, theta),
        }
    }

    pub fn from_increments(increments: IncrementDistribution) -> Self {
        let summary = moments(&increments);
        WalkSpec {
            m: increments.dim(),
            q: increments.q(),
            r: increments.max_l1(),
            sigma_sq: summary.sigma_sq,
            kind: WalkKind::Custom,
            increments,
        }
    }
}

fn check_args(n: usize, min_n: usize, q: i64) -> Result<()> {
    if n < min_n {
        return Err(LabError::InvalidArgument(format!("n = {n} (need n >= {min_n})")));
    }
    if q < 3 {
        return Err(LabError::InvalidArgument(format!("q = {q} (need q >= 3)")));
    }
    Ok(())
}

fn check_support_size(count: usize, m: usize) -> Result<()> {
    if count.saturating_mul(m) > MAX_SUPPORT_ENTRIES {
        return Err(LabError::InvalidArgument(format!(
            "support of {count} vectors in dimension {m} is too large to enumerate"
        )));
    }
    Ok(())
}

/// The `1 x n` walk: generator `a_ij` adds `+1` at `i` and `-1` at `j`, with
/// the `n`-th coordinate dropped.
pub fn make_dg_1xn(n: usize, q: i64) -> Result<WalkSpec> {
    check_args(n, 2, q)?;
    let m = n - 1;
    check_support_size(n * (n - 1), m)?;
    let mut vectors = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut v = vec![0i64; m];
            if i < m {
                v[i] = 1;
            }
            if j < m {
                v[j] = -1;
            }
            vectors.push(v);
        }
    }
    let increments = IncrementDistribution::uniform(q, m, vectors)?;
    Ok(WalkSpec {
        increments,
        m,
        q,
        r: 2,
        sigma_sq: Some(2.0 * (n as f64 - 1.0) / n as f64),
        kind: WalkKind::Dg1xn(n),
    })
}

/// The `n x n` walk: `+-T(i, i', j, j')` for `i < i'`, `j < j'`, each signed
/// move with probability `1 / (2 C(n,2)^2)`, projected onto the leading
/// `(n-1) x (n-1)` block.
pub fn make_dg_nxn(n: usize, q: i64) -> Result<WalkSpec> {
    check_args(n, 2, q)?;
    let side = n - 1;
    let m = side * side;
    let pairs = n * (n - 1) / 2;
    let count = 2 * pairs * pairs;
    check_support_size(count, m)?;
    let mut vectors = Vec::with_capacity(count);
    for i in 0..n {
        for i2 in (i + 1)..n {
            for j in 0..n {
                for j2 in (j + 1)..n {
                    for sign in [1i64, -1] {
                        let mut v = vec![0i64; m];
                        let mut put = |a: usize, b: usize, val: i64| {
                            if a < side && b < side {
                                v[a * side + b] += val;
                            }
                        };
                        put(i, j, sign);
                        put(i2, j2, sign);
                        put(i, j2, -sign);
                        put(i2, j, -sign);
                        vectors.push(v);
                    }
                }
            }
        }
    }
    let denom = i64::try_from(count).map_err(|_| LabError::InvalidArgument(format!("n = {n} is too large")))?;
    let p = Rational64::new(1, denom);
    let increments = IncrementDistribution::new(q, m, vectors.into_iter().map(|v| (v, p)).collect())?;
    let nf = n as f64;
    Ok(WalkSpec {
        increments,
        m,
        q,
        r: 4,
        sigma_sq: Some(4.0 * (nf - 1.0).powi(2) / (nf * nf)),
        kind: WalkKind::Dgnxn(n),
    })
}

/// Simple random walk on `Z_q^n`: `+-e_k` with probability `1/(2n)` each.
pub fn make_srw(n: usize, q: i64) -> Result<WalkSpec> {
    check_args(n, 1, q)?;
    check_support_size(2 * n, n)?;
    let mut vectors = Vec::with_capacity(2 * n);
    for k in 0..n {
        for s in [1i64, -1] {
            let mut v = vec![0i64; n];
            v[k] = s;
            vectors.push(v);
        }
    }
    let increments = IncrementDistribution::uniform(q, n, vectors)?;
    Ok(WalkSpec {
        increments,
        m: n,
        q,
        r: 1,
        sigma_sq: Some(1.0),
        kind: WalkKind::Srw(n),
    })
}

/// Closed-form characteristic function of the built-in walks.
pub fn char_fn_closed(walk: &WalkSpec, theta: &[f64]) -> Result<f64> {
    if theta.len() != walk.m {
        return Err(LabError::InvalidArgument(format!(
            "theta has dimension {}, expected {}",
            theta.len(),
            walk.m
        )));
    }
    match walk.kind {
        WalkKind::Dg1xn(n) => {
            let mut acc = KahanSum::new();
            for j in 0..theta.len() {
                acc.add(theta[j].cos());
                for k in 0..j {
                    acc.add((theta[j] - theta[k]).cos());
                }
            }
            Ok(acc.value() / choose(n as u64, 2))
        }
        WalkKind::Dgnxn(n) => {
            let side = n - 1;
            let th = |i: usize, j: usize| theta[i * side + j];
            let mut acc = KahanSum::new();
            for i in 0..side {
                for l in 0..i {
                    for j in 0..side {
                        for k in 0..j {
                            acc.add((th(i, j) - th(i, k) - th(l, j) + th(l, k)).cos());
                        }
                    }
                }
            }
            for i in 0..side {
                for l in 0..i {
                    for j in 0..side {
                        acc.add((th(i, j) - th(l, j)).cos());
                    }
                }
            }
            for j in 0..side {
                for k in 0..j {
                    for i in 0..side {
                        acc.add((th(i, j) - th(i, k)).cos());
                    }
                }
            }
            for &t in theta {
                acc.add(t.cos());
            }
            let pairs = choose(n as u64, 2);
            Ok(acc.value() / (pairs * pairs))
        }
        WalkKind::Srw(n) => {
            let acc: KahanSum = theta.iter().map(|t| t.cos()).collect();
            Ok(acc.value() / n as f64)
        }
        WalkKind::Custom => Err(LabError::UnsupportedClosedForm(walk.kind.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationSource {
    ClosedForm,
    NumericInverse,
}

/// Correlation matrix `Gamma` of one increment and its inverse `Psi`.
#[derive(Debug, Clone)]
pub struct CorrelationModel {
    pub gamma: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub source: CorrelationSource,
}

impl CorrelationModel {
    /// `max |(Gamma Psi - I)_ij|` and the entry where it occurs.
    pub fn identity_residual(&self) -> (f64, (usize, usize)) {
        let prod = &self.gamma * &self.psi;
        let mut worst = (0.0f64, (0, 0));
        for i in 0..prod.nrows() {
            for j in 0..prod.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                let dev = (prod[(i, j)] - target).abs();
                if dev > worst.0 || dev.is_nan() {
                    worst = (dev, (i, j));
                }
            }
        }
        worst
    }
}

/// `Gamma` of the `1 x n` walk: unit diagonal, `-1/(n-1)` elsewhere.
pub fn dg1xn_gamma(n: usize) -> DMatrix<f64> {
    let m = n - 1;
    let off = -1.0 / (n as f64 - 1.0);
    DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { off })
}

/// `Psi = ((n-1)/n) (I + J)`.
pub fn dg1xn_psi(n: usize) -> DMatrix<f64> {
    let m = n - 1;
    let c = (n as f64 - 1.0) / n as f64;
    DMatrix::from_fn(m, m, |i, j| if i == j { 2.0 * c } else { c })
}

fn table_pattern(n: usize, same: f64, line: f64, apart: f64) -> DMatrix<f64> {
    let side = n - 1;
    let m = side * side;
    DMatrix::from_fn(m, m, |a, b| {
        let (i, j) = (a / side, a % side);
        let (k, l) = (b / side, b % side);
        if a == b {
            same
        } else if i == k || j == l {
            line
        } else {
            apart
        }
    })
}

/// `Gamma` of the `n x n` walk in row-major table order.
pub fn dgnxn_gamma(n: usize) -> DMatrix<f64> {
    let d = n as f64 - 1.0;
    table_pattern(n, 1.0, -1.0 / d, 1.0 / (d * d))
}

/// `Psi` of the `n x n` walk: `(n-1)^2/n^2` times `4`, `2` or `1` according
/// to whether two entries coincide, share a line, or share nothing.
pub fn dgnxn_psi(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    let c = (nf - 1.0).powi(2) / (nf * nf);
    table_pattern(n, 4.0 * c, 2.0 * c, c)
}

pub fn correlation_model(walk: &WalkSpec) -> Result<CorrelationModel> {
    match walk.kind {
        WalkKind::Dg1xn(n) => Ok(CorrelationModel {
            gamma: dg1xn_gamma(n),
            psi: dg1xn_psi(n),
            source: CorrelationSource::ClosedForm,
        }),
        WalkKind::Dgnxn(n) => Ok(CorrelationModel {
            gamma: dgnxn_gamma(n),
            psi: dgnxn_psi(n),
            source: CorrelationSource::ClosedForm,
        }),
        WalkKind::Srw(_) | WalkKind::Custom => {
            let summary = moments(&walk.increments);
            let gamma = summary
                .correlation()
                .ok_or_else(|| LabError::InvalidArgument("increment marginals are not equivariant".into()))?;
            let psi = gamma.clone().lu().try_inverse().ok_or(LabError::SingularCorrelation)?;
            if psi.iter().any(|x| !x.is_finite()) {
                return Err(LabError::SingularCorrelation);
            }
            Ok(CorrelationModel {
                gamma,
                psi,
                source: CorrelationSource::NumericInverse,
            })
        }
    }
}
