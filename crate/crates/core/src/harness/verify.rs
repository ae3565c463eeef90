//! The invariant suite behind `verify`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{
    correlation_condition_check, decay_condition_scan, double_sum_bound_constant, gaussian_comb_argmax, interior_block,
    lemma_double_sum_check, lemma_sum_check, quadratic_decomposition, schur_complement_closed, schur_sequence,
};
use crate::error::Result;
use crate::montecarlo::{
    chi_square_gof, empirical_counts, estimate_psi_stats, psi_exact_mean, psi_exact_moments, psi_moments_from_kernel,
    tv_lower_bound, SimConfig,
};
use crate::spectral::{
    exact_kernel, exact_tv_grid, l2_bound_sq_grid, uniformization_oracle, Budget, KernelVector, SpectralPlan,
};
use crate::torus::TorusLattice;
use crate::walks::{dg1xn_gamma, dg1xn_psi, dgnxn_gamma, dgnxn_psi, make_dg_1xn, make_dg_nxn, WalkSpec};

use super::{run_sweep, ExperimentConfig, GridSpec, Instance, OutputFormat, WalkName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyLevel {
    Quick,
    Full,
}

/// Perturbs one entry of the `1 x n` precision matrix before the identity
/// check, to exercise failure reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tamper {
    pub n: usize,
    pub row: usize,
    pub col: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// Tolerance minus worst observed error; negative on failure.
    pub slack: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub level: VerifyLevel,
    pub pass: bool,
    pub failures: Vec<String>,
    pub checks: Vec<CheckResult>,
}

/// Worst error against a tolerance, with the location of the worst case.
struct Worst {
    tol: f64,
    err: f64,
    at: String,
}

impl Worst {
    fn new(tol: f64) -> Self {
        Worst {
            tol,
            err: f64::NEG_INFINITY,
            at: String::new(),
        }
    }

    fn see(&mut self, err: f64, at: impl FnOnce() -> String) {
        if err > self.err || err.is_nan() {
            self.err = err;
            self.at = at();
        }
    }

    fn finish(self, name: &str) -> CheckResult {
        let slack = self.tol - self.err;
        CheckResult {
            name: name.into(),
            pass: slack >= 0.0,
            slack,
            detail: format!("worst error {:e} at {}", self.err, self.at),
        }
    }
}

fn check(name: &str, f: impl FnOnce() -> Result<CheckResult>) -> CheckResult {
    f().unwrap_or_else(|e| CheckResult {
        name: name.into(),
        pass: false,
        slack: f64::NEG_INFINITY,
        detail: format!("error: {e}"),
    })
}

const ORACLE_TIMES: [f64; 5] = [0.0, 0.5, 1.0, 5.0, 25.0];

fn oracle_walks() -> Result<Vec<WalkSpec>> {
    Ok(vec![make_dg_1xn(3, 5)?, make_dg_1xn(4, 7)?, make_dg_nxn(3, 3)?])
}

fn oracle_equivalence() -> Result<CheckResult> {
    let mut w = Worst::new(1e-9);
    for walk in oracle_walks()? {
        let plan = SpectralPlan::new(&walk, &Budget::default())?;
        for t in ORACLE_TIMES {
            let (_, l1) = plan.kernel(t)?.discrepancy(&uniformization_oracle(&walk, t, 1e-13)?)?;
            w.see(l1, || format!("{} q={} t={t}", walk.kind, walk.q));
        }
    }
    Ok(w.finish("oracle-equivalence"))
}

fn l2_dominance(level: VerifyLevel) -> Result<CheckResult> {
    let mut walks = oracle_walks()?;
    if level == VerifyLevel::Full {
        walks.push(make_dg_1xn(5, 11)?);
    }
    let mut w = Worst::new(1e-9);
    for walk in walks {
        let l2 = l2_bound_sq_grid(&walk, &ORACLE_TIMES, &Budget::default())?;
        let tv = exact_tv_grid(&walk, &ORACLE_TIMES, &Budget::default())?;
        for (i, t) in ORACLE_TIMES.iter().enumerate() {
            w.see(4.0 * tv[i] * tv[i] - l2[i], || {
                format!("{} q={} t={t}", walk.kind, walk.q)
            });
        }
    }
    Ok(w.finish("l2-dominance"))
}

fn max_residual(gamma: &DMatrix<f64>, psi: &DMatrix<f64>) -> (f64, (usize, usize)) {
    let r = gamma * psi - DMatrix::identity(gamma.nrows(), gamma.ncols());
    let mut best = (0.0, (0, 0));
    for j in 0..r.ncols() {
        for i in 0..r.nrows() {
            if r[(i, j)].abs() > best.0 {
                best = (r[(i, j)].abs(), (i, j));
            }
        }
    }
    best
}

fn gamma_psi_identity(level: VerifyLevel, tamper: Option<Tamper>) -> Result<CheckResult> {
    let (top1, topn) = match level {
        VerifyLevel::Quick => (16, 6),
        VerifyLevel::Full => (64, 12),
    };
    let mut w = Worst::new(1e-10);
    for n in 2..=top1 {
        let mut psi = dg1xn_psi(n);
        if let Some(t) = tamper.filter(|t| t.n == n && t.row < n - 1 && t.col < n - 1) {
            psi[(t.row, t.col)] += t.delta;
        }
        let (err, (i, j)) = max_residual(&dg1xn_gamma(n), &psi);
        w.see(err, || format!("dg1xn n={n} entry ({i}, {j})"));
    }
    for n in 2..=topn {
        let (err, (i, j)) = max_residual(&dgnxn_gamma(n), &dgnxn_psi(n));
        w.see(err, || format!("dgnxn n={n} entry ({i}, {j})"));
    }
    Ok(w.finish("gamma-psi-identity"))
}

fn quadratic(level: VerifyLevel) -> Result<CheckResult> {
    let (ns, reps): (&[usize], usize) = match level {
        VerifyLevel::Quick => (&[3, 8], 100),
        VerifyLevel::Full => (&[3, 8, 20, 40], 1000),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut w = Worst::new(1e-10);
    for &n in ns {
        let gamma = dg1xn_gamma(n);
        for rep in 0..reps {
            let y: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-10.0..10.0)).collect();
            let (v, _) = quadratic_decomposition(&y, n)?;
            let yv = nalgebra::DVector::from_column_slice(&y);
            let direct = (yv.transpose() * &gamma * &yv)[(0, 0)];
            w.see((v - direct).abs() / direct.abs().max(1e-300), || {
                format!("n={n} sample {rep}")
            });
        }
    }
    Ok(w.finish("quadratic-decomposition"))
}

fn schur(level: VerifyLevel) -> Result<CheckResult> {
    let top = if level == VerifyLevel::Full { 8 } else { 4 };
    let mut w = Worst::new(1e-10);
    for l in 1..=top {
        for k in 1..=top {
            let m = l * k;
            let order: Vec<usize> = (0..m).collect();
            let s = schur_sequence(&interior_block(l, k), &order)?;
            let err = (1.0 / s.a[m - 1] - schur_complement_closed(l, k)).abs();
            w.see(err, || format!("closed form l={l} k={k}"));
        }
    }
    let n = 6;
    let side = n - 1;
    let order: Vec<usize> = (0..side * side).collect();
    let s = schur_sequence(&dgnxn_psi(n), &order)?;
    for (idx, &a) in s.a.iter().enumerate() {
        let (l, k) = ((idx / side + 1) as f64, (idx % side + 1) as f64);
        w.see(l * k / ((l + 1.0) * (k + 1.0)) - a, || {
            format!("dgnxn n=6 cell ({l}, {k})")
        });
    }
    Ok(w.finish("schur-sequence"))
}

fn log_grid(top: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (0..=60)
        .map(|i| (top as f64).powf(i as f64 / 60.0).round() as u64)
        .collect();
    v.dedup();
    v
}

fn lemmas(level: VerifyLevel) -> Result<CheckResult> {
    let (top1, top2) = match level {
        VerifyLevel::Quick => (1_000, 100),
        VerifyLevel::Full => (100_000, 1_000),
    };
    let mut w = Worst::new(0.0);
    for alpha in [1.0, 4.0, 100.0] {
        for n in log_grid(top1) {
            let r = lemma_sum_check(n, alpha)?;
            w.see((r.sum - r.bound) / r.bound, || {
                format!("single sum n={n} alpha={alpha}")
            });
        }
    }
    let bound = double_sum_bound_constant();
    for n in log_grid(top2) {
        let r = lemma_double_sum_check(n)?;
        w.see((r.sum - r.bound) / bound, || format!("double sum n={n}"));
    }
    for big_n in [5u64, 50] {
        for c in [50.0, 200.0, 1000.0] {
            let x = gaussian_comb_argmax(big_n, c, 1e-4)?;
            w.see(x.abs() - 1e-4, || format!("comb N={big_n} c={c}"));
        }
    }
    Ok(w.finish("lemma-verifiers"))
}

fn moment_lower_bound() -> Result<CheckResult> {
    let mut w = Worst::new(1e-9);
    for walk in oracle_walks()? {
        let plan = SpectralPlan::new(&walk, &Budget::default())?;
        for t in ORACLE_TIMES {
            let (mean, var) = psi_exact_moments(&walk, t)?;
            let lb = tv_lower_bound(mean, var, 0.0, walk.m as f64 / 2.0)?;
            let tv = plan.kernel(t)?.tv_to_uniform();
            w.see(lb - tv, || format!("{} q={} t={t}", walk.kind, walk.q));
        }
    }
    Ok(w.finish("moment-lower-bound"))
}

fn stationary_psi() -> Result<CheckResult> {
    let mut w = Worst::new(1e-12);
    for m in [2usize, 3] {
        let lattice = TorusLattice::new(5, m);
        let size = lattice.size() as usize;
        let (mean, var) = psi_moments_from_kernel(&KernelVector::new(
            f64::INFINITY,
            lattice,
            vec![1.0 / size as f64; size],
        ));
        w.see(mean.abs(), || format!("mean m={m}"));
        w.see((var - m as f64 / 2.0).abs(), || format!("variance m={m}"));
    }
    Ok(w.finish("stationary-psi-moments"))
}

fn simulation(level: VerifyLevel) -> Result<CheckResult> {
    let walk = make_dg_1xn(3, 5)?;
    let t = 4.0;
    let (samples, seeds): (usize, &[u64]) = match level {
        VerifyLevel::Quick => (20_000, &[1]),
        VerifyLevel::Full => (100_000, &[1, 2, 3]),
    };
    let kernel = exact_kernel(&walk, t)?;
    let exact_mean = psi_exact_mean(&walk, t)?;
    // slack is expressed on log10(p) against log10(0.001)
    let mut w = Worst::new(0.0);
    for &seed in seeds {
        let cfg = SimConfig { t, samples, seed };
        let fit = chi_square_gof(&empirical_counts(&walk, &cfg)?, kernel.probs())?;
        w.see(-3.0 - fit.p_value.log10(), || {
            format!("chi-square seed={seed} p={:e}", fit.p_value)
        });
        let stats = estimate_psi_stats(&walk, &cfg)?;
        let z = (stats.mean - exact_mean).abs() / stats.ci95_halfwidth;
        w.see(z - 4.0, || format!("psi mean seed={seed} ({z:.2} half-widths)"));
    }
    Ok(w.finish("simulation-fidelity"))
}

fn decay() -> Result<CheckResult> {
    let mut w = Worst::new(0.0);
    for walk in [make_dg_1xn(4, 50)?, make_dg_nxn(3, 12)?] {
        let r = decay_condition_scan(&walk, 1.0, &Budget::default())?;
        let bound = r.regime_bound.unwrap_or(1.0);
        w.see(r.max_phi - bound, || format!("{} q={}", walk.kind, walk.q));
    }
    Ok(w.finish("decay-regime-bound"))
}

fn correlation(level: VerifyLevel) -> Result<CheckResult> {
    let top = if level == VerifyLevel::Full { 10 } else { 6 };
    let family: Vec<DMatrix<f64>> = (3..=top).map(dgnxn_psi).collect();
    let c = double_sum_bound_constant();
    let g = move |a: f64| c / a.powf(0.25);
    let identity: Vec<DMatrix<f64>> = (1..=12).map(|m| DMatrix::identity(m, m)).collect();
    let inv = |a: f64| 1.0 / a;
    let mut w = Worst::new(0.0);
    for alpha in [1.0, 16.0] {
        let r = correlation_condition_check(&family, alpha, &g)?;
        w.see(-r.worst_slack / r.g_alpha, || format!("dgnxn family alpha={alpha}"));
        let r = correlation_condition_check(&identity, alpha, &inv)?;
        w.see(-r.worst_slack / r.g_alpha - 1e-12, || {
            format!("identity family alpha={alpha}")
        });
    }
    Ok(w.finish("correlation-condition"))
}

fn cutoff(level: VerifyLevel) -> Result<CheckResult> {
    let ns: &[usize] = match level {
        VerifyLevel::Quick => &[4, 6],
        VerifyLevel::Full => &[4, 6, 8],
    };
    let c_values: Vec<f64> = (0..=60).map(|i| 0.005 * (240f64).powf(i as f64 / 60.0)).collect();
    let cfg = ExperimentConfig {
        walk: WalkName::Dg1xn,
        instances: ns.iter().map(|&n| Instance { n, q: 2 * n as i64 }).collect(),
        grid: GridSpec::Theory { c_values },
        epsilon: 0.25,
        exact_tv: true,
        mc_samples: None,
        seed: 0,
        output: None,
        format: OutputFormat::Csv,
        threads: None,
    };
    let report = run_sweep(&cfg, &Budget::default())?;
    let mut w = Worst::new(0.0);
    let mut prev: Option<f64> = None;
    for s in &report.instances {
        let width = s.normalized_width.unwrap_or(f64::NAN);
        if let Some(p) = prev {
            w.see(width - p, || {
                format!("width n={} ({width:.4}) vs previous ({p:.4})", s.n)
            });
        }
        prev = Some(width);
        let d = s.d_at_t_upper.unwrap_or(f64::NAN);
        w.see(d - 0.45, || format!("d(t_upper) n={} = {d:.4}", s.n));
    }
    w.see(report.worst_dominance_gap().unwrap_or(0.0) - 1e-9, || {
        "l2 dominance in sweep".into()
    });
    Ok(w.finish("cutoff-signature"))
}

fn large_table() -> Result<CheckResult> {
    let walk = make_dg_nxn(4, 5)?;
    let ts = [1.0, 10.0, 40.0];
    let budget = Budget::default();
    let plan = SpectralPlan::new(&walk, &budget)?;
    let l2 = l2_bound_sq_grid(&walk, &ts, &budget)?;
    let mut w = Worst::new(1e-9);
    for (i, &t) in ts.iter().enumerate() {
        let k = plan.kernel(t)?;
        let tv = k.tv_to_uniform();
        w.see(4.0 * tv * tv - l2[i], || format!("l2 dominance t={t}"));
        w.see((k.mass() - 1.0).abs(), || format!("mass t={t}"));
    }
    Ok(w.finish("dgnxn-n4-q5-exact"))
}

/// Runs every invariant at the chosen scale.
pub fn run_verification_suite(level: VerifyLevel, tamper: Option<Tamper>) -> VerificationReport {
    let mut checks = vec![
        check("oracle-equivalence", oracle_equivalence),
        check("l2-dominance", || l2_dominance(level)),
        check("gamma-psi-identity", || gamma_psi_identity(level, tamper)),
        check("quadratic-decomposition", || quadratic(level)),
        check("schur-sequence", || schur(level)),
        check("lemma-verifiers", || lemmas(level)),
        check("moment-lower-bound", moment_lower_bound),
        check("stationary-psi-moments", stationary_psi),
        check("simulation-fidelity", || simulation(level)),
        check("decay-regime-bound", decay),
        check("correlation-condition", || correlation(level)),
        check("cutoff-signature", || cutoff(level)),
    ];
    if level == VerifyLevel::Full {
        checks.push(check("dgnxn-n4-q5-exact", large_table));
    }
    let failures: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    VerificationReport {
        level,
        pass: failures.is_empty(),
        failures,
        checks,
    }
}
