//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cutofflab_core::bounds::{
    correlation_condition_check, double_sum_bound_constant, gaussian_comb_argmax, interior_block,
    lemma_double_sum_check, lemma_sum_check, quadratic_decomposition, schur_complement_closed, schur_sequence,
};
use cutofflab_core::harness::{run_sweep, ExperimentConfig, GridSpec, Instance, OutputFormat, WalkName};
use cutofflab_core::montecarlo::{
    chi_square_gof, empirical_counts, estimate_psi_stats, psi_exact_mean, psi_exact_moments, psi_value, tv_lower_bound,
    SimConfig,
};
use cutofflab_core::spectral::{exact_kernel, l2_bound_sq_grid, uniformization_oracle, Budget, SpectralPlan};
use cutofflab_core::walks::{dg1xn_gamma, dg1xn_psi, dgnxn_gamma, dgnxn_psi};
use cutofflab_core::{canonicalize, make_dg_1xn, make_dg_nxn, TorusLattice, WalkSpec};

const TIMES: [f64; 5] = [0.0, 0.5, 1.0, 5.0, 25.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn criterion(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    let pass = out.pass && in_time;
    let budget = limit
        .map(|l| format!(" / limit {:.0} s", l.as_secs_f64()))
        .unwrap_or_default();
    println!(
        "{} criterion {id} {name}: {} [{:.2} s{budget}]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn oracle_walks() -> Vec<WalkSpec> {
    vec![
        make_dg_1xn(3, 5).unwrap(),
        make_dg_1xn(4, 7).unwrap(),
        make_dg_nxn(3, 3).unwrap(),
    ]
}

fn c1_oracle() -> Outcome {
    let mut worst = (0.0f64, String::new());
    for walk in oracle_walks() {
        let plan = SpectralPlan::new(&walk, &Budget::default()).unwrap();
        for t in TIMES {
            let oracle = uniformization_oracle(&walk, t, 1e-13).unwrap();
            let (_, l1) = plan.kernel(t).unwrap().discrepancy(&oracle).unwrap();
            if l1 >= worst.0 {
                worst = (l1, format!("{} q={} t={t}", walk.kind, walk.q));
            }
        }
    }
    Outcome {
        pass: worst.0 <= 1e-9,
        detail: format!("max L1 {:.3e} at {}", worst.0, worst.1),
    }
}

fn c2_l2() -> Outcome {
    let mut walks = oracle_walks();
    walks.push(make_dg_1xn(5, 11).unwrap());
    let mut worst = (f64::NEG_INFINITY, String::new());
    for walk in walks {
        let l2 = l2_bound_sq_grid(&walk, &TIMES, &Budget::default()).unwrap();
        let plan = SpectralPlan::new(&walk, &Budget::default()).unwrap();
        for (i, &t) in TIMES.iter().enumerate() {
            let tv = plan.kernel(t).unwrap().tv_to_uniform();
            let gap = 4.0 * tv * tv - l2[i];
            if gap > worst.0 {
                worst = (gap, format!("{} q={} t={t}", walk.kind, walk.q));
            }
        }
    }
    Outcome {
        pass: worst.0 <= 1e-9,
        detail: format!("max 4d^2 - l2 = {:.3e} at {}", worst.0, worst.1),
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn c3_identities() -> Outcome {
    let mut worst = (0.0f64, String::new());
    for n in 2..=64 {
        let r = max_abs(&(dg1xn_gamma(n) * dg1xn_psi(n) - DMatrix::identity(n - 1, n - 1)));
        if r >= worst.0 {
            worst = (r, format!("1xn n={n}"));
        }
    }
    for n in 2..=12 {
        let m = (n - 1) * (n - 1);
        let r = max_abs(&(dgnxn_gamma(n) * dgnxn_psi(n) - DMatrix::identity(m, m)));
        if r >= worst.0 {
            worst = (r, format!("nxn n={n}"));
        }
    }
    Outcome {
        pass: worst.0 <= 1e-10,
        detail: format!("max |Gamma Psi - I| = {:.3e} at {}", worst.0, worst.1),
    }
}

fn c4_quadratic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for n in [3usize, 8, 20, 40] {
        let gamma = dg1xn_gamma(n);
        for _ in 0..1000 {
            let y: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-10.0..10.0)).collect();
            let (v, _) = quadratic_decomposition(&y, n).unwrap();
            let yv = DVector::from_column_slice(&y);
            let direct = (yv.transpose() * &gamma * &yv)[(0, 0)];
            worst = worst.max((v - direct).abs() / direct.abs());
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max relative error {worst:.3e} over 4000 vectors"),
    }
}

fn c5_schur() -> Outcome {
    let mut closed = 0.0f64;
    for l in 1..=8 {
        for k in 1..=8 {
            let m = l * k;
            let order: Vec<usize> = (0..m).collect();
            let s = schur_sequence(&interior_block(l, k), &order).unwrap();
            closed = closed.max((1.0 / s.a[m - 1] - schur_complement_closed(l, k)).abs());
        }
    }
    let n = 6;
    let side = n - 1;
    let order: Vec<usize> = (0..side * side).collect();
    let s = schur_sequence(&dgnxn_psi(n), &order).unwrap();
    let mut slack = f64::INFINITY;
    for (idx, &a) in s.a.iter().enumerate() {
        let (l, k) = ((idx / side + 1) as f64, (idx % side + 1) as f64);
        slack = slack.min(a - l * k / ((l + 1.0) * (k + 1.0)));
    }
    Outcome {
        pass: closed <= 1e-10 && slack >= -1e-10,
        detail: format!("closed-form error {closed:.3e}; min a - lk/((l+1)(k+1)) = {slack:.3e} (n=6)"),
    }
}

fn c6_lemmas() -> Outcome {
    let mut grid: Vec<u64> = (0..=100)
        .map(|i| 10f64.powf(5.0 * i as f64 / 100.0).round() as u64)
        .collect();
    grid.dedup();
    let mut single_ratio = 0.0f64;
    let mut ok = true;
    for alpha in [1.0, 4.0, 100.0] {
        for &n in &grid {
            let r = lemma_sum_check(n, alpha).unwrap();
            ok &= r.pass;
            single_ratio = single_ratio.max(r.sum / r.bound);
        }
    }
    let mut double_ratio = 0.0f64;
    for n in 1..=1000 {
        let r = lemma_double_sum_check(n).unwrap();
        ok &= r.pass;
        double_ratio = double_ratio.max(r.sum / double_sum_bound_constant());
    }
    let mut argmax = 0.0f64;
    for big_n in [5u64, 50] {
        for c in [50.0, 200.0, 1000.0] {
            argmax = argmax.max(gaussian_comb_argmax(big_n, c, 1e-4).unwrap().abs());
        }
    }
    ok &= argmax <= 1e-4;
    Outcome {
        pass: ok,
        detail: format!(
            "max sum/bound {single_ratio:.4} (single, {} n), {double_ratio:.4} (double, n<=1000); max |argmax| {argmax:.1e}",
            grid.len()
        ),
    }
}

fn c7_lower_bound() -> Outcome {
    let mut worst = (f64::NEG_INFINITY, String::new());
    for walk in oracle_walks() {
        let plan = SpectralPlan::new(&walk, &Budget::default()).unwrap();
        for t in TIMES {
            let (mean, var) = psi_exact_moments(&walk, t).unwrap();
            let lb = tv_lower_bound(mean, var, 0.0, walk.m as f64 / 2.0).unwrap();
            let gap = lb - plan.kernel(t).unwrap().tv_to_uniform();
            if gap > worst.0 {
                worst = (gap, format!("{} q={} t={t}", walk.kind, walk.q));
            }
        }
    }
    Outcome {
        pass: worst.0 <= 1e-9,
        detail: format!("max bound - d = {:.3e} at {}", worst.0, worst.1),
    }
}

fn c8_stationary() -> Outcome {
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for m in [2usize, 3] {
        let lattice = TorusLattice::new(5, m);
        let size = lattice.size() as usize;
        let mut coords = vec![0i64; m];
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..size {
            lattice.coords_of(i, &mut coords);
            let v = psi_value(&canonicalize(&coords, 5).unwrap());
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / size as f64;
        let var = s2 / size as f64 - mean * mean;
        worst = worst.max(mean.abs()).max((var - m as f64 / 2.0).abs());
        detail.push(format!("m={m}: mean {mean:.1e}, var {var:.15}"));
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("{} (max error {worst:.1e})", detail.join("; ")),
    }
}

fn c9_simulation() -> Outcome {
    let walk = make_dg_1xn(3, 5).unwrap();
    let t = 4.0;
    let kernel = exact_kernel(&walk, t).unwrap();
    let exact_mean = psi_exact_mean(&walk, t).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for seed in [101u64, 202, 303] {
        let cfg = SimConfig {
            t,
            samples: 100_000,
            seed,
        };
        let fit = chi_square_gof(&empirical_counts(&walk, &cfg).unwrap(), kernel.probs()).unwrap();
        let stats = estimate_psi_stats(&walk, &cfg).unwrap();
        let z = (stats.mean - exact_mean).abs() / stats.ci95_halfwidth;
        ok &= fit.p_value > 1e-3 && z < 4.0;
        detail.push(format!("seed {seed}: p={:.3}, |mean gap|={z:.2} hw", fit.p_value));
    }
    Outcome {
        pass: ok,
        detail: detail.join("; "),
    }
}

fn c10_cutoff() -> Outcome {
    let c_values: Vec<f64> = (0..=160).map(|i| 0.002 * 1000f64.powf(i as f64 / 160.0)).collect();
    let cfg = ExperimentConfig {
        walk: WalkName::Dg1xn,
        instances: [4usize, 6, 8]
            .iter()
            .map(|&n| Instance { n, q: 2 * n as i64 })
            .collect(),
        grid: GridSpec::Theory { c_values },
        epsilon: 0.25,
        exact_tv: true,
        mc_samples: None,
        seed: 0,
        output: None,
        format: OutputFormat::Csv,
        threads: None,
    };
    let report = run_sweep(&cfg, &Budget::default()).unwrap();
    let widths: Vec<f64> = report
        .instances
        .iter()
        .map(|s| s.normalized_width.unwrap_or(f64::NAN))
        .collect();
    let decreasing = widths.windows(2).all(|w| w[1] < w[0]);
    let d_upper: Vec<f64> = report
        .instances
        .iter()
        .map(|s| s.d_at_t_upper.unwrap_or(f64::NAN))
        .collect();
    let within = d_upper.iter().all(|&d| d <= 0.25 + 0.2);
    let dominance = report.worst_dominance_gap().is_some_and(|g| g <= 1e-9);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ");
    Outcome {
        pass: decreasing && within && dominance,
        detail: format!(
            "n=4,6,8: normalized widths [{}]; d(t_upper) [{}]",
            fmt(&widths),
            fmt(&d_upper)
        ),
    }
}

fn c11_correlation() -> Outcome {
    let family: Vec<DMatrix<f64>> = (3..=10).map(dgnxn_psi).collect();
    let c = double_sum_bound_constant();
    let g = move |a: f64| c / a.powf(0.25);
    let identity: Vec<DMatrix<f64>> = (1..=20).map(|m| DMatrix::identity(m, m)).collect();
    let inv = |a: f64| 1.0 / a;
    let mut ok = true;
    let mut detail = Vec::new();
    for alpha in [1.0, 16.0] {
        let r = correlation_condition_check(&family, alpha, &g).unwrap();
        let id = correlation_condition_check(&identity, alpha, &inv).unwrap();
        ok &= r.pass && id.pass;
        detail.push(format!(
            "alpha={alpha}: worst slack {:.4} (g={:.4}), identity slack {:.1e}",
            r.worst_slack, r.g_alpha, id.worst_slack
        ));
    }
    Outcome {
        pass: ok,
        detail: detail.join("; "),
    }
}

#[test]
fn acceptance() {
    let secs = Duration::from_secs;
    let results = [
        criterion(1, "oracle equivalence", Some(secs(10)), c1_oracle),
        criterion(2, "l2 dominance", Some(secs(30)), c2_l2),
        criterion(3, "matrix identities", Some(secs(20)), c3_identities),
        criterion(4, "quadratic decomposition", None, c4_quadratic),
        criterion(5, "Schur sequence", None, c5_schur),
        criterion(6, "lemma verifiers", None, c6_lemmas),
        criterion(7, "moment lower bound validity", None, c7_lower_bound),
        criterion(8, "stationary psi moments", None, c8_stationary),
        criterion(9, "simulation fidelity", None, c9_simulation),
        criterion(10, "cutoff signature", Some(secs(300)), c10_cutoff),
        criterion(11, "correlation condition", None, c11_correlation),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, &p)| !p)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
