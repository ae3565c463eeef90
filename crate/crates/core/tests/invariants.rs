use cutofflab_core::harness::{rows_csv, run_sweep, ExperimentConfig, GridSpec, Instance, OutputFormat, WalkName};
use cutofflab_core::montecarlo::{
    chi_square_gof, empirical_counts, estimate_psi_stats, psi_exact_mean, psi_exact_moments, tv_lower_bound, SimConfig,
};
use cutofflab_core::spectral::{exact_kernel, exact_tv_grid, l2_bound_sq_grid, Budget, Dg1xnOrbits};
use cutofflab_core::{make_dg_1xn, make_dg_nxn, make_srw};

#[test]
fn exact_moment_bound_never_exceeds_distance() {
    let walks = [
        make_srw(1, 7).unwrap(),
        make_srw(3, 5).unwrap(),
        make_dg_1xn(2, 11).unwrap(),
        make_dg_1xn(5, 6).unwrap(),
        make_dg_nxn(3, 4).unwrap(),
    ];
    for walk in walks {
        for t in [0.0, 0.3, 2.0, 7.0, 20.0, 80.0] {
            let (mean, var) = psi_exact_moments(&walk, t).unwrap();
            let lb = tv_lower_bound(mean, var, 0.0, walk.m as f64 / 2.0).unwrap();
            let tv = exact_kernel(&walk, t).unwrap().tv_to_uniform();
            assert!(lb <= tv + 1e-9, "{} t={t}: {lb} > {tv}", walk.kind);
        }
    }
}

#[test]
fn simulated_endpoints_fit_exact_kernel() {
    let cases = [
        (make_dg_1xn(4, 5).unwrap(), 3.0, 17u64),
        (make_dg_nxn(3, 3).unwrap(), 1.5, 23),
        (make_srw(2, 6).unwrap(), 40.0, 31),
    ];
    for (walk, t, seed) in cases {
        let counts = empirical_counts(
            &walk,
            &SimConfig {
                t,
                samples: 50_000,
                seed,
            },
        )
        .unwrap();
        let fit = chi_square_gof(&counts, exact_kernel(&walk, t).unwrap().probs()).unwrap();
        assert!(fit.p_value > 1e-3, "{} t={t}: {fit:?}", walk.kind);
    }
}

#[test]
fn mc_mean_coverage_over_seeds() {
    let walk = make_dg_1xn(4, 7).unwrap();
    let t = 6.0;
    let exact = psi_exact_mean(&walk, t).unwrap();
    let covered = (0..100u64)
        .filter(|&seed| {
            let s = estimate_psi_stats(&walk, &SimConfig { t, samples: 2000, seed }).unwrap();
            (s.mean - exact).abs() < 4.0 * s.ci95_halfwidth
        })
        .count();
    assert!(covered >= 99, "{covered}/100");
}

#[test]
fn lumped_and_dense_distances_agree_through_public_api() {
    let walk = make_dg_1xn(5, 7).unwrap();
    let ts = [0.5, 5.0, 30.0];
    let dense = exact_tv_grid(&walk, &ts, &Budget::default()).unwrap();
    let lumped = Dg1xnOrbits::new(5, 7, &Budget::default())
        .unwrap()
        .tv_grid(&ts, 1e-13)
        .unwrap();
    for (a, b) in dense.iter().zip(&lumped) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    let l2 = l2_bound_sq_grid(&walk, &ts, &Budget::default()).unwrap();
    for (d, b) in dense.iter().zip(&l2) {
        assert!(4.0 * d * d <= b + 1e-9);
    }
}

#[test]
fn sweep_independent_of_thread_count() {
    let mut cfg = ExperimentConfig {
        walk: WalkName::Dgnxn,
        instances: vec![Instance { n: 3, q: 5 }, Instance { n: 3, q: 4 }],
        grid: GridSpec::Log {
            start: 0.5,
            stop: 200.0,
            points: 9,
        },
        epsilon: 0.1,
        exact_tv: true,
        mc_samples: Some(300),
        seed: 5,
        output: None,
        format: OutputFormat::Csv,
        threads: Some(1),
    };
    let one = rows_csv(&run_sweep(&cfg, &Budget::default()).unwrap());
    cfg.threads = Some(3);
    let three = rows_csv(&run_sweep(&cfg, &Budget::default()).unwrap());
    assert_eq!(one, three);
}
