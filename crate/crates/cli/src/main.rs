//! `cutofflab`: command-line driver for the mixing-time laboratory.
//!
//! Exit codes: 0 success, 1 invalid input, 2 budget exceeded, 3 invariant
//! failure. `CUTOFFLAB_THREADS` caps the worker count.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use cutofflab_core::bounds::{
    comb_threshold, correlation_condition_check, decay_condition_scan, gaussian_comb_argmax, lemma_double_sum_check,
    lemma_sum_check,
};
use cutofflab_core::harness::{
    column_docs, condition_family, rows_csv, run_sweep, run_verification_suite, theory_times, write_report,
    ExperimentConfig, GridSpec, Instance, OutputFormat, Tamper, VerifyLevel, WalkName,
};
use cutofflab_core::montecarlo::{
    estimate_psi_stats, psi_exact_mean, psi_exact_moments, tv_lower_bound, tv_lower_bound_vs_uniform, SimConfig,
};
use cutofflab_core::spectral::{spectral_summaries, uniformization_oracle, Budget, SpectralPlan};
use cutofflab_core::{LabError, WalkSpec};

#[derive(Parser)]
#[command(
    name = "cutofflab",
    version,
    about = "Mixing-time laboratory for Diaconis-Gangolli walks over Z_q"
)]
struct Cli {
    /// Worker threads (also capped by CUTOFFLAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct WalkArgs {
    /// dg1xn, dgnxn or srw.
    #[arg(long, default_value = "dg1xn")]
    walk: WalkName,
    /// Table size (dimension for srw).
    #[arg(long)]
    n: usize,
    /// Modulus.
    #[arg(long)]
    q: i64,
}

impl WalkArgs {
    fn build(&self) -> Result<WalkSpec, LabError> {
        self.walk.build(self.n, self.q)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Quick,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// l2 bound and exact distance to uniformity on a list of times.
    SpectralTv {
        #[command(flatten)]
        walk: WalkArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        /// Skip the exact distance.
        #[arg(long)]
        bound_only: bool,
    },
    /// Compares the Fourier kernel with uniformization of the generator.
    OracleCheck {
        #[command(flatten)]
        walk: WalkArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Simulates endpoints and reports psi statistics.
    Simulate {
        #[command(flatten)]
        walk: WalkArgs,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Lower mixing-time bound and the moment lower bound on d at that time.
    LowerBound {
        #[command(flatten)]
        walk: WalkArgs,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Upper and lower mixing-time bounds.
    TheoremTimes {
        #[command(flatten)]
        walk: WalkArgs,
        #[arg(long)]
        epsilon: f64,
        /// Report the upper time with the (1 - 3/q)^{-1} prefactor.
        #[arg(long)]
        proof_variant: bool,
    },
    /// Numerical checks of the summation inequalities and the comb maximiser.
    CheckLemmas {
        #[arg(long, default_value_t = 100_000)]
        max_n: u64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 4.0, 100.0])]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = 1_000)]
        max_n_double: u64,
    },
    /// Correlation condition over a matrix family and the high-frequency scan.
    CheckConditions {
        #[command(flatten)]
        walk: WalkArgs,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Time for the high-frequency scan (skipped when absent).
        #[arg(long)]
        t: Option<f64>,
    },
    /// Sweep of d(t) and bounds over instances; see the column list below.
    #[command(after_help = column_docs())]
    SweepCutoff {
        /// JSON experiment config; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        walk: Option<WalkName>,
        /// Table sizes; paired with --q, or with q = q-factor * n.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        q: Vec<i64>,
        #[arg(long)]
        q_factor: Option<i64>,
        /// Multiples of the upper mixing time.
        #[arg(long, value_delimiter = ',')]
        c_values: Vec<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        bound_only: bool,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
    },
    /// Runs the invariant suite and writes a JSON summary.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        level: Level,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Test hook: perturb the 1 x n precision matrix, as n,row,col,delta.
        #[arg(long, hide = true, value_delimiter = ',')]
        tamper: Option<Vec<f64>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Ok(Value),
    /// The command already wrote its output.
    Printed,
    InvariantFailed(Value),
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn thread_cap(flag: Option<usize>) -> Result<Option<usize>, LabError> {
    let env = match std::env::var("CUTOFFLAB_THREADS") {
        Ok(s) => Some(
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| LabError::Validation(format!("CUTOFFLAB_THREADS = '{s}'")))?,
        ),
        Err(_) => None,
    };
    if flag == Some(0) {
        return Err(LabError::Validation("--threads must be at least 1".into()));
    }
    Ok(match (flag, env) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = thread_cap(cli.threads).and_then(|cap| {
        if let Some(k) = cap {
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global()
                .map_err(|e| LabError::Validation(format!("thread pool: {e}")))?;
        }
        run(cli.command)
    });
    match result {
        Ok(Outcome::Ok(v)) => {
            print(&v);
            ExitCode::SUCCESS
        }
        Ok(Outcome::Printed) => ExitCode::SUCCESS,
        Ok(Outcome::InvariantFailed(v)) => {
            print(&v);
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<Outcome, LabError> {
    match command {
        Command::SpectralTv { walk, t, bound_only } => {
            let w = walk.build()?;
            let rows = spectral_summaries(&w, &t, !bound_only, &Budget::default())?;
            Ok(Outcome::Ok(json!({
                "walk": w.kind.to_string(),
                "q": w.q,
                "lattice_size": w.lattice_size().to_string(),
                "rows": rows,
            })))
        }
        Command::OracleCheck { walk, t, tol } => {
            let w = walk.build()?;
            let plan = SpectralPlan::new(&w, &Budget::default())?;
            let mut rows = Vec::new();
            let mut pass = true;
            for &ti in &t {
                let (max, l1) = plan.kernel(ti)?.discrepancy(&uniformization_oracle(&w, ti, 1e-13)?)?;
                pass &= l1 <= tol;
                rows.push(json!({"t": ti, "l1": l1, "max_abs": max, "pass": l1 <= tol}));
            }
            let v = json!({"walk": w.kind.to_string(), "q": w.q, "tol": tol, "pass": pass, "rows": rows});
            Ok(if pass {
                Outcome::Ok(v)
            } else {
                Outcome::InvariantFailed(v)
            })
        }
        Command::Simulate { walk, t, samples, seed } => {
            let w = walk.build()?;
            let stats = estimate_psi_stats(&w, &SimConfig { t, samples, seed })?;
            Ok(Outcome::Ok(json!({
                "walk": w.kind.to_string(),
                "q": w.q,
                "t": t,
                "samples": samples,
                "seed": seed,
                "psi_mean": stats.mean,
                "psi_var": stats.variance,
                "ci95_halfwidth": stats.ci95_halfwidth,
                "tv_lower_bound": tv_lower_bound_vs_uniform(&stats, w.m)?,
                "exact_psi_mean": psi_exact_mean(&w, t)?,
            })))
        }
        Command::LowerBound {
            walk,
            epsilon,
            samples,
            seed,
        } => {
            let w = walk.build()?;
            let times = theory_times(walk.walk, walk.n, walk.q, epsilon)?;
            let mut out = json!({
                "walk": w.kind.to_string(),
                "n": walk.n,
                "q": walk.q,
                "epsilon": epsilon,
                "gamma": times.gamma,
                "t_lower": times.t_lower,
            });
            if let Some(t) = times.t_lower {
                let (mean, var) = psi_exact_moments(&w, t)?;
                let stats = estimate_psi_stats(&w, &SimConfig { t, samples, seed })?;
                out["exact_moment_bound"] = json!(tv_lower_bound(mean, var, 0.0, w.m as f64 / 2.0)?);
                out["mc_bound"] = json!(tv_lower_bound_vs_uniform(&stats, w.m)?);
                out["psi_mean"] = json!(stats.mean);
                out["psi_var"] = json!(stats.variance);
                out["exact_psi_mean"] = json!(mean);
                out["exact_psi_var"] = json!(var);
            }
            Ok(Outcome::Ok(out))
        }
        Command::TheoremTimes {
            walk,
            epsilon,
            proof_variant,
        } => {
            let times = theory_times(walk.walk, walk.n, walk.q, epsilon)?;
            let selected = if proof_variant {
                times
                    .t_upper_proof_variant
                    .ok_or_else(|| LabError::Validation("the proof variant exists only for dg1xn with q > 3".into()))?
            } else {
                times.t_upper
            };
            let mut v = serde_json::to_value(&times)?;
            v["proof_variant"] = json!(proof_variant);
            v["t_upper_selected"] = json!(selected);
            Ok(Outcome::Ok(v))
        }
        Command::CheckLemmas {
            max_n,
            alpha,
            max_n_double,
        } => check_lemmas(max_n, &alpha, max_n_double),
        Command::CheckConditions { walk, alpha, t } => check_conditions(&walk, alpha, t),
        Command::SweepCutoff {
            config,
            walk,
            n,
            q,
            q_factor,
            c_values,
            epsilon,
            mc_samples,
            seed,
            bound_only,
            output,
            format,
        } => {
            let started = Instant::now();
            let mut cfg = match &config {
                Some(path) => serde_json::from_str::<ExperimentConfig>(&std::fs::read_to_string(path)?)
                    .map_err(|e| LabError::Validation(format!("config: {e}")))?,
                None => ExperimentConfig {
                    walk: WalkName::Dg1xn,
                    instances: Vec::new(),
                    grid: GridSpec::Theory { c_values: Vec::new() },
                    epsilon: 0.25,
                    exact_tv: true,
                    mc_samples: None,
                    seed: 0,
                    output: None,
                    format: OutputFormat::Csv,
                    threads: None,
                },
            };
            if let Some(w) = walk {
                cfg.walk = w;
            }
            if !n.is_empty() {
                cfg.instances = match (q.as_slice(), q_factor) {
                    (_, Some(f)) => n.iter().map(|&n| Instance { n, q: f * n as i64 }).collect(),
                    ([single], None) => n.iter().map(|&n| Instance { n, q: *single }).collect(),
                    (qs, None) if qs.len() == n.len() => n.iter().zip(qs).map(|(&n, &q)| Instance { n, q }).collect(),
                    _ => return Err(LabError::Validation("give one --q, one per --n, or --q-factor".into())),
                };
            }
            if !c_values.is_empty() {
                cfg.grid = GridSpec::Theory { c_values };
            }
            if let Some(e) = epsilon {
                cfg.epsilon = e;
            }
            if mc_samples.is_some() {
                cfg.mc_samples = mc_samples;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if bound_only {
                cfg.exact_tv = false;
            }
            if output.is_some() {
                cfg.output = output;
            }
            if let Some(f) = format {
                cfg.format = match f {
                    Format::Csv => OutputFormat::Csv,
                    Format::Json => OutputFormat::Json,
                };
            }
            cfg.validate()?;
            let report = run_sweep(&cfg, &Budget::default())?;
            let dominance_ok = report.worst_dominance_gap().is_none_or(|g| g <= 1e-9);
            match &cfg.output {
                Some(path) => {
                    let written = write_report(&report, &cfg, path, started)?;
                    let files: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
                    let v = json!({"written": files, "instances": report.instances, "l2_dominance": dominance_ok});
                    Ok(if dominance_ok {
                        Outcome::Ok(v)
                    } else {
                        Outcome::InvariantFailed(v)
                    })
                }
                None => {
                    match cfg.format {
                        OutputFormat::Csv => print!("{}", rows_csv(&report)),
                        OutputFormat::Json => print(&serde_json::to_value(&report)?),
                    }
                    if dominance_ok {
                        Ok(Outcome::Printed)
                    } else {
                        Ok(Outcome::InvariantFailed(json!({"l2_dominance": false})))
                    }
                }
            }
        }
        Command::Verify { level, output, tamper } => {
            let level = match level {
                Level::Quick => VerifyLevel::Quick,
                Level::Full => VerifyLevel::Full,
            };
            let tamper = match tamper.as_deref() {
                Some([n, row, col, delta]) => Some(Tamper {
                    n: *n as usize,
                    row: *row as usize,
                    col: *col as usize,
                    delta: *delta,
                }),
                Some(_) => return Err(LabError::Validation("--tamper takes n,row,col,delta".into())),
                None => None,
            };
            let started = Instant::now();
            let report = run_verification_suite(level, tamper);
            let mut v = serde_json::to_value(&report)?;
            v["wall_ms"] = json!(started.elapsed().as_millis() as u64);
            if let Some(path) = output {
                std::fs::write(&path, serde_json::to_string_pretty(&v)? + "\n")?;
            }
            Ok(if report.pass {
                Outcome::Ok(v)
            } else {
                Outcome::InvariantFailed(v)
            })
        }
    }
}

fn log_grid(top: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (0..=60)
        .map(|i| (top as f64).powf(i as f64 / 60.0).round() as u64)
        .collect();
    v.dedup();
    v
}

fn check_lemmas(max_n: u64, alphas: &[f64], max_n_double: u64) -> Result<Outcome, LabError> {
    if max_n == 0 || max_n_double == 0 {
        return Err(LabError::Validation("--max-n must be at least 1".into()));
    }
    let mut single = Vec::new();
    let mut worst = f64::INFINITY;
    for &alpha in alphas {
        for n in log_grid(max_n) {
            let r = lemma_sum_check(n, alpha)?;
            worst = worst.min(r.bound - r.sum);
            single.push(r);
        }
    }
    let double: Vec<_> = log_grid(max_n_double)
        .into_iter()
        .map(lemma_double_sum_check)
        .collect::<Result<_, _>>()?;
    for r in &double {
        worst = worst.min(r.bound - r.sum);
    }
    let mut comb = Vec::new();
    let c_grid: Vec<f64> = (0..40).map(|i| 0.5 * 1.2f64.powi(i)).collect();
    for big_n in [5u64, 50] {
        let maxima: Vec<Value> = [50.0, 200.0, 1000.0]
            .iter()
            .map(|&c| {
                gaussian_comb_argmax(big_n, c, 1e-4).map(|x| json!({"c": c, "argmax": x, "pass": x.abs() <= 1e-4}))
            })
            .collect::<Result<_, _>>()?;
        comb.push(json!({
            "N": big_n,
            "maxima": maxima,
            "measured_threshold": comb_threshold(big_n, &c_grid, 1e-4)?,
        }));
    }
    let comb_pass = comb
        .iter()
        .flat_map(|c| c["maxima"].as_array().cloned().unwrap_or_default())
        .all(|m| m["pass"] == json!(true));
    let pass = single.iter().all(|r| r.pass) && double.iter().all(|r| r.pass) && comb_pass;
    let v = json!({
        "inputs": {"max_n": max_n, "alpha": alphas, "max_n_double": max_n_double},
        "pass": pass,
        "worst_slack": worst,
        "single_sum": single,
        "double_sum": double,
        "comb": comb,
    });
    Ok(if pass {
        Outcome::Ok(v)
    } else {
        Outcome::InvariantFailed(v)
    })
}

fn check_conditions(walk: &WalkArgs, alpha: f64, t: Option<f64>) -> Result<Outcome, LabError> {
    let n = walk.n;
    let (family, g) = condition_family(walk.walk, n);
    let report = correlation_condition_check(&family, alpha, &*g)?;
    let decay = match t {
        Some(t) => Some(decay_condition_scan(&walk.build()?, t, &Budget::default())?),
        None => None,
    };
    let decay_ok = decay.as_ref().is_none_or(|d| d.within_regime_bound != Some(false));
    let pass = report.pass && decay_ok;
    let v = json!({
        "inputs": {"walk": walk.walk, "n": n, "q": walk.q, "alpha": alpha, "t": t},
        "pass": pass,
        "worst_slack": report.worst_slack,
        "correlation": report,
        "decay": decay,
    });
    Ok(if pass {
        Outcome::Ok(v)
    } else {
        Outcome::InvariantFailed(v)
    })
}
