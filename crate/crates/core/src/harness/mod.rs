//! Reproducible experiments: time-grid sweeps of the distance to uniformity
//! and the full invariant suite.
//!
//! Data files depend only on the configuration. Wall-clock information goes
//! to a sidecar `<output>.meta.json`.

mod verify;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::{double_sum_bound_constant, sum_bound_constant, theorem_times, TheoremTimes, TimeFlavor};
use crate::error::{LabError, Result};
use crate::montecarlo::{estimate_psi_stats, tv_lower_bound_vs_uniform, SimConfig};
use crate::numeric::first_crossing;
use crate::spectral::{exact_tv_grid, l2_bound_sq_grid, Budget};
use crate::walks::{dg1xn_psi, dgnxn_psi, make_dg_1xn, make_dg_nxn, make_srw, WalkSpec};

pub use verify::{run_verification_suite, CheckResult, Tamper, VerificationReport, VerifyLevel};

/// Version of the CSV and JSON layouts written by [`write_report`].
pub const SCHEMA_VERSION: u32 = 1;

/// Columns of the row file, in order.
pub const ROW_COLUMNS: [(&str, &str); 8] = [
    ("n", "table size (dimension for srw)"),
    ("q", "modulus"),
    ("t", "continuous time"),
    (
        "c",
        "t / t_theory, where t_theory is the upper mixing-time bound at epsilon",
    ),
    (
        "l2_tv_bound",
        "sqrt(sum over nonzero frequencies of exp(2t(Phi - 1))) / 2",
    ),
    ("exact_tv", "exact distance to uniformity from 0; empty when bound-only"),
    (
        "mc_lower_bound",
        "moment lower bound from simulated psi statistics; empty unless requested",
    ),
    ("mode", "dense, lumped or bound-only"),
];

/// Columns of the per-instance width file, in order.
pub const WIDTH_COLUMNS: [(&str, &str); 9] = [
    ("n", "table size (dimension for srw)"),
    ("q", "modulus"),
    ("t_upper", "upper mixing-time bound at epsilon"),
    ("t_lower", "lower mixing-time bound at epsilon; empty when not positive"),
    ("d_at_t_upper", "exact distance at t_upper; empty when bound-only"),
    ("t_d90", "interpolated time where exact_tv crosses 0.9"),
    ("t_d50", "interpolated time where exact_tv crosses 0.5"),
    ("t_d10", "interpolated time where exact_tv crosses 0.1"),
    ("normalized_width", "(t_d10 - t_d90) / t_d50"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkName {
    Dg1xn,
    Dgnxn,
    Srw,
}

impl WalkName {
    pub fn build(self, n: usize, q: i64) -> Result<WalkSpec> {
        match self {
            WalkName::Dg1xn => make_dg_1xn(n, q),
            WalkName::Dgnxn => make_dg_nxn(n, q),
            WalkName::Srw => make_srw(n, q),
        }
    }
}

impl std::str::FromStr for WalkName {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dg1xn" | "1xn" => Ok(WalkName::Dg1xn),
            "dgnxn" | "nxn" => Ok(WalkName::Dgnxn),
            "srw" => Ok(WalkName::Srw),
            other => Err(LabError::Validation(format!(
                "unknown walk '{other}' (dg1xn, dgnxn, srw)"
            ))),
        }
    }
}

/// Upper and lower mixing-time bounds for a built-in walk. The simple random
/// walk uses the generic bound with identity correlation.
pub fn theory_times(walk: WalkName, n: usize, q: i64, epsilon: f64) -> Result<TheoremTimes> {
    match walk {
        WalkName::Dg1xn => theorem_times(n, q, epsilon, &TimeFlavor::Dg1xn),
        WalkName::Dgnxn => theorem_times(n, q, epsilon, &TimeFlavor::Dgnxn),
        WalkName::Srw => {
            let g = |a: f64| 1.0 / a;
            let flavor = TimeFlavor::General {
                g: &g,
                psi_sup: 1.0,
                sigma_sq: 1.0,
                r: 1.0,
            };
            theorem_times(n, q, epsilon, &flavor)
        }
    }
}

/// Threshold `g(alpha)` for the correlation condition.
pub type Threshold = Box<dyn Fn(f64) -> f64 + Sync>;

/// Precision matrices of a built-in walk for sizes up to `max_n`, and the
/// function `g` the correlation condition is checked against.
pub fn condition_family(walk: WalkName, max_n: usize) -> (Vec<DMatrix<f64>>, Threshold) {
    match walk {
        WalkName::Dg1xn => {
            let c = sum_bound_constant();
            (
                (2..=max_n.max(2)).map(dg1xn_psi).collect(),
                Box::new(move |a: f64| c / a.sqrt()),
            )
        }
        WalkName::Dgnxn => {
            let c = double_sum_bound_constant();
            (
                (2..=max_n.max(2)).map(dgnxn_psi).collect(),
                Box::new(move |a: f64| c / a.powf(0.25)),
            )
        }
        WalkName::Srw => (
            (1..=max_n.max(1)).map(|m| DMatrix::identity(m, m)).collect(),
            Box::new(|a: f64| 1.0 / a),
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub n: usize,
    pub q: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GridSpec {
    Linear {
        start: f64,
        stop: f64,
        points: usize,
    },
    Log {
        start: f64,
        stop: f64,
        points: usize,
    },
    /// Multiples of the theoretical upper time.
    Theory {
        c_values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn default_epsilon() -> f64 {
    0.25
}

fn default_true() -> bool {
    true
}

/// A sweep over instances and times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub walk: WalkName,
    pub instances: Vec<Instance>,
    pub grid: GridSpec,
    /// Accuracy at which `t_theory` is evaluated.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_true")]
    pub exact_tv: bool,
    /// Simulated samples per grid point for the moment lower bound.
    #[serde(default)]
    pub mc_samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| LabError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Validation(msg));
        if self.instances.is_empty() {
            return bad("no instances".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon = {} (need 0 < epsilon < 1)", self.epsilon));
        }
        match &self.grid {
            GridSpec::Linear { start, stop, points } | GridSpec::Log { start, stop, points } => {
                if *points == 0 {
                    return bad("empty time grid".into());
                }
                let log = matches!(self.grid, GridSpec::Log { .. });
                let lo_ok = if log { *start > 0.0 } else { *start >= 0.0 };
                if !lo_ok || !stop.is_finite() || stop < start || (*points > 1 && stop == start) {
                    return bad(format!("bad time range [{start}, {stop}] with {points} points"));
                }
            }
            GridSpec::Theory { c_values } => {
                if c_values.is_empty() {
                    return bad("empty time grid".into());
                }
                if let Some(c) = c_values.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
                    return bad(format!("c-value {c} (need c > 0)"));
                }
            }
        }
        if self.mc_samples.is_some_and(|s| s < 2) {
            return bad("mc_samples must be at least 2".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if let Some(out) = &self.output {
            let parent = out
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            if !parent.is_dir() {
                return bad(format!("output directory {} does not exist", parent.display()));
            }
        }
        Ok(())
    }

    /// Absolute times for one instance, ascending.
    fn times(&self, t_theory: f64) -> Vec<f64> {
        let mut ts: Vec<f64> = match &self.grid {
            GridSpec::Linear { start, stop, points } => spaced(*start, *stop, *points, false),
            GridSpec::Log { start, stop, points } => spaced(*start, *stop, *points, true),
            GridSpec::Theory { c_values } => c_values.iter().map(|c| c * t_theory).collect(),
        };
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }
}

fn spaced(start: f64, stop: f64, points: usize, log: bool) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    let (a, b) = if log { (start.ln(), stop.ln()) } else { (start, stop) };
    (0..points)
        .map(|i| {
            let x = a + (b - a) * i as f64 / (points - 1) as f64;
            if log {
                x.exp()
            } else {
                x
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowMode {
    Dense,
    Lumped,
    BoundOnly,
}

impl RowMode {
    fn as_str(self) -> &'static str {
        match self {
            RowMode::Dense => "dense",
            RowMode::Lumped => "lumped",
            RowMode::BoundOnly => "bound-only",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub n: usize,
    pub q: i64,
    pub t: f64,
    pub c: f64,
    pub l2_tv_bound: f64,
    pub exact_tv: Option<f64>,
    pub mc_lower_bound: Option<f64>,
    pub mode: RowMode,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceSummary {
    pub n: usize,
    pub q: i64,
    pub t_upper: f64,
    pub t_lower: Option<f64>,
    pub d_at_t_upper: Option<f64>,
    pub t_d90: Option<f64>,
    pub t_d50: Option<f64>,
    pub t_d10: Option<f64>,
    pub normalized_width: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CutoffReport {
    pub schema_version: u32,
    pub walk: WalkName,
    pub epsilon: f64,
    pub rows: Vec<ReportRow>,
    pub instances: Vec<InstanceSummary>,
}

impl CutoffReport {
    /// Largest `exact_tv - l2_tv_bound` over rows with an exact value.
    pub fn worst_dominance_gap(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.exact_tv.map(|e| e - r.l2_tv_bound))
            .reduce(f64::max)
    }
}

/// Evaluates every instance on its grid. Instances whose exact distance does
/// not fit the budget are reported with bounds only.
pub fn run_sweep(config: &ExperimentConfig, budget: &Budget) -> Result<CutoffReport> {
    config.validate()?;
    match config.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| LabError::Validation(format!("thread pool: {e}")))?
            .install(|| sweep_inner(config, budget)),
        None => sweep_inner(config, budget),
    }
}

fn sweep_inner(config: &ExperimentConfig, budget: &Budget) -> Result<CutoffReport> {
    let mut instances = config.instances.clone();
    instances.sort_by_key(|i| (i.n, i.q));
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (idx, inst) in instances.iter().enumerate() {
        let walk = config.walk.build(inst.n, inst.q)?;
        let times = theory_times(config.walk, inst.n, inst.q, config.epsilon)?;
        let t_theory = times.t_upper;
        let ts = config.times(t_theory);
        let l2 = l2_bound_sq_grid(&walk, &ts, budget)?;

        let (exact, mode) = if config.exact_tv {
            let mut with_marker = ts.clone();
            with_marker.push(t_theory);
            match exact_tv_grid(&walk, &with_marker, budget) {
                Ok(mut v) => {
                    let marker = v.pop();
                    let mode = if walk.lattice_size() <= budget.dense {
                        RowMode::Dense
                    } else {
                        RowMode::Lumped
                    };
                    (Some((v, marker)), mode)
                }
                Err(LabError::TooLarge { .. }) => (None, RowMode::BoundOnly),
                Err(e) => return Err(e),
            }
        } else {
            (None, RowMode::BoundOnly)
        };

        let mc = match config.mc_samples {
            Some(samples) => Some(
                ts.iter()
                    .enumerate()
                    .map(|(k, &t)| {
                        let seed = config.seed.wrapping_add(((idx as u64) << 32) | k as u64);
                        let stats = estimate_psi_stats(&walk, &SimConfig { t, samples, seed })?;
                        tv_lower_bound_vs_uniform(&stats, walk.m)
                    })
                    .collect::<Result<Vec<f64>>>()?,
            ),
            None => None,
        };

        for (k, &t) in ts.iter().enumerate() {
            rows.push(ReportRow {
                n: inst.n,
                q: inst.q,
                t,
                c: t / t_theory,
                l2_tv_bound: l2[k].max(0.0).sqrt() / 2.0,
                exact_tv: exact.as_ref().map(|(v, _)| v[k]),
                mc_lower_bound: mc.as_ref().map(|v| v[k]),
                mode,
            });
        }

        let crossing = |level: f64| exact.as_ref().and_then(|(v, _)| first_crossing(&ts, v, level));
        let (t_d90, t_d50, t_d10) = (crossing(0.9), crossing(0.5), crossing(0.1));
        let normalized_width = match (t_d90, t_d50, t_d10) {
            (Some(a), Some(mid), Some(b)) if mid > 0.0 => Some((b - a) / mid),
            _ => None,
        };
        summaries.push(InstanceSummary {
            n: inst.n,
            q: inst.q,
            t_upper: t_theory,
            t_lower: times.t_lower,
            d_at_t_upper: exact.as_ref().and_then(|(_, m)| *m),
            t_d90,
            t_d50,
            t_d10,
            normalized_width,
        });
    }
    Ok(CutoffReport {
        schema_version: SCHEMA_VERSION,
        walk: config.walk,
        epsilon: config.epsilon,
        rows,
        instances: summaries,
    })
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn header(out: &mut String, what: &str, columns: &[(&str, &str)]) {
    let _ = writeln!(out, "# cutofflab {what} schema {SCHEMA_VERSION}");
    let names: Vec<&str> = columns.iter().map(|c| c.0).collect();
    let _ = writeln!(out, "{}", names.join(","));
}

/// Row table as CSV with a schema comment line.
pub fn rows_csv(report: &CutoffReport) -> String {
    let mut out = String::new();
    header(&mut out, "sweep-rows", &ROW_COLUMNS);
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.n,
            r.q,
            num(r.t),
            num(r.c),
            num(r.l2_tv_bound),
            opt(r.exact_tv),
            opt(r.mc_lower_bound),
            r.mode.as_str()
        );
    }
    out
}

/// Per-instance theory markers and profile widths as CSV.
pub fn widths_csv(report: &CutoffReport) -> String {
    let mut out = String::new();
    header(&mut out, "sweep-widths", &WIDTH_COLUMNS);
    for s in &report.instances {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.n,
            s.q,
            num(s.t_upper),
            opt(s.t_lower),
            opt(s.d_at_t_upper),
            opt(s.t_d90),
            opt(s.t_d50),
            opt(s.t_d10),
            opt(s.normalized_width)
        );
    }
    out
}

/// Column documentation for help texts.
pub fn column_docs() -> String {
    let mut out = String::from("Row file columns:\n");
    for (name, doc) in ROW_COLUMNS {
        let _ = writeln!(out, "  {name:<16} {doc}");
    }
    out.push_str("Width file (<output>.widths.csv) columns:\n");
    for (name, doc) in WIDTH_COLUMNS {
        let _ = writeln!(out, "  {name:<16} {doc}");
    }
    out
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes the report in the configured format and returns the paths written.
/// CSV output produces `<output>` and `<output>.widths.csv`; both formats
/// also produce the `<output>.meta.json` sidecar.
pub fn write_report(
    report: &CutoffReport,
    config: &ExperimentConfig,
    path: &Path,
    started: Instant,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    match config.format {
        OutputFormat::Csv => {
            fs::write(path, rows_csv(report))?;
            written.push(path.to_path_buf());
            let widths = with_suffix(path, ".widths.csv");
            fs::write(&widths, widths_csv(report))?;
            written.push(widths);
        }
        OutputFormat::Json => {
            fs::write(path, serde_json::to_string_pretty(report)? + "\n")?;
            written.push(path.to_path_buf());
        }
    }
    let meta = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "version": env!("CARGO_PKG_VERSION"),
        "created_unix_ms": SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
        "wall_ms": started.elapsed().as_millis() as u64,
        "threads": rayon::current_num_threads(),
        "config": config,
    });
    let meta_path = with_suffix(path, ".meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    written.push(meta_path);
    Ok(written)
}
