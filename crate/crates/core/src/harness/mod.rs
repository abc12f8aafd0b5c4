//! Named, reproducible experiments with CSV artifacts and verdict files.
//!
//! Each experiment writes `<output>/<name>/*.csv` and `verdict.json`. CSVs
//! hold only numerics (no timestamps), so reruns with the same config are
//! byte-identical regardless of the thread count; wall time lives in the
//! verdict file only.

mod config;
mod experiments;
mod stats;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

pub use config::{
    DiagonalConfig, ExperimentConfig, FamilyConfig, FamilyKind, GridConfig, SolverConfig,
    SpectrumConfig, ToleranceConfig,
};
pub use experiments::{configured_diagonal, configured_family};
pub use stats::{
    fit_line, holder_slope, holder_slope_two_parameter, jackknife_mean, mc_moment, over_paths,
    sample_paths, skorokhod_growth, skorokhod_growth_model, Estimate, GrowthCurve, MomentReport,
};

use crate::error::{FlowError, Result};
use crate::flow::fmt_f64;

/// The runnable experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    CrossSolver,
    InverseFlowConvergence,
    MomentBound,
    DiagonalMoments,
    Skorokhod,
    ThreeSeries,
    SchattenGamma,
    Picard,
    Orthogonality,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::CrossSolver,
        Experiment::InverseFlowConvergence,
        Experiment::MomentBound,
        Experiment::DiagonalMoments,
        Experiment::Skorokhod,
        Experiment::ThreeSeries,
        Experiment::SchattenGamma,
        Experiment::Picard,
        Experiment::Orthogonality,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::CrossSolver => "cross_solver",
            Experiment::InverseFlowConvergence => "inverse_flow_convergence",
            Experiment::MomentBound => "moment_bound",
            Experiment::DiagonalMoments => "diagonal_moments",
            Experiment::Skorokhod => "skorokhod",
            Experiment::ThreeSeries => "three_series",
            Experiment::SchattenGamma => "schatten_gamma",
            Experiment::Picard => "picard",
            Experiment::Orthogonality => "orthogonality",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| FlowError::Schema {
                field: "experiment".into(),
                expected: format!(
                    "one of {}",
                    Self::ALL.map(|e| e.name()).join(", ")
                ),
                actual: name.into(),
            })
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One checked claim.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// The measured quantity.
    pub value: f64,
    /// Human-readable pass condition, including the threshold.
    pub condition: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, value: f64, condition: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            value,
            condition: condition.into(),
        }
    }
}

/// Contents of `verdict.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub experiment: Experiment,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Every threshold the checks used.
    pub thresholds: BTreeMap<String, f64>,
    pub seed: u64,
    pub n_paths: Option<usize>,
    /// Informational values that are not pass/fail.
    pub notes: BTreeMap<String, f64>,
    pub files: Vec<PathBuf>,
    pub wall_time_s: f64,
    pub config: ExperimentConfig,
}

impl Verdict {
    /// `PASS`/`FAIL` lines, one per check.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {}::{} value={} ({})\n",
                if c.passed { "PASS" } else { "FAIL" },
                self.experiment,
                c.name,
                c.value,
                c.condition
            ));
        }
        s
    }
}

/// What an experiment produced before bookkeeping.
#[derive(Debug, Default)]
pub(crate) struct Findings {
    pub checks: Vec<Check>,
    pub thresholds: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, f64>,
    pub files: Vec<PathBuf>,
    pub n_paths: Option<usize>,
}

impl Findings {
    pub fn check(&mut self, name: &str, passed: bool, value: f64, condition: impl Into<String>) {
        self.checks.push(Check::new(name, passed, value, condition));
    }

    pub fn threshold(&mut self, name: &str, value: f64) -> f64 {
        self.thresholds.insert(name.into(), value);
        value
    }

    pub fn note(&mut self, name: &str, value: f64) {
        self.notes.insert(name.into(), value);
    }

    /// Writes a CSV table into `dir` and records it.
    pub fn table(&mut self, dir: &Path, file: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let path = dir.join(file);
        write_table(&path, header, rows)?;
        self.files.push(path);
        Ok(())
    }
}

/// RFC-4180 CSV with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)
        .map_err(|e| FlowError::Io(format!("{}: {e}", path.display())))?;
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Shorthand for a CSV row of numbers at full precision.
pub(crate) fn row(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| fmt_f64(*v)).collect()
}

/// Runs the configured experiment and writes its artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Verdict> {
    cfg.validate()?;
    let experiment = Experiment::from_name(&cfg.experiment)?;
    let dir = cfg.output.join(experiment.name());
    std::fs::create_dir_all(&dir).map_err(|e| FlowError::Io(format!("{}: {e}", dir.display())))?;
    let start = Instant::now();
    let findings = experiments::run(experiment, cfg, &dir)
        .map_err(|e| e.context(format!("experiment {experiment}")))?;
    let mut verdict = Verdict {
        experiment,
        passed: !findings.checks.is_empty() && findings.checks.iter().all(|c| c.passed),
        checks: findings.checks,
        thresholds: findings.thresholds,
        seed: cfg.seed,
        n_paths: findings.n_paths,
        notes: findings.notes,
        files: findings.files,
        wall_time_s: 0.0,
        config: cfg.clone(),
    };
    verdict.wall_time_s = start.elapsed().as_secs_f64();
    let path = dir.join("verdict.json");
    let json = serde_json::to_string_pretty(&verdict).map_err(|e| FlowError::Io(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| FlowError::Io(format!("{}: {e}", path.display())))?;
    Ok(verdict)
}

/// Process exit status: 0 all checks pass, 1 some check failed, 2 schema
/// error, 3 any other error.
pub fn exit_code(result: &Result<Verdict>) -> i32 {
    match result {
        Ok(v) if v.passed => 0,
        Ok(_) => 1,
        Err(e) if e.is_schema() => 2,
        Err(_) => 3,
    }
}

/// Thread count: explicit value, else `STOCHFLOW_THREADS`, else all cores.
/// Numerics never depend on it.
pub fn resolve_threads(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var("STOCHFLOW_THREADS").ok()?.parse().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| FlowError::Io(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// All experiments with `base` as the shared settings (seed, output, paths).
pub fn suite_configs(base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    Experiment::ALL
        .iter()
        .map(|e| ExperimentConfig {
            experiment: e.name().into(),
            seed: base.seed,
            n_paths: base.n_paths,
            output: base.output.clone(),
            tolerances: base.tolerances.clone(),
            ..ExperimentConfig::default()
        })
        .collect()
}

/// CSV files under `dir`, relative paths, sorted.
pub fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let entries = std::fs::read_dir(dir).map_err(|e| FlowError::Io(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| FlowError::Io(e.to_string()))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else if path.extension().is_some_and(|x| x == "csv") {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

/// Compares the CSV artifacts of two output trees byte by byte; returns the
/// files that differ or exist on one side only.
pub fn compare_outputs(a: &Path, b: &Path) -> Result<Vec<PathBuf>> {
    let fa = csv_files(a)?;
    let fb = csv_files(b)?;
    let mut differ: Vec<PathBuf> = fa.iter().filter(|f| !fb.contains(f)).cloned().collect();
    differ.extend(fb.iter().filter(|f| !fa.contains(f)).cloned());
    for f in fa.iter().filter(|f| fb.contains(f)) {
        let x = std::fs::read(a.join(f)).map_err(|e| FlowError::Io(e.to_string()))?;
        let y = std::fs::read(b.join(f)).map_err(|e| FlowError::Io(e.to_string()))?;
        if x != y {
            differ.push(f.clone());
        }
    }
    differ.sort();
    Ok(differ)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_name(e.name()).unwrap(), e);
        }
        let err = Experiment::from_name("warp_drive").unwrap_err();
        assert!(err.is_schema());
        assert_eq!(exit_code(&Err(err)), 2);
    }

    #[test]
    fn unknown_experiment_exits_with_two() {
        let cfg = ExperimentConfig {
            experiment: "warp_drive".into(),
            ..ExperimentConfig::default()
        };
        assert_eq!(exit_code(&run_experiment(&cfg)), 2);
    }

    #[test]
    fn thread_resolution() {
        assert_eq!(resolve_threads(Some(3)), 3);
        assert!(resolve_threads(None) >= 1);
        assert_eq!(with_threads(2, rayon::current_num_threads).unwrap(), 2);
    }
}
