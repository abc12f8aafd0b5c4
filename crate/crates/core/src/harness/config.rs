//! Experiment configuration (TOML).
//!
//! Every field is optional. Unset experiment-specific fields take the
//! defaults of the named experiment (see [`super::Experiment`]); the rest
//! default as documented on each field.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::diagonal::Rule;
use crate::error::{FlowError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment name; default `cross_solver`.
    pub experiment: String,
    /// Base seed; default 2024. Path `i` uses `child_seed(seed, i)`.
    pub seed: u64,
    /// Monte Carlo sample size; default per experiment.
    pub n_paths: Option<usize>,
    /// Output directory; default `stochflow-out`. Artifacts go to
    /// `<output>/<experiment>/`.
    pub output: PathBuf,
    pub grid: GridConfig,
    pub family: FamilyConfig,
    pub diagonal: DiagonalConfig,
    pub spectrum: SpectrumConfig,
    pub solver: SolverConfig,
    pub tolerances: ToleranceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "cross_solver".into(),
            seed: 2024,
            n_paths: None,
            output: PathBuf::from("stochflow-out"),
            grid: GridConfig::default(),
            family: FamilyConfig::default(),
            diagonal: DiagonalConfig::default(),
            spectrum: SpectrumConfig::default(),
            solver: SolverConfig::default(),
            tolerances: ToleranceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Start time; default 0.
    pub s: f64,
    /// End time; default per experiment.
    pub t_end: Option<f64>,
    /// Step counts, strictly increasing; default per experiment.
    pub n_ladder: Option<Vec<usize>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            s: 0.0,
            t_end: None,
            n_ladder: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Unstructured random operators.
    Random,
    /// Polynomials in one random symmetric matrix.
    Commuting,
    /// Cross products with parallel fields per node (skew-symmetric, commuting).
    Skew,
    /// `drift` and `noise` given as row lists.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilyConfig {
    /// Default per experiment.
    pub kind: Option<FamilyKind>,
    /// Dimension (nodes for `skew`); default per experiment.
    pub dim: Option<usize>,
    /// Number of noise operators; default per experiment.
    pub noise_count: Option<usize>,
    /// `‖B_0‖`; default per experiment.
    pub drift_norm: Option<f64>,
    /// `Σ_k ‖B_k‖`; default per experiment.
    pub noise_norm: Option<f64>,
    /// Seed of the random operators; default 7.
    pub seed: u64,
    pub drift: Option<Vec<Vec<f64>>>,
    pub noise: Option<Vec<Vec<Vec<f64>>>>,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            kind: None,
            dim: None,
            noise_count: None,
            drift_norm: None,
            noise_norm: None,
            seed: 7,
            drift: None,
            noise: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagonalConfig {
    /// Default per experiment.
    pub alpha: Option<Rule>,
    /// Default per experiment.
    pub sigma: Option<Rule>,
    /// Largest index `K`; default per experiment.
    pub cutoff: Option<usize>,
    /// `t − s`; default per experiment.
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Laplacian truncation; default: smallest with tail < 1e-12 at `t_min`.
    pub n_max: Option<usize>,
    /// Default `[2, 2.5, 3, 4, 6]`.
    pub p_values: Vec<f64>,
    /// Default 1e-5.
    pub t_min: f64,
    /// Default 1e-3.
    pub t_max: f64,
    /// Default 12.
    pub t_points: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            n_max: None,
            p_values: vec![2.0, 2.5, 3.0, 4.0, 6.0],
            t_min: 1e-5,
            t_max: 1e-3,
            t_points: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Default 8.
    pub chaos_order: usize,
    /// Default 100.
    pub picard_iterations: usize,
    /// Residual ratios before this iteration are ignored; default 3.
    pub burn_in: usize,
    /// Schatten exponent for Picard; default 3.
    pub p: f64,
    /// `L` of the `2L`-th moment; default 2.
    pub moment_l: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            chaos_order: 8,
            picard_iterations: 100,
            burn_in: 3,
            p: 3.0,
            moment_l: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Half-width around slope ½; default 0.1.
    pub slope: f64,
    /// Margin below `L − 1` for moment slopes; default 0.15.
    pub holder_margin: f64,
    /// Pairwise terminal-frame agreement; default 1e-2.
    pub agreement: f64,
    /// `‖QᵀQ − I‖`; default 1e-9.
    pub orthogonality: f64,
    /// Factor envelope on extreme-value growth; default 3.
    pub growth_envelope: f64,
    /// Minimal final/initial growth of the Skorokhod maximum; default 5.
    pub growth_factor: f64,
    /// Last-decade relative change of the sampled trace; default 1e-4.
    pub plateau: f64,
    /// `|γ − 1/p|`; default 0.05.
    pub gamma: f64,
    /// Picard residual ratio after burn-in; default 0.9.
    pub contraction: f64,
    /// Monte Carlo agreement in standard errors; default 3.
    pub standard_errors: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            slope: 0.1,
            holder_margin: 0.15,
            agreement: 1e-2,
            orthogonality: 1e-9,
            growth_envelope: 3.0,
            growth_factor: 5.0,
            plateau: 1e-4,
            gamma: 0.05,
            contraction: 0.9,
            standard_errors: 3.0,
        }
    }
}

fn schema(field: &str, expected: &str, actual: impl ToString) -> FlowError {
    FlowError::Schema {
        field: field.into(),
        expected: expected.into(),
        actual: actual.to_string(),
    }
}

/// Best-effort field name from a serde message such as "unknown field `x`".
fn field_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            schema(&field_of(&message), "a document matching the experiment schema", message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FlowError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FlowError::Io(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        super::Experiment::from_name(&self.experiment)?;
        if self.n_paths == Some(0) {
            return Err(schema("n_paths", "an integer >= 1", 0));
        }
        if !self.grid.s.is_finite() {
            return Err(schema("grid.s", "a finite number", self.grid.s));
        }
        if let Some(t) = self.grid.t_end {
            if !(t > self.grid.s) || !t.is_finite() {
                return Err(schema("grid.t_end", "a finite number > grid.s", t));
            }
        }
        if let Some(ladder) = &self.grid.n_ladder {
            if ladder.is_empty() || ladder[0] == 0 || ladder.windows(2).any(|w| w[1] <= w[0]) {
                return Err(schema("grid.n_ladder", "a nonempty, strictly increasing list of positive step counts", format!("{ladder:?}")));
            }
        }
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x >= 0.0) || !x.is_finite() => Err(schema(name, "a finite number >= 0", x)),
            _ => Ok(()),
        };
        positive("family.drift_norm", self.family.drift_norm)?;
        positive("family.noise_norm", self.family.noise_norm)?;
        if self.family.dim == Some(0) {
            return Err(schema("family.dim", "an integer >= 1", 0));
        }
        if self.family.kind == Some(FamilyKind::Explicit) && self.family.drift.is_none() {
            return Err(schema("family.drift", "a row list for an explicit family", "nothing"));
        }
        if let Some(h) = self.diagonal.horizon {
            if !(h > 0.0) || !h.is_finite() {
                return Err(schema("diagonal.horizon", "a finite number > 0", h));
            }
        }
        if self.diagonal.cutoff == Some(0) {
            return Err(schema("diagonal.cutoff", "an integer >= 1", 0));
        }
        for (name, rule) in [("diagonal.alpha", &self.diagonal.alpha), ("diagonal.sigma", &self.diagonal.sigma)] {
            if let Some(r) = rule {
                r.validate().map_err(|e| schema(name, "a valid rule", e))?;
            }
        }
        let sp = &self.spectrum;
        if sp.p_values.is_empty() || sp.p_values.iter().any(|p| !(*p >= 1.0) || !p.is_finite()) {
            return Err(schema("spectrum.p_values", "a nonempty list of exponents >= 1", format!("{:?}", sp.p_values)));
        }
        if !(sp.t_min > 0.0 && sp.t_min < sp.t_max && sp.t_max <= 1.0) {
            return Err(schema("spectrum.t_min", "0 < t_min < t_max <= 1", format!("{} .. {}", sp.t_min, sp.t_max)));
        }
        if sp.t_points < 8 {
            return Err(schema("spectrum.t_points", "an integer >= 8", sp.t_points));
        }
        if sp.n_max == Some(0) {
            return Err(schema("spectrum.n_max", "an integer >= 1", 0));
        }
        let so = &self.solver;
        if so.chaos_order == 0 || so.picard_iterations == 0 || so.moment_l == 0 {
            return Err(schema("solver", "chaos_order, picard_iterations and moment_l >= 1", format!("{so:?}")));
        }
        if !(so.p >= 1.0) || !so.p.is_finite() {
            return Err(schema("solver.p", "a finite number >= 1", so.p));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig {
            experiment: "skorokhod".into(),
            ..ExperimentConfig::default()
        };
        cfg.diagonal.sigma = Some(Rule::log_power(1.0, 1.0));
        cfg.grid.n_ladder = Some(vec![4, 8]);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let cases = [
            ("experiment = \"nope\"", "experiment"),
            ("colour = 3", "colour"),
            ("[grid]\nn_ladder = [8, 4]", "grid.n_ladder"),
            ("n_paths = 0", "n_paths"),
            ("[spectrum]\nt_points = 3", "spectrum.t_points"),
            ("[diagonal]\nsigma = { kind = \"interleave\", odd = { kind = \"interleave\", odd = { kind = \"constant\", value = 1.0 }, even = { kind = \"constant\", value = 1.0 } }, even = { kind = \"constant\", value = 1.0 } }", "diagonal.sigma"),
        ];
        for (text, field) in cases {
            match ExperimentConfig::from_toml_str(text) {
                Err(FlowError::Schema { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
