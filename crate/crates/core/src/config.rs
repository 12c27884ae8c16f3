//! Strict JSON run configuration. Fields marked `"auto"` are resolved before a
//! run and the fully explicit configuration is written back next to the
//! outputs, so rerunning it reproduces the run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{minimal_speed, recommend_domain, theoretical_rho, AnalysisError, DEFAULT_RHO_MARGIN};
use crate::certificates::SuiteOptions;
use crate::discretization::{DiscretizationError, Grid1D, InitialShape};
use crate::integrator::{stable_dt, Scheme, StepperConfig};
use crate::kernels::{KernelError, KernelFamily, KernelSpec};
use crate::reaction::{ReactionError, ReactionFamily, ReactionSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Reaction(#[from] ReactionError),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoTag {
    #[serde(rename = "auto")]
    Auto,
}

/// Either an explicit value or the string `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr<T> {
    Auto(AutoTag),
    Value(T),
}

impl<T: Copy> AutoOr<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            AutoOr::Auto(_) => None,
            AutoOr::Value(v) => Some(*v),
        }
    }
}

fn auto<T>() -> AutoOr<T> {
    AutoOr::Auto(AutoTag::Auto)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default = "auto")]
    pub half_width: AutoOr<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Every {
    pub every: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnapshotTimes {
    List(Vec<f64>),
    Every(Every),
}

impl SnapshotTimes {
    /// Explicit times in `[0, t_max]`.
    pub fn expand(&self, t_max: f64) -> Result<Vec<f64>, ConfigError> {
        match self {
            SnapshotTimes::List(v) => Ok(v.clone()),
            SnapshotTimes::Every(Every { every }) => {
                if !(*every > 0.0) {
                    return Err(ConfigError::Invalid(format!("snapshot spacing must be positive, got {every}")));
                }
                let count = (t_max / every + 1e-9).floor() as usize;
                Ok((0..=count).map(|i| i as f64 * every).collect())
            }
        }
    }
}

fn default_snapshots() -> SnapshotTimes {
    SnapshotTimes::Every(Every { every: 1.0 })
}

fn default_safety() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub t_max: f64,
    #[serde(default = "auto")]
    pub dt: AutoOr<f64>,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_snapshots")]
    pub snapshot_times: SnapshotTimes,
}

fn default_levels() -> Vec<f64> {
    vec![0.2]
}

fn default_rho() -> Option<AutoOr<f64>> {
    Some(auto())
}

fn default_margin() -> f64 {
    DEFAULT_RHO_MARGIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    /// Defaults to `0.2 f'(0)`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// `null` when no upper envelope is available.
    #[serde(default = "default_rho")]
    pub rho: Option<AutoOr<f64>>,
    #[serde(default = "default_margin")]
    pub rho_margin: f64,
    /// Truncation mass for the minimal-speed computation.
    #[serde(default)]
    pub truncation: Option<f64>,
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        AnalysisBlock {
            levels: default_levels(),
            epsilon: None,
            rho: default_rho(),
            rho_margin: default_margin(),
            truncation: None,
        }
    }
}

fn default_egress_threshold() -> f64 {
    1e-4
}
fn default_egress_fraction() -> f64 {
    0.1
}
fn default_range_tol() -> f64 {
    1e-8
}
fn default_deficit_max() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardBlock {
    #[serde(default = "default_egress_threshold")]
    pub egress_threshold: f64,
    #[serde(default = "default_egress_fraction")]
    pub egress_buffer_fraction: f64,
    #[serde(default = "default_range_tol")]
    pub range_tol: f64,
    #[serde(default = "default_deficit_max")]
    pub deficit_max: f64,
}

impl Default for GuardBlock {
    fn default() -> Self {
        GuardBlock {
            egress_threshold: default_egress_threshold(),
            egress_buffer_fraction: default_egress_fraction(),
            range_tol: default_range_tol(),
            deficit_max: default_deficit_max(),
        }
    }
}

fn default_directory() -> String {
    "out".into()
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_true")]
    pub plot: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { directory: default_directory(), plot: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelFamily,
    pub reaction: ReactionFamily,
    pub initial_condition: InitialShape,
    pub grid: GridBlock,
    pub time: TimeBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default)]
    pub guards: GuardBlock,
    #[serde(default)]
    pub certificates: SuiteOptions,
    #[serde(default)]
    pub output: OutputBlock,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Replaces every `"auto"` with a value and validates the result.
    pub fn resolve(&self) -> Result<ResolvedRun, ConfigError> {
        let kernel = KernelSpec::new(self.kernel)?;
        let reaction = ReactionSpec::new(self.reaction)?;
        self.initial_condition.validate()?;
        let t = &self.time;
        if !(t.t_max >= 0.0 && t.t_max.is_finite()) {
            return Err(ConfigError::Invalid(format!("time.t_max must be finite and nonnegative, got {}", t.t_max)));
        }
        let fp = reaction.fprime0();
        let epsilon = self.analysis.epsilon.unwrap_or(0.2 * fp);
        for l in &self.analysis.levels {
            if !(*l > 0.0 && *l < 1.0) {
                return Err(ConfigError::Invalid(format!("analysis level {l} is outside (0, 1)")));
            }
        }
        let rho = match self.analysis.rho {
            None => None,
            Some(AutoOr::Value(r)) => Some(r),
            Some(AutoOr::Auto(_)) => match theoretical_rho(&kernel, &reaction, self.analysis.rho_margin) {
                Ok(est) => Some(est.rho),
                Err(AnalysisError::HypothesisNotSatisfied(_)) => None,
                Err(e) => return Err(e.into()),
            },
        };
        let support = self.initial_condition.support_radius();
        let half_width = match self.grid.half_width {
            AutoOr::Value(l) => l,
            AutoOr::Auto(_) => match rho {
                Some(r) => recommend_domain(&kernel, r, t.t_max, support)?,
                None => {
                    // exponentially bounded kernels travel at the minimal speed
                    let c = minimal_speed(&kernel, &reaction)?.c_star;
                    (1.25 * (c * t.t_max + support)).max(4.0 * support)
                }
            },
        };
        let grid = match (self.grid.n, self.grid.dx) {
            (Some(n), None) => Grid1D::new(half_width, n)?,
            (None, Some(dx)) => Grid1D::with_spacing(half_width, dx)?,
            _ => return Err(ConfigError::Invalid("grid needs exactly one of n and dx".into())),
        };
        let dt = match t.dt {
            AutoOr::Value(dt) => dt,
            AutoOr::Auto(_) => stable_dt(&reaction, t.safety),
        };
        let snapshot_times = t.snapshot_times.expand(t.t_max)?;
        let stepper = StepperConfig {
            scheme: t.scheme,
            dt,
            safety: t.safety,
            t_max: t.t_max,
            snapshot_times: snapshot_times.clone(),
            range_tol: self.guards.range_tol,
            egress_buffer_fraction: self.guards.egress_buffer_fraction,
            egress_threshold: self.guards.egress_threshold,
            deficit_max: self.guards.deficit_max,
        };
        let mut explicit = self.clone();
        explicit.grid = GridBlock { half_width: AutoOr::Value(grid.half_width()), n: Some(grid.n()), dx: None };
        explicit.time.dt = AutoOr::Value(dt);
        explicit.time.snapshot_times = SnapshotTimes::List(snapshot_times);
        explicit.analysis.epsilon = Some(epsilon);
        explicit.analysis.rho = rho.map(AutoOr::Value);
        Ok(ResolvedRun { config: explicit, kernel, reaction, grid, stepper, epsilon, rho })
    }
}

/// A configuration with every field explicit, plus the objects built from it.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub kernel: KernelSpec,
    pub reaction: ReactionSpec,
    pub grid: Grid1D,
    pub stepper: StepperConfig,
    pub epsilon: f64,
    pub rho: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const STRETCHED_RUN: &str = r#"{
        "kernel": {"family": "stretched_exp", "alpha": 0.5, "beta": 1.0, "c": 0.25},
        "reaction": {"family": "logistic"},
        "initial_condition": {"shape": "bump", "radius": 10.0},
        "grid": {"half_width": 2500.0, "dx": 0.5},
        "time": {"t_max": 30.0, "snapshot_times": {"every": 1.0}},
        "analysis": {"levels": [0.2], "rho": 1.5}
    }"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = RunConfig::from_json(STRETCHED_RUN).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.grid.n(), 10002);
        assert_eq!(r.stepper.dt, 0.25);
        assert_eq!(r.stepper.snapshot_times.len(), 31);
        assert_eq!(r.rho, Some(1.5));
        assert!((r.epsilon - 0.2).abs() < 1e-15);
    }

    #[test]
    fn resolved_config_is_a_fixed_point() {
        let r = RunConfig::from_json(STRETCHED_RUN).unwrap().resolve().unwrap();
        let again = RunConfig::from_json(&r.config.to_json()).unwrap().resolve().unwrap();
        assert_eq!(again.config.to_json(), r.config.to_json());
        assert_eq!(again.grid, r.grid);
        assert_eq!(again.stepper, r.stepper);
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let bad = STRETCHED_RUN.replace("\"t_max\"", "\"tmax\"");
        match RunConfig::from_json(&bad) {
            Err(ConfigError::Parse { line, .. }) => assert!(line >= 1),
            other => panic!("{other:?}"),
        }
        let bad = STRETCHED_RUN.replace("\"radius\": 10.0", "\"radius\": 10.0, \"width\": 1");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn grid_needs_one_resolution_field() {
        let bad = STRETCHED_RUN.replace("\"dx\": 0.5", "\"dx\": 0.5, \"n\": 100");
        assert!(matches!(RunConfig::from_json(&bad).unwrap().resolve(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn auto_fields() {
        let cfg = STRETCHED_RUN.replace("2500.0", "\"auto\"").replace("\"rho\": 1.5", "\"rho\": \"auto\"");
        let r = RunConfig::from_json(&cfg).unwrap().resolve().unwrap();
        assert!(r.rho.unwrap() > 1.0);
        assert!(r.grid.half_width() > 1000.0);
        let lap = cfg.replace(
            r#"{"family": "stretched_exp", "alpha": 0.5, "beta": 1.0, "c": 0.25}"#,
            r#"{"family": "laplace", "rate": 1.0, "c": 0.5}"#,
        );
        let r = RunConfig::from_json(&lap).unwrap().resolve().unwrap();
        assert_eq!(r.rho, None);
        assert!(r.grid.half_width() > 1.25 * 2.598 * 30.0);
        assert_eq!(r.config.analysis.rho, None);
    }
}
