//! Run configuration files.
//!
//! A run is described by one TOML document with the sections `model`,
//! `solver`, `sim`, `grid` and `output`; only `model` is required.
//!
//! ```toml
//! [model]
//! kind = "stationary_ar"
//! transition = [[0.6, 0.4], [0.3, 0.7]]
//! lambda = [1.0, 1.5]
//! service = [{ kind = "exponential", rate = 2.0 }, { kind = "exponential", rate = 3.0 }]
//! a = [0.5, 0.3]
//!
//! [solver]
//! tol = 1e-10
//! max_order = 40
//!
//! [sim]
//! replications = 100000
//! steps = 500
//! seed = 1
//!
//! [grid]
//! auto = { count = 12 }        # or: points = [0.5, 1.0, 2.0]
//!
//! [output]
//! path = "report.csv"
//! format = "csv"
//! ```
//!
//! An optional `[reference]` section holds a second model whose analytic
//! transform `compare` checks against the main one.

use std::path::{Path, PathBuf};

use modlindley::engine::SolverOptions;
use modlindley::models::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Upper bound on the truncation order accepted from a config or flag.
pub const MAX_ORDER_LIMIT: usize = 60;
pub const DEFAULT_GRID_COUNT: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub reference: Option<ModelConfig>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_order: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol: d.tol,
            max_order: d.max_order,
        }
    }
}

impl SolverSection {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_order: self.max_order,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub replications: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            replications: 100_000,
            steps: 500,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub points: Option<Vec<f64>>,
    #[serde(default)]
    pub auto: Option<AutoGrid>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            points: None,
            auto: Some(AutoGrid::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoGrid {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub span: Option<(f64, f64)>,
}

fn default_count() -> usize {
    DEFAULT_GRID_COUNT
}

impl Default for AutoGrid {
    fn default() -> Self {
        Self {
            count: DEFAULT_GRID_COUNT,
            span: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub max_order: Option<usize>,
    pub replications: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parse and validate. TOML errors carry their line and column.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(tol) = o.tol {
            self.solver.tol = tol;
        }
        if let Some(k) = o.max_order {
            self.solver.max_order = k;
        }
        if let Some(n) = o.replications {
            self.sim.replications = n;
        }
        if let Some(n) = o.steps {
            self.sim.steps = n;
        }
        if let Some(seed) = o.seed {
            self.sim.seed = seed;
        }
        if let Some(path) = &o.out {
            self.output.path = Some(path.clone());
        }
        if let Some(format) = o.format {
            self.output.format = format;
        }
        self.validate()
    }

    /// Schema checks that need no computation. Model parameters are checked
    /// when the model is built.
    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, reason: &str| Err(CliError::Config(format!("`{name}`: {reason}")));
        if !(self.solver.tol > 0.0 && self.solver.tol.is_finite()) {
            return field("solver.tol", "must be positive and finite");
        }
        if self.solver.max_order == 0 || self.solver.max_order > MAX_ORDER_LIMIT {
            return field("solver.max_order", &format!("must be in 1..={MAX_ORDER_LIMIT}"));
        }
        if self.sim.replications == 0 {
            return field("sim.replications", "must be at least 1");
        }
        if self.sim.steps < 4 {
            return field("sim.steps", "must be at least 4");
        }
        match (&self.grid.points, &self.grid.auto) {
            (Some(_), Some(_)) => return field("grid", "give either `points` or `auto`, not both"),
            (None, None) => return field("grid", "needs `points` or `auto`"),
            (Some(points), None) => {
                if points.is_empty() {
                    return field("grid.points", "must not be empty");
                }
                let pgf = self.model.kind().is_pgf();
                if let Some(x) = points
                    .iter()
                    .find(|&&x| !x.is_finite() || x < 0.0 || (pgf && x > 1.0))
                {
                    let domain = if pgf { "[0, 1]" } else { "[0, ∞)" };
                    return field("grid.points", &format!("{x} is outside {domain}"));
                }
            }
            (None, Some(auto)) => {
                if auto.count < 2 {
                    return field("grid.auto.count", "must be at least 2");
                }
            }
        }
        Ok(())
    }

    /// Evaluation grid for the main model.
    pub fn grid_points(&self) -> Result<Vec<f64>, CliError> {
        match (&self.grid.points, &self.grid.auto) {
            (Some(points), _) => Ok(points.clone()),
            (None, Some(auto)) => self
                .model
                .grid_over(auto.count, auto.span)
                .map_err(CliError::from_model),
            (None, None) => Err(CliError::Config("`grid`: needs `points` or `auto`".into())),
        }
    }
}
