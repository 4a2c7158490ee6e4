//! Run configuration: a TOML file with the sections `grid`, `cost`,
//! `initial`, `solver`, `oracles`, `verify` and `output`. Kernel and density
//! terms are strings in the grammar of [`crate::terms`].

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use torus_mfg::fpk::FpkOptions;
use torus_mfg::mfg::SolverOptions;
use torus_mfg::{Density, KernelCost, McOptions, TorusGrid, TrigSeries, TrigTerm};

use crate::terms::{format_term, parse_term};

/// A config problem, with the offending field when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

/// A list of terms, written as an array of strings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Terms(pub Vec<TrigTerm>);

impl Serialize for Terms {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let text: Vec<String> = self.0.iter().map(format_term).collect();
        text.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Terms {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = Vec::<String>::deserialize(d)?;
        text.iter()
            .map(|t| parse_term(t).map_err(|e| serde::de::Error::custom(format!("term `{t}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()
            .map(Terms)
    }
}

impl Terms {
    fn series(&self) -> TrigSeries {
        TrigSeries::new(self.0.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub p_bar: Terms,
    pub p_hat: Terms,
    pub h_bar: Terms,
    pub h_hat: Terms,
}

/// Initial density before normalisation on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    /// `Σ terms(x)`; must be nonnegative on the nodes.
    Trig { terms: Terms },
    /// `Π_a exp(κ cos(2π(x_a - c_a)))`.
    VonMises { concentration: f64, center: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub stall_window: usize,
    pub max_halvings: usize,
    pub cfl_safety: f64,
    pub clip_budget: f64,
    pub max_substeps: usize,
    /// Starting flows: `heat`, `uniform` or `random:<seed>`.
    pub starts: Vec<String>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            theta: s.theta,
            tol: s.tol,
            max_iter: s.max_iter,
            stall_window: s.stall_window,
            max_halvings: s.max_halvings,
            cfl_safety: s.fpk.cfl_safety,
            clip_budget: s.fpk.clip_budget,
            max_substeps: s.fpk.max_substeps,
            starts: vec!["heat".into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub n_samples: usize,
    pub n_steps: usize,
    #[serde(default)]
    pub antithetic: bool,
}

impl McSection {
    pub fn options(&self, seed: u64) -> McOptions {
        McOptions {
            n_samples: self.n_samples,
            n_steps: self.n_steps,
            seed,
            antithetic: self.antithetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub seed: u64,
    pub feynman_kac: McSection,
    /// Number of sampled `(t, x)` points for the Feynman–Kac check.
    pub feynman_kac_points: usize,
    pub particles: McSection,
    pub hamiltonian: McSection,
    pub exploitability: McSection,
    pub perturbations: usize,
    pub perturbation_amplitude: f64,
    /// Random flow pairs for the cost-hypothesis audits.
    pub audit_pairs: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            seed: 0,
            feynman_kac: McSection {
                n_samples: 100_000,
                n_steps: 400,
                antithetic: false,
            },
            feynman_kac_points: 5,
            particles: McSection {
                n_samples: 100_000,
                n_steps: 400,
                antithetic: false,
            },
            hamiltonian: McSection {
                n_samples: 10_000,
                n_steps: 400,
                antithetic: false,
            },
            exploitability: McSection {
                n_samples: 20_000,
                n_steps: 200,
                antithetic: false,
            },
            perturbations: 10,
            perturbation_amplitude: 0.1,
            audit_pairs: 50,
        }
    }
}

/// Tolerances of `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Max-norm bound for the interior PDE residuals.
    pub residual_tol: f64,
    /// Max-norm bound for initial, terminal and consistency conditions.
    pub boundary_tol: f64,
    pub mass_tol: f64,
    pub particle_w1_tol: f64,
    pub feynman_kac_bias: f64,
    /// `C` in the martingale bound `3·SE + C·Δ²`.
    pub hamiltonian_c: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            residual_tol: 5e-2,
            boundary_tol: 1e-10,
            mass_tol: 1e-12,
            particle_w1_tol: 0.02,
            feynman_kac_bias: 2e-3,
            hamiltonian_c: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Bundle directory; relative paths resolve against the output root.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    #[serde(default)]
    pub cost: CostSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub oracles: OracleSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A starting flow of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Start {
    Heat,
    Uniform,
    Random(u64),
}

impl Start {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "heat" => Some(Start::Heat),
            "uniform" => Some(Start::Uniform),
            _ => s.strip_prefix("random:")?.parse().ok().map(Start::Random),
        }
    }
}

impl fmt::Display for Start {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Start::Heat => write!(f, "heat"),
            Start::Uniform => write!(f, "uniform"),
            Start::Random(s) => write!(f, "random:{s}"),
        }
    }
}

fn check_terms(field: &str, terms: &Terms, dim: usize, two_point: bool) -> Result<(), ConfigError> {
    for t in &terms.0 {
        if !t.amp.is_finite() || !t.phase.is_finite() {
            return Err(ConfigError::new(field, "amplitudes and phases must be finite"));
        }
        if t.k[dim..].iter().chain(&t.l[dim..]).any(|&f| f != 0) {
            return Err(ConfigError::new(
                field,
                format!("term `{}` uses an axis beyond d = {dim}", format_term(t)),
            ));
        }
        if !two_point && t.l != [0; 3] {
            return Err(ConfigError::new(
                field,
                format!("term `{}` depends on y, but this function has only x", format_term(t)),
            ));
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::new("", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical text; parsing it reproduces `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        self.grid().map_err(|e| ConfigError::new("grid", e.to_string()))?;
        let d = g.d;
        check_terms("cost.p_bar", &self.cost.p_bar, d, true)?;
        check_terms("cost.p_hat", &self.cost.p_hat, d, false)?;
        check_terms("cost.h_bar", &self.cost.h_bar, d, true)?;
        check_terms("cost.h_hat", &self.cost.h_hat, d, false)?;
        match &self.initial {
            InitialSection::Trig { terms } => {
                check_terms("initial.terms", terms, d, false)?;
                if terms.0.is_empty() {
                    return Err(ConfigError::new("initial.terms", "at least one term is required"));
                }
            }
            InitialSection::VonMises {
                concentration,
                center,
            } => {
                if !(concentration.is_finite() && *concentration >= 0.0) {
                    return Err(ConfigError::new(
                        "initial.concentration",
                        "must be finite and nonnegative",
                    ));
                }
                if center.len() != d {
                    return Err(ConfigError::new(
                        "initial.center",
                        format!("needs {d} coordinates, got {}", center.len()),
                    ));
                }
            }
        }
        self.initial_density()?;
        self.solver_options(None)
            .validate()
            .map_err(|e| ConfigError::new("solver", e.to_string()))?;
        let s = &self.solver;
        if !(s.cfl_safety > 0.0 && s.cfl_safety <= 1.0) {
            return Err(ConfigError::new("solver.cfl_safety", "must lie in (0, 1]"));
        }
        if s.starts.is_empty() {
            return Err(ConfigError::new("solver.starts", "at least one start is required"));
        }
        for start in &s.starts {
            if Start::parse(start).is_none() {
                return Err(ConfigError::new(
                    "solver.starts",
                    format!("unknown start `{start}`; use heat, uniform or random:<seed>"),
                ));
            }
        }
        let o = &self.oracles;
        for (name, mc) in [
            ("oracles.feynman_kac", &o.feynman_kac),
            ("oracles.particles", &o.particles),
            ("oracles.hamiltonian", &o.hamiltonian),
            ("oracles.exploitability", &o.exploitability),
        ] {
            mc.options(o.seed)
                .validate()
                .map_err(|e| ConfigError::new(name, e.to_string()))?;
        }
        Ok(())
    }

    pub fn grid(&self) -> torus_mfg::Result<TorusGrid> {
        TorusGrid::new(self.grid.d, self.grid.n, self.grid.horizon, self.grid.m)
    }

    pub fn cost(&self) -> KernelCost {
        KernelCost::new(
            self.cost.p_bar.series(),
            self.cost.p_hat.series(),
            self.cost.h_bar.series(),
            self.cost.h_hat.series(),
        )
    }

    pub fn initial_density(&self) -> Result<Density, ConfigError> {
        let grid = self.grid().map_err(|e| ConfigError::new("grid", e.to_string()))?;
        let d = grid.dim();
        let result = match &self.initial {
            InitialSection::Trig { terms } => {
                let series = terms.series();
                Density::from_fn(grid, |x| series.eval_x(x))
            }
            InitialSection::VonMises {
                concentration,
                center,
            } => Density::from_fn(grid, |x| {
                (0..d)
                    .map(|a| (concentration * (2.0 * PI * (x[a] - center[a])).cos()).exp())
                    .product()
            }),
        };
        result.map_err(|e| ConfigError::new("initial", e.to_string()))
    }

    /// Solver options; `seed_flow` is filled in per start by the caller.
    pub fn solver_options(&self, seed_flow: Option<torus_mfg::measures::DensityFlow>) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            theta: s.theta,
            tol: s.tol,
            max_iter: s.max_iter,
            seed_flow,
            stall_window: s.stall_window,
            max_halvings: s.max_halvings,
            fpk: FpkOptions {
                cfl_safety: s.cfl_safety,
                max_substeps: s.max_substeps,
                clip_budget: s.clip_budget,
                ..FpkOptions::default()
            },
        }
    }

    pub fn starts(&self) -> Vec<Start> {
        self.solver.starts.iter().filter_map(|s| Start::parse(s)).collect()
    }
}
