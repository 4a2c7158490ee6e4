//! On-disk layout of a solved run.
//!
//! ```text
//! <bundle>/manifest.json        run summary
//! <bundle>/config.toml          canonical config of the run
//! <bundle>/equilibrium/*.flow   ρ, μ, u, w, v, p, h in forward time
//! <bundle>/nse/*.flow           ρ̃, ṽ, p̃, h̃ in reversed time, plus manifest.json
//! <bundle>/plot.gp              gnuplot template for the exported CSV
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use torus_mfg::mfg::{Equilibrium, IterationRecord};
use torus_mfg::nse::NseSolution;
use torus_mfg::residual::ResidualNorm;
use torus_mfg::{Field, FieldFlow, TorusGrid};

use crate::format::{write_density_flow, write_field, write_flow};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_TAG: &str = "torus-mfg bundle 1";

/// Fields that `export` knows, with their file under the bundle.
pub const FIELDS: [(&str, &str); 11] = [
    ("rho", "equilibrium/rho.flow"),
    ("mu", "equilibrium/mu.flow"),
    ("u", "equilibrium/u.flow"),
    ("w", "equilibrium/w.flow"),
    ("v", "equilibrium/v.flow"),
    ("p", "equilibrium/p.flow"),
    ("h", "equilibrium/h.flow"),
    ("nse_rho", "nse/rho.flow"),
    ("nse_v", "nse/v.flow"),
    ("nse_p", "nse/p.flow"),
    ("nse_h", "nse/h.flow"),
];

pub fn field_path(bundle: &Path, name: &str) -> Option<PathBuf> {
    FIELDS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, rel)| bundle.join(rel))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl GridInfo {
    pub fn of(grid: &TorusGrid) -> Self {
        Self {
            d: grid.dim(),
            n: grid.n(),
            m: grid.steps(),
            horizon: grid.horizon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: usize,
    pub l1_bound: f64,
    pub d1t: Option<f64>,
    pub theta: f64,
    pub ratio: Option<f64>,
    pub cost_norm: f64,
}

impl From<&IterationRecord> for IterationRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            iteration: r.iteration,
            l1_bound: r.l1_bound,
            d1t: r.d1t,
            theta: r.theta,
            ratio: r.ratio,
            cost_norm: r.cost_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub name: String,
    pub max_norm: f64,
    pub l2_norm: f64,
    pub slice_profile: Vec<f64>,
}

impl From<&ResidualNorm> for ResidualRecord {
    fn from(r: &ResidualNorm) -> Self {
        Self {
            name: r.name.clone(),
            max_norm: r.max_norm,
            l2_norm: r.l2_norm,
            slice_profile: r.slice_profile.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormBudgetRow {
    pub iteration: usize,
    pub cost_norm: f64,
    pub kappa: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub start: String,
    pub converged: bool,
    pub iterations: usize,
    pub residual_d1t: f64,
    /// `d1T` to the equilibrium stored in the bundle.
    pub distance_to_bundle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub v_sup: f64,
    pub v_lip: f64,
    pub p_norm: f64,
    pub h_norm: f64,
    pub p_half_holder: f64,
    pub rho_holder: f64,
    pub worst_mass_error: f64,
    pub worst_clipped_mass: f64,
    pub min_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config_sha256: String,
    pub grid: GridInfo,
    pub converged: bool,
    pub start: String,
    pub residual_d1t: f64,
    pub iterations: Vec<IterationRow>,
    pub residuals: Vec<ResidualRecord>,
    pub norm_budget: Vec<NormBudgetRow>,
    pub summary: Summary,
    pub starts: Vec<StartReport>,
    /// Number of distinct equilibria among converged starts.
    pub distinct_equilibria: usize,
}

impl Manifest {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        config_text: &str,
        eq: &Equilibrium,
        nse: &NseSolution,
        converged: bool,
        start: String,
        kappa: f64,
        starts: Vec<StartReport>,
        distinct_equilibria: usize,
    ) -> Self {
        let diag = &eq.diagnostics;
        let mut residuals: Vec<ResidualRecord> = [
            &diag.hjb.interior,
            &diag.hjb.terminal,
            &diag.momentum.interior,
            &diag.momentum.terminal,
            &diag.fpk.interior,
            &diag.fpk.initial,
        ]
        .into_iter()
        .map(ResidualRecord::from)
        .collect();
        residuals.extend(nse.report.all().into_iter().map(ResidualRecord::from));
        Self {
            format: FORMAT_TAG.into(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            grid: GridInfo::of(eq.grid()),
            converged,
            start,
            residual_d1t: diag.residual_d1t,
            iterations: diag.history.iter().map(IterationRow::from).collect(),
            residuals,
            norm_budget: diag
                .history
                .iter()
                .map(|r| NormBudgetRow {
                    iteration: r.iteration,
                    cost_norm: r.cost_norm,
                    kappa,
                    holds: r.cost_norm <= kappa * (1.0 + 1e-12) + 1e-12,
                })
                .collect(),
            summary: Summary {
                v_sup: diag.v_sup,
                v_lip: diag.v_lip,
                p_norm: diag.p_norm,
                h_norm: diag.h_norm,
                p_half_holder: diag.p_half_holder,
                rho_holder: diag.rho_holder,
                worst_mass_error: diag.worst_mass_error,
                worst_clipped_mass: diag.worst_clipped_mass,
                min_w: diag.min_w,
            },
            starts,
            distinct_equilibria,
        }
    }

    pub fn read(bundle: &Path) -> Result<Self> {
        let path = bundle.join(MANIFEST);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NseFileNote {
    pub file: String,
    pub time: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NseManifest {
    pub format: String,
    pub files: Vec<NseFileNote>,
    pub residuals: Vec<ResidualRecord>,
}

fn plot_script(grid: &TorusGrid) -> String {
    format!(
        "# Space-time map of the equilibrium density (d = 1).\n\
         # Create the data first:  torus-mfg export <bundle> rho csv\n\
         # Columns: t_index, node, component, value.\n\
         N = {n}\n\
         dt = {dt:?}\n\
         set datafile separator ','\n\
         set xlabel 'x'\n\
         set ylabel 't'\n\
         set view map\n\
         set key off\n\
         plot 'export/rho.csv' every ::1 using (($2 + 0.5) / N):($1 * dt):4 with image\n",
        n = grid.n(),
        dt = grid.dt(),
    )
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes every file of the bundle into `dir`, creating it if needed.
pub fn write_bundle(
    dir: &Path,
    config_text: &str,
    manifest: &Manifest,
    eq: &Equilibrium,
    nse: &NseSolution,
    nse_h: &Field,
    nse_p: &FieldFlow,
) -> Result<()> {
    let eq_dir = dir.join("equilibrium");
    let nse_dir = dir.join("nse");
    fs::create_dir_all(&eq_dir).with_context(|| format!("creating {}", eq_dir.display()))?;
    fs::create_dir_all(&nse_dir).with_context(|| format!("creating {}", nse_dir.display()))?;
    fs::write(dir.join("config.toml"), config_text)?;

    write_density_flow(&eq_dir.join("rho.flow"), &eq.rho)?;
    write_field(&eq_dir.join("mu.flow"), eq.mu.field())?;
    write_flow(&eq_dir.join("u.flow"), &eq.u)?;
    write_flow(&eq_dir.join("w.flow"), &eq.w)?;
    write_flow(&eq_dir.join("v.flow"), &eq.v)?;
    write_flow(&eq_dir.join("p.flow"), &eq.p)?;
    write_field(&eq_dir.join("h.flow"), &eq.h)?;

    write_density_flow(&nse_dir.join("rho.flow"), &nse.rho)?;
    write_flow(&nse_dir.join("v.flow"), &nse.v)?;
    write_flow(&nse_dir.join("p.flow"), nse_p)?;
    write_field(&nse_dir.join("h.flow"), nse_h)?;
    let reversed = "reversed: slice k is time t_k of the reversed system, time T - t_k of the equilibrium";
    let nse_manifest = NseManifest {
        format: FORMAT_TAG.into(),
        files: vec![
            NseFileNote { file: "rho.flow".into(), time: reversed.into() },
            NseFileNote { file: "v.flow".into(), time: reversed.into() },
            NseFileNote { file: "p.flow".into(), time: reversed.into() },
            NseFileNote {
                file: "h.flow".into(),
                time: "single field: terminal cost of the reversed density at reversed time 0".into(),
            },
        ],
        residuals: nse.report.all().into_iter().map(ResidualRecord::from).collect(),
    };
    write_json(&nse_dir.join(MANIFEST), &nse_manifest)?;
    fs::write(dir.join("plot.gp"), plot_script(eq.grid()))?;
    write_json(&dir.join(MANIFEST), manifest)
}
