//! The `solve`, `verify` and `export` subcommands.
//!
//! Exit codes: 0 success, 1 input error, 2 non-convergence (the bundle is
//! still written), 3 a verification check failed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use torus_mfg::cost::{norm_budget, verify_modulus};
use torus_mfg::fpk::solve_initial_value_with;
use torus_mfg::measures::{d1t, slice_pair_distances, w1_slices, DensityFlow};
use torus_mfg::mfg::{apply_phi, solve_equilibrium, Equilibrium};
use torus_mfg::nse::{assemble_nse_solution, nse_continuity_residual, nse_momentum_residual};
use torus_mfg::oracles::{
    exploitability, feynman_kac_value, random_smooth_field, simulate_particles, verify_hamiltonian_decoupling,
};
use torus_mfg::stencil::gradient;
use torus_mfg::{CostFunctional, Density, Error, FieldFlow, TorusGrid};

use crate::bundle::{field_path, sha256_hex, write_bundle, Manifest, StartReport, MANIFEST};
use crate::config::{RunConfig, Start};
use crate::format::{read_data, read_density_flow, read_field, read_flow, to_csv, to_text};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "TORUS_MFG_OUT";

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Copy, Default)]
pub struct Globals {
    pub seed: Option<u64>,
    pub quiet: bool,
}

impl Globals {
    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Reads and validates a config, applying the `--seed` override.
/// Returns the config and its canonical text.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<(RunConfig, String)> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut cfg = RunConfig::from_toml(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    if let Some(s) = seed {
        cfg.oracles.seed = s;
    }
    let canonical = cfg.to_toml();
    Ok((cfg, canonical))
}

/// Bundle directory: `out` if given, else `output.dir` or the config stem
/// under `$TORUS_MFG_OUT` (default `runs`).
pub fn bundle_dir(cfg: &RunConfig, config_path: &Path, out: Option<&Path>) -> PathBuf {
    if let Some(out) = out {
        return out.to_path_buf();
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    let name = cfg.output.dir.clone().unwrap_or_else(|| {
        PathBuf::from(config_path.file_stem().unwrap_or_else(|| "run".as_ref()))
    });
    root.join(name)
}

/// Positive flow `1 + a·f` for a smooth random field `f` with `|f|₀ = 1`.
pub fn random_density_flow(grid: TorusGrid, seed: u64, amplitude: f64) -> Result<DensityFlow> {
    let f = random_smooth_field(grid, seed, 1.0, 3);
    let d = grid.dim();
    let values = f.values().iter().step_by(d).map(|x| 1.0 + amplitude * x).collect();
    Ok(DensityFlow::normalized(FieldFlow::from_values(grid, 1, values)?)?)
}

fn start_flow(start: Start, grid: TorusGrid) -> Result<Option<DensityFlow>> {
    Ok(match start {
        Start::Heat => None,
        Start::Uniform => Some(DensityFlow::constant(grid, &Density::uniform(grid))?),
        Start::Random(seed) => Some(random_density_flow(grid, seed, 0.5)?),
    })
}

/// Solves from every configured start and writes the bundle of the first
/// converged one (or of the first start if none converged).
pub fn solve(config_path: &Path, out: Option<&Path>, g: Globals) -> Result<(i32, PathBuf)> {
    let (cfg, canonical) = load_config(config_path, g.seed)?;
    let grid = cfg.grid()?;
    let cost = cfg.cost();
    let mu = cfg.initial_density()?;
    let mut runs: Vec<(Start, Equilibrium, bool)> = Vec::new();
    for start in cfg.starts() {
        let opts = cfg.solver_options(start_flow(start, grid)?);
        let (eq, converged) = match solve_equilibrium(&cost, &mu, &opts) {
            Ok(eq) => (eq, true),
            Err(Error::NonConvergence { last, .. }) => (*last, false),
            Err(e) => return Err(anyhow!(e).context(format!("solving from start `{start}`"))),
        };
        let d = &eq.diagnostics;
        g.log(format!(
            "start {start}: {} after {} iterations, d1T(ρ, Φ(ρ)) = {:e}",
            if converged { "converged" } else { "not converged" },
            d.history.len(),
            d.residual_d1t
        ));
        runs.push((start, eq, converged));
    }
    let primary = runs.iter().position(|r| r.2).unwrap_or(0);

    // Converged runs closer than this in d1T are counted as one equilibrium.
    let same = 10.0 * cfg.solver.tol;
    let mut reps: Vec<usize> = Vec::new();
    for (i, run) in runs.iter().enumerate().filter(|(_, r)| r.2) {
        let mut new = true;
        for &j in &reps {
            if d1t(&run.1.rho, &runs[j].1.rho)? <= same {
                new = false;
                break;
            }
        }
        if new {
            reps.push(i);
        }
    }
    let mut starts = Vec::with_capacity(runs.len());
    for (start, eq, converged) in &runs {
        starts.push(StartReport {
            start: start.to_string(),
            converged: *converged,
            iterations: eq.diagnostics.history.len(),
            residual_d1t: eq.diagnostics.residual_d1t,
            distance_to_bundle: d1t(&eq.rho, &runs[primary].1.rho)?,
        });
    }
    if reps.len() > 1 {
        g.log(format!("{} distinct equilibria among the converged starts", reps.len()));
    }

    let (start, eq, converged) = runs.swap_remove(primary);
    let nse = assemble_nse_solution(&eq, &cost)?;
    let nse_p = cost.eval_p(&nse.rho);
    let nse_h = cost.eval_h(&nse.rho.density(0));
    let manifest = Manifest::build(
        &canonical,
        &eq,
        &nse,
        converged,
        start.to_string(),
        cost.kappa_bound(&grid),
        starts,
        reps.len(),
    );
    let dir = bundle_dir(&cfg, config_path, out);
    let stale = dir.join("verify.json");
    if stale.exists() {
        fs::remove_file(&stale)?;
    }
    write_bundle(&dir, &canonical, &manifest, &eq, &nse, &nse_h, &nse_p)?;
    g.log(format!("bundle written to {}", dir.display()));
    Ok((if converged { EXIT_OK } else { EXIT_NOT_CONVERGED }, dir))
}

/// Every check of `verify`, in report order.
pub const CHECKS: [&str; 24] = [
    "fixed_point",
    "cost_consistency",
    "hjb_residual",
    "hjb_terminal",
    "hopf_cole",
    "w_positive",
    "momentum_residual",
    "momentum_terminal",
    "fpk_residual",
    "fpk_initial",
    "mass_conservation",
    "positivity",
    "norm_budget",
    "modulus",
    "holder_bound",
    "nse_momentum",
    "nse_continuity",
    "nse_initial_velocity",
    "nse_terminal_density",
    "time_reverse_involution",
    "feynman_kac",
    "particles",
    "hamiltonian",
    "exploitability",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// `null` when the check could not be evaluated.
    pub value: Option<f64>,
    pub bound: Bound,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub bundle: String,
    pub config_sha256: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, bound: Bound, tolerance: f64, result: Result<(f64, String)>) -> Check {
    match result {
        Ok((value, detail)) => {
            let passed = value.is_finite()
                && match bound {
                    Bound::AtMost => value <= tolerance,
                    Bound::Above => value > tolerance,
                };
            Check {
                name: name.into(),
                passed,
                value: value.is_finite().then_some(value),
                bound,
                tolerance,
                detail,
            }
        }
        Err(e) => Check {
            name: name.into(),
            passed: false,
            value: None,
            bound,
            tolerance,
            detail: format!("{e:#}"),
        },
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Everything `verify` reads from a bundle.
pub struct LoadedBundle {
    pub manifest: Manifest,
    pub rho: DensityFlow,
    pub mu: Density,
    pub u: FieldFlow,
    pub w: FieldFlow,
    pub v: FieldFlow,
    pub p: FieldFlow,
    pub h: torus_mfg::Field,
    pub nse_rho: DensityFlow,
    pub nse_v: FieldFlow,
    pub nse_p: FieldFlow,
    pub nse_h: torus_mfg::Field,
}

pub fn load_bundle(bundle: &Path, grid: &TorusGrid) -> Result<LoadedBundle> {
    let manifest = Manifest::read(bundle)?;
    let mg = &manifest.grid;
    if (mg.d, mg.n, mg.m, mg.horizon) != (grid.dim(), grid.n(), grid.steps(), grid.horizon()) {
        bail!(
            "bundle grid (d = {}, N = {}, M = {}, T = {}) differs from the config grid",
            mg.d,
            mg.n,
            mg.m,
            mg.horizon
        );
    }
    let path = |name: &str| field_path(bundle, name).expect("known field");
    let mu = Density::new(read_field(&path("mu"), grid)?).context("stored μ is not a density")?;
    Ok(LoadedBundle {
        rho: read_density_flow(&path("rho"), grid)?,
        mu,
        u: read_flow(&path("u"), grid)?,
        w: read_flow(&path("w"), grid)?,
        v: read_flow(&path("v"), grid)?,
        p: read_flow(&path("p"), grid)?,
        h: read_field(&path("h"), grid)?,
        nse_rho: read_density_flow(&path("nse_rho"), grid)?,
        nse_v: read_flow(&path("nse_v"), grid)?,
        nse_p: read_flow(&path("nse_p"), grid)?,
        nse_h: read_field(&path("nse_h"), grid)?,
        manifest,
    })
}

/// Runs every check of [`CHECKS`] on a loaded bundle.
pub fn run_checks(cfg: &RunConfig, b: &LoadedBundle, g: Globals) -> Result<Vec<Check>> {
    let grid = cfg.grid()?;
    let cost = cfg.cost();
    let mu = cfg.initial_density()?;
    let tol = &cfg.verify;
    let oracle = &cfg.oracles;
    let seed = oracle.seed;
    let d = grid.dim();
    let mut checks = Vec::with_capacity(CHECKS.len());
    let mut push = |c: Check| {
        g.log(format!(
            "  {}  {:<24} {}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        ));
        checks.push(c);
    };
    use Bound::{Above, AtMost};

    let phi = apply_phi(&cost, &b.rho, &mu);
    let fixed = phi.and_then(|next| d1t(&b.rho, &next));
    let residual_d1t = fixed.as_ref().copied().unwrap_or(f64::NAN);
    push(check(
        "fixed_point",
        AtMost,
        cfg.solver.tol,
        fixed.map(|x| (x, format!("d1T(ρ, Φ(ρ)) = {x:e}"))).map_err(Into::into),
    ));

    push(check("cost_consistency", AtMost, tol.boundary_tol, {
        let p = cost.eval_p(&b.rho);
        let h = cost.eval_h(&b.rho.terminal());
        let np = cost.eval_p(&b.nse_rho);
        let nh = cost.eval_h(&b.nse_rho.density(0));
        let worst = [
            max_abs_diff(p.values(), b.p.values()),
            max_abs_diff(h.values(), b.h.values()),
            max_abs_diff(np.values(), b.nse_p.values()),
            max_abs_diff(nh.values(), b.nse_h.values()),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        Ok((worst, format!("stored p, h, p̃, h̃ differ from the costs of ρ by {worst:e}")))
    }));

    let eq = Equilibrium::from_parts(
        b.rho.clone(),
        mu.clone(),
        b.u.clone(),
        b.w.clone(),
        b.v.clone(),
        b.p.clone(),
        b.h.clone(),
        residual_d1t,
    )?;
    let diag = &eq.diagnostics;
    let resid = |name: &str, r: &torus_mfg::ResidualNorm, t: f64| {
        check(
            name,
            AtMost,
            t,
            Ok((r.max_norm, format!("max {:e}, l2 {:e}", r.max_norm, r.l2_norm))),
        )
    };
    push(resid("hjb_residual", &diag.hjb.interior, tol.residual_tol));
    push(resid("hjb_terminal", &diag.hjb.terminal, tol.boundary_tol));

    push(check("hopf_cole", AtMost, tol.boundary_tol, {
        torus_mfg::hjb::value_and_control(&b.w)
            .map(|(u, v)| {
                let du = max_abs_diff(u.values(), b.u.values());
                let dv = max_abs_diff(v.values(), b.v.values());
                (du.max(dv), format!("|u + ln w| = {du:e}, |v - ∇u| = {dv:e}"))
            })
            .map_err(Into::into)
    }));
    let min_w = b.w.values().iter().copied().fold(f64::INFINITY, f64::min);
    push(check("w_positive", Above, 0.0, Ok((min_w, format!("min w = {min_w:e}")))));
    push(resid("momentum_residual", &diag.momentum.interior, tol.residual_tol));
    push(resid("momentum_terminal", &diag.momentum.terminal, tol.boundary_tol));
    push(resid("fpk_residual", &diag.fpk.interior, tol.residual_tol));

    push(check("fpk_initial", AtMost, tol.boundary_tol, {
        let stored = max_abs_diff(b.mu.values(), mu.values());
        let r = diag.fpk.initial.max_norm;
        Ok((r.max(stored), format!("|ρ(0) - μ| = {r:e}, stored μ differs by {stored:e}")))
    }));

    let fpk_opts = cfg.solver_options(None).fpk;
    let rerun = solve_initial_value_with(&b.v, &mu, &fpk_opts).map_err(|e| e.to_string());
    push(check("mass_conservation", AtMost, tol.mass_tol, {
        let stored = b.rho.masses().iter().fold(0.0f64, |m, x| m.max((x - 1.0).abs()));
        rerun
            .as_ref()
            .map(|(_, rep)| {
                let worst = stored.max(rep.max_mass_error);
                (worst, format!("stored ρ {stored:e}, forward solve from v {:e}", rep.max_mass_error))
            })
            .map_err(|e| anyhow!("forward solve from v failed: {e}"))
    }));
    push(check("positivity", AtMost, cfg.solver.clip_budget, {
        let vol = grid.cell_volume();
        let negative = b.rho.values().iter().filter(|&&x| x < 0.0).fold(0.0, |acc, x| acc - x * vol);
        rerun
            .as_ref()
            .map(|(_, rep)| {
                (
                    rep.clipped_mass + negative,
                    format!("clipped mass {:e}, negative stored mass {negative:e}", rep.clipped_mass),
                )
            })
            .map_err(|e| anyhow!("forward solve from v failed: {e}"))
    }));

    let kappa = cost.kappa_bound(&grid);
    let mut audit_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2000));
    let mut audit: Vec<(DensityFlow, DensityFlow)> = Vec::with_capacity(oracle.audit_pairs);
    for j in 0..oracle.audit_pairs as u64 {
        let a1 = audit_rng.random_range(0.1..0.9);
        let a2 = audit_rng.random_range(0.1..0.9);
        let s = seed.wrapping_add(2000).wrapping_add(2 * j);
        audit.push((random_density_flow(grid, s, a1)?, random_density_flow(grid, s + 1, a2)?));
    }
    push(check("norm_budget", AtMost, kappa * (1.0 + 1e-12) + 1e-12, {
        let own = norm_budget(&b.p, &b.h, kappa);
        let mut worst = own.p_norm + own.h_norm;
        for rho in audit.iter().flat_map(|(x, y)| [x, y]) {
            let nb = norm_budget(&cost.eval_p(rho), &cost.eval_h(&rho.terminal()), kappa);
            worst = worst.max(nb.p_norm + nb.h_norm);
        }
        Ok((
            worst,
            format!("largest |p|_(0,2) + |h|_4 = {worst:e} over the run and {} random flows, κ = {kappa:e}", 2 * audit.len()),
        ))
    }));
    push(check("modulus", AtMost, 0.0, {
        let mut failures = 0usize;
        let mut ratio = 0.0f64;
        let mut err = None;
        for (x, y) in &audit {
            match verify_modulus(&cost, x, y) {
                Ok(m) => {
                    failures += usize::from(!m.holds);
                    if m.rhs > 0.0 {
                        ratio = ratio.max(m.lhs / m.rhs);
                    }
                }
                Err(e) => err = Some(e),
            }
        }
        match err {
            Some(e) => Err(e.into()),
            None => Ok((
                failures as f64,
                format!("{failures} of {} random pairs violate the modulus; largest lhs/rhs = {ratio:.3}", audit.len()),
            )),
        }
    }));
    push(check("holder_bound", AtMost, 1.0, {
        let coef = 1.0 + grid.horizon().sqrt() * b.v.sup_norm();
        slice_pair_distances(&b.rho)
            .map(|pairs| {
                let worst = pairs.iter().fold(0.0f64, |m, &(k, l, dist)| {
                    let bound = coef * (grid.time(l) - grid.time(k)).abs().sqrt() + 2.0 * grid.dx();
                    m.max(dist / bound)
                });
                (worst, format!("largest d₁(ρ(t), ρ(s)) over its bound on {} slice pairs: {worst:.4}", pairs.len()))
            })
            .map_err(Into::into)
    }));

    let nse_p = cost.eval_p(&b.nse_rho);
    push(check("nse_momentum", AtMost, tol.residual_tol, {
        nse_momentum_residual(&b.nse_v, &nse_p)
            .map(|r| {
                let n = torus_mfg::ResidualNorm::from_flow("nse_momentum", &r);
                (n.max_norm, format!("max {:e}, l2 {:e}", n.max_norm, n.l2_norm))
            })
            .map_err(Into::into)
    }));
    push(check("nse_continuity", AtMost, tol.residual_tol, {
        nse_continuity_residual(b.nse_rho.flow(), &b.nse_v)
            .map(|r| {
                let n = torus_mfg::ResidualNorm::from_flow("nse_continuity", &r);
                (n.max_norm, format!("max {:e}, l2 {:e}", n.max_norm, n.l2_norm))
            })
            .map_err(Into::into)
    }));
    push(check("nse_initial_velocity", AtMost, tol.boundary_tol, {
        let h0 = cost.eval_h(&b.nse_rho.density(0));
        let gh = gradient(&grid, h0.values());
        let r = max_abs_diff(b.nse_v.slice(0), &gh);
        Ok((r, format!("|ṽ(0) - ∇h[ρ̃(0)]| = {r:e}")))
    }));
    push(check("nse_terminal_density", AtMost, tol.boundary_tol, {
        let r = max_abs_diff(b.nse_rho.slice(grid.steps()), mu.values());
        Ok((r, format!("|ρ̃(T) - μ| = {r:e}")))
    }));
    push(check("time_reverse_involution", AtMost, 0.0, {
        let ok = b.nse_rho == b.rho.time_reversed()
            && b.nse_v == b.v.time_reversed()
            && b.rho.time_reversed().time_reversed() == b.rho
            && b.v.time_reversed().time_reversed() == b.v;
        Ok((
            if ok { 0.0 } else { 1.0 },
            if ok { "bit-exact".into() } else { "stored reversed fields differ from the reversal".into() },
        ))
    }));

    push(check("feynman_kac", AtMost, 1.0, {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
        let mut worst = 0.0f64;
        let mut parts = Vec::new();
        let mut err = None;
        for i in 0..oracle.feynman_kac_points {
            let t = rng.random_range(0.0..grid.horizon());
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let opts = oracle.feynman_kac.options(seed.wrapping_add(i as u64));
            match (feynman_kac_value(&b.p, &b.h, t, &x, &opts), b.w.eval(t, &x)) {
                (Ok(mc), Ok(pde)) => {
                    let diff = (mc.estimate - pde[0]).abs();
                    worst = worst.max(diff / (3.0 * mc.std_error + tol.feynman_kac_bias));
                    parts.push(format!("t = {t:.3}: |MC - PDE| = {diff:.2e}, SE {:.2e}", mc.std_error));
                }
                (Err(e), _) | (_, Err(e)) => err = Some(e),
            }
        }
        match err {
            Some(e) => Err(e.into()),
            None => Ok((worst, format!("largest ratio to 3·SE + bias {worst:.3}; {}", parts.join("; ")))),
        }
    }));

    push(check("particles", AtMost, tol.particle_w1_tol, {
        let opts = oracle.particles.options(seed.wrapping_add(1));
        simulate_particles(&b.v, &mu, &opts)
            .and_then(|run| {
                let mut worst = 0.0f64;
                for k in 0..grid.slices() {
                    worst = worst.max(w1_slices(&grid, run.density.slice(k), b.rho.slice(k))?.value);
                }
                Ok((worst, format!("largest slice W1 between particles and ρ: {worst:e}")))
            })
            .map_err(Into::into)
    }));

    push(check("hamiltonian", AtMost, 1.0, {
        let opts = oracle.hamiltonian.options(seed.wrapping_add(2));
        verify_hamiltonian_decoupling(&eq, &cost, &opts)
            .map(|rep| {
                let slack = tol.hamiltonian_c * rep.interval * rep.interval;
                let ratio = |r: f64, se: f64| if r == 0.0 { 0.0 } else { r / (3.0 * se + slack) };
                let mut worst = ratio(rep.terminal_gap, rep.terminal_gap_se);
                for m in &rep.martingale {
                    worst = worst.max(ratio(m.residual, m.std_error));
                }
                (
                    worst,
                    format!(
                        "terminal gap {:e}; largest ratio to 3·SE + C·Δ² over {} intervals {worst:.3}",
                        rep.terminal_gap,
                        rep.martingale.len()
                    ),
                )
            })
            .map_err(Into::into)
    }));

    push(check("exploitability", AtMost, 0.0, {
        let perturbations: Vec<FieldFlow> = (0..oracle.perturbations as u64)
            .map(|i| random_smooth_field(grid, seed.wrapping_add(3000 + i), oracle.perturbation_amplitude, 2))
            .collect();
        let opts = oracle.exploitability.options(seed.wrapping_add(3));
        exploitability(&eq, &cost, &perturbations, &opts)
            .map(|rep| {
                let flagged = rep.entries.iter().filter(|e| e.flagged).count();
                let min_gap = rep.entries.iter().map(|e| e.gap).fold(f64::INFINITY, f64::min);
                (
                    flagged as f64,
                    format!("{flagged} of {} perturbations lower the cost by more than 3·SE; smallest gap {min_gap:e}", rep.entries.len()),
                )
            })
            .map_err(Into::into)
    }));

    debug_assert!(checks.iter().map(|c| c.name.as_str()).eq(CHECKS));
    Ok(checks)
}

/// Verifies a bundle against a config; writes `verify.json` into the bundle.
pub fn verify(bundle: &Path, config_path: &Path, g: Globals) -> Result<(i32, VerifyReport)> {
    let (cfg, canonical) = load_config(config_path, g.seed)?;
    if !bundle.join(MANIFEST).is_file() {
        bail!("{} is not a bundle: {MANIFEST} is missing", bundle.display());
    }
    let grid = cfg.grid()?;
    let loaded = load_bundle(bundle, &grid)?;
    g.log(format!("verifying {}", bundle.display()));
    let checks = run_checks(&cfg, &loaded, g)?;
    let passed = checks.iter().all(|c| c.passed);
    let report = VerifyReport {
        bundle: bundle.display().to_string(),
        config_sha256: sha256_hex(canonical.as_bytes()),
        passed,
        checks,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    fs::write(bundle.join("verify.json"), &json)?;
    if !g.quiet {
        print!("{json}");
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    g.log(format!("{} of {} checks passed", report.checks.len() - failed, report.checks.len()));
    Ok((if passed { EXIT_OK } else { EXIT_CHECK_FAILED }, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Flow,
    Csv,
}

impl ExportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "flow" => Ok(Self::Flow),
            "csv" => Ok(Self::Csv),
            other => bail!("unknown format `{other}`; expected `flow` or `csv`"),
        }
    }

    fn extension(self) -> &'static str {
        match self {
            Self::Flow => "flow",
            Self::Csv => "csv",
        }
    }
}

/// Writes one bundle field as a flow file or CSV table. The default target
/// is `<bundle>/export/<field>.<format>`.
pub fn export(bundle: &Path, field: &str, format: &str, output: Option<&Path>, g: Globals) -> Result<PathBuf> {
    let path = field_path(bundle, field).ok_or_else(|| {
        let known: Vec<&str> = crate::bundle::FIELDS.iter().map(|(n, _)| *n).collect();
        anyhow!("unknown field `{field}`; expected one of {}", known.join(", "))
    })?;
    let format = ExportFormat::parse(format)?;
    let data = read_data(&path)?;
    let is_density = matches!(field, "rho" | "nse_rho");
    let text = match format {
        ExportFormat::Flow => to_text(&data, is_density),
        ExportFormat::Csv => to_csv(&data),
    };
    let target = match output {
        Some(p) => p.to_path_buf(),
        None => bundle.join("export").join(format!("{field}.{}", format.extension())),
    };
    if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&target, text).with_context(|| format!("writing {}", target.display()))?;
    g.log(format!("{field} written to {}", target.display()));
    Ok(target)
}
