//! Forward Fokker–Planck equation `∂_t ρ - ∇·(ρv) = ½Δρ`, `ρ(0) = μ`:
//! the law of `dX = -v dt + dW`.
//!
//! Each time step is Strang-split: exact half heat step, conservative
//! finite-volume advection with drift `a = -v`, another half heat step.
//! Advection uses MUSCL reconstruction with the van Leer limiter and SSP-RK2
//! sub-steps. With `Δt_sub·max|a| ≤ Δx / 2d` every forward-Euler stage keeps
//! cell values nonnegative, so the scheme is positive as well as conservative.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{FieldFlow, TorusGrid};
use crate::measures::{Density, DensityFlow};
use crate::residual::{time_derivative, ResidualNorm};
use crate::spectral::HeatPropagator;
use crate::stencil::{divergence, laplacian};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpkOptions {
    /// Fraction of the positivity limit `Δx / 2d` used per advection sub-step.
    pub cfl_safety: f64,
    /// Largest number of advection sub-steps allowed per time step.
    pub max_substeps: usize,
    /// Total negative mass that may be clipped over the run.
    pub clip_budget: f64,
    /// Largest allowed `|mass(t_k) - mass(0)|`.
    pub mass_tol: f64,
}

impl Default for FpkOptions {
    fn default() -> Self {
        Self {
            cfl_safety: 0.9,
            max_substeps: 1000,
            clip_budget: 1e-12,
            mass_tol: 1e-10,
        }
    }
}

/// Bookkeeping of one forward solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FpkReport {
    /// Advection sub-steps per time step.
    pub substeps: usize,
    /// Negative mass removed by clipping, summed over the run.
    pub clipped_mass: f64,
    /// Largest `|mass(t_k) - 1|` over the slices.
    pub max_mass_error: f64,
    /// Largest `|mass(t_{k+1}) - mass(t_k)|`.
    pub max_step_drift: f64,
    /// Smallest nodal value before clipping.
    pub min_value: f64,
}

fn van_leer(a: f64, b: f64) -> f64 {
    if a * b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

struct Advection {
    grid: TorusGrid,
    plus: Vec<Vec<usize>>,
    minus: Vec<Vec<usize>>,
    flux: Vec<f64>,
    slope: Vec<f64>,
}

impl Advection {
    fn new(grid: TorusGrid) -> Self {
        let d = grid.dim();
        let nodes = grid.nodes();
        let plus = (0..d)
            .map(|ax| (0..nodes).map(|i| grid.shift(i, ax, 1)).collect())
            .collect();
        let minus = (0..d)
            .map(|ax| (0..nodes).map(|i| grid.shift(i, ax, -1)).collect())
            .collect();
        Self {
            grid,
            plus,
            minus,
            flux: vec![0.0; nodes],
            slope: vec![0.0; nodes],
        }
    }

    /// `-∇·(ρ a)` by upwinded limited face fluxes.
    fn rate(&mut self, rho: &[f64], a: &[f64], out: &mut [f64]) {
        let d = self.grid.dim();
        let inv_dx = self.grid.n() as f64;
        out.iter_mut().for_each(|o| *o = 0.0);
        for axis in 0..d {
            let plus = &self.plus[axis];
            let minus = &self.minus[axis];
            for i in 0..rho.len() {
                self.slope[i] = van_leer(rho[i] - rho[minus[i]], rho[plus[i]] - rho[i]);
            }
            for i in 0..rho.len() {
                let j = plus[i];
                let face = 0.5 * (a[i * d + axis] + a[j * d + axis]);
                let left = rho[i] + 0.5 * self.slope[i];
                let right = rho[j] - 0.5 * self.slope[j];
                self.flux[i] = face.max(0.0) * left + face.min(0.0) * right;
            }
            for i in 0..rho.len() {
                out[i] -= inv_dx * (self.flux[i] - self.flux[minus[i]]);
            }
        }
    }
}

fn interpolate_drift(v: &FieldFlow, k: usize, theta: f64, out: &mut [f64]) {
    let lo = v.slice(k);
    let hi = v.slice(k + 1);
    for (o, (a, b)) in out.iter_mut().zip(lo.iter().zip(hi)) {
        *o = -((1.0 - theta) * a + theta * b);
    }
}

/// Solves the forward equation with drift `-v` from `μ` (renormalized first).
pub fn solve_initial_value(v: &FieldFlow, mu: &Density) -> Result<(DensityFlow, FpkReport)> {
    solve_initial_value_with(v, mu, &FpkOptions::default())
}

pub fn solve_initial_value_with(
    v: &FieldFlow,
    mu: &Density,
    opts: &FpkOptions,
) -> Result<(DensityFlow, FpkReport)> {
    let grid = *v.grid();
    let d = grid.dim();
    if v.comps() != d {
        return Err(Error::Shape(format!(
            "v needs {d} components, got {}",
            v.comps()
        )));
    }
    if !grid.same_space(mu.grid()) {
        return Err(Error::GridMismatch);
    }
    if !v.is_finite() {
        return Err(Error::NonFinite("control v"));
    }
    if !(opts.cfl_safety > 0.0 && opts.cfl_safety <= 1.0) {
        return Err(Error::InvalidOptions(format!(
            "CFL safety factor {} must lie in (0, 1]",
            opts.cfl_safety
        )));
    }
    let mu = Density::normalized(mu.field().clone())?;
    let nodes = grid.nodes();
    let m = grid.steps();
    let dt = grid.dt();
    let vmax = v.values().iter().fold(0.0f64, |s, x| s.max(libm::fabs(*x)));
    let limit = opts.cfl_safety * grid.dx() / (2.0 * d as f64);
    let substeps = libm::ceil(dt * vmax / limit).max(1.0) as usize;
    if substeps > opts.max_substeps {
        return Err(Error::Cfl {
            required: substeps,
            limit: opts.max_substeps,
        });
    }
    let tau = dt / substeps as f64;
    let heat = HeatPropagator::new(grid, 0.5 * dt);
    let mut adv = Advection::new(grid);
    let vol = grid.cell_volume();

    let mut out = FieldFlow::zeros(grid, 1);
    let mut rho = mu.values().to_vec();
    out.set_slice(0, &rho);
    let mut report = FpkReport {
        substeps,
        min_value: rho.iter().cloned().fold(f64::INFINITY, f64::min),
        ..FpkReport::default()
    };
    let mass0: f64 = rho.iter().sum::<f64>() * vol;
    let mut prev_mass = mass0;
    let mut scratch = Vec::new();
    let mut a0 = vec![0.0; nodes * d];
    let mut a1 = vec![0.0; nodes * d];
    let mut stage = vec![0.0; nodes];
    let mut rate = vec![0.0; nodes];
    for k in 0..m {
        heat.apply(&mut rho, &mut scratch);
        for s in 0..substeps {
            interpolate_drift(v, k, s as f64 / substeps as f64, &mut a0);
            interpolate_drift(v, k, (s + 1) as f64 / substeps as f64, &mut a1);
            adv.rate(&rho, &a0, &mut rate);
            for i in 0..nodes {
                stage[i] = rho[i] + tau * rate[i];
            }
            adv.rate(&stage, &a1, &mut rate);
            for i in 0..nodes {
                rho[i] = 0.5 * rho[i] + 0.5 * (stage[i] + tau * rate[i]);
            }
        }
        heat.apply(&mut rho, &mut scratch);

        for r in rho.iter_mut() {
            report.min_value = report.min_value.min(*r);
            if *r < 0.0 {
                report.clipped_mass -= *r * vol;
                *r = 0.0;
            }
        }
        if report.clipped_mass > opts.clip_budget {
            return Err(Error::ClipBudget {
                clipped: report.clipped_mass,
                budget: opts.clip_budget,
            });
        }
        if rho.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("Fokker-Planck step"));
        }
        let mass: f64 = rho.iter().sum::<f64>() * vol;
        let drift = libm::fabs(mass - mass0);
        if drift > opts.mass_tol {
            return Err(Error::MassDrift { step: k + 1, drift });
        }
        report.max_step_drift = report.max_step_drift.max(libm::fabs(mass - prev_mass));
        report.max_mass_error = report.max_mass_error.max(libm::fabs(mass - 1.0));
        prev_mass = mass;
        out.set_slice(k + 1, &rho);
    }
    report.max_mass_error = report.max_mass_error.max(libm::fabs(mass0 - 1.0));
    Ok((DensityFlow::from_flow_unchecked(out), report))
}

/// `∂_t ρ - ∇·(ρv) - ½Δρ` at every slice (one-sided in time at the ends).
pub fn fpk_residual_field(rho: &FieldFlow, v: &FieldFlow) -> Result<FieldFlow> {
    let grid = *rho.grid();
    if grid != *v.grid() {
        return Err(Error::GridMismatch);
    }
    let d = grid.dim();
    if rho.comps() != 1 || v.comps() != d {
        return Err(Error::Shape(format!(
            "ρ must be scalar and v have {d} components, got {} and {}",
            rho.comps(),
            v.comps()
        )));
    }
    let mut res = time_derivative(rho);
    let mut flux = vec![0.0; grid.nodes() * d];
    for k in 0..grid.slices() {
        let r = rho.slice(k);
        let vs = v.slice(k);
        for (i, f) in flux.iter_mut().enumerate() {
            *f = r[i / d] * vs[i];
        }
        let div = divergence(&grid, &flux);
        let lap = laplacian(&grid, r);
        for (i, o) in res.slice_mut(k).iter_mut().enumerate() {
            *o += -div[i] - 0.5 * lap[i];
        }
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpkResidualReport {
    pub interior: ResidualNorm,
    /// `ρ(0) - μ`.
    pub initial: ResidualNorm,
}

pub fn fpk_residual(rho: &DensityFlow, v: &FieldFlow, mu: &Density) -> Result<FpkResidualReport> {
    let grid = *rho.grid();
    if !grid.same_space(mu.grid()) {
        return Err(Error::GridMismatch);
    }
    let interior = ResidualNorm::from_flow("fpk", &fpk_residual_field(rho.flow(), v)?);
    let diff: Vec<f64> = rho
        .slice(0)
        .iter()
        .zip(mu.values())
        .map(|(a, b)| a - b)
        .collect();
    let initial = ResidualNorm::from_slices("fpk_initial", &grid, 1, &diff);
    Ok(FpkResidualReport { interior, initial })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_stays_uniform() {
        let g = TorusGrid::new(2, 8, 1.0, 5).unwrap();
        let (rho, rep) =
            solve_initial_value(&FieldFlow::zeros(g, 2), &Density::uniform(g)).unwrap();
        assert!(rho.values().iter().all(|&r| r == 1.0));
        assert_eq!(rep.clipped_mass, 0.0);
    }

    #[test]
    fn cfl_limit_is_reported() {
        let g = TorusGrid::new(1, 64, 1.0, 2).unwrap();
        let v = FieldFlow::from_fn(g, 1, |_, _, o| o[0] = 100.0);
        let opts = FpkOptions {
            max_substeps: 10,
            ..FpkOptions::default()
        };
        let err = solve_initial_value_with(&v, &Density::uniform(g), &opts).unwrap_err();
        assert!(matches!(err, Error::Cfl { required, limit: 10 } if required > 10));
    }

    #[test]
    fn limiter_is_symmetric_and_tvd() {
        assert_eq!(van_leer(1.0, -1.0), 0.0);
        assert_eq!(van_leer(1.0, 3.0), van_leer(3.0, 1.0));
        assert!(van_leer(1.0, 3.0) <= 2.0);
    }
}
