//! Time reversal of an equilibrium into a solution of the viscous,
//! compressible Navier–Stokes-like system
//!
//! ```text
//! ∂_t ṽ + (ṽ·∇)ṽ = -∇p[ρ̃] + ½Δṽ,     ∂_t ρ̃ + ∇·(ρ̃ṽ) + ½Δρ̃ = 0,
//! ṽ(0) = ∇h[ρ̃(0)],                    ρ̃(T) = μ,
//! ```
//!
//! where `ρ̃(t) = ρ(T - t)` and `ṽ(t) = v(T - t)`. Costs are functionals of
//! the reversed density, so the terminal cost reads the slice `ρ̃(0) = ρ(T)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::cost::CostFunctional;
use crate::error::{Error, Result};
use crate::grid::{wrap, FieldFlow};
use crate::measures::DensityFlow;
use crate::mfg::Equilibrium;
use crate::residual::{time_derivative, ResidualNorm};
use crate::stencil::{advective_derivative, divergence, gradient, laplacian, vector_laplacian};

/// Slice `k ↦ M - k`; an involution.
pub trait TimeReverse {
    fn time_reverse(&self) -> Self;
}

impl TimeReverse for FieldFlow {
    fn time_reverse(&self) -> Self {
        self.time_reversed()
    }
}

impl TimeReverse for DensityFlow {
    fn time_reverse(&self) -> Self {
        self.time_reversed()
    }
}

pub fn time_reverse<F: TimeReverse>(f: &F) -> F {
    f.time_reverse()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NseReport {
    /// `∂_t ṽ + (ṽ·∇)ṽ + ∇p[ρ̃] - ½Δṽ`.
    pub momentum: ResidualNorm,
    /// `∂_t ρ̃ + ∇·(ρ̃ṽ) + ½Δρ̃`.
    pub continuity: ResidualNorm,
    /// `ṽ(0) - ∇h[ρ̃(0)]`.
    pub initial_velocity: ResidualNorm,
    /// `ρ̃(T) - μ`.
    pub terminal_density: ResidualNorm,
}

impl NseReport {
    pub fn all(&self) -> [&ResidualNorm; 4] {
        [
            &self.momentum,
            &self.continuity,
            &self.initial_velocity,
            &self.terminal_density,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NseSolution {
    pub rho: DensityFlow,
    pub v: FieldFlow,
    pub report: NseReport,
}

/// Momentum residual of the reversed system for given `ρ̃`-costs `p̃`.
pub fn nse_momentum_residual(v: &FieldFlow, p: &FieldFlow) -> Result<FieldFlow> {
    let grid = *v.grid();
    if grid != *p.grid() {
        return Err(Error::GridMismatch);
    }
    let d = grid.dim();
    let mut res = time_derivative(v);
    for k in 0..grid.slices() {
        let vs = v.slice(k);
        let adv = advective_derivative(&grid, vs, vs);
        let lap = vector_laplacian(&grid, vs, d);
        let gp = gradient(&grid, p.slice(k));
        for (i, r) in res.slice_mut(k).iter_mut().enumerate() {
            *r += adv[i] + gp[i] - 0.5 * lap[i];
        }
    }
    Ok(res)
}

/// Continuity residual `∂_t ρ̃ + ∇·(ρ̃ṽ) + ½Δρ̃`.
pub fn nse_continuity_residual(rho: &FieldFlow, v: &FieldFlow) -> Result<FieldFlow> {
    let grid = *rho.grid();
    if grid != *v.grid() {
        return Err(Error::GridMismatch);
    }
    let d = grid.dim();
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
            *o += div[i] + 0.5 * lap[i];
        }
    }
    Ok(res)
}

/// Reverses `(ρ, v)` of an equilibrium and certifies the reversed system.
pub fn assemble_nse_solution<C: CostFunctional + ?Sized>(eq: &Equilibrium, cost: &C) -> Result<NseSolution> {
    let grid = *eq.grid();
    let rho = eq.rho.time_reverse();
    let v = eq.v.time_reverse();
    let p = cost.eval_p(&rho);
    let h = cost.eval_h(&rho.density(0));

    let momentum = ResidualNorm::from_flow("nse_momentum", &nse_momentum_residual(&v, &p)?);
    let continuity =
        ResidualNorm::from_flow("nse_continuity", &nse_continuity_residual(rho.flow(), &v)?);
    let gh = gradient(&grid, h.values());
    let dv: Vec<f64> = v.slice(0).iter().zip(&gh).map(|(a, b)| a - b).collect();
    let initial_velocity =
        ResidualNorm::from_slices("nse_initial_velocity", &grid, grid.dim(), &dv);
    let dr: Vec<f64> = rho
        .slice(grid.steps())
        .iter()
        .zip(eq.mu.values())
        .map(|(a, b)| a - b)
        .collect();
    let terminal_density = ResidualNorm::from_slices("nse_terminal_density", &grid, 1, &dr);
    Ok(NseSolution {
        rho,
        v,
        report: NseReport {
            momentum,
            continuity,
            initial_velocity,
            terminal_density,
        },
    })
}

/// Value of the periodic extension of `f` to `[0, T] × R^d` at `(t, x)`.
pub fn periodic_extension_eval(f: &FieldFlow, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    f.eval(t, &wrap(x))
}
