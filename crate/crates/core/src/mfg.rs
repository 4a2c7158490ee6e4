//! The best-response map `Φ = Φ₃ ∘ Φ₂ ∘ Φ₁` and the damped Picard iteration
//! for its fixed points.
//!
//! * `Φ₁`: density flow → costs `(p[ρ], h[ρ(T)])`.
//! * `Φ₂`: costs → optimal feedback `v = ∇u` from the HJB equation.
//! * `Φ₃`: feedback → law of `dX = -v dt + dW`, `X₀ ~ μ`.
//!
//! Convergence is monitored each sweep with the cheap bound
//! `d₁ ≤ (√d/4)·‖ρ - Φ(ρ)‖_{L1}` and certified with the exact `d1T`.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::cost::{flow_space_norm, half_holder_space_norm, CostFunctional};
use crate::error::{Error, Result};
use crate::fpk::{self, FpkOptions, FpkReport, FpkResidualReport};
use crate::grid::{pointwise_sup, Field, FieldFlow, TorusGrid};
use crate::hjb::{self, HjbReport, HjbSolution, MomentumReport};
use crate::measures::{d1t, holder_half_seminorm, l1_distance, w1_bound_from_l1, Density, DensityFlow};
use crate::stencil::{gradient, holder_norm};

pub use crate::oracles::{exploitability, ExploitabilityReport, GapEntry};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Damping `θ ∈ (0, 1]`; `θ = 1` is plain Picard.
    pub theta: f64,
    /// Target for the certified `d1T(ρ, Φ(ρ))`.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting flow; defaults to the heat flow from `μ`.
    pub seed_flow: Option<DensityFlow>,
    /// Consecutive non-decreasing residuals that trigger halving `θ`.
    pub stall_window: usize,
    pub max_halvings: usize,
    pub fpk: FpkOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            theta: 0.5,
            tol: 1e-6,
            max_iter: 200,
            seed_flow: None,
            stall_window: 10,
            max_halvings: 3,
            fpk: FpkOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidOptions(format!(
                "damping θ = {} must lie in (0, 1]",
                self.theta
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidOptions(format!(
                "tolerance {} must be positive",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidOptions("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// One sweep of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Upper bound on `d1T(ρ_k, Φ(ρ_k))` from the L1 distance.
    pub l1_bound: f64,
    /// Exact `d1T(ρ_k, Φ(ρ_k))`, when it was computed.
    pub d1t: Option<f64>,
    /// Damping used to form `ρ_{k+1}`.
    pub theta: f64,
    /// `l1_bound` over the previous sweep's value.
    pub ratio: Option<f64>,
    /// `|p[ρ_k]|_{0,2} + |h[ρ_k]|₄`.
    pub cost_norm: f64,
}

/// Measured quantities of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub history: Vec<IterationRecord>,
    /// Certified `d1T(ρ, Φ(ρ))` of the returned flow.
    pub residual_d1t: f64,
    pub v_sup: f64,
    /// `|v|_{0,1}`: sup of `v` plus sups of its first differences.
    pub v_lip: f64,
    pub p_norm: f64,
    pub h_norm: f64,
    pub p_half_holder: f64,
    /// `[ρ]_{1T,1/2}`.
    pub rho_holder: f64,
    pub hjb: HjbReport,
    pub momentum: MomentumReport,
    pub fpk: FpkResidualReport,
    /// FPK bookkeeping of the last forward solve.
    pub fpk_report: FpkReport,
    /// Worst mass error and clipped mass over every forward solve of the run.
    pub worst_mass_error: f64,
    pub worst_clipped_mass: f64,
    /// Smallest `w` over every backward solve of the run.
    pub min_w: f64,
    /// Seconds, filled in by callers that have a clock.
    pub wall_time: Option<f64>,
}

/// A (certified or last) iterate with its costs, value function and control.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub rho: DensityFlow,
    pub mu: Density,
    pub u: FieldFlow,
    pub w: FieldFlow,
    pub v: FieldFlow,
    pub p: FieldFlow,
    pub h: Field,
    pub diagnostics: Diagnostics,
}

impl Equilibrium {
    pub fn grid(&self) -> &TorusGrid {
        self.rho.grid()
    }

    /// Rebuilds an equilibrium from stored fields, recomputing the residual
    /// reports and norms. The history is empty; mass and `min w` tracking
    /// cover the given flows only.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        rho: DensityFlow,
        mu: Density,
        u: FieldFlow,
        w: FieldFlow,
        v: FieldFlow,
        p: FieldFlow,
        h: Field,
        residual_d1t: f64,
    ) -> Result<Self> {
        let grid = *rho.grid();
        if [u.grid(), w.grid(), v.grid(), p.grid()].iter().any(|g| **g != grid)
            || !grid.same_space(mu.grid())
            || !grid.same_space(h.grid())
        {
            return Err(Error::GridMismatch);
        }
        let tracking = Tracking {
            worst_mass_error: rho.masses().iter().fold(0.0f64, |m, x| m.max(libm::fabs(x - 1.0))),
            worst_clipped_mass: 0.0,
            min_w: w.values().iter().fold(f64::INFINITY, |m, &x| m.min(x)),
        };
        let sol = HjbSolution { w, u, v, min_w: tracking.min_w };
        assemble(rho, &mu, p, h, sol, FpkReport::default(), Vec::new(), residual_d1t, &tracking)
    }
}

/// `Φ₁`: running and terminal costs of a flow.
pub fn phi1<C: CostFunctional + ?Sized>(cost: &C, rho: &DensityFlow) -> (FieldFlow, Field) {
    (cost.eval_p(rho), cost.eval_h(&rho.terminal()))
}

/// `Φ₂`: optimal feedback for the costs `(p, h)`.
pub fn phi2(p: &FieldFlow, h: &Field) -> Result<FieldFlow> {
    Ok(hjb::solve(p, h)?.v)
}

/// `Φ₃`: law of the controlled diffusion started from `μ`.
pub fn phi3(v: &FieldFlow, mu: &Density) -> Result<DensityFlow> {
    Ok(fpk::solve_initial_value(v, mu)?.0)
}

/// `Φ^μ(ρ) = Φ₃(Φ₂(Φ₁(ρ)), μ)`.
pub fn apply_phi<C: CostFunctional + ?Sized>(cost: &C, rho: &DensityFlow, mu: &Density) -> Result<DensityFlow> {
    let (p, h) = phi1(cost, rho);
    phi3(&phi2(&p, &h)?, mu)
}

/// The heat flow from `μ` on `grid`: `Φ₃(0, μ)`.
pub fn heat_flow(grid: TorusGrid, mu: &Density) -> Result<DensityFlow> {
    phi3(&FieldFlow::zeros(grid, grid.dim()), mu)
}

fn cost_norm(p: &FieldFlow, h: &Field) -> f64 {
    flow_space_norm(p, 2) + holder_norm(h.grid(), h.values(), 4)
}

fn v_lipschitz(v: &FieldFlow) -> f64 {
    let grid = *v.grid();
    let d = grid.dim();
    let nodes = grid.nodes();
    let mut first = 0.0f64;
    let mut comp = alloc::vec![0.0; nodes];
    for axis in 0..d {
        let mut sup = 0.0f64;
        for k in 0..grid.slices() {
            let slice = v.slice(k);
            let mut grads: Vec<Vec<f64>> = Vec::with_capacity(d);
            for c in 0..d {
                for (i, x) in comp.iter_mut().enumerate() {
                    *x = slice[i * d + c];
                }
                grads.push(gradient(&grid, &comp));
            }
            let mut dv = alloc::vec![0.0; nodes * d];
            for c in 0..d {
                for i in 0..nodes {
                    dv[i * d + c] = grads[c][i * d + axis];
                }
            }
            sup = sup.max(pointwise_sup(&dv, d));
        }
        first += sup;
    }
    v.sup_norm() + first
}

struct Tracking {
    worst_mass_error: f64,
    worst_clipped_mass: f64,
    min_w: f64,
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    rho: DensityFlow,
    mu: &Density,
    p: FieldFlow,
    h: Field,
    sol: HjbSolution,
    fpk_report: FpkReport,
    history: Vec<IterationRecord>,
    residual_d1t: f64,
    tracking: &Tracking,
) -> Result<Equilibrium> {
    let hjb_rep = hjb::hjb_report(&sol.u, &p, &h)?;
    let momentum = hjb::momentum_residual(&sol.v, &p, &h)?;
    let fpk_res = fpk::fpk_residual(&rho, &sol.v, mu)?;
    let diagnostics = Diagnostics {
        history,
        residual_d1t,
        v_sup: sol.v.sup_norm(),
        v_lip: v_lipschitz(&sol.v),
        p_norm: flow_space_norm(&p, 2),
        h_norm: holder_norm(h.grid(), h.values(), 4),
        p_half_holder: half_holder_space_norm(&p),
        rho_holder: holder_half_seminorm(&rho)?,
        hjb: hjb_rep,
        momentum,
        fpk: fpk_res,
        fpk_report,
        worst_mass_error: tracking.worst_mass_error,
        worst_clipped_mass: tracking.worst_clipped_mass,
        min_w: tracking.min_w,
        wall_time: None,
    };
    Ok(Equilibrium {
        rho,
        mu: mu.clone(),
        u: sol.u,
        w: sol.w,
        v: sol.v,
        p,
        h,
        diagnostics,
    })
}

fn damp(rho: &DensityFlow, next: &DensityFlow, theta: f64) -> Result<DensityFlow> {
    if theta == 1.0 {
        return Ok(next.clone());
    }
    let mixed = rho.flow().combine(1.0 - theta, next.flow(), theta)?;
    DensityFlow::normalized(mixed)
}

/// Damped Picard iteration `ρ_{k+1} = (1-θ)ρ_k + θΦ(ρ_k)` on the grid of `μ`.
///
/// Returns the first iterate whose certified `d1T(ρ_k, Φ(ρ_k))` is at most
/// `tol`, together with `(p, h) = Φ₁(ρ_k)` and the solution of the HJB
/// equation for them. After `stall_window` sweeps without a decrease of the
/// residual bound, `θ` is halved (at most `max_halvings` times).
pub fn solve_equilibrium<C: CostFunctional + ?Sized>(
    cost: &C,
    mu: &Density,
    opts: &SolverOptions,
) -> Result<Equilibrium> {
    opts.validate()?;
    let grid = *mu.grid();
    let mu = Density::normalized(mu.field().clone())?;
    let mut rho = match &opts.seed_flow {
        Some(seed) => {
            if seed.grid() != &grid {
                return Err(Error::GridMismatch);
            }
            seed.clone()
        }
        None => heat_flow(grid, &mu)?,
    };
    let mut theta = opts.theta;
    let mut halvings = 0;
    let mut stall = 0;
    let mut prev_bound: Option<f64> = None;
    let mut history = Vec::new();
    let mut tracking = Tracking {
        worst_mass_error: 0.0,
        worst_clipped_mass: 0.0,
        min_w: f64::INFINITY,
    };
    for iteration in 1..=opts.max_iter {
        let (p, h) = phi1(cost, &rho);
        let sol = hjb::solve(&p, &h)?;
        let (next, rep) = fpk::solve_initial_value_with(&sol.v, &mu, &opts.fpk)?;
        tracking.min_w = tracking.min_w.min(sol.min_w);
        tracking.worst_mass_error = tracking.worst_mass_error.max(rep.max_mass_error);
        tracking.worst_clipped_mass = tracking.worst_clipped_mass.max(rep.clipped_mass);

        let bound = w1_bound_from_l1(grid.dim(), l1_distance(&rho, &next)?);
        let certified = if bound <= opts.tol || iteration == opts.max_iter {
            Some(d1t(&rho, &next)?)
        } else {
            None
        };
        let ratio = prev_bound.filter(|&b| b > 0.0).map(|b| bound / b);
        history.push(IterationRecord {
            iteration,
            l1_bound: bound,
            d1t: certified,
            theta,
            ratio,
            cost_norm: cost_norm(&p, &h),
        });
        if let Some(dist) = certified {
            if dist <= opts.tol {
                return assemble(rho, &mu, p, h, sol, rep, history, dist, &tracking);
            }
            if iteration == opts.max_iter {
                let last = assemble(rho, &mu, p, h, sol, rep, history.clone(), dist, &tracking)?;
                return Err(Error::NonConvergence {
                    history,
                    last: Box::new(last),
                });
            }
        }
        if prev_bound.is_some_and(|b| bound >= b) {
            stall += 1;
            if stall >= opts.stall_window && halvings < opts.max_halvings {
                theta *= 0.5;
                halvings += 1;
                stall = 0;
            }
        } else {
            stall = 0;
        }
        prev_bound = Some(bound);
        rho = damp(&rho, &next, theta)?;
    }
    unreachable!("the last iteration always returns")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::KernelCost;

    #[test]
    fn zero_cost_converges_immediately() {
        let g = TorusGrid::new(1, 16, 0.5, 10).unwrap();
        let mu = Density::from_fn(g, |x| 1.0 + 0.5 * libm::cos(2.0 * core::f64::consts::PI * x[0])).unwrap();
        let eq = solve_equilibrium(&KernelCost::zero(), &mu, &SolverOptions::default()).unwrap();
        assert_eq!(eq.diagnostics.history.len(), 1);
        assert_eq!(eq.diagnostics.residual_d1t, 0.0);
        assert!(eq.v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn invalid_damping_is_rejected() {
        let opts = SolverOptions {
            theta: 1.5,
            ..SolverOptions::default()
        };
        assert!(opts.validate().is_err());
    }
}
