//! Quadratic HJB equation through the Hopf–Cole transform.
//!
//! The value function solves `∂_t u - ½|∇u|² + ½Δu - p = 0`, `u(T) = h`.
//! With `w = e^{-u}` this becomes the linear terminal-value problem
//! `∂_t w + ½Δw + p w = 0`, `w(T) = e^{-h}`, which is stepped backward in
//! time by Strang splitting: an exact half heat step, multiplication by
//! `exp(τ·(p(s) + p(s+τ))/2)`, another half heat step. The optimal control
//! is `v = ∇u = -∇w / w`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Field, FieldFlow};
use crate::residual::{time_derivative, ResidualNorm};
use crate::spectral::HeatPropagator;
use crate::stencil::{advective_derivative, gradient, laplacian, vector_laplacian};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HjbOptions {
    /// Sub-steps are chosen so that `Δt_sub · |p|₀` stays at or below this.
    pub potential_step: f64,
}

impl Default for HjbOptions {
    fn default() -> Self {
        Self {
            potential_step: 0.5,
        }
    }
}

/// `w`, `u = -ln w` and `v = ∇u` on the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbSolution {
    pub w: FieldFlow,
    pub u: FieldFlow,
    pub v: FieldFlow,
    /// Smallest nodal value of `w`.
    pub min_w: f64,
}

fn check_inputs(p: &FieldFlow, h: &Field) -> Result<()> {
    if p.comps() != 1 || h.comps() != 1 {
        return Err(Error::Shape(format!(
            "p and h must be scalar, got {} and {} components",
            p.comps(),
            h.comps()
        )));
    }
    if !p.grid().same_space(h.grid()) {
        return Err(Error::GridMismatch);
    }
    if !p.is_finite() {
        return Err(Error::NonFinite("running cost p"));
    }
    if !h.is_finite() {
        return Err(Error::NonFinite("terminal cost h"));
    }
    Ok(())
}

/// Solves `∂_t w + ½Δw + p w = 0` backward from `w(T) = e^{-h}`.
pub fn solve_terminal_value(p: &FieldFlow, h: &Field) -> Result<FieldFlow> {
    solve_terminal_value_with(p, h, &HjbOptions::default())
}

pub fn solve_terminal_value_with(p: &FieldFlow, h: &Field, opts: &HjbOptions) -> Result<FieldFlow> {
    check_inputs(p, h)?;
    if !(opts.potential_step > 0.0) {
        return Err(Error::InvalidOptions(format!(
            "potential step {} must be positive",
            opts.potential_step
        )));
    }
    let grid = *p.grid();
    let m = grid.steps();
    let dt = grid.dt();
    let sub = libm::ceil(dt * p.sup_norm() / opts.potential_step).max(1.0) as usize;
    let tau = dt / sub as f64;
    let heat = HeatPropagator::new(grid, 0.5 * tau);

    let mut w = FieldFlow::zeros(grid, 1);
    let mut cur: Vec<f64> = h.values().iter().map(|&x| libm::exp(-x)).collect();
    w.set_slice(m, &cur);
    let mut scratch = Vec::new();
    for k in (0..m).rev() {
        let (lo, hi) = (p.slice(k), p.slice(k + 1));
        for s in (0..sub).rev() {
            // Sub-interval [s, s+1]·τ inside [t_k, t_{k+1}].
            let a0 = s as f64 / sub as f64;
            let a1 = (s + 1) as f64 / sub as f64;
            heat.apply(&mut cur, &mut scratch);
            for (i, c) in cur.iter_mut().enumerate() {
                let p0 = lo[i] + a0 * (hi[i] - lo[i]);
                let p1 = lo[i] + a1 * (hi[i] - lo[i]);
                *c *= libm::exp(0.5 * tau * (p0 + p1));
            }
            heat.apply(&mut cur, &mut scratch);
        }
        if cur.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(Error::NonPositive { step: k });
        }
        w.set_slice(k, &cur);
    }
    Ok(w)
}

/// `u = -ln w` and `v = ∇u` (central differences).
pub fn value_and_control(w: &FieldFlow) -> Result<(FieldFlow, FieldFlow)> {
    if w.comps() != 1 {
        return Err(Error::Shape(format!(
            "w must be scalar, got {} components",
            w.comps()
        )));
    }
    let grid = *w.grid();
    let mut u = FieldFlow::zeros(grid, 1);
    let mut v = FieldFlow::zeros(grid, grid.dim());
    for k in 0..grid.slices() {
        let ws = w.slice(k);
        if ws.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::NonPositive { step: k });
        }
        let us: Vec<f64> = ws.iter().map(|&x| -libm::log(x)).collect();
        v.set_slice(k, &gradient(&grid, &us));
        u.set_slice(k, &us);
    }
    Ok((u, v))
}

/// Full HJB solve: `w`, then `u` and `v`.
pub fn solve(p: &FieldFlow, h: &Field) -> Result<HjbSolution> {
    let w = solve_terminal_value(p, h)?;
    let (u, v) = value_and_control(&w)?;
    let min_w = w.values().iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(HjbSolution { w, u, v, min_w })
}

/// `∂_t u - ½|∇u|² + ½Δu - p` at every slice (one-sided in time at the ends).
pub fn hjb_residual(u: &FieldFlow, p: &FieldFlow) -> Result<FieldFlow> {
    if u.grid() != p.grid() {
        return Err(Error::GridMismatch);
    }
    if u.comps() != 1 || p.comps() != 1 {
        return Err(Error::Shape("u and p must be scalar".into()));
    }
    let grid = *u.grid();
    let d = grid.dim();
    let mut res = time_derivative(u);
    for k in 0..grid.slices() {
        let us = u.slice(k);
        let grad = gradient(&grid, us);
        let lap = laplacian(&grid, us);
        let ps = p.slice(k);
        for (i, r) in res.slice_mut(k).iter_mut().enumerate() {
            let g2: f64 = grad[i * d..(i + 1) * d].iter().map(|g| g * g).sum();
            *r += -0.5 * g2 + 0.5 * lap[i] - ps[i];
        }
    }
    Ok(res)
}

/// `u(T) - h`.
pub fn terminal_residual(u: &FieldFlow, h: &Field) -> Result<Field> {
    if !u.grid().same_space(h.grid()) {
        return Err(Error::GridMismatch);
    }
    let last = u.slice(u.grid().steps());
    let values = last.iter().zip(h.values()).map(|(a, b)| a - b).collect();
    Field::from_values(*h.grid(), 1, values)
}

/// `∂_t v - (v·∇)v + ½Δv - ∇p` per component at every slice.
pub fn momentum_residual_field(v: &FieldFlow, p: &FieldFlow) -> Result<FieldFlow> {
    let grid = *v.grid();
    if grid != *p.grid() {
        return Err(Error::GridMismatch);
    }
    let d = grid.dim();
    if v.comps() != d || p.comps() != 1 {
        return Err(Error::Shape(format!(
            "v needs {d} components and p one, got {} and {}",
            v.comps(),
            p.comps()
        )));
    }
    let mut res = time_derivative(v);
    for k in 0..grid.slices() {
        let vs = v.slice(k);
        let adv = advective_derivative(&grid, vs, vs);
        let lap = vector_laplacian(&grid, vs, d);
        let gp = gradient(&grid, p.slice(k));
        for (i, r) in res.slice_mut(k).iter_mut().enumerate() {
            *r += -adv[i] + 0.5 * lap[i] - gp[i];
        }
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumReport {
    pub interior: ResidualNorm,
    /// `v(T) - ∇h`.
    pub terminal: ResidualNorm,
}

/// Residual of the momentum equation satisfied by `v = ∇u`, and of its terminal condition.
pub fn momentum_residual(v: &FieldFlow, p: &FieldFlow, h: &Field) -> Result<MomentumReport> {
    let grid = *v.grid();
    if !grid.same_space(h.grid()) {
        return Err(Error::GridMismatch);
    }
    let interior = ResidualNorm::from_flow("momentum", &momentum_residual_field(v, p)?);
    let gh = gradient(&grid, h.values());
    let diff: Vec<f64> = v
        .slice(grid.steps())
        .iter()
        .zip(&gh)
        .map(|(a, b)| a - b)
        .collect();
    let terminal = ResidualNorm::from_slices("momentum_terminal", &grid, grid.dim(), &diff);
    Ok(MomentumReport { interior, terminal })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjbReport {
    pub interior: ResidualNorm,
    /// `u(T) - h`.
    pub terminal: ResidualNorm,
}

pub fn hjb_report(u: &FieldFlow, p: &FieldFlow, h: &Field) -> Result<HjbReport> {
    let interior = ResidualNorm::from_flow("hjb", &hjb_residual(u, p)?);
    let term = terminal_residual(u, h)?;
    let terminal = ResidualNorm::from_slices("hjb_terminal", h.grid(), 1, term.values());
    Ok(HjbReport { interior, terminal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    #[test]
    fn zero_data_gives_one() {
        let g = TorusGrid::new(1, 16, 1.0, 10).unwrap();
        let w = solve_terminal_value(&FieldFlow::zeros(g, 1), &Field::zeros(g, 1)).unwrap();
        assert!(w.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn constant_potential_is_exponential() {
        let g = TorusGrid::new(1, 16, 1.0, 100).unwrap();
        let p = FieldFlow::from_fn(g, 1, |_, _, o| o[0] = 0.7);
        let w = solve_terminal_value(&p, &Field::zeros(g, 1)).unwrap();
        for k in 0..=100 {
            let expect = libm::exp(0.7 * (1.0 - g.time(k)));
            assert!((w.slice(k)[3] / expect - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn non_positive_w_is_rejected() {
        let g = TorusGrid::new(1, 8, 1.0, 2).unwrap();
        let mut w = FieldFlow::from_fn(g, 1, |_, _, o| o[0] = 1.0);
        w.slice_mut(1)[2] = 0.0;
        assert!(value_and_control(&w).is_err());
    }
}
