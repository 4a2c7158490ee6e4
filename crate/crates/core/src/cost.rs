//! Density-dependent costs `ρ ↦ p[ρ]` (running) and `ρ ↦ h[ρ]` (terminal).
//!
//! [`KernelCost`] implements the convolution form
//!
//! ```text
//! p[ρ](t, x) = ∫ p̄(x, y) ρ(t, y) dy + p̂(x),    h[ρ](x) = ∫ h̄(x, y) ρ(T, y) dy + ĥ(x)
//! ```
//!
//! with trigonometric kernels. Each kernel term factorises as
//! `cos(2π(k·x + φ)) cos(2π l·y) - sin(2π(k·x + φ)) sin(2π l·y)`, so the
//! rectangle-rule convolution costs `O(N^d)` per term and slice.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Field, FieldFlow, TorusGrid};
use crate::measures::{d1t, Density, DensityFlow};
use crate::stencil::{derivative, multi_indices, sup_abs};
use crate::trig::TrigSeries;

/// A pair of maps from density flows to running and terminal costs.
pub trait CostFunctional {
    /// Running cost `p[ρ]` on every slice of `rho`'s grid.
    fn eval_p(&self, rho: &DensityFlow) -> FieldFlow;
    /// Terminal cost `h[ρ]` from the terminal slice `ρ(T)`.
    fn eval_h(&self, rho_t: &Density) -> Field;
}

/// Convolution cost with trigonometric kernels `p̄, p̂, h̄, ĥ`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KernelCost {
    pub p_bar: TrigSeries,
    pub p_hat: TrigSeries,
    pub h_bar: TrigSeries,
    pub h_hat: TrigSeries,
}

struct TermTables {
    amp: f64,
    x_cos: Vec<f64>,
    x_sin: Vec<f64>,
    y_cos: Vec<f64>,
    y_sin: Vec<f64>,
}

fn term_tables(series: &TrigSeries, grid: &TorusGrid) -> Vec<TermTables> {
    let d = grid.dim();
    let nodes = grid.nodes();
    series
        .terms
        .iter()
        .map(|t| {
            let mut tab = TermTables {
                amp: t.amp,
                x_cos: vec![0.0; nodes],
                x_sin: vec![0.0; nodes],
                y_cos: vec![0.0; nodes],
                y_sin: vec![0.0; nodes],
            };
            for node in 0..nodes {
                let x = grid.coords(node);
                let mut ax = t.phase;
                let mut ay = 0.0;
                for a in 0..d {
                    ax += t.k[a] as f64 * x[a];
                    ay += t.l[a] as f64 * x[a];
                }
                let (sx, cx) = libm::sincos(2.0 * PI * ax);
                let (sy, cy) = libm::sincos(2.0 * PI * ay);
                tab.x_cos[node] = cx;
                tab.x_sin[node] = sx;
                tab.y_cos[node] = cy;
                tab.y_sin[node] = sy;
            }
            tab
        })
        .collect()
}

/// Adds `Σ_j K(x_i, y_j) ρ_j Δx^d` to `out` for every node `x_i`.
fn convolve(tables: &[TermTables], vol: f64, rho: &[f64], out: &mut [f64]) {
    for t in tables {
        let mut c = 0.0;
        let mut s = 0.0;
        for (j, r) in rho.iter().enumerate() {
            c += t.y_cos[j] * r;
            s += t.y_sin[j] * r;
        }
        c *= vol * t.amp;
        s *= vol * t.amp;
        for (i, o) in out.iter_mut().enumerate() {
            *o += t.x_cos[i] * c - t.x_sin[i] * s;
        }
    }
}

fn sample(series: &TrigSeries, grid: &TorusGrid) -> Vec<f64> {
    (0..grid.nodes())
        .map(|node| series.eval_x(&grid.coords(node)[..grid.dim()]))
        .collect()
}

impl KernelCost {
    pub fn new(p_bar: TrigSeries, p_hat: TrigSeries, h_bar: TrigSeries, h_hat: TrigSeries) -> Self {
        Self {
            p_bar,
            p_hat,
            h_bar,
            h_hat,
        }
    }

    /// `p ≡ 0`, `h ≡ 0`.
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(
            self.p_bar.scaled(factor),
            self.p_hat.scaled(factor),
            self.h_bar.scaled(factor),
            self.h_hat.scaled(factor),
        )
    }

    /// True when neither cost depends on the density.
    pub fn is_density_independent(&self) -> bool {
        self.p_bar.is_zero() && self.h_bar.is_zero()
    }

    /// `Σ_{|α|≤order} max_{x,y} |D_x^α K(x, y)|` with `D_x` the composed
    /// central differences of the grid.
    fn kernel_norm(&self, kernel: &TrigSeries, grid: &TorusGrid, order: usize) -> f64 {
        let nodes = grid.nodes();
        let d = grid.dim();
        let tables = term_tables(kernel, grid);
        let alphas = multi_indices(d, order);
        let mut sups = vec![0.0f64; alphas.len()];
        let mut slice = vec![0.0; nodes];
        for j in 0..nodes {
            slice.iter_mut().for_each(|v| *v = 0.0);
            for t in &tables {
                let (cy, sy) = (t.amp * t.y_cos[j], t.amp * t.y_sin[j]);
                for (i, v) in slice.iter_mut().enumerate() {
                    *v += t.x_cos[i] * cy - t.x_sin[i] * sy;
                }
            }
            for (s, alpha) in sups.iter_mut().zip(&alphas) {
                *s = s.max(sup_abs(&derivative(grid, &slice, &alpha[..d])));
            }
            if kernel.is_single_variable() {
                break;
            }
        }
        sups.iter().sum()
    }

    /// Discrete estimate of `κ = |p̄|_{2,0} + |p̂|₂ + |h̄|_{4,0} + |ĥ|₄` on `grid`.
    ///
    /// The stencils are those used for the norms of `p[ρ]` and `h[ρ]`, so
    /// those norms never exceed this value beyond rounding.
    pub fn kappa_bound(&self, grid: &TorusGrid) -> f64 {
        self.kernel_norm(&self.p_bar, grid, 2)
            + self.kernel_norm(&self.p_hat, grid, 2)
            + self.kernel_norm(&self.h_bar, grid, 4)
            + self.kernel_norm(&self.h_hat, grid, 4)
    }

    /// Analytic `κ` from the trigonometric coefficients (triangle inequality
    /// over terms, exact for single terms).
    pub fn kappa_analytic(&self, dim: usize) -> f64 {
        let part = |s: &TrigSeries, order: usize| -> f64 {
            multi_indices(dim, order)
                .iter()
                .map(|a| s.derivative_sup_bound(&a[..dim], &[]))
                .sum()
        };
        part(&self.p_bar, 2) + part(&self.p_hat, 2) + part(&self.h_bar, 4) + part(&self.h_hat, 4)
    }

    /// Slope of the linear modulus `λ₀(r) = c·r`:
    /// `c = Σ_{|α|≤1} sup|∇_y D_x^α p̄| + Σ_{|α|≤4} sup|∇_y D_x^α h̄|`.
    pub fn modulus_coefficient(&self, dim: usize) -> f64 {
        let part = |s: &TrigSeries, order: usize| -> f64 {
            multi_indices(dim, order)
                .iter()
                .map(|a| s.y_gradient_sup_bound(&a[..dim], dim))
                .sum()
        };
        part(&self.p_bar, 1) + part(&self.h_bar, 4)
    }

    /// `sup |∇_y p̄|`, the Lipschitz constant of `p[ρ](t, x)` in `ρ(t)` for `d₁`.
    pub fn p_bar_y_lipschitz(&self, dim: usize) -> f64 {
        self.p_bar.y_gradient_sup_bound(&[0; 3][..dim], dim)
    }
}

impl CostFunctional for KernelCost {
    fn eval_p(&self, rho: &DensityFlow) -> FieldFlow {
        let grid = *rho.grid();
        let base = sample(&self.p_hat, &grid);
        let tables = term_tables(&self.p_bar, &grid);
        let mut out = FieldFlow::zeros(grid, 1);
        for k in 0..grid.slices() {
            let slice = out.slice_mut(k);
            slice.copy_from_slice(&base);
            convolve(&tables, grid.cell_volume(), rho.slice(k), slice);
        }
        out
    }

    fn eval_h(&self, rho_t: &Density) -> Field {
        let grid = *rho_t.grid();
        let mut values = sample(&self.h_hat, &grid);
        let tables = term_tables(&self.h_bar, &grid);
        convolve(&tables, grid.cell_volume(), rho_t.values(), &mut values);
        Field::from_values(grid, 1, values).expect("one value per node")
    }
}

/// `max_t Σ_{|α|≤order} max_x |D^α f(t, x)|` for a scalar flow.
pub fn flow_space_norm(flow: &FieldFlow, order: usize) -> f64 {
    let grid = *flow.grid();
    let d = grid.dim();
    let alphas = multi_indices(d, order);
    let mut sups = vec![0.0f64; alphas.len()];
    for k in 0..grid.slices() {
        for (s, alpha) in sups.iter_mut().zip(&alphas) {
            *s = s.max(sup_abs(&derivative(&grid, flow.slice(k), &alpha[..d])));
        }
    }
    sups.iter().sum()
}

/// Discrete `|p|_{1/2,2}`: `|p|_{0,2}` plus the largest ½-Hölder quotient in
/// time of the derivatives up to order two, over all slice pairs.
pub fn half_holder_space_norm(flow: &FieldFlow) -> f64 {
    let grid = *flow.grid();
    let d = grid.dim();
    let alphas = multi_indices(d, 2);
    let derivs: Vec<Vec<Vec<f64>>> = (0..grid.slices())
        .map(|k| {
            alphas
                .iter()
                .map(|a| derivative(&grid, flow.slice(k), &a[..d]))
                .collect()
        })
        .collect();
    let mut quotient = 0.0f64;
    for k in 0..grid.slices() {
        for l in k + 1..grid.slices() {
            let dt = libm::sqrt(grid.time(l) - grid.time(k));
            let mut s = 0.0;
            for a in 0..alphas.len() {
                let diff = derivs[k][a]
                    .iter()
                    .zip(&derivs[l][a])
                    .fold(0.0f64, |m, (x, y)| m.max(libm::fabs(x - y)));
                s += diff;
            }
            quotient = quotient.max(s / dt);
        }
    }
    flow_space_norm(flow, 2) + quotient
}

/// `|p[ρ]|_{0,2} + |h[ρ]|₄` against the bound `κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBudget {
    pub p_norm: f64,
    pub h_norm: f64,
    pub kappa: f64,
    pub holds: bool,
}

/// Checks the uniform bound `|p|_{0,2} + |h|₄ ≤ κ` up to a rounding slack.
pub fn norm_budget(p: &FieldFlow, h: &Field, kappa: f64) -> NormBudget {
    let p_norm = flow_space_norm(p, 2);
    let h_norm = crate::stencil::holder_norm(h.grid(), h.values(), 4);
    let holds = p_norm + h_norm <= kappa * (1.0 + 1e-12) + 1e-12;
    NormBudget {
        p_norm,
        h_norm,
        kappa,
        holds,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusReport {
    /// `|p[ρ₁] - p[ρ₂]|_{0,1} + |h[ρ₁] - h[ρ₂]|₄`.
    pub lhs: f64,
    /// `λ₀(d1T(ρ₁, ρ₂))`.
    pub rhs: f64,
    pub d1t: f64,
    pub holds: bool,
}

/// Checks the continuity of `ρ ↦ (p[ρ], h[ρ])` with the linear modulus of
/// [`KernelCost::modulus_coefficient`].
pub fn verify_modulus(cost: &KernelCost, a: &DensityFlow, b: &DensityFlow) -> Result<ModulusReport> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *a.grid();
    let pa = cost.eval_p(a);
    let pb = cost.eval_p(b);
    let dp = pa.combine(1.0, &pb, -1.0)?;
    let ha = cost.eval_h(&a.terminal());
    let hb = cost.eval_h(&b.terminal());
    let dh: Vec<f64> = ha.values().iter().zip(hb.values()).map(|(x, y)| x - y).collect();
    let lhs = flow_space_norm(&dp, 1) + crate::stencil::holder_norm(&grid, &dh, 4);
    let dist = d1t(a, b)?;
    let rhs = cost.modulus_coefficient(grid.dim()) * dist;
    Ok(ModulusReport {
        lhs,
        rhs,
        d1t: dist,
        holds: lhs <= rhs * (1.0 + 1e-6) + 1e-12,
    })
}
