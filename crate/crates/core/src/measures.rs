//! Probability densities on the grid and the metrics `d₁`, `d1T` and the
//! `½`-Hölder seminorm in time.
//!
//! A density slice is read as atoms of mass `ρ_i Δx^d` at the nodes, so the
//! 1-Wasserstein distance is an exact discrete transport problem.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{torus_distance_unchecked, Field, FieldFlow, TorusGrid};
use crate::transport::{circle_w1, entropic_w1, flow_w1, EntropicOptions};

/// Per-slice mass tolerance of a valid density.
pub const MASS_TOL: f64 = 1e-10;
/// Most negative nodal value accepted as rounding noise.
pub const NEG_TOL: f64 = -1e-14;
/// Largest node count handled by the exact flow solver in `d ≥ 2`.
pub const EXACT_NODE_LIMIT: usize = 4096;

fn slice_mass(grid: &TorusGrid, values: &[f64]) -> f64 {
    values.iter().sum::<f64>() * grid.cell_volume()
}

fn check_slice(grid: &TorusGrid, values: &[f64], what: &str) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidDensity(format!("{what}: non-finite value {v}")));
    }
    if let Some(v) = values.iter().find(|&&v| v < NEG_TOL) {
        return Err(Error::InvalidDensity(format!("{what}: negative value {v:e}")));
    }
    let mass = slice_mass(grid, values);
    if libm::fabs(mass - 1.0) > MASS_TOL {
        return Err(Error::InvalidDensity(format!(
            "{what}: mass {mass} differs from 1 by more than {MASS_TOL:e}"
        )));
    }
    Ok(())
}

fn normalize_slice(grid: &TorusGrid, values: &mut [f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidDensity(format!(
            "{what}: values must be finite and nonnegative"
        )));
    }
    let mass = slice_mass(grid, values);
    if !(mass > 0.0) {
        return Err(Error::InvalidDensity(format!("{what}: zero total mass")));
    }
    values.iter_mut().for_each(|v| *v /= mass);
    Ok(())
}

/// Probability density on one slice: nonnegative, unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Density(Field);

impl Density {
    /// Validates a scalar field as a density (mass within [`MASS_TOL`]).
    pub fn new(field: Field) -> Result<Self> {
        if field.comps() != 1 {
            return Err(Error::Shape(format!(
                "a density is scalar, got {} components",
                field.comps()
            )));
        }
        check_slice(field.grid(), field.values(), "density")?;
        Ok(Self(field))
    }

    /// Rescales a nonnegative scalar field to unit mass.
    pub fn normalized(mut field: Field) -> Result<Self> {
        if field.comps() != 1 {
            return Err(Error::Shape(format!(
                "a density is scalar, got {} components",
                field.comps()
            )));
        }
        let grid = *field.grid();
        normalize_slice(&grid, field.values_mut(), "density")?;
        Ok(Self(field))
    }

    /// Samples `f` at the nodes and normalizes.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::normalized(Field::from_fn(grid, f))
    }

    pub fn uniform(grid: TorusGrid) -> Self {
        Self(Field::from_fn(grid, |_| 1.0))
    }

    /// All mass on one node.
    pub fn point_mass(grid: TorusGrid, node: usize) -> Self {
        let mut field = Field::zeros(grid, 1);
        field.values_mut()[node] = 1.0 / grid.cell_volume();
        Self(field)
    }

    pub fn grid(&self) -> &TorusGrid {
        self.0.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn field(&self) -> &Field {
        &self.0
    }

    pub fn into_field(self) -> Field {
        self.0
    }

    pub fn mass(&self) -> f64 {
        slice_mass(self.grid(), self.values())
    }
}

/// Time-indexed probability density.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFlow(FieldFlow);

impl DensityFlow {
    /// Validates every slice of a scalar flow.
    pub fn new(flow: FieldFlow) -> Result<Self> {
        if flow.comps() != 1 {
            return Err(Error::Shape(format!(
                "a density flow is scalar, got {} components",
                flow.comps()
            )));
        }
        let grid = *flow.grid();
        for k in 0..grid.slices() {
            check_slice(&grid, flow.slice(k), &format!("slice {k}"))?;
        }
        Ok(Self(flow))
    }

    /// Rescales every slice of a nonnegative scalar flow to unit mass.
    pub fn normalized(mut flow: FieldFlow) -> Result<Self> {
        if flow.comps() != 1 {
            return Err(Error::Shape(format!(
                "a density flow is scalar, got {} components",
                flow.comps()
            )));
        }
        let grid = *flow.grid();
        for k in 0..grid.slices() {
            normalize_slice(&grid, flow.slice_mut(k), &format!("slice {k}"))?;
        }
        Ok(Self(flow))
    }

    /// Every slice equal to `density`.
    pub fn constant(grid: TorusGrid, density: &Density) -> Result<Self> {
        Ok(Self(FieldFlow::constant_in_time(grid, density.field())?))
    }

    pub(crate) fn from_flow_unchecked(flow: FieldFlow) -> Self {
        Self(flow)
    }

    pub fn grid(&self) -> &TorusGrid {
        self.0.grid()
    }

    pub fn flow(&self) -> &FieldFlow {
        &self.0
    }

    pub fn into_flow(self) -> FieldFlow {
        self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        self.0.slice(k)
    }

    pub fn density(&self, k: usize) -> Density {
        Density(self.0.field(k))
    }

    pub fn initial(&self) -> Density {
        self.density(0)
    }

    pub fn terminal(&self) -> Density {
        self.density(self.grid().steps())
    }

    pub fn masses(&self) -> Vec<f64> {
        let grid = *self.grid();
        (0..grid.slices())
            .map(|k| slice_mass(&grid, self.slice(k)))
            .collect()
    }

    /// Slice `k ↦ M - k`.
    pub fn time_reversed(&self) -> Self {
        Self(self.0.time_reversed())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransportMethod {
    /// Closed-form circle formula (`d = 1`).
    Circle,
    /// Exact min-cost flow (`d ≥ 2`, small grids).
    Flow,
    /// Entropic approximation; the true distance lies in `[value - gap, value]`.
    Entropic { gap: f64 },
}

/// A 1-Wasserstein distance and the solver that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W1 {
    pub value: f64,
    pub method: TransportMethod,
}

/// `d₁` between two density slices given as raw node values on `grid`.
pub fn w1_slices(grid: &TorusGrid, a: &[f64], b: &[f64]) -> Result<W1> {
    if a.len() != grid.nodes() || b.len() != grid.nodes() {
        return Err(Error::Shape(format!(
            "slices of length {} and {} on {} nodes",
            a.len(),
            b.len(),
            grid.nodes()
        )));
    }
    let vol = grid.cell_volume();
    let (ma, mb) = (slice_mass(grid, a), slice_mass(grid, b));
    if libm::fabs(ma - mb) > 1e-8 {
        return Err(Error::MassMismatch {
            diff: ma - mb,
            tol: 1e-8,
        });
    }
    if grid.dim() == 1 {
        let wa: Vec<f64> = a.iter().map(|v| v * vol).collect();
        let wb: Vec<f64> = b.iter().map(|v| v * vol).collect();
        return Ok(W1 {
            value: circle_w1(&wa, &wb),
            method: TransportMethod::Circle,
        });
    }
    let mut sources = Vec::new();
    let mut supply = Vec::new();
    let mut sinks = Vec::new();
    let mut demand = Vec::new();
    for (node, (x, y)) in a.iter().zip(b).enumerate() {
        let diff = (x - y) * vol;
        if diff > 0.0 {
            sources.push(node);
            supply.push(diff);
        } else if diff < 0.0 {
            sinks.push(node);
            demand.push(-diff);
        }
    }
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if total_s == 0.0 || total_d == 0.0 {
        return Ok(W1 {
            value: 0.0,
            method: TransportMethod::Flow,
        });
    }
    let scale = total_s / total_d;
    demand.iter_mut().for_each(|v| *v *= scale);
    let d = grid.dim();
    let src: Vec<[f64; 3]> = sources.iter().map(|&n| grid.coords(n)).collect();
    let dst: Vec<[f64; 3]> = sinks.iter().map(|&n| grid.coords(n)).collect();
    let cost = |i: usize, j: usize| torus_distance_unchecked(&src[i][..d], &dst[j][..d]);
    if grid.nodes() <= EXACT_NODE_LIMIT {
        Ok(W1 {
            value: flow_w1(&supply, &demand, cost),
            method: TransportMethod::Flow,
        })
    } else {
        let opts = EntropicOptions {
            epsilon: 0.25 * grid.dx(),
            max_iter: 5000,
            tol: 1e-8 * total_s,
        };
        let res = entropic_w1(&supply, &demand, cost, &opts)?;
        Ok(W1 {
            value: res.value,
            method: TransportMethod::Entropic { gap: res.gap },
        })
    }
}

/// 1-Wasserstein distance on the torus between two densities on the same grid.
pub fn wasserstein1_torus(mu: &Density, nu: &Density) -> Result<W1> {
    if !mu.grid().same_space(nu.grid()) {
        return Err(Error::GridMismatch);
    }
    w1_slices(mu.grid(), mu.values(), nu.values())
}

fn check_flows(a: &DensityFlow, b: &DensityFlow) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Slice-wise `d₁(ρ₁(t_k), ρ₂(t_k))` for every `k`.
pub fn d1t_profile(a: &DensityFlow, b: &DensityFlow) -> Result<Vec<W1>> {
    check_flows(a, b)?;
    let grid = *a.grid();
    (0..grid.slices())
        .map(|k| w1_slices(&grid, a.slice(k), b.slice(k)))
        .collect()
}

/// `d1T(ρ₁, ρ₂) = max_k d₁(ρ₁(t_k), ρ₂(t_k))`.
pub fn d1t(a: &DensityFlow, b: &DensityFlow) -> Result<f64> {
    Ok(d1t_profile(a, b)?
        .iter()
        .map(|w| w.value)
        .fold(0.0, f64::max))
}

/// `d₁(ρ(t_k), ρ(t_l))` for every pair `k < l`, as `(k, l, distance)`.
pub fn slice_pair_distances(rho: &DensityFlow) -> Result<Vec<(usize, usize, f64)>> {
    let grid = *rho.grid();
    let mut out = Vec::new();
    for k in 0..grid.slices() {
        for l in k + 1..grid.slices() {
            out.push((k, l, w1_slices(&grid, rho.slice(k), rho.slice(l))?.value));
        }
    }
    Ok(out)
}

/// `max_{k<l} d₁(ρ(t_k), ρ(t_l)) / |t_k - t_l|^{1/2}`.
pub fn holder_half_seminorm(rho: &DensityFlow) -> Result<f64> {
    let grid = *rho.grid();
    Ok(slice_pair_distances(rho)?
        .into_iter()
        .map(|(k, l, d)| d / libm::sqrt(grid.time(l) - grid.time(k)))
        .fold(0.0, f64::max))
}

/// `max_k ∫|ρ₁(t_k) - ρ₂(t_k)| dx`.
pub fn l1_distance(a: &DensityFlow, b: &DensityFlow) -> Result<f64> {
    check_flows(a, b)?;
    let grid = *a.grid();
    let vol = grid.cell_volume();
    Ok((0..grid.slices())
        .map(|k| {
            a.slice(k)
                .iter()
                .zip(b.slice(k))
                .map(|(x, y)| libm::fabs(x - y))
                .sum::<f64>()
                * vol
        })
        .fold(0.0, f64::max))
}

/// Upper bound on `d₁` implied by an L1 distance: half the total variation
/// times the torus diameter `√d / 2`.
pub fn w1_bound_from_l1(dim: usize, l1: f64) -> f64 {
    0.25 * libm::sqrt(dim as f64) * l1
}
