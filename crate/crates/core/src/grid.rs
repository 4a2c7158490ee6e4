//! Periodic space-time grids on `[0, T] × T^d` and the fields that live on them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Uniform grid on `[0, T] × T^d`: `N` nodes per axis at `i / N`, `M` time steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    horizon: f64,
    steps: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize, horizon: f64, steps: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension d = {dim} must be 1, 2 or 3")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "N = {n} must be even and at least 8"
            )));
        }
        if steps < 2 {
            return Err(Error::InvalidGrid(format!("M = {steps} must be at least 2")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("T = {horizon} must be positive")));
        }
        Ok(Self {
            dim,
            n,
            horizon,
            steps,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Time horizon `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of time steps `M`; there are `M + 1` slices.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn slices(&self) -> usize {
        self.steps + 1
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Total number of spatial nodes `N^d`.
    pub fn nodes(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Volume of one cell, `Δx^d`.
    pub fn cell_volume(&self) -> f64 {
        libm::pow(self.dx(), self.dim as f64)
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    /// Flat-index stride of `axis`; axis 0 varies slowest (row-major).
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Integer coordinate of `node` along `axis`.
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.stride(axis)) % self.n
    }

    /// Node reached from `node` by moving `offset` cells along `axis`, wrapping.
    pub fn shift(&self, node: usize, axis: usize, offset: isize) -> usize {
        let n = self.n as isize;
        let stride = self.stride(axis);
        let i = self.axis_index(node, axis) as isize;
        let j = (i + offset).rem_euclid(n) as usize;
        node - (i as usize) * stride + j * stride
    }

    /// Flat index of integer coordinates, each wrapped modulo `N`.
    pub fn flat_index(&self, idx: &[isize]) -> usize {
        debug_assert_eq!(idx.len(), self.dim);
        let n = self.n as isize;
        idx.iter()
            .fold(0usize, |acc, &i| acc * self.n + i.rem_euclid(n) as usize)
    }

    /// Coordinates of `node` in `[0, 1)^d`; unused trailing entries are zero.
    pub fn coords(&self, node: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (axis, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = self.axis_index(node, axis) as f64 / self.n as f64;
        }
        x
    }

    /// Same spatial discretisation (dimension and `N`), ignoring time.
    pub fn same_space(&self, other: &TorusGrid) -> bool {
        self.dim == other.dim && self.n == other.n
    }
}

/// Componentwise `x mod 1` into `[0, 1)`.
pub fn wrap_scalar(x: f64) -> f64 {
    let r = x - libm::floor(x);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// The coset map `R^d → [0, 1)^d`.
pub fn wrap(x: &[f64]) -> Vec<f64> {
    x.iter().copied().map(wrap_scalar).collect()
}

/// Flat-torus distance `min_{z ∈ Z^d} |x - y - z|` between points of `[0, 1)^d`.
pub fn torus_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || !(1..=3).contains(&x.len()) {
        return Err(Error::Shape(format!(
            "points of length {} and {} (expected equal, 1 to 3)",
            x.len(),
            y.len()
        )));
    }
    for &c in x.iter().chain(y) {
        if !(0.0..1.0).contains(&c) {
            return Err(Error::Domain { value: c });
        }
    }
    Ok(torus_distance_unchecked(x, y))
}

/// [`torus_distance`] without domain checks, for hot loops over grid nodes.
#[inline]
pub(crate) fn torus_distance_unchecked(x: &[f64], y: &[f64]) -> f64 {
    let mut sq = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let delta = a - b;
        let mut best = delta;
        for z in [-1.0, 1.0] {
            let cand = delta - z;
            if libm::fabs(cand) < libm::fabs(best) {
                best = cand;
            }
        }
        sq += best * best;
    }
    libm::sqrt(sq)
}

/// Multilinear periodic interpolation of a node-major field with `comps`
/// components at an arbitrary point of `R^d`; writes `comps` values to `out`.
pub(crate) fn interpolate_into(
    grid: &TorusGrid,
    values: &[f64],
    comps: usize,
    x: &[f64],
    out: &mut [f64],
) {
    let n = grid.n();
    let nf = n as f64;
    let dim = grid.dim();
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for axis in 0..dim {
        let s = wrap_scalar(x[axis]) * nf;
        let i0 = libm::floor(s);
        frac[axis] = s - i0;
        base[axis] = (i0 as usize) % n;
    }
    // Corner values, reduced one axis at a time by `a + f·(b - a)` so that
    // constant data interpolates exactly.
    let mut corners = [0.0f64; 24];
    let count = 1usize << dim;
    for corner in 0..count {
        let mut node = 0usize;
        for axis in 0..dim {
            let up = (corner >> axis) & 1;
            node = node * n + (base[axis] + up) % n;
        }
        corners[corner * comps..(corner + 1) * comps]
            .copy_from_slice(&values[node * comps..(node + 1) * comps]);
    }
    let mut live = count;
    for axis in (0..dim).rev() {
        live /= 2;
        let f = frac[axis];
        for corner in 0..live {
            for c in 0..comps {
                let a = corners[corner * comps + c];
                let b = corners[(corner + live) * comps + c];
                corners[corner * comps + c] = a + f * (b - a);
            }
        }
    }
    out[..comps].copy_from_slice(&corners[..comps]);
}

/// One spatial slice: `N^d × c` values, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    comps: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: TorusGrid, comps: usize) -> Self {
        Self {
            grid,
            comps,
            values: vec![0.0; grid.nodes() * comps],
        }
    }

    pub fn from_values(grid: TorusGrid, comps: usize, values: Vec<f64>) -> Result<Self> {
        if comps == 0 || values.len() != grid.nodes() * comps {
            return Err(Error::Shape(format!(
                "{} values for {} nodes × {} components",
                values.len(),
                grid.nodes(),
                comps
            )));
        }
        Ok(Self {
            grid,
            comps,
            values,
        })
    }

    /// Scalar field sampled from `f` at every node.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.nodes())
            .map(|node| f(&grid.coords(node)[..grid.dim()]))
            .collect();
        Self {
            grid,
            comps: 1,
            values,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn comps(&self) -> usize {
        self.comps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at `node` (component `c`); `node` is a flat index.
    pub fn at(&self, node: usize, c: usize) -> f64 {
        self.values[node * self.comps + c]
    }

    /// Largest pointwise Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        pointwise_sup(&self.values, self.comps)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Multilinear periodic interpolation at any `x ∈ R^d`.
    pub fn interpolate(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.comps];
        interpolate_into(&self.grid, &self.values, self.comps, x, &mut out);
        out
    }
}

/// Time-indexed field: `(M + 1) × N^d × c` values, slice-major then node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFlow {
    grid: TorusGrid,
    comps: usize,
    values: Vec<f64>,
}

impl FieldFlow {
    pub fn zeros(grid: TorusGrid, comps: usize) -> Self {
        Self {
            grid,
            comps,
            values: vec![0.0; grid.slices() * grid.nodes() * comps],
        }
    }

    pub fn from_values(grid: TorusGrid, comps: usize, values: Vec<f64>) -> Result<Self> {
        if comps == 0 || values.len() != grid.slices() * grid.nodes() * comps {
            return Err(Error::Shape(format!(
                "{} values for {} slices × {} nodes × {} components",
                values.len(),
                grid.slices(),
                grid.nodes(),
                comps
            )));
        }
        Ok(Self {
            grid,
            comps,
            values,
        })
    }

    /// Flow with every slice equal to `field`.
    pub fn constant_in_time(grid: TorusGrid, field: &Field) -> Result<Self> {
        if !grid.same_space(field.grid()) {
            return Err(Error::GridMismatch);
        }
        let mut values = Vec::with_capacity(grid.slices() * field.values().len());
        for _ in 0..grid.slices() {
            values.extend_from_slice(field.values());
        }
        Ok(Self {
            grid,
            comps: field.comps(),
            values,
        })
    }

    /// Field sampled from `f(t, x, out)` at every slice and node.
    pub fn from_fn(grid: TorusGrid, comps: usize, f: impl Fn(f64, &[f64], &mut [f64])) -> Self {
        let mut flow = Self::zeros(grid, comps);
        let nodes = grid.nodes();
        for k in 0..grid.slices() {
            let t = grid.time(k);
            for node in 0..nodes {
                let x = grid.coords(node);
                let start = (k * nodes + node) * comps;
                f(t, &x[..grid.dim()], &mut flow.values[start..start + comps]);
            }
        }
        flow
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn comps(&self) -> usize {
        self.comps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn slice_len(&self) -> usize {
        self.grid.nodes() * self.comps
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let len = self.slice_len();
        &self.values[k * len..(k + 1) * len]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let len = self.slice_len();
        &mut self.values[k * len..(k + 1) * len]
    }

    pub fn field(&self, k: usize) -> Field {
        Field {
            grid: self.grid,
            comps: self.comps,
            values: self.slice(k).to_vec(),
        }
    }

    pub fn set_slice(&mut self, k: usize, values: &[f64]) {
        self.slice_mut(k).copy_from_slice(values);
    }

    pub fn sup_norm(&self) -> f64 {
        pointwise_sup(&self.values, self.comps)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &FieldFlow, b: f64) -> Result<FieldFlow> {
        if self.grid != other.grid || self.comps != other.comps {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(FieldFlow {
            grid: self.grid,
            comps: self.comps,
            values,
        })
    }

    /// Slice `k ↦ M - k`.
    pub fn time_reversed(&self) -> FieldFlow {
        let mut out = FieldFlow::zeros(self.grid, self.comps);
        let m = self.grid.steps();
        for k in 0..=m {
            out.set_slice(k, self.slice(m - k));
        }
        out
    }

    /// Interpolated value at `(t, x)`: linear in time, multilinear in space,
    /// periodic in `x ∈ R^d`.
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !(0.0..=self.grid.horizon()).contains(&t) {
            return Err(Error::TimeOutOfRange(t));
        }
        if x.len() != self.grid.dim() {
            return Err(Error::Shape(format!(
                "point of length {} on a {}-dimensional grid",
                x.len(),
                self.grid.dim()
            )));
        }
        let mut out = vec![0.0; self.comps];
        self.eval_into(t, x, &mut out);
        Ok(out)
    }

    /// Unchecked [`FieldFlow::eval`]; `t` is clamped into `[0, T]`.
    pub(crate) fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let (k, theta) = self.time_bracket(t);
        let comps = self.comps;
        interpolate_into(&self.grid, self.slice(k), comps, x, out);
        if theta > 0.0 {
            let mut upper = [0.0f64; 3];
            interpolate_into(&self.grid, self.slice(k + 1), comps, x, &mut upper);
            for c in 0..comps {
                out[c] += theta * (upper[c] - out[c]);
            }
        }
    }

    /// Slice index `k` and weight `θ ∈ [0, 1)` with `t = (k + θ)Δt`.
    pub(crate) fn time_bracket(&self, t: f64) -> (usize, f64) {
        let m = self.grid.steps();
        let s = (t / self.grid.dt()).clamp(0.0, m as f64);
        let k = libm::floor(s) as usize;
        if k >= m {
            (m, 0.0)
        } else {
            (k, s - k as f64)
        }
    }
}

pub(crate) fn pointwise_sup(values: &[f64], comps: usize) -> f64 {
    values
        .chunks(comps)
        .map(|c| libm::sqrt(c.iter().map(|v| v * v).sum::<f64>()))
        .fold(0.0, f64::max)
}
