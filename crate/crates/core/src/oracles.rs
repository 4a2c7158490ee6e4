//! Monte-Carlo checks that are independent of the PDE solvers: Feynman–Kac
//! values, particle laws, coupled paths, player costs and the forward-backward
//! (Hamiltonian) form of the equilibrium.
//!
//! Path `i` draws from its own ChaCha8 stream (`seed`, stream `i`), and sums
//! are reduced in fixed-size chunks in index order, so results do not depend
//! on how paths are scheduled across threads. Paths live unwrapped in `R^d`;
//! fields are evaluated at the wrapped point.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cost::CostFunctional;
use crate::error::{Error, Result};
use crate::grid::{interpolate_into, wrap_scalar, Field, FieldFlow, TorusGrid};
use crate::measures::{Density, DensityFlow};
use crate::mfg::Equilibrium;
use crate::stencil::gradient;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOptions {
    pub n_samples: usize,
    /// Euler–Maruyama steps over the simulated horizon.
    pub n_steps: usize,
    pub seed: u64,
    /// Pair each path with its mirror `ξ ↦ -ξ`.
    pub antithetic: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            n_steps: 400,
            seed: 0,
            antithetic: false,
        }
    }
}

impl McOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 100 {
            return Err(Error::InvalidOptions(format!(
                "n_samples = {} must be at least 100",
                self.n_samples
            )));
        }
        if self.n_steps < 10 {
            return Err(Error::InvalidOptions(format!(
                "n_steps = {} must be at least 10",
                self.n_steps
            )));
        }
        if self.antithetic && self.n_samples % 2 != 0 {
            return Err(Error::InvalidOptions(format!(
                "antithetic sampling needs an even n_samples, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }

    /// Independent draws: pairs under antithetic sampling, paths otherwise.
    fn units(&self) -> usize {
        if self.antithetic {
            self.n_samples / 2
        } else {
            self.n_samples
        }
    }
}

/// Runs `f` over consecutive index ranges of length [`CHUNK`], in parallel
/// when the `parallel` feature is on, and returns the results in order.
fn chunked<T: Send>(n: usize, f: impl Fn(Range<usize>) -> T + Sync + Send) -> Vec<T> {
    let ranges: Vec<Range<usize>> = (0..n)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(n))
        .collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        ranges.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(f).collect()
    }
}

fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Running sums about a fixed shift, so constant samples have zero spread exactly.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    shift: Option<f64>,
    n: usize,
    s1: f64,
    s2: f64,
}

impl Moments {
    fn push(&mut self, y: f64) {
        let c = *self.shift.get_or_insert(y);
        let d = y - c;
        self.n += 1;
        self.s1 += d;
        self.s2 += d * d;
    }

    fn merge(&mut self, other: &Moments) {
        let Some(oc) = other.shift else { return };
        let c = *self.shift.get_or_insert(oc);
        let delta = oc - c;
        let n = other.n as f64;
        self.s2 += other.s2 + 2.0 * delta * other.s1 + n * delta * delta;
        self.s1 += other.s1 + n * delta;
        self.n += other.n;
    }

    fn mean(&self) -> f64 {
        match self.shift {
            Some(c) => c + self.s1 / self.n as f64,
            None => 0.0,
        }
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.s2 - self.s1 * self.s1 / n) / (n - 1.0)).max(0.0)
    }

    fn std_error(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        libm::sqrt(self.variance() / self.n as f64)
    }
}

fn reduce(parts: Vec<Moments>) -> Moments {
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Number of simulated paths.
    pub n: usize,
}

impl McEstimate {
    fn from_moments(m: &Moments, opts: &McOptions) -> Self {
        Self {
            estimate: m.mean(),
            std_error: m.std_error(),
            n: opts.n_samples,
        }
    }
}

fn check_time(grid: &TorusGrid, t: f64) -> Result<()> {
    if !(0.0..=grid.horizon()).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    Ok(())
}

fn eval_scalar(flow: &FieldFlow, t: f64, x: &[f64]) -> f64 {
    let mut out = [0.0];
    flow.eval_into(t, x, &mut out);
    out[0]
}

/// Estimates `w(t, x) = E[exp(∫_t^T p(s, x + W_{s-t}) ds - h(x + W_{T-t}))]`
/// with exact Brownian increments and the trapezoidal rule in time.
pub fn feynman_kac_value(
    p: &FieldFlow,
    h: &Field,
    t: f64,
    x: &[f64],
    opts: &McOptions,
) -> Result<McEstimate> {
    opts.validate()?;
    let grid = *p.grid();
    check_time(&grid, t)?;
    if x.len() != grid.dim() || !grid.same_space(h.grid()) {
        return Err(Error::Shape(format!(
            "point of length {} on a {}-dimensional grid",
            x.len(),
            grid.dim()
        )));
    }
    let d = grid.dim();
    let steps = opts.n_steps;
    let dt = (grid.horizon() - t) / steps as f64;
    let sqdt = libm::sqrt(dt);
    let path = |rng: &mut ChaCha8Rng, sign: f64, noise: &mut Vec<f64>, replay: bool| -> f64 {
        let mut pos = [0.0; 3];
        pos[..d].copy_from_slice(x);
        let mut integral = 0.5 * dt * eval_scalar(p, t, &pos[..d]);
        for j in 0..steps {
            for a in 0..d {
                let z = if replay {
                    noise[j * d + a]
                } else {
                    let z: f64 = rng.sample(StandardNormal);
                    noise[j * d + a] = z;
                    z
                };
                pos[a] += sign * sqdt * z;
            }
            let s = t + (j + 1) as f64 * dt;
            let w = if j + 1 == steps { 0.5 } else { 1.0 };
            integral += w * dt * eval_scalar(p, s, &pos[..d]);
        }
        let mut hv = [0.0];
        interpolate_into(&grid, h.values(), 1, &pos[..d], &mut hv);
        libm::exp(integral - hv[0])
    };
    let parts = chunked(opts.units(), |range| {
        let mut m = Moments::default();
        let mut noise = vec![0.0; steps * d];
        for i in range {
            let mut rng = path_rng(opts.seed, i);
            let y = if opts.antithetic {
                let a = path(&mut rng, 1.0, &mut noise, false);
                let b = path(&mut rng, -1.0, &mut noise, true);
                0.5 * (a + b)
            } else {
                path(&mut rng, 1.0, &mut noise, false)
            };
            m.push(y);
        }
        m
    });
    Ok(McEstimate::from_moments(&reduce(parts), opts))
}

/// Draws a point from the piecewise-constant density whose cells are
/// centred at the nodes: inverse CDF in 1D, rejection in higher dimension.
fn sample_initial(mu: &Density, cdf: &[f64], max_density: f64, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let grid = mu.grid();
    let n = grid.n();
    let nf = n as f64;
    let d = grid.dim();
    if d == 1 {
        let u: f64 = rng.random::<f64>() * cdf[n - 1];
        let cell = cdf.partition_point(|&c| c <= u).min(n - 1);
        let jitter: f64 = rng.random();
        out[0] = wrap_scalar((cell as f64 - 0.5 + jitter) / nf);
        return;
    }
    loop {
        let mut node = 0usize;
        for o in out.iter_mut().take(d) {
            let u: f64 = rng.random();
            *o = u;
            node = node * n + (libm::round(u * nf) as usize) % n;
        }
        let accept: f64 = rng.random();
        if accept * max_density < mu.values()[node] {
            return;
        }
    }
}

fn cell_of(grid: &TorusGrid, x: &[f64]) -> usize {
    let n = grid.n();
    let nf = n as f64;
    x.iter()
        .fold(0usize, |acc, &xa| acc * n + (libm::round(wrap_scalar(xa) * nf) as usize) % n)
}

/// Mean and variance of the unwrapped displacement `X_t - X_0` along one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementStats {
    pub mean: f64,
    pub variance: f64,
    /// Standard error of `variance` from the fourth central moment.
    pub variance_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRun {
    /// Histogram density on the grid cells, one slice per grid time.
    pub density: DensityFlow,
    /// Per slice, per axis.
    pub displacement: Vec<Vec<DisplacementStats>>,
    /// Euler–Maruyama steps per grid time step.
    pub substeps: usize,
    /// True when every simulated position was wrapped into `[0, 1)^d`.
    pub positions_in_unit_cube: bool,
}

#[derive(Clone)]
struct ParticleChunk {
    counts: Vec<u64>,
    // Per slice and axis: Σ y, Σ y², Σ y³, Σ y⁴ of the displacement.
    sums: Vec<[f64; 4]>,
    in_cube: bool,
}

/// Simulates `X ← wrap(X - v(t, X)Δt + √Δt ξ)` from `X₀ ~ μ`; the grid time
/// step is split into `ceil(n_steps / M)` Euler–Maruyama steps.
pub fn simulate_particles(v: &FieldFlow, mu: &Density, opts: &McOptions) -> Result<ParticleRun> {
    opts.validate()?;
    let grid = *v.grid();
    let d = grid.dim();
    if v.comps() != d {
        return Err(Error::Shape(format!("v needs {d} components")));
    }
    if !grid.same_space(mu.grid()) {
        return Err(Error::GridMismatch);
    }
    let m = grid.steps();
    let slices = grid.slices();
    let sub = opts.n_steps.div_ceil(m);
    let dt = grid.dt() / sub as f64;
    let sqdt = libm::sqrt(dt);
    let mut cdf = Vec::with_capacity(grid.nodes());
    let mut acc = 0.0;
    for r in mu.values() {
        acc += r;
        cdf.push(acc);
    }
    let max_density = mu.values().iter().cloned().fold(0.0, f64::max);
    let nodes = grid.nodes();

    let run_path = |rng: &mut ChaCha8Rng, chunk: &mut ParticleChunk| {
        let mut x0 = [0.0; 3];
        sample_initial(mu, &cdf, max_density, rng, &mut x0[..d]);
        let mut pos = x0;
        let mut wrapped = [0.0; 3];
        let mut drift = [0.0; 3];
        let record = |chunk: &mut ParticleChunk, k: usize, pos: &[f64; 3], wrapped: &[f64; 3]| {
            chunk.counts[k * nodes + cell_of(&grid, &wrapped[..d])] += 1;
            for a in 0..d {
                let y = pos[a] - x0[a];
                let s = &mut chunk.sums[k * d + a];
                s[0] += y;
                s[1] += y * y;
                s[2] += y * y * y;
                s[3] += y * y * y * y;
            }
        };
        for a in 0..d {
            wrapped[a] = wrap_scalar(pos[a]);
        }
        record(chunk, 0, &pos, &wrapped);
        for k in 0..m {
            for s in 0..sub {
                let t = grid.time(k) + s as f64 * dt;
                v.eval_into(t, &wrapped[..d], &mut drift[..d]);
                for a in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    pos[a] += -drift[a] * dt + sqdt * z;
                    wrapped[a] = wrap_scalar(pos[a]);
                    chunk.in_cube &= (0.0..1.0).contains(&wrapped[a]);
                }
            }
            record(chunk, k + 1, &pos, &wrapped);
        }
    };
    let parts = chunked(opts.n_samples, |range| {
        let mut chunk = ParticleChunk {
            counts: vec![0; slices * nodes],
            sums: vec![[0.0; 4]; slices * d],
            in_cube: true,
        };
        for i in range {
            let mut rng = path_rng(opts.seed, i);
            run_path(&mut rng, &mut chunk);
        }
        chunk
    });
    let mut counts = vec![0u64; slices * nodes];
    let mut sums = vec![[0.0f64; 4]; slices * d];
    let mut in_cube = true;
    for part in &parts {
        counts.iter_mut().zip(&part.counts).for_each(|(c, p)| *c += p);
        for (s, p) in sums.iter_mut().zip(&part.sums) {
            for q in 0..4 {
                s[q] += p[q];
            }
        }
        in_cube &= part.in_cube;
    }
    let n = opts.n_samples as f64;
    let scale = 1.0 / (n * grid.cell_volume());
    let values = counts.iter().map(|&c| c as f64 * scale).collect();
    let density = DensityFlow::normalized(FieldFlow::from_values(grid, 1, values)?)?;
    let displacement = (0..slices)
        .map(|k| {
            (0..d)
                .map(|a| {
                    let [s1, s2, s3, s4] = sums[k * d + a];
                    let mean = s1 / n;
                    let m2 = s2 / n - mean * mean;
                    let m4 = s4 / n - 4.0 * mean * s3 / n + 6.0 * mean * mean * s2 / n
                        - 3.0 * mean * mean * mean * mean;
                    let variance = m2 * n / (n - 1.0);
                    DisplacementStats {
                        mean,
                        variance,
                        variance_se: libm::sqrt(((m4 - m2 * m2) / n).max(0.0)),
                    }
                })
                .collect()
        })
        .collect();
    Ok(ParticleRun {
        density,
        displacement,
        substeps: sub,
        positions_in_unit_cube: in_cube,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledReport {
    /// `E[sup_s |X₁(s) - X₂(s)|²]`.
    pub sup_diff_mean: f64,
    pub sup_diff_se: f64,
    /// `E|X₁(t_k) - X₂(t_k)|²` per slice.
    pub slice_mean: Vec<f64>,
}

/// Simulates `dX_i = -v_i dt + dW` for `i = 1, 2` from the same uniform
/// initial point with the same noise and reports the unwrapped distance.
pub fn coupled_paths_distance(v1: &FieldFlow, v2: &FieldFlow, opts: &McOptions) -> Result<CoupledReport> {
    opts.validate()?;
    let grid = *v1.grid();
    if grid != *v2.grid() || v1.comps() != v2.comps() {
        return Err(Error::GridMismatch);
    }
    let d = grid.dim();
    let m = grid.steps();
    let sub = opts.n_steps.div_ceil(m);
    let dt = grid.dt() / sub as f64;
    let sqdt = libm::sqrt(dt);
    let parts = chunked(opts.n_samples, |range| {
        let mut sup = Moments::default();
        let mut slice_sums = vec![0.0; m + 1];
        for i in range {
            let mut rng = path_rng(opts.seed, i);
            let mut a = [0.0; 3];
            for x in a.iter_mut().take(d) {
                *x = rng.random();
            }
            let mut b = a;
            let (mut wa, mut wb) = ([0.0; 3], [0.0; 3]);
            let (mut da, mut db) = ([0.0; 3], [0.0; 3]);
            let mut worst = 0.0f64;
            for k in 0..m {
                for s in 0..sub {
                    let t = grid.time(k) + s as f64 * dt;
                    for q in 0..d {
                        wa[q] = wrap_scalar(a[q]);
                        wb[q] = wrap_scalar(b[q]);
                    }
                    v1.eval_into(t, &wa[..d], &mut da[..d]);
                    v2.eval_into(t, &wb[..d], &mut db[..d]);
                    let mut dist = 0.0;
                    for q in 0..d {
                        let z: f64 = rng.sample(StandardNormal);
                        a[q] += -da[q] * dt + sqdt * z;
                        b[q] += -db[q] * dt + sqdt * z;
                        dist += (a[q] - b[q]) * (a[q] - b[q]);
                    }
                    worst = worst.max(dist);
                }
                let dist: f64 = (0..d).map(|q| (a[q] - b[q]) * (a[q] - b[q])).sum();
                slice_sums[k + 1] += dist;
            }
            sup.push(worst);
        }
        (sup, slice_sums)
    });
    let mut slice_sums = vec![0.0; m + 1];
    let mut sups = Vec::with_capacity(parts.len());
    for (s, sums) in parts {
        sups.push(s);
        slice_sums.iter_mut().zip(&sums).for_each(|(t, x)| *t += x);
    }
    let sup = reduce(sups);
    let n = opts.n_samples as f64;
    Ok(CoupledReport {
        sup_diff_mean: sup.mean(),
        sup_diff_se: sup.std_error(),
        slice_mean: slice_sums.iter().map(|s| s / n).collect(),
    })
}

/// Per-path cost `∫_0^T (½|v|² - p) ds + h(X_T)` along `dX = -v dt + dW`,
/// left-point rule, for the controls in `controls` driven by the same noise.
fn player_costs(
    p: &FieldFlow,
    h: &Field,
    controls: [&FieldFlow; 2],
    x0: &[f64],
    rng: &mut ChaCha8Rng,
    sub: usize,
    out: &mut [f64; 2],
) {
    let grid = *p.grid();
    let d = grid.dim();
    let m = grid.steps();
    let dt = grid.dt() / sub as f64;
    let sqdt = libm::sqrt(dt);
    let mut pos = [[0.0; 3]; 2];
    for c in 0..2 {
        pos[c][..d].copy_from_slice(x0);
        out[c] = 0.0;
    }
    let mut drift = [0.0; 3];
    let mut wrapped = [0.0; 3];
    for k in 0..m {
        for s in 0..sub {
            let t = grid.time(k) + s as f64 * dt;
            let mut z = [0.0; 3];
            for zq in z.iter_mut().take(d) {
                *zq = rng.sample(StandardNormal);
            }
            for c in 0..2 {
                for q in 0..d {
                    wrapped[q] = wrap_scalar(pos[c][q]);
                }
                controls[c].eval_into(t, &wrapped[..d], &mut drift[..d]);
                let kinetic: f64 = 0.5 * drift[..d].iter().map(|x| x * x).sum::<f64>();
                out[c] += (kinetic - eval_scalar(p, t, &wrapped[..d])) * dt;
                for q in 0..d {
                    pos[c][q] += -drift[q] * dt + sqdt * z[q];
                }
            }
        }
    }
    for c in 0..2 {
        let mut hv = [0.0];
        interpolate_into(&grid, h.values(), 1, &pos[c][..d], &mut hv);
        out[c] += hv[0];
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEntry {
    /// Expected cost under the equilibrium control.
    pub cost: f64,
    pub perturbed_cost: f64,
    /// Mean of `J[v + δv] - J[v]` over common paths.
    pub gap: f64,
    pub std_error: f64,
    /// `gap < -3·std_error`.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploitabilityReport {
    pub entries: Vec<GapEntry>,
    pub any_flagged: bool,
}

/// Monte-Carlo costs of the equilibrium control and of `v + δv` for each
/// perturbation, with `X₀ ~ μ` and common random numbers per path. The costs
/// `p[ρ]`, `h[ρ]` are re-evaluated from the equilibrium flow.
pub fn exploitability<C: CostFunctional + ?Sized>(
    eq: &Equilibrium,
    cost: &C,
    perturbations: &[FieldFlow],
    opts: &McOptions,
) -> Result<ExploitabilityReport> {
    opts.validate()?;
    let grid = *eq.grid();
    let p = cost.eval_p(&eq.rho);
    let h = cost.eval_h(&eq.rho.terminal());
    let sub = opts.n_steps.div_ceil(grid.steps());
    let mu = &eq.mu;
    let d = grid.dim();
    let mut cdf = Vec::with_capacity(grid.nodes());
    let mut acc = 0.0;
    for r in mu.values() {
        acc += r;
        cdf.push(acc);
    }
    let max_density = mu.values().iter().cloned().fold(0.0, f64::max);
    let mut entries = Vec::with_capacity(perturbations.len());
    for dv in perturbations {
        if dv.grid() != &grid || dv.comps() != d {
            return Err(Error::GridMismatch);
        }
        let perturbed = eq.v.combine(1.0, dv, 1.0)?;
        let parts = chunked(opts.n_samples, |range| {
            let mut base = Moments::default();
            let mut pert = Moments::default();
            let mut gap = Moments::default();
            let mut out = [0.0; 2];
            for i in range {
                let mut rng = path_rng(opts.seed, i);
                let mut x0 = [0.0; 3];
                sample_initial(mu, &cdf, max_density, &mut rng, &mut x0[..d]);
                player_costs(&p, &h, [&eq.v, &perturbed], &x0[..d], &mut rng, sub, &mut out);
                base.push(out[0]);
                pert.push(out[1]);
                gap.push(out[1] - out[0]);
            }
            (base, pert, gap)
        });
        let mut base = Moments::default();
        let mut pert = Moments::default();
        let mut gap = Moments::default();
        for (b, p, g) in &parts {
            base.merge(b);
            pert.merge(p);
            gap.merge(g);
        }
        let se = gap.std_error();
        entries.push(GapEntry {
            cost: base.mean(),
            perturbed_cost: pert.mean(),
            gap: gap.mean(),
            std_error: se,
            flagged: gap.mean() < -3.0 * se,
        });
    }
    let any_flagged = entries.iter().any(|e| e.flagged);
    Ok(ExploitabilityReport {
        entries,
        any_flagged,
    })
}

/// One interval of the drift check `|E[Y_{t+Δ} - Y_t] + Δ·E[∇p(t, X_t)]|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleResidual {
    pub t: f64,
    pub residual: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianReport {
    /// `E|Y_T + ∇h(X_T)|`.
    pub terminal_gap: f64,
    pub terminal_gap_se: f64,
    pub martingale: Vec<MartingaleResidual>,
    /// Interval length `Δ` of the drift check.
    pub interval: f64,
}

/// Simulates `dX = Y dt + dW` with `Y_t = -v(t, X_t)`, `X₀ ~ μ`, and checks
/// that `Y` ends at `-∇h(X_T)` and drifts like `-∇p(t, X_t)`, interval by
/// interval on the grid times. `p[ρ]` and `h[ρ]` come from `cost`.
pub fn verify_hamiltonian_decoupling<C: CostFunctional + ?Sized>(
    eq: &Equilibrium,
    cost: &C,
    opts: &McOptions,
) -> Result<HamiltonianReport> {
    opts.validate()?;
    let grid = *eq.grid();
    let p = cost.eval_p(&eq.rho);
    let h = cost.eval_h(&eq.rho.terminal());
    let d = grid.dim();
    let m = grid.steps();
    let nodes = grid.nodes();
    let sub = opts.n_steps.div_ceil(m);
    let dt = grid.dt() / sub as f64;
    let sqdt = libm::sqrt(dt);
    let mut grad_p = FieldFlow::zeros(grid, d);
    for k in 0..grid.slices() {
        grad_p.set_slice(k, &gradient(&grid, p.slice(k)));
    }
    let grad_h = gradient(&grid, h.values());
    debug_assert_eq!(grad_h.len(), nodes * d);
    let mu = &eq.mu;
    let mut cdf = Vec::with_capacity(nodes);
    let mut acc = 0.0;
    for r in mu.values() {
        acc += r;
        cdf.push(acc);
    }
    let max_density = mu.values().iter().cloned().fold(0.0, f64::max);

    // Per interval and axis, the moments of ΔY + Δ·∇p(t, X_t).
    let parts = chunked(opts.n_samples, |range| {
        let mut drift = vec![Moments::default(); m * d];
        let mut terminal = Moments::default();
        let mut y = [0.0; 3];
        let mut y_next = [0.0; 3];
        let mut gp = [0.0; 3];
        let mut wrapped = [0.0; 3];
        for i in range {
            let mut rng = path_rng(opts.seed, i);
            let mut pos = [0.0; 3];
            sample_initial(mu, &cdf, max_density, &mut rng, &mut pos[..d]);
            eq.v.eval_into(0.0, &pos[..d], &mut y[..d]);
            y.iter_mut().for_each(|c| *c = -*c);
            for k in 0..m {
                for q in 0..d {
                    wrapped[q] = wrap_scalar(pos[q]);
                }
                grad_p.eval_into(grid.time(k), &wrapped[..d], &mut gp[..d]);
                let start = y;
                let mut yt = y;
                for s in 0..sub {
                    let t = grid.time(k) + s as f64 * dt;
                    if s > 0 {
                        for q in 0..d {
                            wrapped[q] = wrap_scalar(pos[q]);
                        }
                        eq.v.eval_into(t, &wrapped[..d], &mut yt[..d]);
                        yt.iter_mut().for_each(|c| *c = -*c);
                    }
                    for q in 0..d {
                        let z: f64 = rng.sample(StandardNormal);
                        pos[q] += yt[q] * dt + sqdt * z;
                    }
                }
                for q in 0..d {
                    wrapped[q] = wrap_scalar(pos[q]);
                }
                eq.v.eval_into(grid.time(k + 1), &wrapped[..d], &mut y_next[..d]);
                y_next.iter_mut().for_each(|c| *c = -*c);
                for q in 0..d {
                    drift[k * d + q].push(y_next[q] - start[q] + grid.dt() * gp[q]);
                }
                y = y_next;
            }
            let mut gh = [0.0; 3];
            interpolate_into(&grid, &grad_h, d, &wrapped[..d], &mut gh[..d]);
            let gap: f64 = (0..d).map(|q| (y[q] + gh[q]) * (y[q] + gh[q])).sum();
            terminal.push(libm::sqrt(gap));
        }
        (drift, terminal)
    });
    let mut drift = vec![Moments::default(); m * d];
    let mut terminal = Moments::default();
    for (dr, te) in &parts {
        drift.iter_mut().zip(dr).for_each(|(a, b)| a.merge(b));
        terminal.merge(te);
    }
    let martingale = (0..m)
        .map(|k| {
            let mut sq = 0.0;
            let mut se_sq = 0.0;
            for q in 0..d {
                let mq = &drift[k * d + q];
                sq += mq.mean() * mq.mean();
                se_sq += mq.std_error() * mq.std_error();
            }
            MartingaleResidual {
                t: grid.time(k),
                residual: libm::sqrt(sq),
                std_error: libm::sqrt(se_sq),
            }
        })
        .collect();
    Ok(HamiltonianReport {
        terminal_gap: terminal.mean(),
        terminal_gap_se: terminal.std_error(),
        martingale,
        interval: grid.dt(),
    })
}

/// Smooth vector field `Σ a·cos(2π(k·x + φ))·(1 + b·cos(πωt/T))`, `ω ∈ {0, 1, 2}`,
/// with random coefficients from `seed`, rescaled to sup norm `amplitude`.
pub fn random_smooth_field(grid: TorusGrid, seed: u64, amplitude: f64, max_frequency: i32) -> FieldFlow {
    let d = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = 2 + (rng.random::<u32>() % 3) as usize;
    let mut spec = Vec::with_capacity(terms * d);
    for _ in 0..terms * d {
        let mut k = [0i32; 3];
        for kq in k.iter_mut().take(d) {
            *kq = rng.random_range(-max_frequency..=max_frequency);
        }
        if k[..d].iter().all(|&f| f == 0) {
            k[0] = 1;
        }
        let a: f64 = rng.random_range(-1.0..1.0);
        let phase: f64 = rng.random();
        let b: f64 = rng.random_range(-0.5..0.5);
        let omega = rng.random_range(0..3u32) as f64;
        spec.push((k, a, phase, b, omega));
    }
    let horizon = grid.horizon();
    let mut field = FieldFlow::from_fn(grid, d, |t, x, out| {
        for (c, o) in out.iter_mut().enumerate() {
            *o = spec[c * terms..(c + 1) * terms]
                .iter()
                .map(|(k, a, phase, b, omega)| {
                    let arg: f64 = (0..d).map(|q| k[q] as f64 * x[q]).sum::<f64>() + phase;
                    a * libm::cos(2.0 * PI * arg) * (1.0 + b * libm::cos(PI * omega * t / horizon))
                })
                .sum();
        }
    });
    let sup = field.sup_norm();
    if sup > 0.0 {
        let s = amplitude / sup;
        field.values_mut().iter_mut().for_each(|x| *x *= s);
    }
    field
}
