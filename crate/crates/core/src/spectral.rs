//! Exact periodic heat semigroup `e^{τΔ/2}` on grid functions.
//!
//! The periodic Laplacian is diagonal in the discrete Fourier basis, so the
//! semigroup is a circulant convolution per axis whose kernel row is
//! `c_j = N⁻¹ Σ_k exp(-2π²k²τ) cos(2πkj/N)` over `k ∈ (-N/2, N/2]`.
//! Applying it in difference form keeps constants fixed bit-for-bit.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::grid::TorusGrid;

#[derive(Debug, Clone)]
pub(crate) struct HeatPropagator {
    grid: TorusGrid,
    kernel: Vec<f64>,
}

impl HeatPropagator {
    /// Propagator for `∂_t f = ½Δf` over a time span `tau ≥ 0`.
    pub(crate) fn new(grid: TorusGrid, tau: f64) -> Self {
        let n = grid.n();
        let half = n / 2;
        let decay: Vec<f64> = (0..=half)
            .map(|k| libm::exp(-2.0 * PI * PI * (k * k) as f64 * tau))
            .collect();
        let kernel = (0..n)
            .map(|j| {
                let mut s = 1.0;
                for (k, g) in decay.iter().enumerate().take(half).skip(1) {
                    s += 2.0 * g * libm::cos(2.0 * PI * (k * j) as f64 / n as f64);
                }
                s += decay[half] * if j % 2 == 0 { 1.0 } else { -1.0 };
                s / n as f64
            })
            .collect();
        Self { grid, kernel }
    }

    /// Applies the semigroup in place to a scalar slice.
    pub(crate) fn apply(&self, f: &mut [f64], scratch: &mut Vec<f64>) {
        let n = self.grid.n();
        let nodes = self.grid.nodes();
        scratch.resize(nodes, 0.0);
        for axis in 0..self.grid.dim() {
            let stride = self.grid.stride(axis);
            let mut line = vec![0.0; n];
            for base in 0..nodes {
                if (base / stride) % n != 0 {
                    continue;
                }
                for (i, l) in line.iter_mut().enumerate() {
                    *l = f[base + i * stride];
                }
                for i in 0..n {
                    let centre = line[i];
                    let mut acc = 0.0;
                    for j in 1..n {
                        let src = if i >= j { i - j } else { i + n - j };
                        acc += self.kernel[j] * (line[src] - centre);
                    }
                    scratch[base + i * stride] = centre + acc;
                }
            }
            f.copy_from_slice(&scratch[..nodes]);
        }
    }
}
