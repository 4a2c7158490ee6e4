//! Residual summaries shared by the PDE evaluators.

use alloc::string::String;
use alloc::vec::Vec;

use crate::grid::{FieldFlow, TorusGrid};

/// Size of a residual field: pointwise Euclidean norm, then max and RMS
/// over all nodes, plus the per-slice maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualNorm {
    pub name: String,
    pub max_norm: f64,
    /// Root-mean-square over every space-time node.
    pub l2_norm: f64,
    pub slice_profile: Vec<f64>,
}

impl ResidualNorm {
    /// Summarises a node-major residual made of consecutive `comps`-component slices.
    pub fn from_slices(name: &str, grid: &TorusGrid, comps: usize, values: &[f64]) -> Self {
        let slice_len = grid.nodes() * comps;
        let mut profile = Vec::with_capacity(values.len() / slice_len.max(1));
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for slice in values.chunks(slice_len) {
            let mut m = 0.0f64;
            for node in slice.chunks(comps) {
                let sq: f64 = node.iter().map(|v| v * v).sum();
                sum_sq += sq;
                count += 1;
                m = m.max(libm::sqrt(sq));
            }
            profile.push(m);
        }
        let max_norm = profile.iter().cloned().fold(0.0, f64::max);
        let l2_norm = if count == 0 {
            0.0
        } else {
            libm::sqrt(sum_sq / count as f64)
        };
        Self {
            name: String::from(name),
            max_norm,
            l2_norm,
            slice_profile: profile,
        }
    }

    pub fn from_flow(name: &str, flow: &FieldFlow) -> Self {
        Self::from_slices(name, flow.grid(), flow.comps(), flow.values())
    }

    /// True when the max norm is at most `tol`.
    pub fn within(&self, tol: f64) -> bool {
        self.max_norm <= tol
    }
}

/// Second-order time derivative of a flow: central in the interior,
/// one-sided three-point at the first and last slices.
pub(crate) fn time_derivative(flow: &FieldFlow) -> FieldFlow {
    let grid = *flow.grid();
    let m = grid.steps();
    let inv = 1.0 / grid.dt();
    let mut out = FieldFlow::zeros(grid, flow.comps());
    for k in 0..=m {
        let (a, b, c, w) = if k == 0 {
            (0, 1, 2, [-1.5, 2.0, -0.5])
        } else if k == m {
            (m - 2, m - 1, m, [0.5, -2.0, 1.5])
        } else {
            (k - 1, k, k + 1, [-0.5, 0.0, 0.5])
        };
        let (fa, fb, fc) = (flow.slice(a), flow.slice(b), flow.slice(c));
        for (i, o) in out.slice_mut(k).iter_mut().enumerate() {
            *o = inv * (w[0] * fa[i] + w[1] * fb[i] + w[2] * fc[i]);
        }
    }
    out
}
