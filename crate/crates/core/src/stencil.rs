//! Second-order central differences with periodic wrap.
//!
//! Every derivative is a composition of the central first difference
//! `(f[i+1] - f[i-1]) / 2Δx`, so `divergence ∘ gradient` is the Laplacian
//! exactly and discrete derivatives of any order are averages of the true ones.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilKind {
    Gradient,
    Divergence,
    Laplacian,
}

/// Applies `kind` to one slice, checking that the field has the right shape.
pub fn stencil_op(field: &Field, kind: StencilKind) -> Result<Field> {
    let grid = *field.grid();
    let d = grid.dim();
    match kind {
        StencilKind::Gradient | StencilKind::Laplacian if field.comps() != 1 => Err(Error::Shape(
            format!("{kind:?} needs a scalar field, got {} components", field.comps()),
        )),
        StencilKind::Divergence if field.comps() != d => Err(Error::Shape(format!(
            "divergence needs a {d}-component field, got {}",
            field.comps()
        ))),
        StencilKind::Gradient => Field::from_values(grid, d, gradient(&grid, field.values())),
        StencilKind::Divergence => Field::from_values(grid, 1, divergence(&grid, field.values())),
        StencilKind::Laplacian => Field::from_values(grid, 1, laplacian(&grid, field.values())),
    }
}

/// Central first difference of a scalar slice along `axis`.
pub fn central_diff(grid: &TorusGrid, f: &[f64], axis: usize) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    central_diff_strided(grid, f, 1, 0, axis, &mut out, 1, 0);
    out
}

/// Central difference of component `c_in` of a `comps_in`-component slice,
/// written into component `c_out` of `out`.
#[allow(clippy::too_many_arguments)]
fn central_diff_strided(
    grid: &TorusGrid,
    f: &[f64],
    comps_in: usize,
    c_in: usize,
    axis: usize,
    out: &mut [f64],
    comps_out: usize,
    c_out: usize,
) {
    let n = grid.n();
    let stride = grid.stride(axis);
    let span = n * stride;
    let scale = 0.5 * n as f64;
    for node in 0..grid.nodes() {
        let i = (node / stride) % n;
        let plus = if i + 1 == n { node + stride - span } else { node + stride };
        let minus = if i == 0 { node + span - stride } else { node - stride };
        out[node * comps_out + c_out] =
            scale * (f[plus * comps_in + c_in] - f[minus * comps_in + c_in]);
    }
}

/// Gradient of a scalar slice, node-major with `d` components.
pub fn gradient(grid: &TorusGrid, f: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let mut out = vec![0.0; grid.nodes() * d];
    for axis in 0..d {
        central_diff_strided(grid, f, 1, 0, axis, &mut out, d, axis);
    }
    out
}

/// Divergence of a `d`-component slice.
pub fn divergence(grid: &TorusGrid, v: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let nodes = grid.nodes();
    let mut out = vec![0.0; nodes];
    let mut tmp = vec![0.0; nodes];
    for axis in 0..d {
        central_diff_strided(grid, v, d, axis, axis, &mut tmp, 1, 0);
        out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
    }
    out
}

/// `divergence(gradient(f))`: the wide `(f[i+2] - 2f[i] + f[i-2]) / 4Δx²` per axis.
pub fn laplacian(grid: &TorusGrid, f: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let nodes = grid.nodes();
    let mut out = vec![0.0; nodes];
    let mut first = vec![0.0; nodes];
    let mut second = vec![0.0; nodes];
    for axis in 0..d {
        central_diff_strided(grid, f, 1, 0, axis, &mut first, 1, 0);
        central_diff_strided(grid, &first, 1, 0, axis, &mut second, 1, 0);
        out.iter_mut().zip(&second).for_each(|(o, s)| *o += s);
    }
    out
}

/// Laplacian applied to each of the `comps` components of a slice.
pub fn vector_laplacian(grid: &TorusGrid, v: &[f64], comps: usize) -> Vec<f64> {
    let nodes = grid.nodes();
    let mut out = vec![0.0; nodes * comps];
    let mut comp = vec![0.0; nodes];
    for c in 0..comps {
        for node in 0..nodes {
            comp[node] = v[node * comps + c];
        }
        let lap = laplacian(grid, &comp);
        for node in 0..nodes {
            out[node * comps + c] = lap[node];
        }
    }
    out
}

/// `(a·∇) b` for `d`-component slices `a` and `b`.
pub fn advective_derivative(grid: &TorusGrid, a: &[f64], b: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let nodes = grid.nodes();
    let mut out = vec![0.0; nodes * d];
    let mut db = vec![0.0; nodes];
    for c in 0..d {
        for axis in 0..d {
            central_diff_strided(grid, b, d, c, axis, &mut db, 1, 0);
            for node in 0..nodes {
                out[node * d + c] += a[node * d + axis] * db[node];
            }
        }
    }
    out
}

/// Mixed derivative `D^α f` of a scalar slice by composed central differences.
pub fn derivative(grid: &TorusGrid, f: &[f64], alpha: &[usize]) -> Vec<f64> {
    let mut cur = f.to_vec();
    let mut next = vec![0.0; f.len()];
    for (axis, &order) in alpha.iter().enumerate().take(grid.dim()) {
        for _ in 0..order {
            central_diff_strided(grid, &cur, 1, 0, axis, &mut next, 1, 0);
            core::mem::swap(&mut cur, &mut next);
        }
    }
    cur
}

/// All multi-indices `α ∈ N^dim` with `|α| ≤ max_order`, ordered by `|α|`.
pub fn multi_indices(dim: usize, max_order: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for total in 0..=max_order {
        let mut push = |a: [usize; 3]| out.push(a);
        match dim {
            1 => push([total, 0, 0]),
            2 => (0..=total).rev().for_each(|i| push([i, total - i, 0])),
            _ => {
                for i in (0..=total).rev() {
                    for j in (0..=total - i).rev() {
                        push([i, j, total - i - j]);
                    }
                }
            }
        }
    }
    out
}

/// `Σ_{|α| ≤ order} max |D^α f|` over the nodes of one slice.
pub fn holder_norm(grid: &TorusGrid, f: &[f64], order: usize) -> f64 {
    multi_indices(grid.dim(), order)
        .iter()
        .map(|alpha| sup_abs(&derivative(grid, f, &alpha[..grid.dim()])))
        .sum()
}

pub(crate) fn sup_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn grid(d: usize, n: usize) -> TorusGrid {
        TorusGrid::new(d, n, 1.0, 2).unwrap()
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = grid(2, 16);
        let f = Field::from_fn(g, |_| 3.25);
        let grad = stencil_op(&f, StencilKind::Gradient).unwrap();
        assert!(grad.values().iter().all(|&v| v == 0.0));
        assert_eq!(grad.comps(), 2);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let g = grid(2, 8);
        let scalar = Field::from_fn(g, |x| x[0]);
        assert!(stencil_op(&scalar, StencilKind::Divergence).is_err());
        let vector = stencil_op(&scalar, StencilKind::Gradient).unwrap();
        assert!(stencil_op(&vector, StencilKind::Laplacian).is_err());
        assert!(stencil_op(&vector, StencilKind::Gradient).is_err());
    }

    #[test]
    fn sine_gradient_matches_discrete_symbol_and_converges_at_second_order() {
        let mut errs = Vec::new();
        for n in [32usize, 64, 128, 256] {
            let g = grid(1, n);
            let f = Field::from_fn(g, |x| libm::sin(2.0 * PI * x[0]));
            let d = central_diff(&g, f.values(), 0);
            let h = 1.0 / n as f64;
            let sinc = libm::sin(2.0 * PI * h) / (2.0 * PI * h);
            let exact: Vec<f64> = (0..n)
                .map(|i| 2.0 * PI * libm::cos(2.0 * PI * i as f64 * h))
                .collect();
            let scaled: Vec<f64> = exact.iter().map(|e| e * sinc).collect();
            assert!(max_err(&d, &scaled) < 1e-11);
            errs.push(max_err(&d, &exact));
        }
        for w in errs.windows(2) {
            let order = libm::log2(w[0] / w[1]);
            assert!((1.8..=2.2).contains(&order), "order {order}");
        }
    }

    #[test]
    fn laplacian_converges_at_second_order_in_2d() {
        let mut errs = Vec::new();
        for n in [16usize, 32, 64, 128] {
            let g = grid(2, n);
            let f = Field::from_fn(g, |x| libm::cos(2.0 * PI * (x[0] + 2.0 * x[1])));
            let lap = laplacian(&g, f.values());
            let exact: Vec<f64> = f.values().iter().map(|v| -20.0 * PI * PI * v).collect();
            errs.push(max_err(&lap, &exact));
        }
        for w in errs.windows(2) {
            let order = libm::log2(w[0] / w[1]);
            assert!((1.8..=2.2).contains(&order), "order {order}");
        }
    }

    #[test]
    fn divergence_of_gradient_is_laplacian() {
        for d in 1..=3 {
            let g = grid(d, 8);
            let f = Field::from_fn(g, |x| {
                libm::exp(libm::sin(2.0 * PI * x[0]))
                    + x.iter().skip(1).map(|y| libm::cos(4.0 * PI * y)).sum::<f64>()
            });
            let lhs = divergence(&g, &gradient(&g, f.values()));
            let rhs = laplacian(&g, f.values());
            assert!(max_err(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(1, 4).len(), 5);
        assert_eq!(multi_indices(2, 2).len(), 6);
        assert_eq!(multi_indices(3, 4).len(), 35);
        assert_eq!(multi_indices(3, 1)[0], [0, 0, 0]);
    }

    #[test]
    fn holder_norm_of_cosine() {
        let g = grid(1, 128);
        let f = Field::from_fn(g, |x| libm::cos(2.0 * PI * x[0]));
        let analytic = 1.0 + 2.0 * PI + 4.0 * PI * PI;
        let est = holder_norm(&g, f.values(), 2);
        assert!((est - analytic).abs() / analytic < 0.02);
        assert!(est <= analytic);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn stencils_are_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
                let g = grid(2, 8);
                let s = seed as f64;
                let f = Field::from_fn(g, |x| libm::sin(2.0 * PI * x[0] + s) * x[1]);
                let h = Field::from_fn(g, |x| libm::cos(2.0 * PI * (x[1] - x[0]) * s));
                let mix: Vec<f64> = f.values().iter().zip(h.values()).map(|(p, q)| a * p + b * q).collect();
                for op in [laplacian as fn(&TorusGrid, &[f64]) -> Vec<f64>, gradient] {
                    let lhs = op(&g, &mix);
                    let rf = op(&g, f.values());
                    let rh = op(&g, h.values());
                    for i in 0..lhs.len() {
                        let rhs = a * rf[i] + b * rh[i];
                        prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
                    }
                }
            }
        }
    }
}
