//! Mean-field-game equilibria on the flat torus `T^d = R^d / Z^d`, `d ∈ {1, 2, 3}`.
//!
//! A population of players moves with drift `-v` plus unit Brownian noise and
//! pays the running cost `½|v|² - p[ρ]` and the terminal cost `h[ρ]`. An
//! equilibrium is a density flow `ρ` that reproduces itself through
//!
//! ```text
//! ρ ──Φ₁──▶ (p, h) ──Φ₂──▶ v = ∇u ──Φ₃──▶ law of X
//! ```
//!
//! where `u` solves the quadratic HJB equation (linearised through `w = e^{-u}`)
//! and the law of `X` solves the forward Fokker–Planck equation. Reversing time
//! turns the pair `(ρ, v)` into a classical solution of a viscous, compressible
//! Navier–Stokes-like system (see [`nse`]).
//!
//! The crate is `no_std` with `alloc`. The `parallel` feature distributes
//! Monte-Carlo paths over rayon; results are bit-identical with or without it.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cost;
mod error;
pub mod fpk;
pub mod grid;
pub mod hjb;
pub mod measures;
pub mod mfg;
pub mod nse;
pub mod oracles;
pub mod residual;
mod spectral;
pub mod stencil;
pub mod transport;
pub mod trig;

pub use cost::{CostFunctional, KernelCost};
pub use error::{Error, Result};
pub use grid::{torus_distance, wrap, wrap_scalar, Field, FieldFlow, TorusGrid};
pub use measures::{Density, DensityFlow};
pub use mfg::{Diagnostics, Equilibrium, SolverOptions};
pub use oracles::McOptions;
pub use residual::ResidualNorm;
pub use trig::{TrigSeries, TrigTerm};
