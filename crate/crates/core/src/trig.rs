//! Trigonometric polynomials `Σ amp · cos(2π(k·x + l·y + phase))` on `T^d` or `T^d × T^d`.
//!
//! Kernels are specified this way so every derivative sup-norm has a closed form.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub amp: f64,
    /// Frequency vector paired with `x`.
    pub k: [i32; 3],
    /// Frequency vector paired with `y`; zero for functions of `x` alone.
    pub l: [i32; 3],
    /// Phase in cycles.
    pub phase: f64,
}

impl TrigTerm {
    pub fn new(amp: f64, k: [i32; 3], l: [i32; 3], phase: f64) -> Self {
        Self { amp, k, l, phase }
    }

    pub fn constant(amp: f64) -> Self {
        Self::new(amp, [0; 3], [0; 3], 0.0)
    }

    fn arg(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = self.phase;
        for (a, &xa) in x.iter().enumerate() {
            s += self.k[a] as f64 * xa;
        }
        for (a, &ya) in y.iter().enumerate() {
            s += self.l[a] as f64 * ya;
        }
        2.0 * PI * s
    }

    /// Analytic sup of `|D_x^α D_y^β term|`.
    pub fn derivative_sup(&self, alpha: &[usize], beta: &[usize]) -> f64 {
        let mut s = libm::fabs(self.amp);
        for (a, &o) in alpha.iter().enumerate() {
            s *= libm::pow(2.0 * PI * libm::fabs(self.k[a] as f64), o as f64);
        }
        for (a, &o) in beta.iter().enumerate() {
            s *= libm::pow(2.0 * PI * libm::fabs(self.l[a] as f64), o as f64);
        }
        s
    }

    /// Analytic sup of the Euclidean norm `|∇_y D_x^α term|`.
    pub fn y_gradient_sup(&self, alpha: &[usize], dim: usize) -> f64 {
        let lnorm = libm::sqrt(
            self.l[..dim]
                .iter()
                .map(|&l| (l as f64) * (l as f64))
                .sum::<f64>(),
        );
        self.derivative_sup(alpha, &[]) * 2.0 * PI * lnorm
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrigSeries {
    pub terms: Vec<TrigTerm>,
}

impl TrigSeries {
    pub fn new(terms: Vec<TrigTerm>) -> Self {
        Self { terms }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amp == 0.0)
    }

    /// True when no term depends on `y`.
    pub fn is_single_variable(&self) -> bool {
        self.terms.iter().all(|t| t.l == [0; 3])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(
            self.terms
                .iter()
                .map(|t| TrigTerm { amp: t.amp * factor, ..*t })
                .collect(),
        )
    }

    /// Value at `(x, y)`; pass an empty `y` for functions of `x` alone.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amp * libm::cos(t.arg(x, y)))
            .sum()
    }

    pub fn eval_x(&self, x: &[f64]) -> f64 {
        self.eval(x, &[])
    }

    /// Triangle-inequality bound on `sup |D_x^α D_y^β f|`, exact for one term.
    pub fn derivative_sup_bound(&self, alpha: &[usize], beta: &[usize]) -> f64 {
        self.terms.iter().map(|t| t.derivative_sup(alpha, beta)).sum()
    }

    /// Bound on `sup |∇_y D_x^α f|` (Euclidean norm of the `y` gradient).
    pub fn y_gradient_sup_bound(&self, alpha: &[usize], dim: usize) -> f64 {
        self.terms.iter().map(|t| t.y_gradient_sup(alpha, dim)).sum()
    }

    /// Largest frequency component in absolute value, over `k` and `l`.
    pub fn max_frequency(&self) -> i32 {
        self.terms
            .iter()
            .flat_map(|t| t.k.iter().chain(t.l.iter()))
            .map(|f| f.abs())
            .max()
            .unwrap_or(0)
    }
}
