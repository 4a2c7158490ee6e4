//! Kernel costs against closed forms and naive quadrature, and the a-priori
//! bounds they are expected to satisfy.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use torus_mfg::cost::{norm_budget, verify_modulus};
use torus_mfg::fpk::solve_initial_value;
use torus_mfg::measures::{slice_pair_distances, DensityFlow};
use torus_mfg::oracles::random_smooth_field;
use torus_mfg::{CostFunctional, Density, FieldFlow, KernelCost, TorusGrid, TrigSeries, TrigTerm};

fn demo_cost() -> KernelCost {
    KernelCost {
        p_bar: TrigSeries::new(vec![TrigTerm::new(0.1, [1, 0, 0], [-1, 0, 0], 0.0)]),
        ..KernelCost::zero()
    }
}

fn planar_cost() -> KernelCost {
    KernelCost::new(
        TrigSeries::new(vec![
            TrigTerm::new(0.05, [1, 0, 0], [-1, 0, 0], 0.0),
            TrigTerm::new(0.03, [0, 1, 0], [1, -1, 0], 0.25),
        ]),
        TrigSeries::new(vec![TrigTerm::new(0.02, [1, 1, 0], [0, 0, 0], 0.1)]),
        TrigSeries::new(vec![TrigTerm::new(0.01, [0, 1, 0], [0, -1, 0], 0.0)]),
        TrigSeries::zero(),
    )
}

/// Random positive flow `1 + a·f / |f|₀` from a smooth random field.
fn random_flow(grid: TorusGrid, seed: u64) -> DensityFlow {
    let f = random_smooth_field(grid, seed, 1.0, 3);
    let d = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let a = rng.random_range(0.1..0.9);
    let values = f.values().iter().step_by(d).map(|x| 1.0 + a * x).collect();
    DensityFlow::normalized(FieldFlow::from_values(grid, 1, values).unwrap()).unwrap()
}

#[test]
fn demo_kernel_matches_closed_form_convolution() {
    let g = TorusGrid::new(1, 64, 0.5, 4).unwrap();
    let mu = Density::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos()).unwrap();
    let rho = DensityFlow::constant(g, &mu).unwrap();
    let p = demo_cost().eval_p(&rho);
    for k in 0..g.slices() {
        for i in 0..g.nodes() {
            let expect = 0.025 * (2.0 * PI * g.coords(i)[0]).cos();
            assert!((p.slice(k)[i] - expect).abs() < 1e-15);
        }
    }
}

#[test]
fn factorised_sums_match_naive_quadrature() {
    let g = TorusGrid::new(2, 16, 1.0, 3).unwrap();
    let cost = planar_cost();
    let rho = random_flow(g, 4);
    let p = cost.eval_p(&rho);
    let h = cost.eval_h(&rho.terminal());
    let vol = g.cell_volume();
    for k in [0, 3] {
        for i in (0..g.nodes()).step_by(11) {
            let x = g.coords(i);
            let mut naive = cost.p_hat.eval_x(&x[..2]);
            for j in 0..g.nodes() {
                naive += cost.p_bar.eval(&x[..2], &g.coords(j)[..2]) * rho.slice(k)[j] * vol;
            }
            assert!((p.slice(k)[i] - naive).abs() < 1e-14);
            if k == 3 {
                let mut naive_h = 0.0;
                for j in 0..g.nodes() {
                    naive_h += cost.h_bar.eval(&x[..2], &g.coords(j)[..2]) * rho.slice(k)[j] * vol;
                }
                assert!((h.values()[i] - naive_h).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn coarse_rule_matches_fine_quadrature_for_smooth_densities() {
    // ρ ∝ exp(cos 2πy) is not band-limited; the rectangle rule still
    // converges spectrally, so N = 64 agrees with N = 512.
    let cost = demo_cost();
    let at = |n: usize| {
        let g = TorusGrid::new(1, n, 0.5, 2).unwrap();
        let mu = Density::from_fn(g, |x| (2.0 * PI * x[0]).cos().exp()).unwrap();
        let rho = DensityFlow::constant(g, &mu).unwrap();
        let p = cost.eval_p(&rho);
        p.field(0).interpolate(&[0.125])[0]
    };
    let coarse = at(64);
    let fine = at(512);
    assert!((coarse - fine).abs() < 1e-12, "{coarse} vs {fine}");
}

#[test]
fn uniform_density_annihilates_pure_frequency_kernels() {
    let g = TorusGrid::new(2, 8, 1.0, 2).unwrap();
    let cost = KernelCost {
        p_hat: TrigSeries::zero(),
        ..planar_cost()
    };
    let rho = DensityFlow::constant(g, &Density::uniform(g)).unwrap();
    assert!(cost.eval_p(&rho).sup_norm() < 1e-16);
    assert!(cost.eval_h(&Density::uniform(g)).sup_norm() < 1e-16);
}

#[test]
fn discrete_kappa_stays_below_analytic_kappa() {
    for (cost, d) in [(demo_cost(), 1), (planar_cost(), 2)] {
        let g = TorusGrid::new(d, 16, 1.0, 2).unwrap();
        let discrete = cost.kappa_bound(&g);
        let analytic = cost.kappa_analytic(d);
        assert!(discrete <= analytic * (1.0 + 1e-12), "{discrete} > {analytic}");
        assert!(discrete > 0.5 * analytic);
    }
}

#[test]
fn norm_budget_and_modulus_hold_on_random_pairs() {
    for (cost, d, n) in [(demo_cost(), 1, 64), (planar_cost(), 2, 16)] {
        let g = TorusGrid::new(d, n, 0.5, 8).unwrap();
        let kappa = cost.kappa_bound(&g);
        for pair in 0..50u64 {
            let a = random_flow(g, 2 * pair + 100);
            let b = random_flow(g, 2 * pair + 101);
            for rho in [&a, &b] {
                let budget = norm_budget(&cost.eval_p(rho), &cost.eval_h(&rho.terminal()), kappa);
                assert!(budget.holds, "d = {d}, pair {pair}: {budget:?}");
            }
            let m = verify_modulus(&cost, &a, &b).unwrap();
            assert!(m.holds, "d = {d}, pair {pair}: {m:?}");
            assert!(m.d1t > 0.0);
        }
    }
}

#[test]
fn density_independent_cost_ignores_the_flow() {
    let g = TorusGrid::new(1, 16, 1.0, 3).unwrap();
    let cost = KernelCost {
        p_hat: TrigSeries::new(vec![TrigTerm::new(0.3, [1, 0, 0], [0, 0, 0], 0.0)]),
        ..KernelCost::zero()
    };
    assert!(cost.is_density_independent());
    let a = cost.eval_p(&random_flow(g, 1));
    let b = cost.eval_p(&random_flow(g, 2));
    assert_eq!(a, b);
}

#[test]
fn forward_flows_are_half_holder_in_time() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for run in 0..6u64 {
        let d = 1 + (run % 2) as usize;
        let n = if d == 1 { 64 } else { 16 };
        let g = TorusGrid::new(d, n, 0.5, 20).unwrap();
        let amp = rng.random_range(0.1..2.0);
        let v = random_smooth_field(g, run, amp, 2);
        let mu = random_flow(g, run + 1000).initial();
        let (rho, _) = solve_initial_value(&v, &mu).unwrap();
        let bound = 1.0 + g.horizon().sqrt() * v.sup_norm();
        for (k, l, dist) in slice_pair_distances(&rho).unwrap() {
            let gap = (g.time(l) - g.time(k)).sqrt();
            assert!(dist <= bound * gap + 2.0 * g.dx(), "run {run}, slices {k}, {l}");
        }
    }
}
