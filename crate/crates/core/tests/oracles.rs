//! Monte-Carlo oracles: exact cases, statistical identities and
//! cross-checks with the grid solvers.

use std::f64::consts::PI;

use torus_mfg::hjb::solve_terminal_value;
use torus_mfg::mfg::{exploitability, solve_equilibrium, SolverOptions};
use torus_mfg::oracles::{
    coupled_paths_distance, feynman_kac_value, random_smooth_field, simulate_particles,
    verify_hamiltonian_decoupling,
};
use torus_mfg::{Density, Field, FieldFlow, KernelCost, McOptions, TorusGrid, TrigSeries, TrigTerm};

fn opts(n_samples: usize, n_steps: usize, seed: u64) -> McOptions {
    McOptions {
        n_samples,
        n_steps,
        seed,
        antithetic: false,
    }
}

#[test]
fn feynman_kac_is_exact_for_deterministic_integrands() {
    let g = TorusGrid::new(2, 8, 1.0, 10).unwrap();
    let zero = feynman_kac_value(&FieldFlow::zeros(g, 1), &Field::zeros(g, 1), 0.2, &[0.3, 0.9], &opts(200, 20, 1)).unwrap();
    assert_eq!(zero.estimate, 1.0);
    assert_eq!(zero.std_error, 0.0);

    let p = FieldFlow::from_fn(g, 1, |_, _, o| o[0] = 0.4);
    let c = feynman_kac_value(&p, &Field::zeros(g, 1), 0.25, &[0.1, 0.1], &opts(200, 30, 2)).unwrap();
    assert!((c.estimate - (0.4f64 * 0.75).exp()).abs() < 1e-14);
    assert_eq!(c.std_error, 0.0);
}

#[test]
fn antithetic_pairs_keep_the_mean_on_constant_potential() {
    let g = TorusGrid::new(1, 16, 1.0, 10).unwrap();
    let p = FieldFlow::from_fn(g, 1, |_, _, o| o[0] = -0.3);
    let plain = feynman_kac_value(&p, &Field::zeros(g, 1), 0.0, &[0.5], &opts(200, 20, 3)).unwrap();
    let anti = feynman_kac_value(&p, &Field::zeros(g, 1), 0.0, &[0.5], &McOptions { antithetic: true, ..opts(200, 20, 3) }).unwrap();
    assert_eq!(plain.estimate, anti.estimate);
}

#[test]
fn feynman_kac_agrees_with_backward_solver() {
    let g = TorusGrid::new(1, 64, 0.5, 100).unwrap();
    let p = FieldFlow::from_fn(g, 1, |_, x, o| o[0] = 0.3 * (2.0 * PI * x[0]).cos());
    let h = Field::zeros(g, 1);
    let w = solve_terminal_value(&p, &h).unwrap();
    let mc = feynman_kac_value(&p, &h, 0.0, &[0.25], &opts(20_000, 200, 4)).unwrap();
    let pde = w.eval(0.0, &[0.25]).unwrap()[0];
    assert!((mc.estimate - pde).abs() <= 3.0 * mc.std_error + 2e-3);
    // Comparison bounds from the sup norms of p and h.
    let tp = 0.5 * p.sup_norm();
    assert!(mc.estimate >= (-tp).exp() && mc.estimate <= tp.exp());
}

#[test]
fn estimates_do_not_depend_on_scheduling() {
    let g = TorusGrid::new(1, 32, 0.5, 20).unwrap();
    let p = FieldFlow::from_fn(g, 1, |t, x, o| o[0] = (2.0 * PI * x[0]).sin() * (1.0 + t));
    let h = Field::from_fn(g, |x| 0.2 * (2.0 * PI * x[0]).cos());
    let a = feynman_kac_value(&p, &h, 0.1, &[0.7], &opts(3000, 40, 9)).unwrap();
    let b = feynman_kac_value(&p, &h, 0.1, &[0.7], &opts(3000, 40, 9)).unwrap();
    assert_eq!(a, b);
    let c = feynman_kac_value(&p, &h, 0.1, &[0.7], &opts(3000, 40, 10)).unwrap();
    assert_ne!(a.estimate, c.estimate);
}

#[test]
fn brownian_displacement_has_variance_t() {
    let g = TorusGrid::new(2, 16, 1.0, 10).unwrap();
    let mu = Density::point_mass(g, g.flat_index(&[8, 8]));
    let run = simulate_particles(&FieldFlow::zeros(g, 2), &mu, &opts(20_000, 100, 5)).unwrap();
    assert!(run.positions_in_unit_cube);
    for k in [1, 5, 10] {
        for stats in &run.displacement[k] {
            let t = g.time(k);
            assert!((stats.variance - t).abs() <= 3.0 * stats.variance_se, "t = {t}: {stats:?}");
        }
    }
    assert!(run.density.masses().iter().all(|m| (m - 1.0).abs() < 1e-12));
}

#[test]
fn coupled_paths_with_equal_controls_coincide() {
    let g = TorusGrid::new(1, 32, 0.5, 10).unwrap();
    let v = random_smooth_field(g, 1, 0.5, 2);
    let rep = coupled_paths_distance(&v, &v, &opts(500, 50, 6)).unwrap();
    assert_eq!(rep.sup_diff_mean, 0.0);
    assert!(rep.slice_mean.iter().all(|&x| x == 0.0));
}

#[test]
fn constant_offset_separates_paths_quadratically_in_time() {
    let g = TorusGrid::new(2, 16, 0.5, 10).unwrap();
    let v1 = FieldFlow::zeros(g, 2);
    let offset = FieldFlow::from_fn(g, 2, |_, _, o| {
        o[0] = 0.3;
        o[1] = -0.4;
    });
    let v2 = v1.combine(1.0, &offset, 1.0).unwrap();
    let rep = coupled_paths_distance(&v1, &v2, &opts(200, 50, 7)).unwrap();
    for k in 0..=10 {
        let t = g.time(k);
        assert!((rep.slice_mean[k] - 0.25 * t * t).abs() < 1e-12);
    }
}

#[test]
fn halving_the_perturbation_quarters_the_coupling_distance() {
    let g = TorusGrid::new(1, 64, 0.5, 20).unwrap();
    let v = random_smooth_field(g, 3, 1.0, 2);
    let dv = random_smooth_field(g, 4, 0.5, 2);
    let full = coupled_paths_distance(&v, &v.combine(1.0, &dv, 1.0).unwrap(), &opts(4000, 100, 8)).unwrap();
    let half = coupled_paths_distance(&v, &v.combine(1.0, &dv, 0.5).unwrap(), &opts(4000, 100, 8)).unwrap();
    let ratio = half.sup_diff_mean / full.sup_diff_mean;
    assert!((0.2..=0.3).contains(&ratio), "ratio {ratio}");
}

#[test]
fn zero_cost_equilibrium_is_trivial_for_path_oracles() {
    let g = TorusGrid::new(1, 32, 0.5, 20).unwrap();
    let mu = Density::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos()).unwrap();
    let cost = KernelCost::zero();
    let eq = solve_equilibrium(&cost, &mu, &SolverOptions::default()).unwrap();
    let ham = verify_hamiltonian_decoupling(&eq, &cost, &opts(500, 40, 9)).unwrap();
    assert_eq!(ham.terminal_gap, 0.0);
    assert!(ham.martingale.iter().all(|m| m.residual == 0.0));

    let dv = random_smooth_field(g, 5, 0.3, 2);
    let rep = exploitability(&eq, &cost, &[FieldFlow::zeros(g, 1), dv], &opts(1000, 40, 10)).unwrap();
    assert_eq!(rep.entries[0].gap, 0.0);
    assert_eq!(rep.entries[0].std_error, 0.0);
    assert!(rep.entries[1].gap > 0.0);
    assert!(!rep.any_flagged);
}

#[test]
fn small_coupling_equilibrium_passes_path_checks() {
    let g = TorusGrid::new(1, 64, 0.5, 100).unwrap();
    let mu = Density::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos()).unwrap();
    let cost = KernelCost {
        p_bar: TrigSeries::new(vec![TrigTerm::new(0.1, [1, 0, 0], [-1, 0, 0], 0.0)]),
        ..KernelCost::zero()
    };
    let eq = solve_equilibrium(&cost, &mu, &SolverOptions::default()).unwrap();
    let ham = verify_hamiltonian_decoupling(&eq, &cost, &opts(2000, 200, 11)).unwrap();
    let dt2 = ham.interval * ham.interval;
    for m in &ham.martingale {
        assert!(m.residual <= 3.0 * m.std_error + dt2, "{m:?}");
    }
    let perturbations: Vec<FieldFlow> = (0..3).map(|s| random_smooth_field(g, 20 + s, 0.1, 2)).collect();
    let rep = exploitability(&eq, &cost, &perturbations, &opts(2000, 100, 12)).unwrap();
    assert!(!rep.any_flagged, "{rep:?}");
}
