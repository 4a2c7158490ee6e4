//! Time reversal of an equilibrium into the viscous compressible system.

use std::f64::consts::PI;

use torus_mfg::fpk::fpk_residual_field;
use torus_mfg::hjb::momentum_residual_field;
use torus_mfg::mfg::{solve_equilibrium, SolverOptions};
use torus_mfg::nse::{assemble_nse_solution, nse_continuity_residual, nse_momentum_residual, time_reverse};
use torus_mfg::{CostFunctional, Density, KernelCost, TorusGrid, TrigSeries, TrigTerm};

fn demo_cost() -> KernelCost {
    KernelCost {
        p_bar: TrigSeries::new(vec![TrigTerm::new(0.1, [1, 0, 0], [-1, 0, 0], 0.0)]),
        ..KernelCost::zero()
    }
}

#[test]
fn reversed_residuals_are_negated_forward_residuals() {
    let g = TorusGrid::new(1, 32, 0.5, 40).unwrap();
    let mu = Density::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos()).unwrap();
    let cost = demo_cost();
    let eq = solve_equilibrium(&cost, &mu, &SolverOptions::default()).unwrap();
    let rho_r = time_reverse(&eq.rho);
    let v_r = time_reverse(&eq.v);
    let p_r = cost.eval_p(&rho_r);
    assert_eq!(p_r, time_reverse(&eq.p));

    let cont = nse_continuity_residual(rho_r.flow(), &v_r).unwrap();
    let fpk = fpk_residual_field(eq.rho.flow(), &eq.v).unwrap();
    let mom = nse_momentum_residual(&v_r, &p_r).unwrap();
    let fwd = momentum_residual_field(&eq.v, &eq.p).unwrap();
    let m = g.steps();
    for k in 0..=m {
        for (a, b) in cont.slice(k).iter().zip(fpk.slice(m - k)) {
            assert!((a + b).abs() < 1e-12);
        }
        for (a, b) in mom.slice(k).iter().zip(fwd.slice(m - k)) {
            assert!((a + b).abs() < 1e-12);
        }
    }
}

#[test]
fn boundary_conditions_hold_to_rounding() {
    let g = TorusGrid::new(2, 16, 0.5, 20).unwrap();
    let mu = Density::from_fn(g, |x| 1.0 + 0.4 * (2.0 * PI * x[1]).cos()).unwrap();
    let cost = KernelCost {
        h_bar: TrigSeries::new(vec![TrigTerm::new(0.05, [0, 1, 0], [0, -1, 0], 0.0)]),
        ..demo_cost()
    };
    let eq = solve_equilibrium(&cost, &mu, &SolverOptions::default()).unwrap();
    let sol = assemble_nse_solution(&eq, &cost).unwrap();
    assert_eq!(sol.report.terminal_density.max_norm, 0.0);
    assert!(sol.report.initial_velocity.max_norm < 1e-12);
    assert!(sol.v.slice(0).iter().any(|&x| x != 0.0));
    assert_eq!(time_reverse(&sol.rho), eq.rho);
    assert_eq!(time_reverse(&sol.v), eq.v);
}
