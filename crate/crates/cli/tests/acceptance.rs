//! Acceptance suite: twelve criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the lines reach the
//! `cargo test` output. Criteria listed in `KNOWN_RED` are reported but do
//! not fail the run unless `ACCEPTANCE_STRICT=1` is set; any other failure
//! exits with status 1.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use torus_mfg::cost::{norm_budget, verify_modulus};
use torus_mfg::fpk::solve_initial_value;
use torus_mfg::hjb::solve_terminal_value;
use torus_mfg::measures::{slice_pair_distances, w1_slices, DensityFlow};
use torus_mfg::mfg::{solve_equilibrium, Equilibrium};
use torus_mfg::nse::{assemble_nse_solution, time_reverse, NseSolution};
use torus_mfg::oracles::{
    exploitability, feynman_kac_value, random_smooth_field, simulate_particles, verify_hamiltonian_decoupling,
    McEstimate,
};
use torus_mfg::{CostFunctional, Density, Field, FieldFlow, KernelCost, McOptions, TorusGrid};
use torus_mfg_cli::commands::random_density_flow;
use torus_mfg_cli::config::RunConfig;

/// Criteria whose failure is analysed and expected at the pinned resolution.
const KNOWN_RED: [u32; 2] = [7, 11];

/// `C` in the martingale bound `3·SE + C·Δ²`.
const HAMILTONIAN_C: f64 = 1.0;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn load(name: &str) -> RunConfig {
    let path = repo_root().join("configs").join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn with_grid(cfg: &RunConfig, n: usize, m: usize) -> RunConfig {
    let mut c = cfg.clone();
    c.grid.n = n;
    c.grid.m = m;
    c
}

/// One forward density flow seen by the suite, for the conservation and
/// Hölder audits.
struct FlowRecord {
    label: String,
    rho: DensityFlow,
    v_sup: f64,
}

#[derive(Default)]
struct Audit {
    flows: Vec<FlowRecord>,
    /// `(label, worst |mass - 1|, clipped mass)` per forward solve or solver run.
    mass: Vec<(String, f64, f64)>,
    /// `(label, min w)` per backward solve or solver run.
    min_w: Vec<(String, f64)>,
}

struct Suite {
    demo: RunConfig,
    zero: RunConfig,
    equilibria: BTreeMap<(String, usize, usize), Equilibrium>,
    audit: Audit,
}

impl Suite {
    fn equilibrium(&mut self, which: &str, n: usize, m: usize) -> &Equilibrium {
        let key = (which.to_string(), n, m);
        if !self.equilibria.contains_key(&key) {
            let base = if which == "demo" { &self.demo } else { &self.zero };
            let cfg = with_grid(base, n, m);
            let eq = solve_equilibrium(&cfg.cost(), &cfg.initial_density().unwrap(), &cfg.solver_options(None))
                .unwrap_or_else(|e| panic!("{which} at N = {n}, M = {m}: {e}"));
            let label = format!("{which} N={n} M={m}");
            let d = &eq.diagnostics;
            self.audit.mass.push((label.clone(), d.worst_mass_error, d.worst_clipped_mass));
            self.audit.min_w.push((label.clone(), d.min_w));
            self.audit.flows.push(FlowRecord {
                label,
                rho: eq.rho.clone(),
                v_sup: eq.v.sup_norm(),
            });
            self.equilibria.insert(key.clone(), eq);
        }
        &self.equilibria[&key]
    }

    fn demo_cost(&self) -> KernelCost {
        self.demo.cost()
    }
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn fmt_orders(values: &[f64]) -> String {
    let o: Vec<String> = values.windows(2).map(|w| format!("{:.2}", order(w[0], w[1]))).collect();
    o.join(", ")
}

type Outcome = (bool, String);

fn hopf_cole(s: &mut Suite) -> Outcome {
    let mut res = Vec::new();
    for (n, m) in [(64, 100), (128, 400), (256, 1600)] {
        res.push(s.equilibrium("demo", n, m).diagnostics.hjb.interior.max_norm);
    }
    let orders_ok = res.windows(2).all(|w| order(w[0], w[1]) >= 1.8);
    let fine_ok = res[2] <= 5e-4;
    (
        orders_ok && fine_ok,
        format!(
            "HJB residual of u = -ln w: {:.3e}, {:.3e}, {:.3e}; orders {}",
            res[0],
            res[1],
            res[2],
            fmt_orders(&res)
        ),
    )
}

fn heat_decay(s: &mut Suite) -> Outcome {
    let g = TorusGrid::new(1, 128, 0.5, 200).unwrap();
    let mu = Density::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos()).unwrap();
    let (rho, rep) = solve_initial_value(&FieldFlow::zeros(g, 1), &mu).unwrap();
    s.audit.mass.push(("heat N=128 M=200".into(), rep.max_mass_error, rep.clipped_mass));
    s.audit.flows.push(FlowRecord {
        label: "heat N=128 M=200".into(),
        rho: rho.clone(),
        v_sup: 0.0,
    });
    let last = rho.slice(200);
    let amp = 2.0 / 128.0
        * last
            .iter()
            .enumerate()
            .map(|(i, r)| r * (2.0 * PI * i as f64 / 128.0).cos())
            .sum::<f64>();
    let exact = 0.5 * (-2.0 * PI * PI * 0.5f64).exp();
    let rel = (amp / exact - 1.0).abs();
    (rel <= 1e-3, format!("mode amplitude {amp:.10e} vs {exact:.10e}, relative error {rel:.2e}"))
}

fn constant_potential(s: &mut Suite) -> Outcome {
    let g = TorusGrid::new(1, 64, 1.0, 100).unwrap();
    let p = FieldFlow::from_fn(g, 1, |_, _, o| o[0] = 0.7);
    let w = solve_terminal_value(&p, &Field::zeros(g, 1)).unwrap();
    let min_w = w.values().iter().copied().fold(f64::INFINITY, f64::min);
    s.audit.min_w.push(("constant potential".into(), min_w));
    let exact = 0.7f64.exp();
    let rel = w.slice(0).iter().fold(0.0f64, |m, x| m.max((x / exact - 1.0).abs()));
    (
        rel <= 1e-6 && g.dt() <= 1e-2 / 0.7,
        format!("w(0) relative error {rel:.2e} at Δt = {}", g.dt()),
    )
}

fn feynman_kac(s: &mut Suite) -> Outcome {
    let seed = s.demo.oracles.seed;
    let eq = s.equilibrium("demo", 64, 100).clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let mut ok = true;
    let mut parts = Vec::new();
    for i in 0..5u64 {
        let t = rng.random_range(0.0..eq.grid().horizon());
        let x = [rng.random::<f64>()];
        let opts = McOptions {
            n_samples: 100_000,
            n_steps: 400,
            seed: seed + i,
            antithetic: false,
        };
        let mc = feynman_kac_value(&eq.p, &eq.h, t, &x, &opts).unwrap();
        let pde = eq.w.eval(t, &x).unwrap()[0];
        let diff = (mc.estimate - pde).abs();
        ok &= diff <= 3.0 * mc.std_error + 2e-3;
        parts.push(format!("{diff:.1e}/{:.1e}", mc.std_error));
    }
    (ok, format!("|MC - PDE| / SE at 5 points: {}", parts.join(", ")))
}

fn particles(s: &mut Suite) -> Outcome {
    let seed = s.zero.oracles.seed;
    let eq = s.equilibrium("zero", 64, 100).clone();
    let opts = McOptions {
        n_samples: 100_000,
        n_steps: 400,
        seed,
        antithetic: false,
    };
    let run = simulate_particles(&eq.v, &eq.mu, &opts).unwrap();
    let g = *eq.grid();
    let worst = (0..g.slices())
        .map(|k| w1_slices(&g, run.density.slice(k), eq.rho.slice(k)).unwrap().value)
        .fold(0.0, f64::max);
    (worst <= 0.02, format!("largest slice W1 {worst:.3e} over {} slices", g.slices()))
}

fn conservation(s: &mut Suite) -> Outcome {
    let mass = s.audit.mass.iter().map(|m| m.1).fold(0.0, f64::max);
    let clip = s.audit.mass.iter().map(|m| m.2).fold(0.0, f64::max);
    let min_w = s.audit.min_w.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    (
        mass <= 1e-12 && clip <= 1e-12 && min_w > 0.0,
        format!(
            "over {} forward and {} backward runs: mass error {mass:.1e}, clipped {clip:.1e}, min w {min_w:.4}",
            s.audit.mass.len(),
            s.audit.min_w.len()
        ),
    )
}

fn fixed_point(s: &mut Suite) -> Outcome {
    let tol = s.demo.solver.tol;
    let (theta, max_iter) = (s.demo.solver.theta, s.demo.solver.max_iter);
    let eq = s.equilibrium("demo", 64, 100);
    let d = &eq.diagnostics;
    let converged = d.residual_d1t <= 1e-6 && tol <= 1e-6 && d.history.len() <= 50 && theta == 0.5 && max_iter <= 50;
    let head = format!("{} iterations, d1T {:.2e}", d.history.len(), d.residual_d1t);
    let mut fpk = Vec::new();
    let mut mom = Vec::new();
    for (n, m) in [(64, 100), (128, 200), (256, 400)] {
        let d = &s.equilibrium("demo", n, m).diagnostics;
        fpk.push(d.fpk.interior.max_norm);
        mom.push(d.momentum.interior.max_norm);
    }
    let falling = |r: &[f64]| r.windows(2).all(|w| w[1] < w[0]);
    let ok = converged && fpk[0] <= 5e-3 && mom[0] <= 5e-3 && falling(&fpk) && falling(&mom);
    (
        ok,
        format!(
            "{head}; FPK residual {:.2e} -> {:.2e} -> {:.2e} (orders {}); momentum {:.2e} -> {:.2e} -> {:.2e} (orders {})",
            fpk[0],
            fpk[1],
            fpk[2],
            fmt_orders(&fpk),
            mom[0],
            mom[1],
            mom[2],
            fmt_orders(&mom)
        ),
    )
}

fn nash_gap(s: &mut Suite) -> Outcome {
    let o = s.demo.oracles.clone();
    let cost = s.demo_cost();
    let eq = s.equilibrium("demo", 64, 100).clone();
    let g = *eq.grid();
    let perturbations: Vec<FieldFlow> = (0..10u64)
        .map(|i| random_smooth_field(g, o.seed + 3000 + i, o.perturbation_amplitude, 2))
        .collect();
    let rep = exploitability(&eq, &cost, &perturbations, &o.exploitability.options(o.seed + 3)).unwrap();
    let worst = rep
        .entries
        .iter()
        .map(|e| e.gap / e.std_error.max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    (
        rep.entries.len() == 10 && !rep.any_flagged,
        format!("10 perturbations, smallest gap/SE {worst:.1}"),
    )
}

fn audits(s: &mut Suite) -> Outcome {
    let cost = s.demo_cost();
    let g = *s.equilibrium("demo", 64, 100).grid();
    let kappa = cost.kappa_bound(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(s.demo.oracles.seed + 2000);
    let mut budget_fail = 0;
    let mut modulus_fail = 0;
    let mut ratio = 0.0f64;
    for j in 0..50u64 {
        let (a1, a2) = (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
        let a = random_density_flow(g, 2 * j + 7000, a1).unwrap();
        let b = random_density_flow(g, 2 * j + 7001, a2).unwrap();
        for rho in [&a, &b] {
            budget_fail += usize::from(!norm_budget(&cost.eval_p(rho), &cost.eval_h(&rho.terminal()), kappa).holds);
        }
        let m = verify_modulus(&cost, &a, &b).unwrap();
        modulus_fail += usize::from(!m.holds);
        ratio = ratio.max(m.lhs / m.rhs);
    }
    let mut holder_fail = 0;
    let mut pairs = 0;
    let mut worst = 0.0f64;
    for f in &s.audit.flows {
        let g = *f.rho.grid();
        let coef = 1.0 + g.horizon().sqrt() * f.v_sup;
        for (k, l, dist) in slice_pair_distances(&f.rho).unwrap() {
            let bound = coef * (g.time(l) - g.time(k)).sqrt() + 2.0 * g.dx();
            pairs += 1;
            worst = worst.max(dist / bound);
            if dist > bound {
                holder_fail += 1;
                eprintln!("  Hölder bound violated on {} slices {k}, {l}", f.label);
            }
        }
    }
    (
        budget_fail == 0 && modulus_fail == 0 && holder_fail == 0,
        format!(
            "norm budget failures {budget_fail}/100, modulus failures {modulus_fail}/50 (largest lhs/rhs {ratio:.3}), \
             Hölder failures {holder_fail}/{pairs} over {} runs (largest ratio {worst:.3})",
            s.audit.flows.len()
        ),
    )
}

fn hamiltonian(s: &mut Suite) -> Outcome {
    let seed = s.demo.oracles.seed;
    let cost = s.demo_cost();
    let eq = s.equilibrium("demo", 64, 100).clone();
    let opts = McOptions {
        n_samples: 10_000,
        n_steps: 400,
        seed: seed + 2,
        antithetic: false,
    };
    let rep = verify_hamiltonian_decoupling(&eq, &cost, &opts).unwrap();
    let slack = HAMILTONIAN_C * rep.interval * rep.interval;
    let mut ok = rep.terminal_gap <= 3.0 * rep.terminal_gap_se + slack;
    let mut worst = 0.0f64;
    for m in &rep.martingale {
        ok &= m.residual <= 3.0 * m.std_error + slack;
        worst = worst.max(m.residual / (3.0 * m.std_error + slack));
    }
    (
        ok,
        format!(
            "terminal gap {:.1e}; {} martingale residuals, largest ratio to 3·SE + C·Δ² {worst:.3} (C = {HAMILTONIAN_C})",
            rep.terminal_gap,
            rep.martingale.len()
        ),
    )
}

fn nse(s: &mut Suite) -> Outcome {
    let cost = s.demo_cost();
    let mut reports: Vec<NseSolution> = Vec::new();
    for (n, m) in [(64, 100), (128, 200), (256, 400)] {
        let eq = s.equilibrium("demo", n, m).clone();
        reports.push(assemble_nse_solution(&eq, &cost).unwrap());
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for i in 0..4 {
        let r: Vec<f64> = reports.iter().map(|x| x.report.all()[i].max_norm).collect();
        let exact = r.iter().all(|&x| x <= 1e-13);
        let ord = r.windows(2).all(|w| order(w[0], w[1]) >= 1.8);
        ok &= r[0] <= 5e-3 && (exact || ord);
        let name = &reports[0].report.all()[i].name;
        if exact {
            parts.push(format!("{name} {:.1e} (exact)", r[0]));
        } else {
            parts.push(format!("{name} {:.2e} -> {:.2e} -> {:.2e} (orders {})", r[0], r[1], r[2], fmt_orders(&r)));
        }
    }
    let eq = s.equilibrium("demo", 64, 100);
    let involution = time_reverse(&time_reverse(&eq.rho)) == eq.rho
        && time_reverse(&time_reverse(&eq.v)) == eq.v
        && reports[0].rho == time_reverse(&eq.rho);
    ok &= involution;
    parts.push(format!("involution {}", if involution { "exact" } else { "BROKEN" }));
    (ok, parts.join("; "))
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(s: &mut Suite) -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = repo_root().join("configs/demo_small_coupling.toml");
    let mut trees = Vec::new();
    for (i, threads) in ["1", "4", "1"].iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let status = Command::new(env!("CARGO_BIN_EXE_torus-mfg"))
            .args(["--quiet", "--threads", threads, "--seed", "99", "solve"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "solve exited with {status}");
        trees.push(read_tree(&out));
    }
    let bundles_equal = trees.windows(2).all(|w| w[0] == w[1]);

    // The oracles are the parallel part; compare them across pool sizes.
    let eq = s.equilibrium("demo", 64, 100).clone();
    let opts = McOptions {
        n_samples: 5000,
        n_steps: 100,
        seed: 5,
        antithetic: true,
    };
    let estimates: Vec<(McEstimate, DensityFlow)> = [1, 2, 4]
        .iter()
        .map(|&n| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            pool.install(|| {
                (
                    feynman_kac_value(&eq.p, &eq.h, 0.1, &[0.3], &opts).unwrap(),
                    simulate_particles(&eq.v, &eq.mu, &opts).unwrap().density,
                )
            })
        })
        .collect();
    let oracles_equal = estimates.windows(2).all(|w| w[0] == w[1]);
    (
        bundles_equal && oracles_equal,
        format!(
            "bundles with --threads 1, 4, 1: {} ({} files); oracle estimates on 1, 2, 4 threads: {}",
            if bundles_equal { "bit-identical" } else { "DIFFER" },
            trees[0].len(),
            if oracles_equal { "bit-identical" } else { "DIFFER" }
        ),
    )
}

struct Criterion {
    id: u32,
    title: &'static str,
    /// Runtime limit in seconds, when the criterion has one.
    limit: Option<f64>,
    run: fn(&mut Suite) -> Outcome,
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut suite = Suite {
        demo: load("demo_small_coupling.toml"),
        zero: load("zero_cost.toml"),
        equilibria: BTreeMap::new(),
        audit: Audit::default(),
    };
    // Audits of every run go last so that they see all runs of the suite.
    let criteria = [
        Criterion { id: 1, title: "Hopf-Cole equivalence", limit: Some(60.0), run: hopf_cole },
        Criterion { id: 2, title: "analytic heat decay", limit: Some(5.0), run: heat_decay },
        Criterion { id: 3, title: "constant-potential HJB", limit: Some(5.0), run: constant_potential },
        Criterion { id: 4, title: "Feynman-Kac cross-check", limit: Some(120.0), run: feynman_kac },
        Criterion { id: 5, title: "particle/grid agreement", limit: Some(60.0), run: particles },
        Criterion { id: 7, title: "fixed point and PDE residuals", limit: Some(300.0), run: fixed_point },
        Criterion { id: 8, title: "Nash exploitability", limit: Some(180.0), run: nash_gap },
        Criterion { id: 10, title: "Hamiltonian decoupling", limit: Some(120.0), run: hamiltonian },
        Criterion { id: 11, title: "NSE assembly", limit: None, run: nse },
        Criterion { id: 12, title: "determinism", limit: None, run: determinism },
        Criterion { id: 6, title: "conservation and positivity", limit: None, run: conservation },
        Criterion { id: 9, title: "hypothesis audits", limit: None, run: audits },
    ];
    let mut lines = BTreeMap::new();
    let mut unexpected = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let (mut pass, mut detail) = (c.run)(&mut suite);
        let secs = start.elapsed().as_secs_f64();
        if let Some(limit) = c.limit {
            if secs > limit {
                pass = false;
                detail.push_str(&format!("; runtime {secs:.1} s exceeds {limit} s"));
            }
        }
        let known = KNOWN_RED.contains(&c.id);
        let status = match (pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        if !pass && (strict || !known) {
            unexpected.push(c.id);
        }
        let line = format!("criterion {:>2} {status:<12} {} [{secs:.1} s]: {detail}", c.id, c.title);
        println!("{line}");
        lines.insert(c.id, line);
    }
    println!("\nacceptance summary");
    for line in lines.values() {
        println!("{line}");
    }
    let passed = lines.values().filter(|l| l.contains(" PASS ")).count();
    println!("{passed} of {} criteria pass", lines.len());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
