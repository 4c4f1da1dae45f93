use std::time::Instant;
use ucopf_core::engine::{solve, Penalties, SolverOptions};
use ucopf_core::grid::parse_matpower;
use ucopf_core::scenario::{build_problem, default_profile, UcOverrides};

fn main() {
    let text = std::fs::read_to_string("cases/case9.m").unwrap();
    let grid = parse_matpower(&text).unwrap();
    let horizon: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let outer_cap: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let inner_cap: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(50);
    let ws: usize = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(50);
    let profile = default_profile(horizon).unwrap();
    let problem = build_problem(grid, &profile, &UcOverrides::default()).unwrap();
    let pen = Penalties { rho_pq: 5e3, rho_va: 1e4, rho_uc: 1e4, ..Default::default() };
    let opts = SolverOptions { outer_cap, inner_cap, warm_start_sweeps: ws, ..Default::default() };
    let t0 = Instant::now();
    match solve(&problem, &pen, &opts) {
        Ok(out) => {
            let r = &out.report;
            println!(
                "status {} outer {} total_inner {} warm {} primal {:.3e} z_inf {:.3e} obj {:.6e} in {:.1}s",
                r.status, r.outer_iterations, r.total_inner_iterations, r.warm_start_sweeps,
                r.primal_infeasibility, r.z_inf, r.objective, t0.elapsed().as_secs_f64()
            );
            for row in out.history.iter().step_by(10) {
                println!("  outer {} inner {} primal {:.3e} rz {:.3e} dual {:.3e} z {:.3e}",
                    row.outer, row.inner, row.primal_infeasibility, row.rz_inf, row.dual, row.z_inf);
            }
            println!("timing: {:?}", r.timing);
        }
        Err(e) => println!("ERROR after {:.1}s: {e}", t0.elapsed().as_secs_f64()),
    }
}
