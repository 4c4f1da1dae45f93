//! Two-level ADMM engine.
//!
//! The outer loop relaxes `z = 0` with an augmented Lagrangian (multiplier
//! `λ`, penalty `β`); each outer iteration runs inner Gauss-Seidel ADMM
//! sweeps over the blocks:
//!
//! 1. commitment block: one dynamic program per generator,
//! 2. continuous block: generator and line kernels, batched per component
//!    and period,
//! 3. relaxed commitment duplicates: one box QP per generator,
//! 4. bus-side duplicates: closed-form balance-constrained updates,
//! 5. artificial slack `z` (closed form per row) and inner multipliers `y`.
//!
//! Initialization follows a cold start (dispatch and voltages at bound
//! midpoints, flows from the initial voltages) plus a commitment warm
//! start: a relaxed all-on solve is thresholded and repaired to a feasible
//! schedule. Batches run on a worker pool; results are written back in
//! index order so reports are identical for any worker count.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulation::{self, BarVars, Layout, OpfVars, PenaltyClass, UcVars};
use crate::grid::BranchEnd;
use crate::kernels::bus::{bus_kernel, BusKernelInput, BusVar};
use crate::kernels::gen::{gen_kernel, GenKernelInput};
use crate::kernels::line::{flows_of, line_kernel, LineKernelOutput, LineProblem};
use crate::kernels::tron::TrSolverConfig;
use crate::kernels::ucbar::{self, ucbar_kernel, UcBarRow};
use crate::scenario::{warm_start_uc, ScheduleProblem};
use crate::ucdp::{self, StageCost};

/// Penalty parameters of the two-level scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Penalties {
    /// Power-consensus rows.
    pub rho_pq: f64,
    /// Voltage-consensus rows.
    pub rho_va: f64,
    /// Rows touching commitment variables.
    pub rho_uc: f64,
    /// Outer penalty growth factor.
    pub tau: f64,
    /// Outer penalty growth trigger: grow when `‖z‖ > theta * ‖z‖_prev`.
    pub theta: f64,
    /// Initial outer penalty; zero or negative means `max(rho)`.
    pub beta0: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for Penalties {
    fn default() -> Self {
        Self {
            rho_pq: 5e3,
            rho_va: 1e4,
            rho_uc: 1e4,
            tau: 6.0,
            theta: 0.8,
            beta0: 0.0,
            lambda_min: -1e12,
            lambda_max: 1e12,
        }
    }
}

impl Penalties {
    pub fn rho(&self, class: PenaltyClass) -> f64 {
        match class {
            PenaltyClass::Pq => self.rho_pq,
            PenaltyClass::Va => self.rho_va,
            PenaltyClass::Uc => self.rho_uc,
        }
    }

    pub fn beta_init(&self) -> f64 {
        if self.beta0 > 0.0 {
            self.beta0
        } else {
            self.rho_pq.max(self.rho_va).max(self.rho_uc)
        }
    }
}

/// Termination and effort knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Outer termination threshold on `‖z‖_inf`.
    pub outer_eps: f64,
    pub outer_cap: usize,
    /// Inner termination threshold for both the scaled primal residual and
    /// the penalty-scaled duplicate change.
    pub inner_tol: f64,
    pub inner_cap: usize,
    /// Projected-gradient tolerance of the component kernels.
    pub kernel_tol: f64,
    pub kernel_iter_cap: usize,
    /// Sweeps of the relaxed all-on solve feeding the commitment warm start.
    pub warm_start_sweeps: usize,
    /// Dispatch threshold separating on from off in the warm start.
    pub warm_start_threshold: f64,
    /// Worker threads for kernel batches; zero picks the runtime default.
    pub workers: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            outer_eps: 1e-3,
            outer_cap: 100,
            inner_tol: 1e-4,
            inner_cap: 1000,
            kernel_tol: 1e-8,
            kernel_iter_cap: 400,
            warm_start_sweeps: 200,
            warm_start_threshold: 1e-3,
            workers: 0,
        }
    }
}

/// All iterate data of the two-level scheme.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub opf: OpfVars,
    pub uc: UcVars,
    pub bar: BarVars,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
    pub beta: f64,
    /// Apparent-power-limit multipliers per (t, branch).
    pub thermal_mu: Vec<[f64; 2]>,
}

/// Closed-form minimizer of one row's share of the outer-inner Lagrangian.
pub fn z_update(lambda: f64, y: f64, rho: f64, beta: f64, coupling: f64) -> f64 {
    -(lambda + y + rho * coupling) / (beta + rho)
}

/// Inner multiplier ascent step.
pub fn y_update(y: f64, rho: f64, coupling: f64, z: f64) -> f64 {
    y + rho * (coupling + z)
}

/// Outer multiplier projection and conditional penalty growth.
pub fn outer_update(
    lambda: &[f64],
    beta: f64,
    z: &[f64],
    z_norm_now: f64,
    z_norm_prev: Option<f64>,
    pen: &Penalties,
) -> (Vec<f64>, f64) {
    let new_lambda = lambda
        .iter()
        .zip(z)
        .map(|(&l, &zv)| (l + beta * zv).clamp(pen.lambda_min, pen.lambda_max))
        .collect();
    let new_beta = match z_norm_prev {
        Some(prev) if z_norm_now > pen.theta * prev => pen.tau * beta,
        _ => beta,
    };
    (new_lambda, new_beta)
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timing {
    pub warm_start_s: f64,
    pub uc_dp_s: f64,
    pub gen_s: f64,
    pub line_s: f64,
    pub ucbar_s: f64,
    pub bus_s: f64,
    pub zy_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub status: String,
    pub objective: f64,
    pub primal_infeasibility: f64,
    pub z_inf: f64,
    pub z_two: f64,
    pub outer_iterations: usize,
    pub total_inner_iterations: usize,
    pub warm_start_sweeps: usize,
    pub z_inf_history: Vec<f64>,
    pub z_two_history: Vec<f64>,
    /// Commitment per period and generator.
    pub schedule: Vec<Vec<u8>>,
    /// Dispatch snapped into the commitment-consistent bounds.
    pub dispatch_p: Vec<Vec<f64>>,
    pub dispatch_q: Vec<Vec<f64>>,
    pub timing: Timing,
}

/// One line per inner sweep, for the history export.
#[derive(Debug, Clone, Serialize)]
pub struct HistoryRow {
    pub outer: usize,
    pub inner: usize,
    pub primal_infeasibility: f64,
    pub rz_inf: f64,
    pub dual: f64,
    pub z_inf: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub report: SolveReport,
    pub history: Vec<HistoryRow>,
}

struct Engine<'a> {
    problem: &'a ScheduleProblem,
    layout: Layout,
    pen: Penalties,
    opts: SolverOptions,
    pool: rayon::ThreadPool,
    timing: Timing,
}

/// Solve a schedule problem with the two-level ADMM.
pub fn solve(
    problem: &ScheduleProblem,
    penalties: &Penalties,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    let total_start = Instant::now();
    if penalties.rho_pq <= 0.0 || penalties.rho_va <= 0.0 || penalties.rho_uc <= 0.0 {
        return Err(Error::Validation("penalty parameters must be positive".into()));
    }
    let layout = formulation::layout(problem);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
    let mut engine = Engine {
        problem,
        layout,
        pen: penalties.clone(),
        opts: opts.clone(),
        pool,
        timing: Timing::default(),
    };
    let mut state = engine.cold_start();
    let mut history = Vec::new();

    // Relaxed all-on phase feeding the commitment warm start.
    let ws_start = Instant::now();
    let mut warm_sweeps = 0;
    if engine.opts.warm_start_sweeps > 0 {
        warm_sweeps =
            engine.inner_loop(&mut state, false, engine.opts.warm_start_sweeps, 0, &mut Vec::new())?;
    }
    let dispatch: Vec<f64> = state.opf.p.clone();
    let schedule = warm_start_uc(problem, &dispatch, engine.opts.warm_start_threshold)?;
    engine.apply_schedule(&mut state, &schedule);
    for v in state.z.iter_mut() {
        *v = 0.0;
    }
    for v in state.y.iter_mut() {
        *v = 0.0;
    }
    engine.timing.warm_start_s = ws_start.elapsed().as_secs_f64();

    // Outer augmented-Lagrangian loop.
    let mut z_inf_history = Vec::new();
    let mut z_two_history = Vec::new();
    let mut total_inner = 0;
    let mut outer_done = 0;
    let mut converged = false;
    let mut z_prev_norm: Option<f64> = None;
    for outer in 0..engine.opts.outer_cap {
        let sweeps = engine.inner_loop(&mut state, true, engine.opts.inner_cap, outer, &mut history)?;
        total_inner += sweeps;
        outer_done = outer + 1;
        let z_inf = inf_norm(&state.z);
        let z_two = state.z.iter().map(|v| v * v).sum::<f64>().sqrt();
        z_inf_history.push(z_inf);
        z_two_history.push(z_two);
        if z_inf <= engine.opts.outer_eps {
            converged = true;
            break;
        }
        let (lambda, beta) =
            outer_update(&state.lambda, state.beta, &state.z, z_inf, z_prev_norm, &engine.pen);
        state.lambda = lambda;
        state.beta = beta;
        z_prev_norm = Some(z_inf);
    }

    engine.timing.total_s = total_start.elapsed().as_secs_f64();
    let report = engine.report(
        &state,
        converged,
        outer_done,
        total_inner,
        warm_sweeps,
        z_inf_history,
        z_two_history,
    );
    Ok(SolveOutcome { report, history })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &a| m.max(a.abs()))
}

impl Engine<'_> {
    fn horizon(&self) -> usize {
        self.problem.horizon
    }

    /// Cold start: dispatch and voltage magnitudes at bound midpoints,
    /// zero angles, flows from the initial voltages, all units on.
    fn cold_start(&self) -> AdmmState {
        let p = self.problem;
        let grid = &p.grid;
        let horizon = self.horizon();
        let (ng, nb, nl) = (p.n_gens(), p.n_buses(), p.n_branches());
        let mut opf = OpfVars::zeros(horizon, ng, nl);
        let mut uc = UcVars::zeros(horizon, ng);
        let mut bar = BarVars::zeros(horizon, ng, nb, nl);

        let w_init: Vec<f64> = grid
            .buses
            .iter()
            .map(|b| (0.5 * (b.vmin + b.vmax)).powi(2))
            .collect();

        for t in 0..horizon {
            for g in 0..ng {
                let k = t * ng + g;
                let gen = &grid.generators[g];
                let params = &p.uc[g];
                opf.p[k] = 0.5 * gen.pmax;
                opf.q[k] = 0.5 * gen.qmax;
                opf.p_hat[k] = if t == 0 { p.initial_dispatch[g] } else { 0.5 * gen.pmax };
                opf.sl_p[k] = (opf.p[k] - gen.pmin).max(0.0);
                opf.su_p[k] = (gen.pmax - opf.p[k]).max(0.0);
                opf.sl_q[k] = (opf.q[k] - gen.qmin).max(0.0);
                opf.su_q[k] = (gen.qmax - opf.q[k]).max(0.0);
                opf.sl_r[k] = (opf.p[k] - opf.p_hat[k] + params.ramp_down).max(0.0);
                opf.su_r[k] = (params.ramp_up - (opf.p[k] - opf.p_hat[k])).max(0.0);
                uc.on[k] = 1.0;
                bar.on[k] = 1.0;
                bar.p[k] = opf.p[k];
                bar.q[k] = opf.q[k];
            }
            for (i, &w) in w_init.iter().enumerate() {
                bar.w[t * nb + i] = w;
            }
            for l in 0..nl {
                let k = t * nl + l;
                let (bi, bj) = self.layout.branch_bus[l];
                let (wi, wj) = (w_init[bi], w_init[bj]);
                opf.w_from[k] = wi;
                opf.w_to[k] = wj;
                let flows = flows_of(&grid.branches[l].adm, wi, wj, 0.0);
                opf.f_p_from[k] = flows[0];
                opf.f_q_from[k] = flows[1];
                opf.f_p_to[k] = flows[2];
                opf.f_q_to[k] = flows[3];
                bar.f_p_from[k] = flows[0];
                bar.f_q_from[k] = flows[1];
                bar.f_p_to[k] = flows[2];
                bar.f_q_to[k] = flows[3];
            }
        }

        let n_rows = self.layout.n_rows();
        AdmmState {
            opf,
            uc,
            bar,
            z: vec![0.0; n_rows],
            y: vec![0.0; n_rows],
            lambda: vec![0.0; n_rows],
            beta: self.pen.beta_init(),
            thermal_mu: vec![[0.0; 2]; horizon * nl],
        }
    }

    /// Install a commitment schedule into both the binary block and its
    /// duplicates.
    fn apply_schedule(&self, state: &mut AdmmState, schedule: &[u8]) {
        let ng = self.problem.n_gens();
        for g in 0..ng {
            let per_gen: Vec<u8> = (0..self.horizon()).map(|t| schedule[t * ng + g]).collect();
            let (su, sd) = ucdp::infer_transitions(&per_gen, self.problem.uc[g].initial_on);
            for t in 0..self.horizon() {
                let k = t * ng + g;
                state.uc.on[k] = per_gen[t] as f64;
                state.uc.su[k] = su[t] as f64;
                state.uc.sd[k] = sd[t] as f64;
                state.bar.on[k] = state.uc.on[k];
                state.bar.su[k] = state.uc.su[k];
                state.bar.sd[k] = state.uc.sd[k];
            }
        }
    }

    /// Run inner sweeps until the tolerance or the cap. Returns the number
    /// of sweeps executed. `uc_active` switches the commitment rows (and
    /// the DP / duplicate-commitment steps) on or off; the relaxed
    /// warm-start phase runs with them off and `z` frozen at zero.
    fn inner_loop(
        &mut self,
        state: &mut AdmmState,
        uc_active: bool,
        cap: usize,
        outer: usize,
        history: &mut Vec<HistoryRow>,
    ) -> Result<usize> {
        let mut primal_window: Vec<f64> = Vec::new();
        for sweep in 0..cap {
            let bar_before = state.bar.clone();
            if uc_active {
                let t0 = Instant::now();
                self.step_uc_dp(state)?;
                self.timing.uc_dp_s += t0.elapsed().as_secs_f64();
            }
            let t0 = Instant::now();
            self.step_gen(state, uc_active)?;
            self.timing.gen_s += t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            self.step_line(state)?;
            self.timing.line_s += t0.elapsed().as_secs_f64();
            if uc_active {
                let t0 = Instant::now();
                self.step_ucbar(state)?;
                self.timing.ucbar_s += t0.elapsed().as_secs_f64();
            }
            let t0 = Instant::now();
            self.step_bus(state)?;
            self.timing.bus_s += t0.elapsed().as_secs_f64();

            let t0 = Instant::now();
            let coupling = self.coupling_vector(state);
            let mut rz_inf = 0.0f64;
            let mut primal = 0.0f64;
            for (k, row) in self.layout.rows.iter().enumerate() {
                let active = uc_active || row.class != PenaltyClass::Uc;
                if !active {
                    continue;
                }
                primal = primal.max(coupling[k].abs());
                let rho = self.pen.rho(row.class);
                if uc_active {
                    state.z[k] = z_update(state.lambda[k], state.y[k], rho, state.beta, coupling[k]);
                }
                state.y[k] = y_update(state.y[k], rho, coupling[k], state.z[k]);
                rz_inf = rz_inf.max((coupling[k] + state.z[k]).abs());
            }
            self.timing.zy_s += t0.elapsed().as_secs_f64();

            // penalty-scaled duplicate change (dual residual surrogate),
            // measured relative to the multiplier magnitude
            let dual = self.dual_residual(&bar_before, &state.bar);
            let scale = state.opf.inf_norm().max(1.0);
            let dual_scale = inf_norm(&state.y).max(1.0);

            if uc_active {
                history.push(HistoryRow {
                    outer,
                    inner: sweep,
                    primal_infeasibility: primal,
                    rz_inf,
                    dual,
                    z_inf: inf_norm(&state.z),
                    objective: formulation::objective(self.problem, &state.opf, &state.uc),
                });
            }

            primal_window.push(primal);
            if primal_window.len() > 200 {
                let old = primal_window[primal_window.len() - 201];
                if primal > 10.0 * old && primal > self.opts.inner_tol {
                    return Err(Error::Numerical(format!(
                        "divergence detected at outer {outer} sweep {sweep}: primal {primal:.3e} vs {old:.3e} 200 sweeps ago"
                    )));
                }
            }

            if rz_inf <= self.opts.inner_tol * scale && dual <= self.opts.inner_tol * dual_scale {
                return Ok(sweep + 1);
            }
        }
        Ok(cap)
    }

    /// Step 1: exact commitment update, one DP per generator.
    fn step_uc_dp(&self, state: &mut AdmmState) -> Result<()> {
        let ng = self.problem.n_gens();
        let horizon = self.horizon();
        let results: Result<Vec<Vec<u8>>> = self.pool.install(|| {
            (0..ng)
                .into_par_iter()
                .map(|g| {
                    let params = &self.problem.uc[g];
                    let costs = StageCost::from_fn(horizon, |t, prev, cur| {
                        let k = t * ng + g;
                        let rows = &self.layout.uc_dup[k];
                        let ubar = [state.bar.on[k], state.bar.su[k], state.bar.sd[k]];
                        let y = [state.y[rows[0]], state.y[rows[1]], state.y[rows[2]]];
                        let z = [state.z[rows[0]], state.z[rows[1]], state.z[rows[2]]];
                        ucdp::al_stage_cost(
                            prev,
                            cur,
                            params.op_cost,
                            params.su_cost,
                            params.sd_cost,
                            ubar,
                            y,
                            z,
                            self.pen.rho_uc,
                        )
                    });
                    ucdp::dp_solve(&costs, params)
                        .map(|sol| sol.schedule)
                        .map_err(|e| Error::Numerical(format!("commitment DP for generator {g}: {e}")))
                })
                .collect()
        });
        let schedules = results?;
        for (g, schedule) in schedules.iter().enumerate() {
            let (su, sd) = ucdp::infer_transitions(schedule, self.problem.uc[g].initial_on);
            for t in 0..horizon {
                let k = t * ng + g;
                state.uc.on[k] = schedule[t] as f64;
                state.uc.su[k] = su[t] as f64;
                state.uc.sd[k] = sd[t] as f64;
            }
        }
        Ok(())
    }

    /// Step 2a: generator kernels over all (period, generator) pairs.
    fn step_gen(&self, state: &mut AdmmState, uc_active: bool) -> Result<()> {
        let ng = self.problem.n_gens();
        let horizon = self.horizon();
        let cfg = TrSolverConfig {
            grad_tol: self.opts.kernel_tol,
            max_iter: self.opts.kernel_iter_cap,
            initial_radius: 1.0,
        };
        let results: Result<Vec<_>> = self.pool.install(|| {
            (0..horizon * ng)
                .into_par_iter()
                .map(|k| {
                    let t = k / ng;
                    let g = k % ng;
                    let gen = &self.problem.grid.generators[g];
                    let params = &self.problem.uc[g];
                    let lay = &self.layout;
                    let rho_uc = if uc_active { self.pen.rho_uc } else { 0.0 };
                    let zero = (0.0, 0.0);
                    let yz = |row: usize| (state.y[row], state.z[row]);
                    let input = GenKernelInput {
                        c2: self.problem.cost_c2[g],
                        c1: self.problem.cost_c1[g],
                        pmin: gen.pmin,
                        pmax: gen.pmax,
                        qmin: gen.qmin,
                        qmax: gen.qmax,
                        ramp_up: params.ramp_up,
                        ramp_down: params.ramp_down,
                        startup_ramp: params.startup_ramp,
                        shutdown_ramp: params.shutdown_ramp,
                        ubar_on: state.bar.on[k],
                        ubar_su: state.bar.su[k],
                        ubar_sd: state.bar.sd[k],
                        ubar_on_prev: if t == 0 {
                            params.initial_on as u8 as f64
                        } else {
                            state.bar.on[(t - 1) * ng + g]
                        },
                        pbar: state.bar.p[k],
                        qbar: state.bar.q[k],
                        pbar_prev: if t >= 1 { Some(state.bar.p[(t - 1) * ng + g]) } else { None },
                        p_hat_fixed: if t == 0 { Some(self.problem.initial_dispatch[g]) } else { None },
                        yz_p_lo: if uc_active { yz(lay.gen_box[k][0]) } else { zero },
                        yz_p_hi: if uc_active { yz(lay.gen_box[k][1]) } else { zero },
                        yz_q_lo: if uc_active { yz(lay.gen_box[k][2]) } else { zero },
                        yz_q_hi: if uc_active { yz(lay.gen_box[k][3]) } else { zero },
                        yz_ramp_dn: if uc_active { yz(lay.ramp[k][0]) } else { zero },
                        yz_ramp_up: if uc_active { yz(lay.ramp[k][1]) } else { zero },
                        yz_cons_p: yz(lay.gen_cons[k][0]),
                        yz_cons_q: yz(lay.gen_cons[k][1]),
                        yz_ramp_copy: lay.ramp_copy[k].map(yz),
                        rho_uc,
                        rho_pq: self.pen.rho_pq,
                        start: [
                            state.opf.p[k],
                            state.opf.q[k],
                            state.opf.p_hat[k],
                            state.opf.sl_p[k],
                            state.opf.su_p[k],
                            state.opf.sl_q[k],
                            state.opf.su_q[k],
                            state.opf.sl_r[k],
                            state.opf.su_r[k],
                        ],
                    };
                    gen_kernel(&input, &cfg)
                        .map(|(out, _)| out)
                        .map_err(|e| Error::Numerical(format!("generator kernel (t {t}, g {g}): {e}")))
                })
                .collect()
        });
        for (k, out) in results?.into_iter().enumerate() {
            state.opf.p[k] = out.p;
            state.opf.q[k] = out.q;
            state.opf.p_hat[k] = out.p_hat;
            state.opf.sl_p[k] = out.sl_p;
            state.opf.su_p[k] = out.su_p;
            state.opf.sl_q[k] = out.sl_q;
            state.opf.su_q[k] = out.su_q;
            state.opf.sl_r[k] = out.sl_r;
            state.opf.su_r[k] = out.su_r;
        }
        Ok(())
    }

    /// Step 2b: line kernels over all (period, branch) pairs.
    fn step_line(&self, state: &mut AdmmState) -> Result<()> {
        let nl = self.problem.n_branches();
        if nl == 0 {
            return Ok(());
        }
        let nb = self.problem.n_buses();
        let horizon = self.horizon();
        let cfg = TrSolverConfig {
            grad_tol: self.opts.kernel_tol,
            max_iter: self.opts.kernel_iter_cap,
            initial_radius: 1.0,
        };
        let results: Result<Vec<LineKernelOutput>> = self.pool.install(|| {
            (0..horizon * nl)
                .into_par_iter()
                .map(|k| {
                    let t = k / nl;
                    let l = k % nl;
                    let branch = &self.problem.grid.branches[l];
                    let (bi, bj) = self.layout.branch_bus[l];
                    let bus_i = &self.problem.grid.buses[bi];
                    let bus_j = &self.problem.grid.buses[bj];
                    let fc = &self.layout.flow_cons[k];
                    let vc = &self.layout.volt_cons[k];
                    let prob = LineProblem {
                        adm: branch.adm,
                        w_from_lo: bus_i.vmin * bus_i.vmin,
                        w_from_hi: bus_i.vmax * bus_i.vmax,
                        w_to_lo: bus_j.vmin * bus_j.vmin,
                        w_to_hi: bus_j.vmax * bus_j.vmax,
                        rate_limit: branch.rate_limit,
                        fbar: [
                            state.bar.f_p_from[k],
                            state.bar.f_q_from[k],
                            state.bar.f_p_to[k],
                            state.bar.f_q_to[k],
                        ],
                        yz_flow: [
                            (state.y[fc[0]], state.z[fc[0]]),
                            (state.y[fc[1]], state.z[fc[1]]),
                            (state.y[fc[2]], state.z[fc[2]]),
                            (state.y[fc[3]], state.z[fc[3]]),
                        ],
                        wbar: [state.bar.w[t * nb + bi], state.bar.w[t * nb + bj]],
                        yz_w: [
                            (state.y[vc[0]], state.z[vc[0]]),
                            (state.y[vc[1]], state.z[vc[1]]),
                        ],
                        rho_pq: self.pen.rho_pq,
                        rho_va: self.pen.rho_va,
                        thermal_mu: state.thermal_mu[k],
                        start: [
                            state.opf.w_from[k],
                            state.opf.w_to[k],
                            state.opf.theta_from[k],
                            state.opf.theta_to[k],
                        ],
                    };
                    line_kernel(&prob, &cfg)
                        .map_err(|e| Error::Numerical(format!("line kernel (t {t}, l {l}): {e}")))
                })
                .collect()
        });
        for (k, out) in results?.into_iter().enumerate() {
            state.opf.w_from[k] = out.w_from;
            state.opf.w_to[k] = out.w_to;
            state.opf.theta_from[k] = out.theta_from;
            state.opf.theta_to[k] = out.theta_to;
            state.opf.f_p_from[k] = out.flows[0];
            state.opf.f_q_from[k] = out.flows[1];
            state.opf.f_p_to[k] = out.flows[2];
            state.opf.f_q_to[k] = out.flows[3];
            state.thermal_mu[k] = out.thermal_mu;
        }
        Ok(())
    }

    /// Step 3: duplicate-commitment box QPs, one per generator.
    fn step_ucbar(&self, state: &mut AdmmState) -> Result<()> {
        let ng = self.problem.n_gens();
        let horizon = self.horizon();
        let results: Result<Vec<Vec<f64>>> = self.pool.install(|| {
            (0..ng)
                .into_par_iter()
                .map(|g| {
                    let mut rows: Vec<UcBarRow> = Vec::with_capacity(9 * horizon);
                    let gen = &self.problem.grid.generators[g];
                    let params = &self.problem.uc[g];
                    let rho = self.pen.rho_uc;
                    for t in 0..horizon {
                        let k = t * ng + g;
                        let dup = &self.layout.uc_dup[k];
                        let u = [state.uc.on[k], state.uc.su[k], state.uc.sd[k]];
                        let idx = [ucbar::on(t), ucbar::su(t), ucbar::sd(t)];
                        for v in 0..3 {
                            rows.push(UcBarRow {
                                coeffs: vec![(idx[v], -1.0)],
                                constant: u[v] + state.z[dup[v]],
                                y: state.y[dup[v]],
                                rho,
                            });
                        }
                        let gb = &self.layout.gen_box[k];
                        let p = state.opf.p[k];
                        let q = state.opf.q[k];
                        rows.push(UcBarRow {
                            coeffs: vec![(ucbar::on(t), -gen.pmin)],
                            constant: p - state.opf.sl_p[k] + state.z[gb[0]],
                            y: state.y[gb[0]],
                            rho,
                        });
                        rows.push(UcBarRow {
                            coeffs: vec![(ucbar::on(t), -gen.pmax)],
                            constant: p + state.opf.su_p[k] + state.z[gb[1]],
                            y: state.y[gb[1]],
                            rho,
                        });
                        rows.push(UcBarRow {
                            coeffs: vec![(ucbar::on(t), -gen.qmin)],
                            constant: q - state.opf.sl_q[k] + state.z[gb[2]],
                            y: state.y[gb[2]],
                            rho,
                        });
                        rows.push(UcBarRow {
                            coeffs: vec![(ucbar::on(t), -gen.qmax)],
                            constant: q + state.opf.su_q[k] + state.z[gb[3]],
                            y: state.y[gb[3]],
                            rho,
                        });
                        let ramp = &self.layout.ramp[k];
                        let dp = p - state.opf.p_hat[k];
                        rows.push(UcBarRow {
                            coeffs: vec![
                                (ucbar::on(t), params.ramp_down),
                                (ucbar::sd(t), params.shutdown_ramp),
                            ],
                            constant: dp - state.opf.sl_r[k] + state.z[ramp[0]],
                            y: state.y[ramp[0]],
                            rho,
                        });
                        let mut coeffs = vec![(ucbar::su(t), -params.startup_ramp)];
                        let mut constant = dp + state.opf.su_r[k] + state.z[ramp[1]];
                        if t >= 1 {
                            coeffs.push((ucbar::on(t - 1), -params.ramp_up));
                        } else {
                            constant -= params.ramp_up * params.initial_on as u8 as f64;
                        }
                        rows.push(UcBarRow {
                            coeffs,
                            constant,
                            y: state.y[ramp[1]],
                            rho,
                        });
                    }
                    let start: Vec<f64> = (0..horizon)
                        .flat_map(|t| {
                            let k = t * ng + g;
                            [state.bar.on[k], state.bar.su[k], state.bar.sd[k]]
                        })
                        .collect();
                    ucbar_kernel(horizon, &rows, &start, 1e-8, 60 * horizon.max(4))
                        .map(|sol| sol.values)
                        .map_err(|e| Error::Numerical(format!("duplicate commitment kernel (g {g}): {e}")))
                })
                .collect()
        });
        for (g, values) in results?.into_iter().enumerate() {
            for t in 0..horizon {
                let k = t * ng + g;
                state.bar.on[k] = values[ucbar::on(t)];
                state.bar.su[k] = values[ucbar::su(t)];
                state.bar.sd[k] = values[ucbar::sd(t)];
            }
        }
        Ok(())
    }

    /// Step 4: closed-form bus updates over all (period, bus) pairs.
    fn step_bus(&self, state: &mut AdmmState) -> Result<()> {
        let nb = self.problem.n_buses();
        let ng = self.problem.n_gens();
        let nl = self.problem.n_branches();
        let horizon = self.horizon();
        let rho_pq = self.pen.rho_pq;
        let rho_va = self.pen.rho_va;
        let results: Result<Vec<Vec<f64>>> = self.pool.install(|| {
            (0..horizon * nb)
                .into_par_iter()
                .map(|kb| {
                    let t = kb / nb;
                    let i = kb % nb;
                    let bus = &self.problem.grid.buses[i];
                    let gens = &self.problem.grid.gens_at_bus[i];
                    let ends = &self.problem.grid.branches_at_bus[i];
                    let mut vars: Vec<BusVar> = Vec::with_capacity(2 * gens.len() + 2 * ends.len() + 1);
                    for &g in gens {
                        let k = t * ng + g;
                        let rows = &self.layout.gen_cons[k];
                        // dispatch duplicate: consensus with the generator,
                        // plus the next period's ramp-copy attraction
                        let mut weight = rho_pq;
                        let mut wt =
                            rho_pq * (state.opf.p[k] + state.z[rows[0]] + state.y[rows[0]] / rho_pq);
                        if t + 1 < horizon {
                            let k_next = (t + 1) * ng + g;
                            if let Some(rc) = self.layout.ramp_copy[k_next] {
                                weight += rho_pq;
                                wt += rho_pq
                                    * (state.opf.p_hat[k_next] + state.z[rc] + state.y[rc] / rho_pq);
                            }
                        }
                        vars.push(BusVar {
                            weight,
                            target: wt / weight,
                            coef_p: 1.0,
                            coef_q: 0.0,
                        });
                        vars.push(BusVar {
                            weight: rho_pq,
                            target: state.opf.q[k] + state.z[rows[1]] + state.y[rows[1]] / rho_pq,
                            coef_p: 0.0,
                            coef_q: 1.0,
                        });
                    }
                    for &(l, end) in ends {
                        let k = t * nl + l;
                        let fc = &self.layout.flow_cons[k];
                        let (pf, qf, prow, qrow) = match end {
                            BranchEnd::From => {
                                (state.opf.f_p_from[k], state.opf.f_q_from[k], fc[0], fc[1])
                            }
                            BranchEnd::To => (state.opf.f_p_to[k], state.opf.f_q_to[k], fc[2], fc[3]),
                        };
                        vars.push(BusVar {
                            weight: rho_pq,
                            target: pf + state.z[prow] + state.y[prow] / rho_pq,
                            coef_p: -1.0,
                            coef_q: 0.0,
                        });
                        vars.push(BusVar {
                            weight: rho_pq,
                            target: qf + state.z[qrow] + state.y[qrow] / rho_pq,
                            coef_p: 0.0,
                            coef_q: -1.0,
                        });
                    }
                    // voltage duplicate: attracted by every incident line
                    // end; an isolated bus keeps its previous value
                    let mut weight = 0.0;
                    let mut wt = 0.0;
                    for &(l, end) in ends {
                        let k = t * nl + l;
                        let vc = &self.layout.volt_cons[k];
                        let (wside, row) = match end {
                            BranchEnd::From => (state.opf.w_from[k], vc[0]),
                            BranchEnd::To => (state.opf.w_to[k], vc[1]),
                        };
                        weight += rho_va;
                        wt += rho_va * (wside + state.z[row] + state.y[row] / rho_va);
                    }
                    if weight == 0.0 {
                        weight = rho_va;
                        wt = rho_va * state.bar.w[kb];
                    }
                    vars.push(BusVar {
                        weight,
                        target: wt / weight,
                        coef_p: -bus.gs,
                        coef_q: bus.bs,
                    });
                    let input = BusKernelInput {
                        volt_idx: vars.len() - 1,
                        vars,
                        volt_lo: bus.vmin * bus.vmin,
                        volt_hi: bus.vmax * bus.vmax,
                        rhs: [self.problem.demand_p(t, i), self.problem.demand_q(t, i)],
                    };
                    bus_kernel(&input)
                        .map_err(|e| Error::Numerical(format!("bus kernel (t {t}, bus {i}): {e}")))
                })
                .collect()
        });
        for (kb, values) in results?.into_iter().enumerate() {
            let t = kb / nb;
            let i = kb % nb;
            let gens = &self.problem.grid.gens_at_bus[i];
            let ends = &self.problem.grid.branches_at_bus[i];
            let mut pos = 0;
            for &g in gens {
                let k = t * ng + g;
                state.bar.p[k] = values[pos];
                state.bar.q[k] = values[pos + 1];
                pos += 2;
            }
            for &(l, end) in ends {
                let k = t * nl + l;
                match end {
                    BranchEnd::From => {
                        state.bar.f_p_from[k] = values[pos];
                        state.bar.f_q_from[k] = values[pos + 1];
                    }
                    BranchEnd::To => {
                        state.bar.f_p_to[k] = values[pos];
                        state.bar.f_q_to[k] = values[pos + 1];
                    }
                }
                pos += 2;
            }
            state.bar.w[kb] = values[pos];
        }
        Ok(())
    }

    fn coupling_vector(&self, state: &AdmmState) -> Vec<f64> {
        (0..self.layout.n_rows())
            .map(|k| self.layout.row_coupling(k, self.problem, &state.opf, &state.uc, &state.bar))
            .collect()
    }

    /// Penalty-scaled infinity norm of the duplicate-block change.
    fn dual_residual(&self, before: &BarVars, after: &BarVars) -> f64 {
        let mut m = 0.0f64;
        let pairs: [(&[f64], &[f64], f64); 10] = [
            (&before.on, &after.on, self.pen.rho_uc),
            (&before.su, &after.su, self.pen.rho_uc),
            (&before.sd, &after.sd, self.pen.rho_uc),
            (&before.p, &after.p, self.pen.rho_pq),
            (&before.q, &after.q, self.pen.rho_pq),
            (&before.w, &after.w, self.pen.rho_va),
            (&before.f_p_from, &after.f_p_from, self.pen.rho_pq),
            (&before.f_q_from, &after.f_q_from, self.pen.rho_pq),
            (&before.f_p_to, &after.f_p_to, self.pen.rho_pq),
            (&before.f_q_to, &after.f_q_to, self.pen.rho_pq),
        ];
        for (a, b, rho) in pairs {
            for (x, y) in a.iter().zip(b) {
                m = m.max(rho * (x - y).abs());
            }
        }
        m
    }

    #[allow(clippy::too_many_arguments)]
    fn report(
        &self,
        state: &AdmmState,
        converged: bool,
        outer: usize,
        total_inner: usize,
        warm_sweeps: usize,
        z_inf_history: Vec<f64>,
        z_two_history: Vec<f64>,
    ) -> SolveReport {
        let ng = self.problem.n_gens();
        let horizon = self.horizon();
        let mut schedule = Vec::with_capacity(horizon);
        let mut dispatch_p = Vec::with_capacity(horizon);
        let mut dispatch_q = Vec::with_capacity(horizon);
        // dispatch is snapped into the commitment-consistent box so the
        // reported operating point honors the reported schedule
        let mut snapped = state.opf.clone();
        for t in 0..horizon {
            let mut su = Vec::with_capacity(ng);
            let mut sp = Vec::with_capacity(ng);
            let mut sq = Vec::with_capacity(ng);
            for g in 0..ng {
                let k = t * ng + g;
                let on = state.uc.on[k] > 0.5;
                let gen = &self.problem.grid.generators[g];
                let (plo, phi) = if on { (gen.pmin, gen.pmax) } else { (0.0, 0.0) };
                let (qlo, qhi) = if on { (gen.qmin, gen.qmax) } else { (0.0, 0.0) };
                snapped.p[k] = state.opf.p[k].clamp(plo, phi);
                snapped.q[k] = state.opf.q[k].clamp(qlo, qhi);
                su.push(on as u8);
                sp.push(snapped.p[k]);
                sq.push(snapped.q[k]);
            }
            schedule.push(su);
            dispatch_p.push(sp);
            dispatch_q.push(sq);
        }
        let objective = formulation::objective(self.problem, &snapped, &state.uc);
        let primal = self
            .layout
            .primal_infeasibility(self.problem, &state.opf, &state.uc, &state.bar);
        SolveReport {
            converged,
            status: if converged { "converged".into() } else { "iteration-cap".into() },
            objective,
            primal_infeasibility: primal,
            z_inf: inf_norm(&state.z),
            z_two: state.z.iter().map(|v| v * v).sum::<f64>().sqrt(),
            outer_iterations: outer,
            total_inner_iterations: total_inner,
            warm_start_sweeps: warm_sweeps,
            z_inf_history,
            z_two_history,
            schedule,
            dispatch_p,
            dispatch_q,
            timing: self.timing.clone(),
        }
    }
}

/// Full two-level augmented Lagrangian value at a state, for invariant
/// checks and diagnostics.
pub fn lagrangian(
    problem: &ScheduleProblem,
    layout: &Layout,
    state: &AdmmState,
    pen: &Penalties,
) -> f64 {
    let mut val = formulation::objective(problem, &state.opf, &state.uc);
    for (k, row) in layout.rows.iter().enumerate() {
        let r = layout.row_coupling(k, problem, &state.opf, &state.uc, &state.bar) + state.z[k];
        let rho = pen.rho(row.class);
        val += state.y[k] * r + 0.5 * rho * r * r;
        val += state.lambda[k] * state.z[k] + 0.5 * state.beta * state.z[k] * state.z[k];
    }
    val
}

/// Angle assignment from the converged line-local angles: a spanning-tree
/// walk from the reference bus accumulating angle differences. Report-only.
pub fn recover_angles(problem: &ScheduleProblem, opf: &OpfVars, t: usize) -> Vec<f64> {
    let grid = &problem.grid;
    let nb = grid.n_buses();
    let nl = grid.n_branches();
    let mut theta = vec![f64::NAN; nb];
    theta[grid.reference_bus] = 0.0;
    let mut stack = vec![grid.reference_bus];
    while let Some(i) = stack.pop() {
        for &(l, end) in &grid.branches_at_bus[i] {
            let k = t * nl + l;
            let diff = opf.theta_from[k] - opf.theta_to[k];
            let from = grid.bus_index(grid.branches[l].from_bus).expect("validated");
            let to = grid.bus_index(grid.branches[l].to_bus).expect("validated");
            let other = match end {
                BranchEnd::From => to,
                BranchEnd::To => from,
            };
            if theta[other].is_nan() {
                theta[other] = match end {
                    BranchEnd::From => theta[i] - diff,
                    BranchEnd::To => theta[i] + diff,
                };
                stack.push(other);
            }
        }
    }
    for v in theta.iter_mut() {
        if v.is_nan() {
            *v = 0.0;
        }
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_matpower;
    use crate::scenario::{build_problem, DemandProfile, UcOverride, UcOverrides};
    use crate::ucdp::check_schedule;

    /// One bus, one generator, no branches.
    const SINGLE: &str = "\
mpc.baseMVA = 100;
mpc.bus = [
 1 3 60 12 0 0 1 1 0 138 1 1.1 0.9;
];
mpc.gen = [
 1 0 0 80 -80 1 100 1 120 20 0 0 0 0 0 0 0 0 0 0 0;
];
mpc.branch = [
];
mpc.gencost = [
 2 100 50 3 0.2 10 40;
];
";

    fn single_bus_problem() -> ScheduleProblem {
        let grid = parse_matpower(SINGLE).unwrap();
        let profile = DemandProfile { factors: vec![1.0], discount: 1.0 };
        let overrides = UcOverrides {
            defaults: UcOverride {
                min_up: Some(1),
                min_down: Some(1),
                forced_on: Some(1),
                initial_dispatch: Some(0.6),
                ..Default::default()
            },
            ..Default::default()
        };
        build_problem(grid, &profile, &overrides).unwrap()
    }

    fn fast_opts() -> SolverOptions {
        SolverOptions {
            outer_cap: 30,
            inner_cap: 200,
            warm_start_sweeps: 50,
            workers: 1,
            ..Default::default()
        }
    }

    fn small_penalties() -> Penalties {
        Penalties {
            rho_pq: 1e3,
            rho_va: 1e3,
            rho_uc: 1e3,
            ..Default::default()
        }
    }

    #[test]
    fn z_update_closed_form_examples() {
        assert_eq!(z_update(0.0, 0.0, 2.0, 4.0, 0.0), 0.0);
        let z = z_update(1.0, 2.0, 2.0, 4.0, 0.5);
        assert!((z + 2.0 / 3.0).abs() < 1e-15, "{z}");
        // beta -> infinity pushes z to zero
        let z = z_update(1.0, 2.0, 2.0, 1e18, 0.5);
        assert!(z.abs() < 1e-15);
    }

    #[test]
    fn z_update_is_the_row_minimizer() {
        // perturbing the closed form increases the row's share of L
        let (lambda, y, rho, beta, r) = (0.7, -1.3, 3.0, 9.0, 0.4);
        let row_l =
            |z: f64| lambda * z + 0.5 * beta * z * z + y * (r + z) + 0.5 * rho * (r + z) * (r + z);
        let z = z_update(lambda, y, rho, beta, r);
        for dz in [-1e-6, 1e-6] {
            assert!(row_l(z + dz) > row_l(z), "dz {dz}");
        }
    }

    #[test]
    fn y_update_accumulates_linearly() {
        assert_eq!(y_update(1.5, 2.0, 0.0, 0.0), 1.5);
        assert!((y_update(0.0, 2.0, 0.06, 0.04) - 0.2).abs() < 1e-15);
        let once = y_update(0.0, 3.0, 0.1, 0.0);
        let twice = y_update(once, 3.0, 0.1, 0.0);
        assert!((twice - 2.0 * once).abs() < 1e-15);
    }

    #[test]
    fn outer_update_examples() {
        let pen = Penalties::default();
        // ||z|| shrank only to 0.9 of the previous value: beta grows by tau
        let (_, beta) = outer_update(&[0.0], 1e4, &[0.0], 0.9, Some(1.0), &pen);
        assert_eq!(beta, 6e4);
        // sufficient decrease keeps beta
        let (_, beta) = outer_update(&[0.0], 1e4, &[0.0], 0.7, Some(1.0), &pen);
        assert_eq!(beta, 1e4);
        // first outer iteration never grows beta
        let (_, beta) = outer_update(&[0.0], 1e4, &[0.0], 5.0, None, &pen);
        assert_eq!(beta, 1e4);
        // z = 0 leaves lambda unchanged
        let (lambda, _) = outer_update(&[3.0], 1e4, &[0.0], 0.0, Some(1.0), &pen);
        assert_eq!(lambda, vec![3.0]);
        // projection onto the lambda box
        let tight = Penalties { lambda_max: 10.0, ..Penalties::default() };
        let (lambda, _) = outer_update(&[5.0], 1e4, &[1.0], 1.0, Some(2.0), &tight);
        assert_eq!(lambda, vec![10.0]);
    }

    #[test]
    fn single_bus_converges_to_demand() {
        let problem = single_bus_problem();
        // the unique feasible consensus point is reachable to tight
        // tolerance, so ask for much more than the defaults
        let opts = SolverOptions {
            outer_eps: 1e-7,
            outer_cap: 60,
            inner_tol: 1e-7,
            inner_cap: 400,
            kernel_tol: 1e-10,
            warm_start_sweeps: 50,
            workers: 1,
            ..Default::default()
        };
        let out = solve(&problem, &small_penalties(), &opts).unwrap();
        assert!(out.report.converged, "status {}", out.report.status);
        // unique feasible consensus point: dispatch equals demand
        assert!(
            (out.report.dispatch_p[0][0] - 0.6).abs() < 1e-5,
            "p {}",
            out.report.dispatch_p[0][0]
        );
        assert!(
            out.report.primal_infeasibility <= 1e-6,
            "inf {}",
            out.report.primal_infeasibility
        );
        assert_eq!(out.report.schedule[0][0], 1);
    }

    #[test]
    fn gauss_seidel_steps_do_not_increase_the_lagrangian() {
        let problem = single_bus_problem();
        let pen = small_penalties();
        let layout = formulation::layout(&problem);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let engine = Engine {
            problem: &problem,
            layout: formulation::layout(&problem),
            pen: pen.clone(),
            opts: fast_opts(),
            pool,
            timing: Timing::default(),
        };
        let mut state = engine.cold_start();
        // move the component side off the fixed point so steps have work to
        // do, then prime with one sweep: monotonicity holds once every block
        // sits inside its own feasible set (the bus block on its balance
        // manifold, the commitment block inside its constraint set)
        state.opf.p[0] = 1.1;
        state.opf.q[0] = 0.1;
        engine.step_bus(&mut state).unwrap();
        for _ in 0..4 {
            let tol = |v: f64| 1e-8 * (1.0 + v.abs());
            let before = lagrangian(&problem, &layout, &state, &pen);
            engine.step_uc_dp(&mut state).unwrap();
            let after_dp = lagrangian(&problem, &layout, &state, &pen);
            assert!(after_dp <= before + tol(before), "dp {before} -> {after_dp}");
            engine.step_gen(&mut state, true).unwrap();
            let after_gen = lagrangian(&problem, &layout, &state, &pen);
            assert!(after_gen <= after_dp + tol(after_dp), "gen {after_dp} -> {after_gen}");
            engine.step_ucbar(&mut state).unwrap();
            let after_ucbar = lagrangian(&problem, &layout, &state, &pen);
            assert!(after_ucbar <= after_gen + tol(after_gen), "ucbar {after_gen} -> {after_ucbar}");
            engine.step_bus(&mut state).unwrap();
            let after_bus = lagrangian(&problem, &layout, &state, &pen);
            assert!(after_bus <= after_ucbar + tol(after_ucbar), "bus {after_ucbar} -> {after_bus}");
            // closed-form z step
            let coupling = engine.coupling_vector(&state);
            for (k, row) in engine.layout.rows.iter().enumerate() {
                state.z[k] =
                    z_update(state.lambda[k], state.y[k], pen.rho(row.class), state.beta, coupling[k]);
            }
            let after_z = lagrangian(&problem, &layout, &state, &pen);
            assert!(after_z <= after_bus + tol(after_bus), "z {after_bus} -> {after_z}");
            for (k, row) in engine.layout.rows.iter().enumerate() {
                state.y[k] = y_update(state.y[k], pen.rho(row.class), coupling[k], state.z[k]);
            }
        }
    }

    #[test]
    fn schedule_is_feasible_and_accounting_consistent() {
        let problem = single_bus_problem();
        let out = solve(&problem, &small_penalties(), &fast_opts()).unwrap();
        for g in 0..problem.n_gens() {
            let sched: Vec<u8> =
                (0..problem.horizon).map(|t| out.report.schedule[t][g]).collect();
            check_schedule(&sched, &problem.uc[g]).unwrap();
        }
        // iteration accounting: reported totals match the history rows
        assert_eq!(out.report.total_inner_iterations, out.history.len());
        assert_eq!(out.report.outer_iterations, out.report.z_inf_history.len());
    }

    #[test]
    fn determinism_across_worker_counts() {
        let problem = single_bus_problem();
        let pen = small_penalties();
        let mut o1 = fast_opts();
        o1.workers = 1;
        let mut o4 = fast_opts();
        o4.workers = 4;
        let a = solve(&problem, &pen, &o1).unwrap();
        let b = solve(&problem, &pen, &o4).unwrap();
        assert_eq!(a.report.objective, b.report.objective);
        assert_eq!(a.report.dispatch_p, b.report.dispatch_p);
        assert_eq!(a.report.z_inf_history, b.report.z_inf_history);
    }

    #[test]
    fn rejects_nonpositive_penalties() {
        let problem = single_bus_problem();
        let pen = Penalties { rho_pq: 0.0, ..Default::default() };
        assert!(solve(&problem, &pen, &fast_opts()).is_err());
    }
}
