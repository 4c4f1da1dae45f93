//! Variable blocks and the coupling-constraint layout.
//!
//! The solver state splits into the component-owned block `x` (generator
//! dispatch with slacks, line-local flows and voltage products, binary
//! commitment) and the duplicate block `x̄` (relaxed commitment copies,
//! bus-side power copies, bus voltage). Every coupling row ties entries of
//! `x` to entries of `x̄` and carries one artificial slack `z`, one inner
//! multiplier `y`, and one outer multiplier `λ`.
//!
//! Row schedule per period `t`:
//!
//! - per generator: 3 duplicate rows for (on, startup, shutdown); 4
//!   commitment-linked box rows for P and Q; 2 ramp rows (the ramp uses a
//!   local copy `p̂` of the previous-period dispatch so each `(t, g)`
//!   subproblem stays separable); 2 dispatch consensus rows; plus, for
//!   `t >= 2`, one ramp-copy row `p̂_t - p̄_{t-1} = 0` (at `t = 1` the copy
//!   is fixed to the given initial dispatch),
//! - per branch: 4 flow consensus rows and 2 voltage consensus rows (one
//!   per end against the bus voltage duplicate).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::ScheduleProblem;

/// Which penalty parameter a row uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PenaltyClass {
    /// Real/reactive power consensus (dispatch, flows, ramp copies).
    Pq,
    /// Voltage consensus.
    Va,
    /// Rows touching commitment variables or their duplicates.
    Uc,
}

/// Commitment variable slot within a `(t, g)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UcSlot {
    On,
    Su,
    Sd,
}

/// Flow slot within a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlowSlot {
    PFrom,
    QFrom,
    PTo,
    QTo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum End {
    From,
    To,
}

/// Row kinds, mirroring the schedule in the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowKind {
    UcDuplicate(UcSlot),
    PLo,
    PHi,
    QLo,
    QHi,
    RampDn,
    RampUp,
    RampCopy,
    GenConsensusP,
    GenConsensusQ,
    FlowConsensus(FlowSlot),
    VoltConsensus(End),
}

/// One coupling row: a kind plus the component and period it references.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CouplingRow {
    pub kind: RowKind,
    /// Zero-based period.
    pub t: usize,
    /// Generator index for generator rows, branch index for line rows.
    pub comp: usize,
    pub class: PenaltyClass,
}

/// Component-owned continuous block.
///
/// Generator entries are period-major over `(t, g)`; line entries over
/// `(t, l)`. Flows are stored explicitly and kept consistent with the
/// voltage parameterization by the line kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct OpfVars {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Local copy of the previous-period dispatch.
    pub p_hat: Vec<f64>,
    pub sl_p: Vec<f64>,
    pub su_p: Vec<f64>,
    pub sl_q: Vec<f64>,
    pub su_q: Vec<f64>,
    pub sl_r: Vec<f64>,
    pub su_r: Vec<f64>,
    pub f_p_from: Vec<f64>,
    pub f_q_from: Vec<f64>,
    pub f_p_to: Vec<f64>,
    pub f_q_to: Vec<f64>,
    /// Line-local squared voltage magnitudes at each end.
    pub w_from: Vec<f64>,
    pub w_to: Vec<f64>,
    /// Line-local voltage angles at each end.
    pub theta_from: Vec<f64>,
    pub theta_to: Vec<f64>,
}

impl OpfVars {
    pub fn zeros(horizon: usize, n_gens: usize, n_branches: usize) -> Self {
        let ng = horizon * n_gens;
        let nl = horizon * n_branches;
        Self {
            p: vec![0.0; ng],
            q: vec![0.0; ng],
            p_hat: vec![0.0; ng],
            sl_p: vec![0.0; ng],
            su_p: vec![0.0; ng],
            sl_q: vec![0.0; ng],
            su_q: vec![0.0; ng],
            sl_r: vec![0.0; ng],
            su_r: vec![0.0; ng],
            f_p_from: vec![0.0; nl],
            f_q_from: vec![0.0; nl],
            f_p_to: vec![0.0; nl],
            f_q_to: vec![0.0; nl],
            w_from: vec![0.0; nl],
            w_to: vec![0.0; nl],
            theta_from: vec![0.0; nl],
            theta_to: vec![0.0; nl],
        }
    }

    /// Largest magnitude over all entries.
    pub fn inf_norm(&self) -> f64 {
        [
            &self.p, &self.q, &self.p_hat, &self.sl_p, &self.su_p, &self.sl_q, &self.su_q,
            &self.sl_r, &self.su_r, &self.f_p_from, &self.f_q_from, &self.f_p_to, &self.f_q_to,
            &self.w_from, &self.w_to, &self.theta_from, &self.theta_to,
        ]
        .iter()
        .flat_map(|v| v.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// Binary commitment block, stored as 0.0/1.0 for residual arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct UcVars {
    pub on: Vec<f64>,
    pub su: Vec<f64>,
    pub sd: Vec<f64>,
}

impl UcVars {
    pub fn zeros(horizon: usize, n_gens: usize) -> Self {
        let n = horizon * n_gens;
        Self {
            on: vec![0.0; n],
            su: vec![0.0; n],
            sd: vec![0.0; n],
        }
    }
}

/// Duplicate block: relaxed commitment copies in [0,1], bus-side dispatch
/// and flow copies, and one voltage duplicate per bus.
#[derive(Debug, Clone, PartialEq)]
pub struct BarVars {
    pub on: Vec<f64>,
    pub su: Vec<f64>,
    pub sd: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Squared voltage magnitude per (t, bus).
    pub w: Vec<f64>,
    pub f_p_from: Vec<f64>,
    pub f_q_from: Vec<f64>,
    pub f_p_to: Vec<f64>,
    pub f_q_to: Vec<f64>,
}

impl BarVars {
    pub fn zeros(horizon: usize, n_gens: usize, n_buses: usize, n_branches: usize) -> Self {
        let ng = horizon * n_gens;
        let nb = horizon * n_buses;
        let nl = horizon * n_branches;
        Self {
            on: vec![0.0; ng],
            su: vec![0.0; ng],
            sd: vec![0.0; ng],
            p: vec![0.0; ng],
            q: vec![0.0; ng],
            w: vec![0.0; nb],
            f_p_from: vec![0.0; nl],
            f_q_from: vec![0.0; nl],
            f_p_to: vec![0.0; nl],
            f_q_to: vec![0.0; nl],
        }
    }
}

/// Immutable constraint layout with per-kind row index tables.
#[derive(Debug, Clone)]
pub struct Layout {
    pub horizon: usize,
    pub n_gens: usize,
    pub n_buses: usize,
    pub n_branches: usize,
    pub rows: Vec<CouplingRow>,
    /// (t,g) -> rows of the three commitment duplicates.
    pub uc_dup: Vec<[usize; 3]>,
    /// (t,g) -> [p-lo, p-hi, q-lo, q-hi].
    pub gen_box: Vec<[usize; 4]>,
    /// (t,g) -> [ramp-dn, ramp-up].
    pub ramp: Vec<[usize; 2]>,
    /// (t,g) -> ramp-copy row, absent in the first period.
    pub ramp_copy: Vec<Option<usize>>,
    /// (t,g) -> [p, q] consensus rows.
    pub gen_cons: Vec<[usize; 2]>,
    /// (t,l) -> flow consensus rows in FlowSlot order.
    pub flow_cons: Vec<[usize; 4]>,
    /// (t,l) -> [from-end, to-end] voltage consensus rows.
    pub volt_cons: Vec<[usize; 2]>,
    /// Branch endpoints as dense bus indices.
    pub branch_bus: Vec<(usize, usize)>,
}

impl Layout {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn tg(&self, t: usize, g: usize) -> usize {
        t * self.n_gens + g
    }

    #[inline]
    pub fn tl(&self, t: usize, l: usize) -> usize {
        t * self.n_branches + l
    }

    #[inline]
    pub fn tb(&self, t: usize, bus: usize) -> usize {
        t * self.n_buses + bus
    }
}

/// Build the coupling layout for a problem. The row count is a
/// deterministic function of the component counts and the horizon.
pub fn layout(problem: &ScheduleProblem) -> Layout {
    let horizon = problem.horizon;
    let ng = problem.n_gens();
    let nb = problem.n_buses();
    let nl = problem.n_branches();
    let mut rows = Vec::new();
    let mut uc_dup = vec![[0; 3]; horizon * ng];
    let mut gen_box = vec![[0; 4]; horizon * ng];
    let mut ramp = vec![[0; 2]; horizon * ng];
    let mut ramp_copy = vec![None; horizon * ng];
    let mut gen_cons = vec![[0; 2]; horizon * ng];
    let mut flow_cons = vec![[0; 4]; horizon * nl];
    let mut volt_cons = vec![[0; 2]; horizon * nl];

    let push = |rows: &mut Vec<CouplingRow>, kind, t, comp, class| -> usize {
        rows.push(CouplingRow { kind, t, comp, class });
        rows.len() - 1
    };

    for t in 0..horizon {
        for g in 0..ng {
            let k = t * ng + g;
            uc_dup[k] = [
                push(&mut rows, RowKind::UcDuplicate(UcSlot::On), t, g, PenaltyClass::Uc),
                push(&mut rows, RowKind::UcDuplicate(UcSlot::Su), t, g, PenaltyClass::Uc),
                push(&mut rows, RowKind::UcDuplicate(UcSlot::Sd), t, g, PenaltyClass::Uc),
            ];
            gen_box[k] = [
                push(&mut rows, RowKind::PLo, t, g, PenaltyClass::Uc),
                push(&mut rows, RowKind::PHi, t, g, PenaltyClass::Uc),
                push(&mut rows, RowKind::QLo, t, g, PenaltyClass::Uc),
                push(&mut rows, RowKind::QHi, t, g, PenaltyClass::Uc),
            ];
            ramp[k] = [
                push(&mut rows, RowKind::RampDn, t, g, PenaltyClass::Uc),
                push(&mut rows, RowKind::RampUp, t, g, PenaltyClass::Uc),
            ];
            if t >= 1 {
                ramp_copy[k] = Some(push(&mut rows, RowKind::RampCopy, t, g, PenaltyClass::Pq));
            }
            gen_cons[k] = [
                push(&mut rows, RowKind::GenConsensusP, t, g, PenaltyClass::Pq),
                push(&mut rows, RowKind::GenConsensusQ, t, g, PenaltyClass::Pq),
            ];
        }
        for l in 0..nl {
            let k = t * nl + l;
            flow_cons[k] = [
                push(&mut rows, RowKind::FlowConsensus(FlowSlot::PFrom), t, l, PenaltyClass::Pq),
                push(&mut rows, RowKind::FlowConsensus(FlowSlot::QFrom), t, l, PenaltyClass::Pq),
                push(&mut rows, RowKind::FlowConsensus(FlowSlot::PTo), t, l, PenaltyClass::Pq),
                push(&mut rows, RowKind::FlowConsensus(FlowSlot::QTo), t, l, PenaltyClass::Pq),
            ];
            volt_cons[k] = [
                push(&mut rows, RowKind::VoltConsensus(End::From), t, l, PenaltyClass::Va),
                push(&mut rows, RowKind::VoltConsensus(End::To), t, l, PenaltyClass::Va),
            ];
        }
    }

    let branch_bus = problem
        .grid
        .branches
        .iter()
        .map(|br| {
            (
                problem.grid.bus_index(br.from_bus).expect("validated"),
                problem.grid.bus_index(br.to_bus).expect("validated"),
            )
        })
        .collect();

    Layout {
        horizon,
        n_gens: ng,
        n_buses: nb,
        n_branches: nl,
        rows,
        uc_dup,
        gen_box,
        ramp,
        ramp_copy,
        gen_cons,
        flow_cons,
        volt_cons,
        branch_bus,
    }
}

impl Layout {
    /// The `A x + B x̄` part of one row (no artificial slack).
    pub fn row_coupling(
        &self,
        row: usize,
        problem: &ScheduleProblem,
        opf: &OpfVars,
        uc: &UcVars,
        bar: &BarVars,
    ) -> f64 {
        let r = &self.rows[row];
        let t = r.t;
        match r.kind {
            RowKind::UcDuplicate(slot) => {
                let k = self.tg(t, r.comp);
                match slot {
                    UcSlot::On => uc.on[k] - bar.on[k],
                    UcSlot::Su => uc.su[k] - bar.su[k],
                    UcSlot::Sd => uc.sd[k] - bar.sd[k],
                }
            }
            RowKind::PLo => {
                let k = self.tg(t, r.comp);
                opf.p[k] - opf.sl_p[k] - problem.grid.generators[r.comp].pmin * bar.on[k]
            }
            RowKind::PHi => {
                let k = self.tg(t, r.comp);
                opf.p[k] + opf.su_p[k] - problem.grid.generators[r.comp].pmax * bar.on[k]
            }
            RowKind::QLo => {
                let k = self.tg(t, r.comp);
                opf.q[k] - opf.sl_q[k] - problem.grid.generators[r.comp].qmin * bar.on[k]
            }
            RowKind::QHi => {
                let k = self.tg(t, r.comp);
                opf.q[k] + opf.su_q[k] - problem.grid.generators[r.comp].qmax * bar.on[k]
            }
            RowKind::RampDn => {
                let k = self.tg(t, r.comp);
                let uc_p = &problem.uc[r.comp];
                opf.p[k] - opf.p_hat[k] - opf.sl_r[k]
                    + uc_p.ramp_down * bar.on[k]
                    + uc_p.shutdown_ramp * bar.sd[k]
            }
            RowKind::RampUp => {
                let k = self.tg(t, r.comp);
                let uc_p = &problem.uc[r.comp];
                let on_prev = if t == 0 {
                    uc_p.initial_on as u8 as f64
                } else {
                    bar.on[self.tg(t - 1, r.comp)]
                };
                opf.p[k] - opf.p_hat[k] + opf.su_r[k]
                    - uc_p.ramp_up * on_prev
                    - uc_p.startup_ramp * bar.su[k]
            }
            RowKind::RampCopy => {
                let k = self.tg(t, r.comp);
                opf.p_hat[k] - bar.p[self.tg(t - 1, r.comp)]
            }
            RowKind::GenConsensusP => {
                let k = self.tg(t, r.comp);
                opf.p[k] - bar.p[k]
            }
            RowKind::GenConsensusQ => {
                let k = self.tg(t, r.comp);
                opf.q[k] - bar.q[k]
            }
            RowKind::FlowConsensus(slot) => {
                let k = self.tl(t, r.comp);
                match slot {
                    FlowSlot::PFrom => opf.f_p_from[k] - bar.f_p_from[k],
                    FlowSlot::QFrom => opf.f_q_from[k] - bar.f_q_from[k],
                    FlowSlot::PTo => opf.f_p_to[k] - bar.f_p_to[k],
                    FlowSlot::QTo => opf.f_q_to[k] - bar.f_q_to[k],
                }
            }
            RowKind::VoltConsensus(end) => {
                let k = self.tl(t, r.comp);
                let (bi, bj) = self.branch_bus[r.comp];
                match end {
                    End::From => opf.w_from[k] - bar.w[self.tb(t, bi)],
                    End::To => opf.w_to[k] - bar.w[self.tb(t, bj)],
                }
            }
        }
    }

    /// Full residual vector `r = A x + B x̄ + z`.
    pub fn residuals(
        &self,
        problem: &ScheduleProblem,
        opf: &OpfVars,
        uc: &UcVars,
        bar: &BarVars,
        z: &[f64],
    ) -> Result<Vec<f64>> {
        if z.len() != self.rows.len() {
            return Err(Error::Dimension(format!(
                "z has {} entries for {} rows",
                z.len(),
                self.rows.len()
            )));
        }
        Ok((0..self.rows.len())
            .map(|k| self.row_coupling(k, problem, opf, uc, bar) + z[k])
            .collect())
    }

    /// Maximum absolute coupling violation `max |A x + B x̄|`, evaluated in
    /// fixed row order.
    pub fn primal_infeasibility(
        &self,
        problem: &ScheduleProblem,
        opf: &OpfVars,
        uc: &UcVars,
        bar: &BarVars,
    ) -> f64 {
        let mut m = 0.0f64;
        for k in 0..self.rows.len() {
            m = m.max(self.row_coupling(k, problem, opf, uc, bar).abs());
        }
        m
    }
}

/// Total cost: quadratic generation cost plus commitment costs. The
/// constant cost term is charged per on-period so an off unit costs
/// nothing.
pub fn objective(problem: &ScheduleProblem, opf: &OpfVars, uc: &UcVars) -> f64 {
    let ng = problem.n_gens();
    let mut total = 0.0;
    for t in 0..problem.horizon {
        for g in 0..ng {
            let k = t * ng + g;
            let p = opf.p[k];
            total += problem.cost_c2[g] * p * p + problem.cost_c1[g] * p;
            let params = &problem.uc[g];
            total += params.op_cost * uc.on[k] + params.su_cost * uc.su[k] + params.sd_cost * uc.sd[k];
        }
    }
    total
}
