//! Line kernel: the nonconvex per-branch subproblem.
//!
//! The branch optimizes four local variables (squared voltage magnitudes
//! and angles at each end). Voltage products `wR = sqrt(w_i w_j) cos(θ_i -
//! θ_j)` and `wI = sqrt(w_i w_j) sin(θ_i - θ_j)` satisfy the rank and angle
//! coupling identically, and the four flows are linear in `(w_i, w_j, wR,
//! wI)`. Consensus terms attract flows and voltages to their bus-side
//! duplicates; the two apparent-power limits are enforced by an inner
//! augmented-Lagrangian loop (multiplier updates, penalty growth factor 10,
//! at most 50 rounds) wrapped around the trust-region solver.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::error::Result;
use crate::grid::TwoPortAdmittance;
use crate::kernels::tron::{self, Objective, TrSolverConfig};

const THETA_BOUND: f64 = 2.0 * std::f64::consts::PI;

/// One branch subproblem. `(y, z)` pairs follow the row order (p from, q
/// from, p to, q to) and (from end, to end) for the voltage rows.
#[derive(Debug, Clone)]
pub struct LineProblem {
    pub adm: TwoPortAdmittance,
    pub w_from_lo: f64,
    pub w_from_hi: f64,
    pub w_to_lo: f64,
    pub w_to_hi: f64,
    pub rate_limit: f64,
    /// Bus-side flow duplicates.
    pub fbar: [f64; 4],
    pub yz_flow: [(f64, f64); 4],
    /// Bus-side voltage duplicates at each end.
    pub wbar: [f64; 2],
    pub yz_w: [(f64, f64); 2],
    pub rho_pq: f64,
    pub rho_va: f64,
    /// Multipliers of the two apparent-power limits, carried across sweeps.
    pub thermal_mu: [f64; 2],
    /// Warm start: (w_from, w_to, theta_from, theta_to).
    pub start: [f64; 4],
}

#[derive(Debug, Clone, Copy)]
pub struct LineKernelOutput {
    pub w_from: f64,
    pub w_to: f64,
    pub theta_from: f64,
    pub theta_to: f64,
    /// Flows in (p from, q from, p to, q to) order.
    pub flows: [f64; 4],
    pub thermal_mu: [f64; 2],
    /// False when the inner loop hit its cap with the limits still violated.
    pub thermal_ok: bool,
}

/// Flow matrix mapping `(w_i, w_j, wR, wI)` to the four flows.
fn flow_matrix(adm: &TwoPortAdmittance) -> Matrix4<f64> {
    Matrix4::new(
        adm.g_ff, 0.0, adm.g_ft, adm.b_ft, //
        -adm.b_ff, 0.0, -adm.b_ft, adm.g_ft, //
        0.0, adm.g_tt, adm.g_tf, -adm.b_tf, //
        0.0, -adm.b_tt, -adm.b_tf, -adm.g_tf,
    )
}

/// Flows implied by the voltage variables through the two-port model.
pub fn flows_of(adm: &TwoPortAdmittance, w_from: f64, w_to: f64, theta_diff: f64) -> [f64; 4] {
    let s = (w_from * w_to).sqrt();
    let u = Vector4::new(w_from, w_to, s * theta_diff.cos(), s * theta_diff.sin());
    let f = flow_matrix(adm) * u;
    [f[0], f[1], f[2], f[3]]
}

struct LineObjective<'a> {
    prob: &'a LineProblem,
    m: Matrix4<f64>,
    /// Effective consensus targets for the four flows.
    flow_target: [f64; 4],
    /// Effective consensus targets for the two voltage variables.
    w_target: [f64; 2],
    mu: [f64; 2],
    eta: f64,
}

impl<'a> LineObjective<'a> {
    fn new(prob: &'a LineProblem, mu: [f64; 2], eta: f64) -> Self {
        let mut flow_target = [0.0; 4];
        for k in 0..4 {
            let (y, z) = prob.yz_flow[k];
            flow_target[k] = prob.fbar[k] - z - y / prob.rho_pq;
        }
        let mut w_target = [0.0; 2];
        for k in 0..2 {
            let (y, z) = prob.yz_w[k];
            w_target[k] = prob.wbar[k] - z - y / prob.rho_va;
        }
        Self {
            prob,
            m: flow_matrix(&prob.adm),
            flow_target,
            w_target,
            mu,
            eta,
        }
    }

    /// `u(v)`, its Jacobian, and the flows.
    fn products(&self, v: &[f64]) -> (Vector4<f64>, Matrix4<f64>, Vector4<f64>) {
        let (wi, wj, ti, tj) = (v[0], v[1], v[2], v[3]);
        let s = (wi * wj).sqrt();
        let d = ti - tj;
        let wr = s * d.cos();
        let wim = s * d.sin();
        let u = Vector4::new(wi, wj, wr, wim);
        #[rustfmt::skip]
        let jac = Matrix4::new(
            1.0,             0.0,             0.0,  0.0,
            0.0,             1.0,             0.0,  0.0,
            wr / (2.0 * wi), wr / (2.0 * wj), -wim, wim,
            wim / (2.0 * wi), wim / (2.0 * wj), wr, -wr,
        );
        let f = self.m * u;
        (u, jac, f)
    }

    fn thermal_terms(&self, f: &Vector4<f64>) -> ([f64; 2], [f64; 2]) {
        let r2 = self.prob.rate_limit * self.prob.rate_limit;
        let c = [
            f[0] * f[0] + f[1] * f[1] - r2,
            f[2] * f[2] + f[3] * f[3] - r2,
        ];
        let alpha = [
            (self.eta * (c[0] + self.mu[0] / self.eta)).max(0.0),
            (self.eta * (c[1] + self.mu[1] / self.eta)).max(0.0),
        ];
        (c, alpha)
    }
}

impl Objective for LineObjective<'_> {
    fn dim(&self) -> usize {
        4
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (u, _, f) = self.products(x);
        let mut val = 0.0;
        for k in 0..4 {
            val += 0.5 * self.prob.rho_pq * (f[k] - self.flow_target[k]).powi(2);
        }
        for k in 0..2 {
            val += 0.5 * self.prob.rho_va * (u[k] - self.w_target[k]).powi(2);
        }
        let (c, _) = self.thermal_terms(&f);
        for k in 0..2 {
            let active = (c[k] + self.mu[k] / self.eta).max(0.0);
            val += 0.5 * self.eta * active * active;
        }
        val
    }

    fn eval(&self, x: &[f64], grad: &mut [f64], hess: &mut DMatrix<f64>) -> f64 {
        let (u, jac, f) = self.products(x);
        let (c, alpha) = self.thermal_terms(&f);

        // gradient and curvature in flow space
        let mut df = Vector4::zeros();
        let mut dff = Matrix4::zeros();
        for k in 0..4 {
            df[k] = self.prob.rho_pq * (f[k] - self.flow_target[k]);
            dff[(k, k)] = self.prob.rho_pq;
        }
        for side in 0..2 {
            let (a, b) = (2 * side, 2 * side + 1);
            if alpha[side] > 0.0 {
                df[a] += alpha[side] * 2.0 * f[a];
                df[b] += alpha[side] * 2.0 * f[b];
                dff[(a, a)] += self.eta * 4.0 * f[a] * f[a] + 2.0 * alpha[side];
                dff[(b, b)] += self.eta * 4.0 * f[b] * f[b] + 2.0 * alpha[side];
                dff[(a, b)] += self.eta * 4.0 * f[a] * f[b];
                dff[(b, a)] += self.eta * 4.0 * f[a] * f[b];
            }
        }

        // pull back to product space u = (w_i, w_j, wR, wI)
        let mut du = self.m.transpose() * df;
        let mut duu = self.m.transpose() * dff * self.m;
        for k in 0..2 {
            du[k] += self.prob.rho_va * (u[k] - self.w_target[k]);
            duu[(k, k)] += self.prob.rho_va;
        }

        // chain rule to v = (w_i, w_j, theta_i, theta_j)
        let gv = jac.transpose() * du;
        let mut hv = jac.transpose() * duu * jac;
        let (wi, wj) = (x[0], x[1]);
        let (wr, wim) = (u[2], u[3]);
        // second derivatives of wR and wI
        #[rustfmt::skip]
        let h3 = Matrix4::new(
            -wr / (4.0 * wi * wi), wr / (4.0 * wi * wj), -wim / (2.0 * wi), wim / (2.0 * wi),
            wr / (4.0 * wi * wj), -wr / (4.0 * wj * wj), -wim / (2.0 * wj), wim / (2.0 * wj),
            -wim / (2.0 * wi), -wim / (2.0 * wj), -wr, wr,
            wim / (2.0 * wi), wim / (2.0 * wj), wr, -wr,
        );
        #[rustfmt::skip]
        let h4 = Matrix4::new(
            -wim / (4.0 * wi * wi), wim / (4.0 * wi * wj), wr / (2.0 * wi), -wr / (2.0 * wi),
            wim / (4.0 * wi * wj), -wim / (4.0 * wj * wj), wr / (2.0 * wj), -wr / (2.0 * wj),
            wr / (2.0 * wi), wr / (2.0 * wj), -wim, wim,
            -wr / (2.0 * wi), -wr / (2.0 * wj), wim, -wim,
        );
        hv += h3 * du[2] + h4 * du[3];

        for i in 0..4 {
            grad[i] = gv[i];
            for j in 0..4 {
                hess[(i, j)] = hv[(i, j)];
            }
        }
        self.value(x)
    }
}

/// Solve one branch subproblem: inner augmented-Lagrangian rounds over the
/// two apparent-power limits around the trust-region solver.
pub fn line_kernel(prob: &LineProblem, cfg: &TrSolverConfig) -> Result<LineKernelOutput> {
    let lo = [prob.w_from_lo, prob.w_to_lo, -THETA_BOUND, -THETA_BOUND];
    let hi = [prob.w_from_hi, prob.w_to_hi, THETA_BOUND, THETA_BOUND];
    let mut mu = prob.thermal_mu;
    let mut eta = prob.rho_pq.max(1.0);
    let mut x = prob.start;
    for i in 0..4 {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
    let tol = cfg.grad_tol.max(1e-12);
    let mut best = x;
    let mut prev_viol = f64::INFINITY;
    let mut thermal_ok = false;
    for _round in 0..50 {
        let obj = LineObjective::new(prob, mu, eta);
        let r = tron::tron_solve(&obj, &lo, &hi, &x, cfg)?;
        x = [r.x[0], r.x[1], r.x[2], r.x[3]];
        best = x;
        let f = flows_of(&prob.adm, x[0], x[1], x[2] - x[3]);
        let r2 = prob.rate_limit * prob.rate_limit;
        let c = [f[0] * f[0] + f[1] * f[1] - r2, f[2] * f[2] + f[3] * f[3] - r2];
        let viol = c[0].max(c[1]).max(0.0);
        mu = [
            (mu[0] + eta * c[0]).max(0.0),
            (mu[1] + eta * c[1]).max(0.0),
        ];
        if viol <= tol {
            thermal_ok = true;
            break;
        }
        if viol > 0.25 * prev_viol {
            eta *= 10.0;
        }
        prev_viol = viol;
    }
    let x = best;
    let flows = flows_of(&prob.adm, x[0], x[1], x[2] - x[3]);
    Ok(LineKernelOutput {
        w_from: x[0],
        w_to: x[1],
        theta_from: x[2],
        theta_to: x[3],
        flows,
        thermal_mu: mu,
        thermal_ok,
    })
}
