//! Generator kernel: exact minimizer of the augmented Lagrangian restricted
//! to one generator in one period.
//!
//! Nine variables: dispatch `p`, `q`, the previous-period dispatch copy
//! `p̂`, and six slacks for the commitment-linked box and ramp rows. The
//! problem is a strictly convex quadratic over a box and is handed to the
//! trust-region solver.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::kernels::boxqp::BoxQpProblem;
use crate::kernels::tron::{self, TrSolverConfig, TronStatus};

/// Accumulate one augmented-Lagrangian row `y*(a'x + c) + rho/2 (a'x + c)^2`
/// into a quadratic `0.5 x'Qx + b'x`.
pub fn accumulate_al_row(
    q: &mut DMatrix<f64>,
    b: &mut DVector<f64>,
    coeffs: &[(usize, f64)],
    constant: f64,
    y: f64,
    rho: f64,
) {
    for &(i, ai) in coeffs {
        for &(j, aj) in coeffs {
            q[(i, j)] += rho * ai * aj;
        }
        b[i] += (y + rho * constant) * ai;
    }
}

/// Variable order inside the kernel.
pub const P: usize = 0;
pub const Q: usize = 1;
pub const P_HAT: usize = 2;
pub const SL_P: usize = 3;
pub const SU_P: usize = 4;
pub const SL_Q: usize = 5;
pub const SU_Q: usize = 6;
pub const SL_R: usize = 7;
pub const SU_R: usize = 8;
const DIM: usize = 9;

/// Everything one `(t, g)` generator subproblem needs. `(y, z)` pairs are
/// the inner multiplier and artificial slack of the corresponding row.
#[derive(Debug, Clone)]
pub struct GenKernelInput {
    pub c2: f64,
    pub c1: f64,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub startup_ramp: f64,
    pub shutdown_ramp: f64,
    /// Commitment duplicates at this period.
    pub ubar_on: f64,
    pub ubar_su: f64,
    pub ubar_sd: f64,
    /// Previous-period on duplicate, or the initial status for the first
    /// period.
    pub ubar_on_prev: f64,
    /// Bus-side dispatch duplicates.
    pub pbar: f64,
    pub qbar: f64,
    /// Previous-period bus-side dispatch (ramp-copy row), when present.
    pub pbar_prev: Option<f64>,
    /// First period: the dispatch copy is pinned to the initial dispatch.
    pub p_hat_fixed: Option<f64>,
    pub yz_p_lo: (f64, f64),
    pub yz_p_hi: (f64, f64),
    pub yz_q_lo: (f64, f64),
    pub yz_q_hi: (f64, f64),
    pub yz_ramp_dn: (f64, f64),
    pub yz_ramp_up: (f64, f64),
    pub yz_cons_p: (f64, f64),
    pub yz_cons_q: (f64, f64),
    pub yz_ramp_copy: Option<(f64, f64)>,
    pub rho_uc: f64,
    pub rho_pq: f64,
    pub start: [f64; DIM],
}

#[derive(Debug, Clone, Copy)]
pub struct GenKernelOutput {
    pub p: f64,
    pub q: f64,
    pub p_hat: f64,
    pub sl_p: f64,
    pub su_p: f64,
    pub sl_q: f64,
    pub su_q: f64,
    pub sl_r: f64,
    pub su_r: f64,
}

/// Assemble the box QP for one generator subproblem.
pub fn assemble(input: &GenKernelInput) -> Result<BoxQpProblem> {
    let mut q = DMatrix::zeros(DIM, DIM);
    let mut b = DVector::zeros(DIM);
    q[(P, P)] += 2.0 * input.c2;
    b[P] += input.c1;

    let (y, z) = input.yz_p_lo;
    accumulate_al_row(&mut q, &mut b, &[(P, 1.0), (SL_P, -1.0)], -input.pmin * input.ubar_on + z, y, input.rho_uc);
    let (y, z) = input.yz_p_hi;
    accumulate_al_row(&mut q, &mut b, &[(P, 1.0), (SU_P, 1.0)], -input.pmax * input.ubar_on + z, y, input.rho_uc);
    let (y, z) = input.yz_q_lo;
    accumulate_al_row(&mut q, &mut b, &[(Q, 1.0), (SL_Q, -1.0)], -input.qmin * input.ubar_on + z, y, input.rho_uc);
    let (y, z) = input.yz_q_hi;
    accumulate_al_row(&mut q, &mut b, &[(Q, 1.0), (SU_Q, 1.0)], -input.qmax * input.ubar_on + z, y, input.rho_uc);
    let (y, z) = input.yz_ramp_dn;
    accumulate_al_row(
        &mut q,
        &mut b,
        &[(P, 1.0), (P_HAT, -1.0), (SL_R, -1.0)],
        input.ramp_down * input.ubar_on + input.shutdown_ramp * input.ubar_sd + z,
        y,
        input.rho_uc,
    );
    let (y, z) = input.yz_ramp_up;
    accumulate_al_row(
        &mut q,
        &mut b,
        &[(P, 1.0), (P_HAT, -1.0), (SU_R, 1.0)],
        -input.ramp_up * input.ubar_on_prev - input.startup_ramp * input.ubar_su + z,
        y,
        input.rho_uc,
    );
    let (y, z) = input.yz_cons_p;
    accumulate_al_row(&mut q, &mut b, &[(P, 1.0)], -input.pbar + z, y, input.rho_pq);
    let (y, z) = input.yz_cons_q;
    accumulate_al_row(&mut q, &mut b, &[(Q, 1.0)], -input.qbar + z, y, input.rho_pq);
    if let (Some((y, z)), Some(pbar_prev)) = (input.yz_ramp_copy, input.pbar_prev) {
        accumulate_al_row(&mut q, &mut b, &[(P_HAT, 1.0)], -pbar_prev + z, y, input.rho_pq);
    }

    let big = tron::UNBOUNDED;
    let (ph_lo, ph_hi) = match input.p_hat_fixed {
        Some(v) => (v, v),
        None => (-big, big),
    };
    let lo = vec![0.0, 0.0, ph_lo, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let hi = vec![input.pmax, input.qmax, ph_hi, big, big, big, big, big, big];
    BoxQpProblem::new(q, b, lo, hi)
}

/// Solve one generator subproblem to the configured tolerance.
pub fn gen_kernel(input: &GenKernelInput, cfg: &TrSolverConfig) -> Result<(GenKernelOutput, TronStatus)> {
    let qp = assemble(input)?;
    let r = tron::tron_solve(&qp, &qp.lo, &qp.hi, &input.start, cfg)?;
    let x = r.x;
    Ok((
        GenKernelOutput {
            p: x[P],
            q: x[Q],
            p_hat: x[P_HAT],
            sl_p: x[SL_P],
            su_p: x[SU_P],
            sl_q: x[SL_Q],
            su_q: x[SU_Q],
            sl_r: x[SL_R],
            su_r: x[SU_R],
        },
        r.status,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::oracle::box_qp_enumerate;
    use crate::kernels::tron::Objective;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn base_input() -> GenKernelInput {
        GenKernelInput {
            c2: 0.0,
            c1: 0.0,
            pmin: 0.1,
            pmax: 2.5,
            qmin: -1.0,
            qmax: 1.5,
            ramp_up: 0.25,
            ramp_down: 0.25,
            startup_ramp: 0.25,
            shutdown_ramp: 0.25,
            ubar_on: 1.0,
            ubar_su: 0.0,
            ubar_sd: 0.0,
            ubar_on_prev: 1.0,
            pbar: 0.0,
            qbar: 0.0,
            pbar_prev: None,
            p_hat_fixed: None,
            yz_p_lo: (0.0, 0.0),
            yz_p_hi: (0.0, 0.0),
            yz_q_lo: (0.0, 0.0),
            yz_q_hi: (0.0, 0.0),
            yz_ramp_dn: (0.0, 0.0),
            yz_ramp_up: (0.0, 0.0),
            yz_cons_p: (0.0, 0.0),
            yz_cons_q: (0.0, 0.0),
            yz_ramp_copy: None,
            rho_uc: 10.0,
            rho_pq: 10.0,
            start: [0.0; 9],
        }
    }

    /// A consensus-consistent target with zero multipliers is a fixed
    /// point: the kernel returns the target exactly.
    #[test]
    fn zero_residual_fixed_point() {
        let mut input = base_input();
        let p_star = 1.2;
        let q_star = 0.4;
        input.pbar = p_star;
        input.qbar = q_star;
        input.pbar_prev = Some(p_star);
        input.yz_ramp_copy = Some((0.0, 0.0));
        // slacks that zero every row at (p*, q*)
        input.start = [
            p_star,
            q_star,
            p_star,
            p_star - input.pmin,
            input.pmax - p_star,
            q_star - input.qmin,
            input.qmax - q_star,
            input.ramp_down,
            input.ramp_up,
        ];
        let (out, status) = gen_kernel(&input, &TrSolverConfig::default()).unwrap();
        assert_eq!(status, TronStatus::Converged);
        assert!((out.p - p_star).abs() < 1e-8, "p {}", out.p);
        assert!((out.q - q_star).abs() < 1e-8, "q {}", out.q);
    }

    /// With no cost and a single active consensus row, the kernel projects
    /// the target onto the box.
    #[test]
    fn pure_projection_of_target() {
        let mut input = base_input();
        input.pbar = 5.0; // beyond pmax
        input.rho_uc = 1e-9; // effectively disable the commitment rows
        let (out, _) = gen_kernel(&input, &TrSolverConfig::default()).unwrap();
        assert!((out.p - input.pmax).abs() < 1e-6, "p {}", out.p);
    }

    /// Off unit: duplicates at zero pull dispatch to zero.
    #[test]
    fn off_unit_drives_dispatch_to_zero() {
        let mut input = base_input();
        input.ubar_on = 0.0;
        input.ubar_on_prev = 0.0;
        input.pbar = 0.0;
        input.qbar = 0.0;
        let (out, _) = gen_kernel(&input, &TrSolverConfig::default()).unwrap();
        assert!(out.p.abs() < 1e-7, "p {}", out.p);
        assert!(out.su_p.abs() < 1e-6, "su_p {}", out.su_p);
    }

    /// Randomized agreement with the active-set enumeration oracle on the
    /// assembled 9-variable QP.
    #[test]
    fn matches_active_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..25 {
            let mut input = base_input();
            input.c2 = rng.gen_range(0.0..2.0);
            input.c1 = rng.gen_range(-1.0..3.0);
            input.ubar_on = rng.gen_range(0.0..1.0);
            input.ubar_su = rng.gen_range(0.0..1.0);
            input.ubar_sd = rng.gen_range(0.0..1.0);
            input.ubar_on_prev = rng.gen_range(0.0..1.0);
            input.pbar = rng.gen_range(-0.5..2.0);
            input.qbar = rng.gen_range(-0.5..1.0);
            input.pbar_prev = Some(rng.gen_range(-0.5..2.0));
            input.yz_ramp_copy = Some((rng.gen_range(-1.0..1.0), rng.gen_range(-0.1..0.1)));
            for yz in [
                &mut input.yz_p_lo,
                &mut input.yz_p_hi,
                &mut input.yz_q_lo,
                &mut input.yz_q_hi,
                &mut input.yz_ramp_dn,
                &mut input.yz_ramp_up,
                &mut input.yz_cons_p,
                &mut input.yz_cons_q,
            ] {
                *yz = (rng.gen_range(-1.0..1.0), rng.gen_range(-0.1..0.1));
            }
            let qp = assemble(&input).unwrap();
            let cfg = TrSolverConfig {
                grad_tol: 1e-10,
                max_iter: 500,
                ..Default::default()
            };
            let (out, status) = gen_kernel(&input, &cfg).unwrap();
            assert_eq!(status, TronStatus::Converged);
            let x = [
                out.p, out.q, out.p_hat, out.sl_p, out.su_p, out.sl_q, out.su_q, out.sl_r, out.su_r,
            ];
            let got = qp.value(&x);
            let (_, best) = box_qp_enumerate(&qp.quad, &qp.lin, &qp.lo, &qp.hi).unwrap();
            assert!(
                (got - best).abs() <= 1e-8 * (1.0 + best.abs()),
                "kernel {got} vs oracle {best}"
            );
        }
    }

    /// First period pins the dispatch copy to the initial dispatch.
    #[test]
    fn first_period_fixes_p_hat() {
        let mut input = base_input();
        input.p_hat_fixed = Some(1.3);
        let (out, _) = gen_kernel(&input, &TrSolverConfig::default()).unwrap();
        assert_eq!(out.p_hat, 1.3);
    }
}
