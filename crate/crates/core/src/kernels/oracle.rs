//! Brute-force reference solvers used to validate the kernels.
//!
//! These are deliberately slow and independent of the production code
//! paths: the box-QP oracle enumerates every active set, the bus oracle
//! solves the dense KKT system for each voltage-bound case. They back the
//! kernel checks in the acceptance suite and module tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum VarState {
    Lower,
    Free,
    Upper,
}

/// Global minimizer of `0.5 x'Qx + b'x` over `[lo, hi]` (Q convex) by
/// enumerating all per-variable active sets. Exponential in the dimension.
pub fn box_qp_enumerate(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    lo: &[f64],
    hi: &[f64],
) -> Result<(DVector<f64>, f64)> {
    let n = b.len();
    if n > 12 {
        return Err(Error::Validation(format!("oracle dimension {n} exceeds 12")));
    }
    let states: Vec<Vec<VarState>> = (0..n)
        .map(|i| {
            let mut s = vec![VarState::Free];
            if lo[i].is_finite() && lo[i] > -crate::kernels::tron::UNBOUNDED {
                s.push(VarState::Lower);
            }
            if hi[i].is_finite() && hi[i] < crate::kernels::tron::UNBOUNDED {
                s.push(VarState::Upper);
            }
            s
        })
        .collect();
    let mut counts = vec![0usize; n];
    let objective = |x: &DVector<f64>| 0.5 * (q * x).dot(x) + b.dot(x);
    let mut best: Option<(DVector<f64>, f64)> = None;
    let feas_tol = 1e-9;

    'outer: loop {
        let assignment: Vec<VarState> = (0..n).map(|i| states[i][counts[i]]).collect();
        let free: Vec<usize> = (0..n)
            .filter(|&i| assignment[i] == VarState::Free)
            .collect();
        let mut x = DVector::zeros(n);
        for i in 0..n {
            match assignment[i] {
                VarState::Lower => x[i] = lo[i],
                VarState::Upper => x[i] = hi[i],
                VarState::Free => {}
            }
        }
        let solvable = if free.is_empty() {
            true
        } else {
            let m = free.len();
            let qff = DMatrix::from_fn(m, m, |a, c| q[(free[a], free[c])]);
            let mut rhs = DVector::from_iterator(m, free.iter().map(|&i| -b[i]));
            for (a, &i) in free.iter().enumerate() {
                for j in 0..n {
                    if assignment[j] != VarState::Free {
                        rhs[a] -= q[(i, j)] * x[j];
                    }
                }
            }
            match qff.lu().solve(&rhs) {
                Some(sol) => {
                    for (a, &i) in free.iter().enumerate() {
                        x[i] = sol[a];
                    }
                    true
                }
                None => false,
            }
        };
        if solvable {
            let scale = 1.0 + x.amax();
            let feasible = (0..n).all(|i| x[i] >= lo[i] - feas_tol * scale && x[i] <= hi[i] + feas_tol * scale);
            if feasible {
                let g = q * &x + b;
                // multiplier signs at the active bounds
                let kkt = (0..n).all(|i| match assignment[i] {
                    VarState::Free => true,
                    VarState::Lower => g[i] >= -1e-7 * scale.max(g.amax()),
                    VarState::Upper => g[i] <= 1e-7 * scale.max(g.amax()),
                });
                if kkt {
                    let v = objective(&x);
                    if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
                        best = Some((x, v));
                    }
                }
            }
        }
        // advance the mixed-radix counter
        for i in 0..n {
            counts[i] += 1;
            if counts[i] < states[i].len() {
                continue 'outer;
            }
            counts[i] = 0;
        }
        break;
    }
    best.ok_or_else(|| Error::Numerical("no KKT point found by enumeration".into()))
}

/// Reference solution of the bus subproblem: minimize a weighted quadratic
/// distance subject to two linear equalities, with a box on one designated
/// coordinate (the voltage). Tries the voltage free and at both bounds via
/// dense KKT solves and keeps the best feasible candidate.
#[allow(clippy::too_many_arguments)]
pub fn bus_kkt_oracle(
    weights: &[f64],
    targets: &[f64],
    a_p: &[f64],
    a_q: &[f64],
    rhs: [f64; 2],
    volt_idx: usize,
    volt_lo: f64,
    volt_hi: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = weights.len();
    let objective = |x: &[f64]| -> f64 {
        (0..n).map(|i| 0.5 * weights[i] * (x[i] - targets[i]).powi(2)).sum()
    };
    let solve_fixed = |volt: Option<f64>| -> Option<Vec<f64>> {
        // variables kept in the KKT system
        let kept: Vec<usize> = (0..n).filter(|&i| volt.is_none() || i != volt_idx).collect();
        let m = kept.len();
        let dim = m + 2;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rv = DVector::zeros(dim);
        for (a, &i) in kept.iter().enumerate() {
            kkt[(a, a)] = weights[i];
            kkt[(a, m)] = a_p[i];
            kkt[(a, m + 1)] = a_q[i];
            kkt[(m, a)] = a_p[i];
            kkt[(m + 1, a)] = a_q[i];
            rv[a] = weights[i] * targets[i];
        }
        rv[m] = rhs[0];
        rv[m + 1] = rhs[1];
        if let Some(v) = volt {
            rv[m] -= a_p[volt_idx] * v;
            rv[m + 1] -= a_q[volt_idx] * v;
        }
        let sol = kkt.lu().solve(&rv)?;
        let mut x = vec![0.0; n];
        for (a, &i) in kept.iter().enumerate() {
            x[i] = sol[a];
        }
        if let Some(v) = volt {
            x[volt_idx] = v;
        }
        Some(x)
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for volt in [None, Some(volt_lo), Some(volt_hi)] {
        if let Some(x) = solve_fixed(volt) {
            let v = x[volt_idx];
            if v < volt_lo - 1e-9 || v > volt_hi + 1e-9 {
                continue;
            }
            let obj = objective(&x);
            if best.as_ref().map_or(true, |(_, b)| obj < *b) {
                best = Some((x, obj));
            }
        }
    }
    best.ok_or_else(|| Error::Numerical("bus oracle: all KKT systems singular or infeasible".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_matches_hand_solved_qp() {
        // min (x-2)^2 + (y+1)^2 over [0,1]^2: x hits 1, y hits 0
        let q = DMatrix::from_diagonal_element(2, 2, 2.0);
        let b = DVector::from_column_slice(&[-4.0, 2.0]);
        let (x, _) = box_qp_enumerate(&q, &b, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!(x[1].abs() < 1e-12);
    }

    #[test]
    fn bus_oracle_respects_equalities() {
        // three variables, one equality pair; voltage is index 2
        let weights = [2.0, 3.0, 1.5];
        let targets = [1.0, -0.5, 1.02];
        let a_p = [1.0, 0.0, -0.3];
        let a_q = [0.0, 1.0, 0.2];
        let rhs = [0.7, -0.4];
        let (x, _) = bus_kkt_oracle(&weights, &targets, &a_p, &a_q, rhs, 2, 0.81, 1.21).unwrap();
        let bp: f64 = (0..3).map(|i| a_p[i] * x[i]).sum();
        let bq: f64 = (0..3).map(|i| a_q[i] * x[i]).sum();
        assert!((bp - rhs[0]).abs() < 1e-10);
        assert!((bq - rhs[1]).abs() < 1e-10);
        assert!(x[2] >= 0.81 && x[2] <= 1.21);
    }
}
