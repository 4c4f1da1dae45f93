//! Relaxed-commitment kernel: per-generator box QP over all periods.
//!
//! The duplicate commitment variables of one generator across the horizon
//! form a 3T-dimensional vector in [0,1]. Every coupling row touching them
//! contributes a rank-one quadratic term; ramp rows link consecutive
//! periods, so the Hessian is block tridiagonal. Solved by projected
//! Newton with active-set refinement.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::kernels::boxqp::{solve_box_qp, BoxQpStatus};
use crate::kernels::gen::accumulate_al_row;

/// Index helpers into the interleaved (on, su, sd) layout.
#[inline]
pub fn on(t: usize) -> usize {
    3 * t
}
#[inline]
pub fn su(t: usize) -> usize {
    3 * t + 1
}
#[inline]
pub fn sd(t: usize) -> usize {
    3 * t + 2
}

/// One augmented-Lagrangian row restricted to the duplicate variables:
/// residual `sum(coeffs) + constant` with multiplier `y` and weight `rho`.
#[derive(Debug, Clone)]
pub struct UcBarRow {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
    pub y: f64,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct UcBarSolution {
    /// Interleaved (on, su, sd) values per period.
    pub values: Vec<f64>,
    pub converged: bool,
}

/// Exact minimizer of the row sum over `[0,1]^{3T}`.
pub fn ucbar_kernel(
    horizon: usize,
    rows: &[UcBarRow],
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<UcBarSolution> {
    let n = 3 * horizon;
    let mut q = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for row in rows {
        accumulate_al_row(&mut q, &mut b, &row.coeffs, row.constant, row.y, row.rho);
    }
    let lo = vec![0.0; n];
    let hi = vec![1.0; n];
    let sol = solve_box_qp(&q, &b, &lo, &hi, start, tol, max_iter)?;
    Ok(UcBarSolution {
        values: sol.x.iter().cloned().collect(),
        converged: sol.status == BoxQpStatus::Converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::oracle::box_qp_enumerate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Duplicate rows only, zero multipliers: the kernel clips the
    /// commitment values into the unit box (here they are binary already).
    #[test]
    fn duplicate_projection_returns_u() {
        let horizon = 3;
        let u = [1.0, 0.0, 1.0];
        let mut rows = Vec::new();
        for t in 0..horizon {
            rows.push(UcBarRow { coeffs: vec![(on(t), -1.0)], constant: u[t], y: 0.0, rho: 4.0 });
            rows.push(UcBarRow { coeffs: vec![(su(t), -1.0)], constant: 0.0, y: 0.0, rho: 4.0 });
            rows.push(UcBarRow { coeffs: vec![(sd(t), -1.0)], constant: 0.0, y: 0.0, rho: 4.0 });
        }
        let sol = ucbar_kernel(horizon, &rows, &vec![0.5; 9], 1e-10, 100).unwrap();
        assert!(sol.converged);
        for t in 0..horizon {
            assert!((sol.values[on(t)] - u[t]).abs() < 1e-9);
            assert!(sol.values[su(t)].abs() < 1e-9);
        }
    }

    fn random_rows(rng: &mut ChaCha8Rng, horizon: usize, rho: f64) -> Vec<UcBarRow> {
        let mut rows = Vec::new();
        for t in 0..horizon {
            for idx in [on(t), su(t), sd(t)] {
                rows.push(UcBarRow {
                    coeffs: vec![(idx, -1.0)],
                    constant: rng.gen_range(-0.5..1.5),
                    y: rng.gen_range(-1.0..1.0),
                    rho,
                });
            }
            // box rows on the on-variable
            rows.push(UcBarRow {
                coeffs: vec![(on(t), -rng.gen_range(0.1..0.5))],
                constant: rng.gen_range(-0.5..0.5),
                y: rng.gen_range(-1.0..1.0),
                rho,
            });
            // ramp rows: same-period shutdown pair and cross-period startup pair
            rows.push(UcBarRow {
                coeffs: vec![(on(t), rng.gen_range(0.1..0.4)), (sd(t), rng.gen_range(0.1..0.4))],
                constant: rng.gen_range(-0.5..0.5),
                y: rng.gen_range(-1.0..1.0),
                rho,
            });
            let mut coeffs = vec![(su(t), -rng.gen_range(0.1..0.4))];
            if t >= 1 {
                coeffs.push((on(t - 1), -rng.gen_range(0.1..0.4)));
            }
            rows.push(UcBarRow {
                coeffs,
                constant: rng.gen_range(-0.5..0.5),
                y: rng.gen_range(-1.0..1.0),
                rho,
            });
        }
        rows
    }

    /// Two-period instances match the 6-variable active-set oracle.
    #[test]
    fn matches_active_set_oracle_on_t2() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..30 {
            let rows = random_rows(&mut rng, 2, 7.0);
            let sol = ucbar_kernel(2, &rows, &vec![0.5; 6], 1e-10, 200).unwrap();
            assert!(sol.converged);
            let mut q = DMatrix::zeros(6, 6);
            let mut b = DVector::zeros(6);
            for row in &rows {
                accumulate_al_row(&mut q, &mut b, &row.coeffs, row.constant, row.y, row.rho);
            }
            let x = DVector::from_column_slice(&sol.values);
            let got = 0.5 * (&q * &x).dot(&x) + b.dot(&x);
            let (_, best) = box_qp_enumerate(&q, &b, &[0.0; 6], &[1.0; 6]).unwrap();
            assert!(
                (got - best).abs() <= 1e-8 * (1.0 + best.abs()),
                "kernel {got} vs oracle {best}"
            );
        }
    }

    /// Scaling every weight by the same factor leaves the argmin unchanged
    /// when all multipliers are zero.
    #[test]
    fn rho_scale_invariance_of_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let mut rows = random_rows(&mut rng, 3, 5.0);
        for r in &mut rows {
            r.y = 0.0;
        }
        let a = ucbar_kernel(3, &rows, &vec![0.5; 9], 1e-11, 300).unwrap();
        let mut scaled = rows.clone();
        for r in &mut scaled {
            r.rho *= 3.7;
        }
        let b = ucbar_kernel(3, &scaled, &vec![0.5; 9], 1e-11, 300).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-7, "{x} vs {y}");
        }
    }
}
