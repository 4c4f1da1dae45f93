//! Convex box-constrained quadratic programs.
//!
//! [`BoxQpProblem`] is the small fixed-size problem the generator kernel
//! hands to the trust-region solver (dimension capped at 32, matching the
//! kernel budget). [`solve_box_qp`] is a projected Newton method with
//! active-set refinement for strictly convex QPs of any size; the relaxed
//! commitment kernel uses it on its 3T-dimensional problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::tron;

/// A convex quadratic `0.5 x'Qx + b'x` over a box, at most 32 variables.
#[derive(Debug, Clone)]
pub struct BoxQpProblem {
    pub quad: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxQpProblem {
    pub fn new(quad: DMatrix<f64>, lin: DVector<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let n = lin.len();
        if n > 32 {
            return Err(Error::Validation(format!("box QP dimension {n} exceeds 32")));
        }
        if quad.nrows() != n || quad.ncols() != n || lo.len() != n || hi.len() != n {
            return Err(Error::Dimension("box QP term sizes disagree".into()));
        }
        for i in 0..n {
            if lo[i] > hi[i] {
                return Err(Error::Validation(format!("bound {i} inverted: [{}, {}]", lo[i], hi[i])));
            }
        }
        Ok(Self { quad, lin, lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }
}

impl tron::Objective for BoxQpProblem {
    fn dim(&self) -> usize {
        self.lin.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        0.5 * (&self.quad * &v).dot(&v) + self.lin.dot(&v)
    }

    fn eval(&self, x: &[f64], grad: &mut [f64], hess: &mut DMatrix<f64>) -> f64 {
        let v = DVector::from_column_slice(x);
        let qv = &self.quad * &v;
        for i in 0..x.len() {
            grad[i] = qv[i] + self.lin[i];
        }
        hess.copy_from(&self.quad);
        0.5 * qv.dot(&v) + self.lin.dot(&v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxQpStatus {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub x: DVector<f64>,
    pub status: BoxQpStatus,
    pub iterations: usize,
    pub projected_grad_norm: f64,
}

/// Projected Newton with active-set refinement for a strictly convex
/// quadratic over a box. Iterates: bind coordinates pressed against their
/// bound by the gradient, take a Newton step on the free set, and walk the
/// projected segment; stops at projected-gradient norm `tol`.
pub fn solve_box_qp(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    lo: &[f64],
    hi: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<BoxQpSolution> {
    let n = b.len();
    let mut x = DVector::from_column_slice(x0);
    for i in 0..n {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
    let pg_norm = |x: &DVector<f64>, g: &DVector<f64>| -> f64 {
        (0..n)
            .map(|i| {
                if x[i] <= lo[i] {
                    g[i].min(0.0).abs()
                } else if x[i] >= hi[i] {
                    g[i].max(0.0).abs()
                } else {
                    g[i].abs()
                }
            })
            .fold(0.0, f64::max)
    };
    let value = |x: &DVector<f64>| 0.5 * (q * x).dot(x) + b.dot(x);

    let mut iterations = 0;
    loop {
        let g = q * &x + b;
        let pg = pg_norm(&x, &g);
        if !pg.is_finite() {
            return Err(Error::Numerical("non-finite gradient in box QP".into()));
        }
        if pg <= tol {
            return Ok(BoxQpSolution {
                x,
                status: BoxQpStatus::Converged,
                iterations,
                projected_grad_norm: pg,
            });
        }
        if iterations >= max_iter {
            return Ok(BoxQpSolution {
                x,
                status: BoxQpStatus::IterationCap,
                iterations,
                projected_grad_norm: pg,
            });
        }
        iterations += 1;

        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                !(x[i] <= lo[i] && g[i] > 0.0) && !(x[i] >= hi[i] && g[i] < 0.0)
            })
            .collect();
        let mut d: DVector<f64> = DVector::zeros(n);
        if free.is_empty() {
            // every coordinate is pressed against a bound; projected
            // gradient said otherwise, so loosen to a plain projection step
            for i in 0..n {
                d[i] = -g[i];
            }
        } else {
            let m = free.len();
            let qff = DMatrix::from_fn(m, m, |a, c| q[(free[a], free[c])]);
            let gf = DVector::from_iterator(m, free.iter().map(|&i| g[i]));
            let step = match qff.clone().cholesky() {
                Some(ch) => ch.solve(&(-&gf)),
                None => {
                    // tiny diagonal lift keeps the direction usable
                    let mut qreg = qff;
                    for a in 0..m {
                        qreg[(a, a)] += 1e-10 * (1.0 + qreg[(a, a)].abs());
                    }
                    qreg.cholesky()
                        .ok_or_else(|| Error::Numerical("box QP Hessian not positive definite".into()))?
                        .solve(&(-&gf))
                }
            };
            for (a, &i) in free.iter().enumerate() {
                d[i] = step[a];
            }
        }

        // projected backtracking on the true quadratic
        let f0 = value(&x);
        let gd: f64 = (0..n).map(|i| g[i] * d[i]).sum();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut xt = x.clone();
            for i in 0..n {
                xt[i] = (x[i] + alpha * d[i]).clamp(lo[i], hi[i]);
            }
            if value(&xt) <= f0 + 1e-4 * alpha * gd.min(0.0) && xt != x {
                x = xt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // gradient projection fallback
            let mut xt = x.clone();
            let mut alpha = 1.0 / (1.0 + q.diagonal().amax());
            for _ in 0..60 {
                for i in 0..n {
                    xt[i] = (x[i] - alpha * g[i]).clamp(lo[i], hi[i]);
                }
                if value(&xt) < f0 {
                    break;
                }
                alpha *= 0.5;
            }
            if value(&xt) < f0 {
                x = xt;
            } else {
                return Ok(BoxQpSolution {
                    x,
                    status: BoxQpStatus::IterationCap,
                    iterations,
                    projected_grad_norm: pg,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::oracle::box_qp_enumerate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_convex_qp(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DVector<f64>, Vec<f64>, Vec<f64>) {
        // Q = M'M + eps I is symmetric positive definite
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = &m.transpose() * &m + DMatrix::from_diagonal_element(n, n, 0.1);
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|&l| l + rng.gen_range(0.5..3.0)).collect();
        (q, b, lo, hi)
    }

    #[test]
    fn newton_matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..60 {
            let n = rng.gen_range(1..=7);
            let (q, b, lo, hi) = random_convex_qp(&mut rng, n);
            let x0 = vec![0.0; n];
            let sol = solve_box_qp(&q, &b, &lo, &hi, &x0, 1e-10, 200).unwrap();
            assert_eq!(sol.status, BoxQpStatus::Converged);
            let (_, best) = box_qp_enumerate(&q, &b, &lo, &hi).unwrap();
            let got = 0.5 * (&q * &sol.x).dot(&sol.x) + b.dot(&sol.x);
            assert!(
                (got - best).abs() <= 1e-8 * (1.0 + best.abs()),
                "objective {got} vs oracle {best}"
            );
        }
    }

    #[test]
    fn dimension_cap_enforced() {
        let n = 33;
        let err = BoxQpProblem::new(
            DMatrix::identity(n, n),
            DVector::zeros(n),
            vec![0.0; n],
            vec![1.0; n],
        )
        .unwrap_err();
        assert!(err.to_string().contains("exceeds 32"), "{err}");
    }

    #[test]
    fn tron_solves_box_qp_problem() {
        let p = BoxQpProblem::new(
            DMatrix::from_diagonal_element(2, 2, 2.0),
            DVector::from_column_slice(&[-1.0, 4.0]),
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let r = tron::tron_solve(&p, &p.lo, &p.hi, &[0.5, 0.5], &tron::TrSolverConfig::default()).unwrap();
        assert!((r.x[0] - 0.5).abs() < 1e-9);
        assert_eq!(r.x[1], 0.0);
    }
}
