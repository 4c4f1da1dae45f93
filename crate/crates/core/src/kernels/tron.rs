//! Dense trust-region projected Newton for small box-constrained problems.
//!
//! Each iteration finds the generalized Cauchy point along the projected
//! steepest-descent arc (breakpoint walk), then refines over the free
//! variables with a Steihaug conjugate-gradient step and a projected
//! backtracking search on the quadratic model. Problems here are tiny (a
//! few up to a few dozen variables), so gradients and Hessians are dense.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Twice-differentiable objective over a box.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Objective value only.
    fn value(&self, x: &[f64]) -> f64;

    /// Value plus gradient and dense Hessian.
    fn eval(&self, x: &[f64], grad: &mut [f64], hess: &mut DMatrix<f64>) -> f64;
}

#[derive(Debug, Clone)]
pub struct TrSolverConfig {
    /// Convergence threshold on the projected-gradient infinity norm.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Initial trust radius; nonpositive means derive from the gradient.
    pub initial_radius: f64,
}

impl Default for TrSolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 300,
            initial_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TronStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct TronResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub status: TronStatus,
    pub iterations: usize,
    pub projected_grad_norm: f64,
}

/// Bound magnitude treated as effectively free.
pub const UNBOUNDED: f64 = 1e12;

fn clip(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// First-order stationarity violation per coordinate.
fn projected_gradient(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64], out: &mut [f64]) {
    for i in 0..x.len() {
        out[i] = if x[i] <= lo[i] {
            g[i].min(0.0)
        } else if x[i] >= hi[i] {
            g[i].max(0.0)
        } else {
            g[i]
        };
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &a| m.max(a.abs()))
}

/// Quadratic model value at displacement `s` from the expansion point.
fn model(g: &DVector<f64>, h: &DMatrix<f64>, s: &DVector<f64>) -> f64 {
    g.dot(s) + 0.5 * (h * s).dot(s)
}

/// Step to the trust boundary from `d` along `p` (largest nonnegative tau
/// with `||d + tau p|| = radius`).
fn boundary_step(d: &DVector<f64>, p: &DVector<f64>, radius: f64) -> f64 {
    let aa = p.norm_squared();
    if aa == 0.0 {
        return 0.0;
    }
    let bb = 2.0 * d.dot(p);
    let cc = d.norm_squared() - radius * radius;
    let disc = (bb * bb - 4.0 * aa * cc).max(0.0);
    ((-bb + disc.sqrt()) / (2.0 * aa)).max(0.0)
}

/// Generalized Cauchy point: first local minimizer of the model along the
/// projected steepest-descent path, capped by the trust radius.
fn cauchy_point(
    x: &[f64],
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    lo: &[f64],
    hi: &[f64],
    delta: f64,
) -> Vec<f64> {
    let n = x.len();
    // breakpoint of each coordinate along -g, infinity when it never binds
    let mut d = vec![0.0; n];
    let mut bp = vec![f64::INFINITY; n];
    for i in 0..n {
        let gi = g[i];
        if gi < 0.0 && x[i] < hi[i] {
            d[i] = -gi;
            bp[i] = (hi[i] - x[i]) / d[i];
        } else if gi > 0.0 && x[i] > lo[i] {
            d[i] = -gi;
            bp[i] = (lo[i] - x[i]) / d[i];
        }
    }
    if d.iter().all(|&v| v == 0.0) {
        return x.to_vec();
    }
    let mut breaks: Vec<f64> = bp.iter().cloned().filter(|t| t.is_finite()).collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();

    let x0 = DVector::from_column_slice(x);
    let mut xs = x0.clone();
    let mut alpha_prev = 0.0;
    let mut next_break = breaks.into_iter().peekable();
    loop {
        let mut dseg: DVector<f64> = DVector::zeros(n);
        for i in 0..n {
            if d[i] != 0.0 && bp[i] > alpha_prev {
                dseg[i] = d[i];
            }
        }
        if dseg.iter().all(|&v| v == 0.0) {
            break;
        }
        let s0 = &xs - &x0;
        let q1 = g.dot(&dseg) + (h * &s0).dot(&dseg);
        if q1 >= 0.0 {
            break; // local minimizer at the segment start
        }
        let a_tr = boundary_step(&s0, &dseg, delta);
        if a_tr <= 0.0 {
            break;
        }
        let seg_end = loop {
            match next_break.peek() {
                Some(&t) if t <= alpha_prev => {
                    next_break.next();
                }
                Some(&t) => break Some(t),
                None => break None,
            }
        };
        let seg_len = seg_end.map(|t| t - alpha_prev).unwrap_or(f64::INFINITY);
        let a_lim = seg_len.min(a_tr);
        let q2 = (h * &dseg).dot(&dseg);
        if q2 > 0.0 && -q1 / q2 <= a_lim {
            xs += dseg * (-q1 / q2);
            break;
        }
        if !a_lim.is_finite() {
            xs += dseg * a_tr;
            break;
        }
        xs += &dseg * a_lim;
        if a_lim >= a_tr {
            break;
        }
        alpha_prev = seg_end.expect("finite segment has a breakpoint");
        next_break.next();
        // land exactly on bounds whose breakpoint just passed
        for i in 0..n {
            if d[i] != 0.0 && bp[i] <= alpha_prev {
                xs[i] = if d[i] > 0.0 { hi[i] } else { lo[i] };
            }
        }
    }
    let mut out: Vec<f64> = xs.iter().cloned().collect();
    clip(&mut out, lo, hi);
    out
}

/// Steihaug conjugate gradients on the free subspace at the Cauchy point,
/// followed by a projected backtracking search on the model.
fn subspace_refine(
    x: &[f64],
    xc: &[f64],
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    lo: &[f64],
    hi: &[f64],
    delta: f64,
) -> Vec<f64> {
    let n = x.len();
    let free: Vec<usize> = (0..n).filter(|&i| xc[i] > lo[i] && xc[i] < hi[i]).collect();
    if free.is_empty() {
        return xc.to_vec();
    }
    let sc = DVector::from_iterator(n, (0..n).map(|i| xc[i] - x[i]));
    let budget = delta * delta - sc.norm_squared();
    if budget <= 0.0 {
        return xc.to_vec();
    }
    let radius = budget.sqrt();
    let gm = g + h * &sc; // model gradient at the Cauchy point
    let m = free.len();
    let hred = DMatrix::from_fn(m, m, |a, b| h[(free[a], free[b])]);
    let gred = DVector::from_iterator(m, free.iter().map(|&i| gm[i]));

    let mut dred: DVector<f64> = DVector::zeros(m);
    let mut r = -gred;
    let mut p = r.clone();
    let mut rs = r.norm_squared();
    let r0 = rs.sqrt();
    if r0 > 0.0 {
        for _ in 0..(2 * m + 4) {
            let hp = &hred * &p;
            let curv = p.dot(&hp);
            if curv <= 1e-14 * p.norm_squared() {
                let tau = boundary_step(&dred, &p, radius);
                dred += &p * tau;
                break;
            }
            let alpha = rs / curv;
            if (&dred + &p * alpha).norm() >= radius {
                let tau = boundary_step(&dred, &p, radius);
                dred += &p * tau;
                break;
            }
            dred += &p * alpha;
            r -= hp * alpha;
            let rs_new = r.norm_squared();
            if rs_new.sqrt() <= 1e-13 * r0.max(1.0) {
                break;
            }
            p = &r + &p * (rs_new / rs);
            rs = rs_new;
        }
    }

    let mut dfull: DVector<f64> = DVector::zeros(n);
    for (a, &i) in free.iter().enumerate() {
        dfull[i] = dred[a];
    }
    let mc = model(g, h, &sc);
    let mut beta = 1.0;
    for _ in 0..40 {
        let mut xt: Vec<f64> = (0..n).map(|i| xc[i] + beta * dfull[i]).collect();
        clip(&mut xt, lo, hi);
        let st = DVector::from_iterator(n, (0..n).map(|i| xt[i] - x[i]));
        if st.norm() <= delta * (1.0 + 1e-12) && model(g, h, &st) <= mc {
            return xt;
        }
        beta *= 0.5;
    }
    xc.to_vec()
}

/// Minimize `obj` over the box `[lo, hi]` starting from `x0`.
pub fn tron_solve(
    obj: &dyn Objective,
    lo: &[f64],
    hi: &[f64],
    x0: &[f64],
    cfg: &TrSolverConfig,
) -> Result<TronResult> {
    let n = obj.dim();
    if lo.len() != n || hi.len() != n || x0.len() != n {
        return Err(Error::Dimension(format!(
            "bounds/start of lengths {}/{}/{} for dimension {n}",
            lo.len(),
            hi.len(),
            x0.len()
        )));
    }
    for i in 0..n {
        if lo[i] > hi[i] {
            return Err(Error::Validation(format!("bound {i} inverted: [{}, {}]", lo[i], hi[i])));
        }
    }
    let mut x = x0.to_vec();
    clip(&mut x, lo, hi);
    let mut grad = vec![0.0; n];
    let mut hess = DMatrix::zeros(n, n);
    let mut pg = vec![0.0; n];

    let mut f = obj.eval(&x, &mut grad, &mut hess);
    let mut delta = if cfg.initial_radius > 0.0 {
        cfg.initial_radius
    } else {
        inf_norm(&grad).max(1.0)
    };

    let mut iterations = 0;
    loop {
        if !f.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite objective or gradient at iterate {x:?} (f = {f})"
            )));
        }
        projected_gradient(&x, &grad, lo, hi, &mut pg);
        let pg_norm = inf_norm(&pg);
        if pg_norm <= cfg.grad_tol {
            return Ok(TronResult {
                x,
                value: f,
                status: TronStatus::Converged,
                iterations,
                projected_grad_norm: pg_norm,
            });
        }
        if iterations >= cfg.max_iter {
            return Ok(TronResult {
                x,
                value: f,
                status: TronStatus::MaxIterations,
                iterations,
                projected_grad_norm: pg_norm,
            });
        }
        iterations += 1;

        let g = DVector::from_column_slice(&grad);
        let xc = cauchy_point(&x, &g, &hess, lo, hi, delta);
        let xt = subspace_refine(&x, &xc, &g, &hess, lo, hi, delta);
        let st = DVector::from_iterator(n, (0..n).map(|i| xt[i] - x[i]));
        let step_norm = st.norm();
        if step_norm == 0.0 {
            delta *= 0.25;
            if delta < 1e-14 {
                return Ok(TronResult {
                    x,
                    value: f,
                    status: TronStatus::MaxIterations,
                    iterations,
                    projected_grad_norm: pg_norm,
                });
            }
            continue;
        }
        let pred = -model(&g, &hess, &st);
        let ft = obj.value(&xt);
        let ared = f - ft;
        let ratio = if pred > 0.0 { ared / pred } else { -1.0 };

        if ratio > 1e-4 && ft.is_finite() {
            x = xt;
            f = obj.eval(&x, &mut grad, &mut hess);
        }
        if ratio < 0.25 {
            delta = (0.25 * step_norm).max(1e-14);
        } else if ratio > 0.75 && step_norm > 0.9 * delta {
            delta = (2.5 * delta).min(1e13);
        }
    }
}
