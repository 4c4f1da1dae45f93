//! Bus kernel: closed-form update of the bus-side duplicates.
//!
//! Minimizes a separable weighted quadratic distance to the component-side
//! values (with multiplier offsets folded into the targets) subject to the
//! two nodal power-balance equalities. Solved exactly through the 2x2
//! Schur system of the KKT conditions; when the voltage duplicate leaves
//! its bounds it is pinned to the violated bound and the system re-solved
//! with the voltage fixed.

use crate::error::{Error, Result};

/// One bus-side variable: quadratic weight, distance target, and its
/// coefficients in the real and reactive balance rows.
#[derive(Debug, Clone, Copy)]
pub struct BusVar {
    pub weight: f64,
    pub target: f64,
    pub coef_p: f64,
    pub coef_q: f64,
}

/// One bus subproblem. The voltage duplicate is `vars[volt_idx]` and is the
/// only box-constrained variable.
#[derive(Debug, Clone)]
pub struct BusKernelInput {
    pub vars: Vec<BusVar>,
    pub volt_idx: usize,
    pub volt_lo: f64,
    pub volt_hi: f64,
    /// Right-hand sides of the real and reactive balance rows.
    pub rhs: [f64; 2],
}

fn solve_2x2(s: [[f64; 2]; 2], r: [f64; 2]) -> Result<[f64; 2]> {
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let scale = s[0][0].abs().max(s[1][1].abs()).max(1e-300);
    if det.abs() <= 1e-14 * scale * scale {
        return Err(Error::Numerical(
            "bus kernel: singular balance system (degenerate weights)".into(),
        ));
    }
    Ok([
        (r[0] * s[1][1] - r[1] * s[0][1]) / det,
        (s[0][0] * r[1] - s[1][0] * r[0]) / det,
    ])
}

/// Equality-constrained minimizer with an optional subset of pinned
/// variables (the voltage when its bound binds).
fn solve_pinned(input: &BusKernelInput, pinned: Option<(usize, f64)>) -> Result<Vec<f64>> {
    let n = input.vars.len();
    let mut rhs = input.rhs;
    if let Some((idx, val)) = pinned {
        rhs[0] -= input.vars[idx].coef_p * val;
        rhs[1] -= input.vars[idx].coef_q * val;
    }
    // Schur system: S nu = A tau - rhs with S = A W^-1 A'
    let mut s = [[0.0; 2]; 2];
    let mut at = [0.0; 2];
    for (i, v) in input.vars.iter().enumerate() {
        if pinned.map_or(false, |(idx, _)| idx == i) {
            continue;
        }
        if !(v.weight > 0.0) {
            return Err(Error::Numerical(format!(
                "bus kernel: nonpositive weight {} on variable {i}",
                v.weight
            )));
        }
        let wi = 1.0 / v.weight;
        s[0][0] += v.coef_p * v.coef_p * wi;
        s[0][1] += v.coef_p * v.coef_q * wi;
        s[1][0] += v.coef_q * v.coef_p * wi;
        s[1][1] += v.coef_q * v.coef_q * wi;
        at[0] += v.coef_p * v.target;
        at[1] += v.coef_q * v.target;
    }
    let nu = solve_2x2(s, [at[0] - rhs[0], at[1] - rhs[1]])?;
    let mut out = vec![0.0; n];
    for (i, v) in input.vars.iter().enumerate() {
        if let Some((idx, val)) = pinned {
            if idx == i {
                out[i] = val;
                continue;
            }
        }
        out[i] = v.target - (v.coef_p * nu[0] + v.coef_q * nu[1]) / v.weight;
    }
    Ok(out)
}

/// Solve one bus subproblem exactly.
pub fn bus_kernel(input: &BusKernelInput) -> Result<Vec<f64>> {
    let joint = solve_pinned(input, None)?;
    let w = joint[input.volt_idx];
    if w >= input.volt_lo && w <= input.volt_hi {
        return Ok(joint);
    }
    let bound = if w < input.volt_lo { input.volt_lo } else { input.volt_hi };
    solve_pinned(input, Some((input.volt_idx, bound)))
}

/// Balance residuals of a candidate solution, for checks.
pub fn balance_residual(input: &BusKernelInput, x: &[f64]) -> [f64; 2] {
    let mut r = [-input.rhs[0], -input.rhs[1]];
    for (i, v) in input.vars.iter().enumerate() {
        r[0] += v.coef_p * x[i];
        r[1] += v.coef_q * x[i];
    }
    r
}
