//! Exact per-generator unit-commitment subproblem solver.
//!
//! Each ADMM sweep hands every generator a table of stage costs
//! `L_t(prev_state, state)` that depends only on the on/off state of two
//! consecutive periods (startup/shutdown indicators are inferred from the
//! state transition). The optimal schedule under minimum-up/down and initial
//! obligation constraints is found by backward-induction dynamic programming
//! in O(T) stage-cost additions; window sums for forced runs come from
//! precomputed suffix cumulative sums.
//!
//! [`dp_oracle`] enumerates all `2^T` schedules and serves as the ground
//! truth in tests; [`check_schedule`] is the independent feasibility checker
//! both are validated against.

use crate::error::{Error, Result};
use crate::scenario::UcParams;

/// Stage-cost table `L_t(prev, cur)` for one generator, `t = 1..=T`.
#[derive(Debug, Clone)]
pub struct StageCost {
    entries: Vec<[[f64; 2]; 2]>,
}

impl StageCost {
    pub fn new(horizon: usize) -> Self {
        Self {
            entries: vec![[[0.0; 2]; 2]; horizon],
        }
    }

    /// Build from a closure over `(t, prev, cur)` with `t` zero-based.
    pub fn from_fn(horizon: usize, mut f: impl FnMut(usize, u8, u8) -> f64) -> Self {
        let mut sc = Self::new(horizon);
        for t in 0..horizon {
            for prev in 0..2u8 {
                for cur in 0..2u8 {
                    sc.set(t, prev, cur, f(t, prev, cur));
                }
            }
        }
        sc
    }

    pub fn horizon(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn get(&self, t: usize, prev: u8, cur: u8) -> f64 {
        self.entries[t][prev as usize][cur as usize]
    }

    pub fn set(&mut self, t: usize, prev: u8, cur: u8, v: f64) {
        self.entries[t][prev as usize][cur as usize] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.iter().all(|r| r.iter().all(|v| v.is_finite())))
    }
}

/// Startup/shutdown indicators inferred from consecutive on/off states.
#[inline]
pub fn inferred_transitions(prev: u8, cur: u8) -> (u8, u8) {
    (cur.saturating_sub(prev), prev.saturating_sub(cur))
}

/// Startup/shutdown sequences for a whole schedule.
pub fn infer_transitions(schedule: &[u8], initial_on: bool) -> (Vec<u8>, Vec<u8>) {
    let mut su = Vec::with_capacity(schedule.len());
    let mut sd = Vec::with_capacity(schedule.len());
    let mut prev = initial_on as u8;
    for &s in schedule {
        let (a, b) = inferred_transitions(prev, s);
        su.push(a);
        sd.push(b);
        prev = s;
    }
    (su, sd)
}

/// Augmented-Lagrangian stage cost of one `(t, g)` transition.
///
/// `ubar`, `y`, `z` are the consensus duplicate values, inner multipliers,
/// and artificial slacks of the three commitment duplicate rows at `(t, g)`
/// in (on, startup, shutdown) order.
#[inline]
pub fn al_stage_cost(
    prev: u8,
    cur: u8,
    op_cost: f64,
    su_cost: f64,
    sd_cost: f64,
    ubar: [f64; 3],
    y: [f64; 3],
    z: [f64; 3],
    rho_uc: f64,
) -> f64 {
    let (su, sd) = inferred_transitions(prev, cur);
    let u = [cur as f64, su as f64, sd as f64];
    let mut cost = op_cost * u[0] + su_cost * u[1] + sd_cost * u[2];
    for v in 0..3 {
        let r = u[v] - ubar[v] + z[v];
        cost += y[v] * r + 0.5 * rho_uc * r * r;
    }
    cost
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decision {
    Stay,
    Switch,
}

/// Memoized backward-induction table: optimal cost-to-go per `(t, prev
/// state)` plus the decision taken there. Trajectory suffixes are
/// reconstructed on demand by walking the decisions, so recovering any
/// suffix costs O(T).
#[derive(Debug, Clone)]
pub struct DpTable {
    horizon: usize,
    min_up: usize,
    min_down: usize,
    /// cost[t][s], t in 1..=T+1 (index 0 unused), cost[T+1] = 0.
    cost: Vec<[f64; 2]>,
    decision: Vec<[Decision; 2]>,
}

impl DpTable {
    /// Backward pass over the free periods. Initial obligations are handled
    /// by the caller via the forced prefix.
    pub fn build(costs: &StageCost, params: &UcParams) -> Self {
        let t_len = costs.horizon();
        // Suffix sums of same-state stage costs: hold[s][t] = sum_{t'=t}^{T}
        // L_{t'}(s, s), 1-based, hold[s][T+1] = 0.
        let mut hold = [vec![0.0; t_len + 2], vec![0.0; t_len + 2]];
        for s in 0..2 {
            for t in (1..=t_len).rev() {
                hold[s][t] = hold[s][t + 1] + costs.get(t - 1, s as u8, s as u8);
            }
        }
        let mut cost = vec![[0.0; 2]; t_len + 2];
        let mut decision = vec![[Decision::Stay; 2]; t_len + 2];
        for t in (1..=t_len).rev() {
            for s in 0..2u8 {
                let stay = costs.get(t - 1, s, s) + cost[t + 1][s as usize];
                let next = 1 - s;
                let t_min = if next == 1 { params.min_up } else { params.min_down };
                // Forced window t..=end at the new state, clipped at the
                // horizon; the continuation beyond T costs nothing.
                let end = (t + t_min - 1).min(t_len);
                let window = hold[next as usize][t + 1] - hold[next as usize][end + 1];
                let cont = if end + 1 <= t_len + 1 {
                    cost[end + 1][next as usize]
                } else {
                    0.0
                };
                let switch = costs.get(t - 1, s, next) + window + cont;
                if stay <= switch {
                    cost[t][s as usize] = stay;
                    decision[t][s as usize] = Decision::Stay;
                } else {
                    cost[t][s as usize] = switch;
                    decision[t][s as usize] = Decision::Switch;
                }
            }
        }
        Self {
            horizon: t_len,
            min_up: params.min_up,
            min_down: params.min_down,
            cost,
            decision,
        }
    }

    /// Optimal cost of periods `t..=T` given previous state `s` (1-based
    /// `t`; `t = T+1` is the empty tail).
    pub fn cost(&self, t: usize, s: u8) -> f64 {
        self.cost[t][s as usize]
    }

    /// Materialize the optimal trajectory suffix for periods `t..=T`.
    pub fn trajectory(&self, t: usize, s: u8) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.horizon + 1 - t);
        let mut t = t;
        let mut s = s;
        while t <= self.horizon {
            match self.decision[t][s as usize] {
                Decision::Stay => {
                    out.push(s);
                    t += 1;
                }
                Decision::Switch => {
                    let next = 1 - s;
                    let t_min = if next == 1 { self.min_up } else { self.min_down };
                    let end = (t + t_min - 1).min(self.horizon);
                    for _ in t..=end {
                        out.push(next);
                    }
                    t = end + 1;
                    s = next;
                }
            }
        }
        out
    }
}

/// Optimal schedule and its total stage cost.
#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    pub schedule: Vec<u8>,
    pub cost: f64,
}

fn validate_params(params: &UcParams, horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::Scenario("horizon must be at least 1".into()));
    }
    if params.min_up == 0 || params.min_down == 0 {
        return Err(Error::Scenario("min-up and min-down must be at least 1".into()));
    }
    if params.forced_on > horizon || params.forced_off > horizon {
        return Err(Error::Scenario(format!(
            "initial obligation ({} on / {} off) exceeds horizon {horizon}",
            params.forced_on, params.forced_off
        )));
    }
    if params.forced_on > 0 && !params.initial_on {
        return Err(Error::Scenario("forced-on obligation on an initially off unit".into()));
    }
    if params.forced_off > 0 && params.initial_on {
        return Err(Error::Scenario("forced-off obligation on an initially on unit".into()));
    }
    Ok(())
}

/// Solve one generator's commitment subproblem exactly.
pub fn dp_solve(costs: &StageCost, params: &UcParams) -> Result<DpSolution> {
    let horizon = costs.horizon();
    validate_params(params, horizon)?;
    let table = DpTable::build(costs, params);
    let s0 = params.initial_on as u8;
    let prefix = if params.initial_on { params.forced_on } else { params.forced_off };
    let mut schedule = Vec::with_capacity(horizon);
    let mut cost = 0.0;
    for t in 0..prefix {
        schedule.push(s0);
        cost += costs.get(t, s0, s0);
    }
    cost += table.cost(prefix + 1, s0);
    schedule.extend(table.trajectory(prefix + 1, s0));
    debug_assert_eq!(schedule.len(), horizon);
    Ok(DpSolution { schedule, cost })
}

/// Total stage cost of a given schedule.
pub fn schedule_cost(costs: &StageCost, schedule: &[u8], initial_on: bool) -> f64 {
    let mut prev = initial_on as u8;
    let mut total = 0.0;
    for (t, &s) in schedule.iter().enumerate() {
        total += costs.get(t, prev, s);
        prev = s;
    }
    total
}

/// Independent feasibility checker for commitment schedules.
///
/// A run of the new state started inside the horizon must last at least the
/// minimum up (down) time or reach the end of the horizon; the initial
/// obligation fixes the first `forced_on` (`forced_off`) periods.
pub fn check_schedule(schedule: &[u8], params: &UcParams) -> std::result::Result<(), String> {
    let t_len = schedule.len();
    for t in 0..params.forced_on {
        if schedule[t] != 1 {
            return Err(format!("period {}: unit must stay on through its obligation", t + 1));
        }
    }
    for t in 0..params.forced_off {
        if schedule[t] != 0 {
            return Err(format!("period {}: unit must stay off through its obligation", t + 1));
        }
    }
    let mut prev = params.initial_on as u8;
    let mut t = 0;
    while t < t_len {
        let s = schedule[t];
        let mut end = t;
        while end + 1 < t_len && schedule[end + 1] == s {
            end += 1;
        }
        let started_inside = s != prev;
        if started_inside {
            let t_min = if s == 1 { params.min_up } else { params.min_down };
            let required = t_min.min(t_len - t);
            let run = end - t + 1;
            if run < required {
                let kind = if s == 1 { "up" } else { "down" };
                return Err(format!(
                    "period {}: run of length {run} violates minimum {kind} time {t_min}",
                    t + 1
                ));
            }
        }
        prev = s;
        t = end + 1;
    }
    Ok(())
}

/// Exhaustive oracle: enumerate every on/off sequence, filter by
/// feasibility, and return the cheapest with lexicographic tie-breaking.
/// Only usable for short horizons.
pub fn dp_oracle(costs: &StageCost, params: &UcParams) -> Result<DpSolution> {
    let t_len = costs.horizon();
    validate_params(params, t_len)?;
    if t_len > 20 {
        return Err(Error::Scenario(format!("oracle horizon {t_len} exceeds 20")));
    }
    let mut best: Option<DpSolution> = None;
    for mask in 0u32..(1 << t_len) {
        // bit T-1..0 maps to period 1..T so that ascending masks scan
        // schedules in lexicographic order
        let schedule: Vec<u8> = (0..t_len)
            .map(|t| ((mask >> (t_len - 1 - t)) & 1) as u8)
            .collect();
        if check_schedule(&schedule, params).is_err() {
            continue;
        }
        let cost = schedule_cost(costs, &schedule, params.initial_on);
        if best.as_ref().map_or(true, |b| cost < b.cost) {
            best = Some(DpSolution { schedule, cost });
        }
    }
    best.ok_or_else(|| Error::Scenario("no feasible schedule".into()))
}

/// Seeded random DP instance for benchmarks and exactness sweeps.
pub fn random_instance(rng: &mut impl rand::Rng, horizon: usize) -> (StageCost, UcParams) {
    use rand::distributions::{Distribution, Uniform};
    let cost_dist = Uniform::new_inclusive(-1.0, 1.0);
    let costs = StageCost::from_fn(horizon, |_, _, _| cost_dist.sample(rng));
    let initial_on = rng.gen_bool(0.5);
    let obligation = if rng.gen_bool(0.5) {
        rng.gen_range(0..=horizon.min(4))
    } else {
        0
    };
    let params = UcParams {
        min_up: rng.gen_range(1..=4),
        min_down: rng.gen_range(1..=4),
        initial_on,
        forced_on: if initial_on { obligation } else { 0 },
        forced_off: if initial_on { 0 } else { obligation },
        ..UcParams::default()
    };
    (costs, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(min_up: usize, min_down: usize, initial_on: bool) -> UcParams {
        UcParams {
            min_up,
            min_down,
            initial_on,
            forced_on: 0,
            forced_off: 0,
            ..UcParams::default()
        }
    }

    #[test]
    fn single_period_switch_allowed() {
        let mut costs = StageCost::new(1);
        costs.set(0, 1, 1, 5.0);
        costs.set(0, 1, 0, 3.0);
        let sol = dp_solve(&costs, &params(1, 1, true)).unwrap();
        assert_eq!(sol.schedule, vec![0]);
        assert_eq!(sol.cost, 3.0);
    }

    #[test]
    fn switch_on_forces_min_up_window() {
        // Turning on pays -1 per on-period; staying off is free. With
        // T^U = 3 over 3 periods the only winning move is on everywhere.
        let costs = StageCost::from_fn(3, |_, _, cur| if cur == 1 { -1.0 } else { 0.0 });
        let sol = dp_solve(&costs, &params(3, 1, false)).unwrap();
        assert_eq!(sol.schedule, vec![1, 1, 1]);
        assert_eq!(sol.cost, -3.0);
    }

    #[test]
    fn forced_prefix_is_respected() {
        // Off is cheaper everywhere, but the unit owes 2 more on-periods.
        let costs = StageCost::from_fn(4, |_, _, cur| if cur == 1 { 1.0 } else { 0.0 });
        let p = UcParams {
            forced_on: 2,
            ..params(1, 1, true)
        };
        let sol = dp_solve(&costs, &p).unwrap();
        assert_eq!(sol.schedule, vec![1, 1, 0, 0]);
        assert_eq!(sol.cost, 2.0);
        check_schedule(&sol.schedule, &p).unwrap();
    }

    #[test]
    fn obligation_longer_than_horizon_errors() {
        let costs = StageCost::new(2);
        let p = UcParams {
            forced_on: 3,
            ..params(1, 1, true)
        };
        assert!(dp_solve(&costs, &p).is_err());
    }

    #[test]
    fn inconsistent_initial_flags_error() {
        let costs = StageCost::new(2);
        let p = UcParams {
            forced_off: 1,
            ..params(1, 1, true)
        };
        assert!(dp_solve(&costs, &p).is_err());
    }

    #[test]
    fn oracle_tie_breaks_lexicographically() {
        let costs = StageCost::new(2);
        let sol = dp_oracle(&costs, &params(1, 1, true)).unwrap();
        assert_eq!(sol.schedule, vec![0, 0]);
        assert_eq!(sol.cost, 0.0);
    }

    #[test]
    fn free_windows_admit_all_sequences() {
        // With T^U = T^D = 1 and no obligation, every sequence is feasible.
        let p = params(1, 1, false);
        for mask in 0..8u8 {
            let schedule: Vec<u8> = (0..3).map(|t| (mask >> (2 - t)) & 1).collect();
            assert!(check_schedule(&schedule, &p).is_ok(), "{schedule:?}");
        }
    }

    #[test]
    fn matches_oracle_on_seeded_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..400 {
            let horizon = rng.gen_range(1..=10);
            let (costs, p) = random_instance(&mut rng, horizon);
            let dp = dp_solve(&costs, &p).unwrap();
            let oracle = dp_oracle(&costs, &p).unwrap();
            assert!(
                (dp.cost - oracle.cost).abs() <= 1e-12 * (1.0 + oracle.cost.abs()),
                "instance {i}: dp {} vs oracle {} ({p:?})",
                dp.cost,
                oracle.cost
            );
            check_schedule(&dp.schedule, &p).unwrap();
            assert!(
                (schedule_cost(&costs, &dp.schedule, p.initial_on) - dp.cost).abs() < 1e-12,
                "reported cost must match re-evaluated schedule cost"
            );
        }
    }

    #[test]
    fn table_trajectories_achieve_table_costs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let horizon = rng.gen_range(2..=9);
            let (costs, p) = random_instance(&mut rng, horizon);
            let table = DpTable::build(&costs, &p);
            for t in 1..=horizon {
                for s in 0..2u8 {
                    let traj = table.trajectory(t, s);
                    assert_eq!(traj.len(), horizon + 1 - t);
                    let mut prev = s;
                    let mut cost = 0.0;
                    for (k, &cur) in traj.iter().enumerate() {
                        cost += costs.get(t - 1 + k, prev, cur);
                        prev = cur;
                    }
                    assert!(
                        (cost - table.cost(t, s)).abs() < 1e-12,
                        "suffix ({t},{s}) re-evaluates to {cost}, table says {}",
                        table.cost(t, s)
                    );
                }
            }
        }
    }

    #[test]
    fn constant_shift_moves_cost_by_kappa_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (costs, p) = random_instance(&mut rng, 8);
        let kappa = 0.37;
        let shifted = StageCost::from_fn(8, |t, a, b| costs.get(t, a, b) + kappa);
        let base = dp_solve(&costs, &p).unwrap();
        let moved = dp_solve(&shifted, &p).unwrap();
        assert_eq!(base.schedule, moved.schedule);
        assert!((moved.cost - base.cost - kappa * 8.0).abs() < 1e-12);
    }

    #[test]
    fn al_stage_cost_examples() {
        // exact consensus on a 1 -> 1 transition costs nothing
        let c = al_stage_cost(1, 1, 0.0, 0.0, 0.0, [1.0, 0.0, 0.0], [0.0; 3], [0.0; 3], 2.0);
        assert_eq!(c, 0.0);
        // 0 -> 1 flips the startup indicator, mismatching its duplicate
        let c = al_stage_cost(0, 1, 0.0, 0.0, 0.0, [1.0, 0.0, 0.0], [0.0; 3], [0.0; 3], 2.0);
        assert_eq!(c, 1.0);
        // 1 -> 0 differs from 1 -> 1 only through the shutdown indicator
        let stay = al_stage_cost(1, 1, 0.0, 0.0, 7.0, [1.0, 0.0, 0.0], [0.0; 3], [0.0; 3], 2.0);
        let shut = al_stage_cost(1, 0, 0.0, 0.0, 7.0, [1.0, 0.0, 0.0], [0.0; 3], [0.0; 3], 2.0);
        // shutdown adds sd_cost + consensus penalty on u_sd, and changes the
        // u_on mismatch from 0 to 1
        assert_eq!(shut - stay, 7.0 + 1.0 + (1.0 - 0.0));
    }

    #[test]
    fn linear_time_scaling() {
        // Not a wall-clock assertion (that lives in the acceptance suite),
        // just a smoke test that large horizons stay exact and cheap.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (costs, p) = random_instance(&mut rng, 2000);
        let sol = dp_solve(&costs, &p).unwrap();
        assert_eq!(sol.schedule.len(), 2000);
        check_schedule(&sol.schedule, &p).unwrap();
    }
}
