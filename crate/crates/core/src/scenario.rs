//! Time expansion of a static network case into a schedule problem.
//!
//! Adds the horizon, a scaled demand trajectory, per-generator commitment
//! parameters, and initial conditions. Commitment parameters absent from
//! MATPOWER files (minimum up/down times, ramps, initial status) get
//! defaults here and can be overridden from a scenario file.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::GridCase;
use crate::ucdp;

/// Per-generator commitment parameters. Powers are per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UcParams {
    /// Minimum number of periods the unit stays on after a startup.
    pub min_up: usize,
    /// Minimum number of periods the unit stays off after a shutdown.
    pub min_down: usize,
    /// Ramp limits between consecutive periods (per-unit/period).
    pub ramp_up: f64,
    pub ramp_down: f64,
    /// Ramp allowances in the startup and shutdown period.
    pub startup_ramp: f64,
    pub shutdown_ramp: f64,
    pub initial_on: bool,
    /// Remaining forced-on periods from a pre-horizon startup.
    pub forced_on: usize,
    /// Remaining forced-off periods from a pre-horizon shutdown.
    pub forced_off: usize,
    /// No-load cost charged per on-period ($/h).
    pub op_cost: f64,
    pub su_cost: f64,
    pub sd_cost: f64,
}

impl Default for UcParams {
    fn default() -> Self {
        Self {
            min_up: 2,
            min_down: 2,
            ramp_up: 0.0,
            ramp_down: 0.0,
            startup_ramp: 0.0,
            shutdown_ramp: 0.0,
            initial_on: true,
            forced_on: 0,
            forced_off: 0,
            op_cost: 0.0,
            su_cost: 0.0,
            sd_cost: 0.0,
        }
    }
}

/// Hourly demand scaling factors plus a global discount.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    pub factors: Vec<f64>,
    pub discount: f64,
}

impl DemandProfile {
    pub fn horizon(&self) -> usize {
        self.factors.len()
    }
}

/// Deterministic double-peaked diurnal profile in [0.6, 1.0], repeated with
/// period 24 for longer horizons.
pub fn default_profile(horizon: usize) -> Result<DemandProfile> {
    if horizon == 0 {
        return Err(Error::Scenario("horizon must be at least 1".into()));
    }
    let mut day = [0.0f64; 24];
    for (h, v) in day.iter_mut().enumerate() {
        let x = h as f64;
        let morning = 0.20 * (-((x - 8.5) / 3.0).powi(2)).exp();
        let evening = 0.33 * (-((x - 18.5) / 2.6).powi(2)).exp();
        *v = 0.62 + morning + evening;
    }
    let peak = day.iter().cloned().fold(f64::MIN, f64::max);
    let factors = (0..horizon).map(|t| day[t % 24] / peak).collect();
    Ok(DemandProfile {
        factors,
        discount: 0.7,
    })
}

/// A demand factor per line; `#` starts a comment.
pub fn parse_profile_csv(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::Scenario(format!("profile line {}: bad factor '{line}'", i + 1)))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Scenario("profile file has no factors".into()));
    }
    Ok(out)
}

/// The full time-expanded problem the solver consumes. Demands and cost
/// coefficients are per-unit.
#[derive(Debug, Clone)]
pub struct ScheduleProblem {
    pub grid: GridCase,
    pub horizon: usize,
    /// Real demand per (period, bus), period-major.
    pub pd: Vec<f64>,
    /// Reactive demand per (period, bus), period-major.
    pub qd: Vec<f64>,
    pub uc: Vec<UcParams>,
    /// Dispatch in the period before the horizon (per-unit), for the first
    /// ramp constraint.
    pub initial_dispatch: Vec<f64>,
    /// Quadratic cost coefficients rebased to per-unit power ($/pu^2 h).
    pub cost_c2: Vec<f64>,
    /// Linear cost coefficients rebased to per-unit power ($/pu h).
    pub cost_c1: Vec<f64>,
}

impl ScheduleProblem {
    pub fn n_buses(&self) -> usize {
        self.grid.n_buses()
    }

    pub fn n_branches(&self) -> usize {
        self.grid.n_branches()
    }

    pub fn n_gens(&self) -> usize {
        self.grid.n_generators()
    }

    #[inline]
    pub fn demand_p(&self, t: usize, bus: usize) -> f64 {
        self.pd[t * self.n_buses() + bus]
    }

    #[inline]
    pub fn demand_q(&self, t: usize, bus: usize) -> f64 {
        self.qd[t * self.n_buses() + bus]
    }
}

/// Optional per-generator overrides, usually read from a scenario file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcOverride {
    pub min_up: Option<usize>,
    pub min_down: Option<usize>,
    pub ramp_up: Option<f64>,
    pub ramp_down: Option<f64>,
    pub startup_ramp: Option<f64>,
    pub shutdown_ramp: Option<f64>,
    pub initial_on: Option<bool>,
    pub forced_on: Option<usize>,
    pub forced_off: Option<usize>,
    pub op_cost: Option<f64>,
    pub su_cost: Option<f64>,
    pub sd_cost: Option<f64>,
    pub initial_dispatch: Option<f64>,
}

impl UcOverride {
    fn apply(&self, p: &mut UcParams) {
        if let Some(v) = self.min_up {
            p.min_up = v;
        }
        if let Some(v) = self.min_down {
            p.min_down = v;
        }
        if let Some(v) = self.ramp_up {
            p.ramp_up = v;
        }
        if let Some(v) = self.ramp_down {
            p.ramp_down = v;
        }
        if let Some(v) = self.startup_ramp {
            p.startup_ramp = v;
        }
        if let Some(v) = self.shutdown_ramp {
            p.shutdown_ramp = v;
        }
        if let Some(v) = self.initial_on {
            p.initial_on = v;
        }
        if let Some(v) = self.forced_on {
            p.forced_on = v;
        }
        if let Some(v) = self.forced_off {
            p.forced_off = v;
        }
        if let Some(v) = self.op_cost {
            p.op_cost = v;
        }
        if let Some(v) = self.su_cost {
            p.su_cost = v;
        }
        if let Some(v) = self.sd_cost {
            p.sd_cost = v;
        }
    }
}

/// Global defaults plus per-generator overrides keyed by generator index.
#[derive(Debug, Clone, Default)]
pub struct UcOverrides {
    pub defaults: UcOverride,
    pub per_gen: BTreeMap<usize, UcOverride>,
}

/// Build the time-expanded problem.
///
/// Demand scales as `discount * factor_t * base_demand` with the same factor
/// for real and reactive power. Ramp defaults are 10% of capacity per
/// period; startup/shutdown ramps default to `max(Pmin, ramp)` so a startup
/// can always reach minimum output. Initial dispatch defaults to a
/// capacity-proportional split of first-period demand so the first-period
/// ramp constraints start from a servable point.
pub fn build_problem(
    grid: GridCase,
    profile: &DemandProfile,
    overrides: &UcOverrides,
) -> Result<ScheduleProblem> {
    let horizon = profile.horizon();
    if horizon == 0 {
        return Err(Error::Scenario("empty demand profile".into()));
    }
    for (t, &f) in profile.factors.iter().enumerate() {
        if !(f > 0.0) {
            return Err(Error::Scenario(format!("nonpositive demand factor {f} at period {}", t + 1)));
        }
    }
    let nb = grid.n_buses();
    let ng = grid.n_generators();
    let mut pd = Vec::with_capacity(horizon * nb);
    let mut qd = Vec::with_capacity(horizon * nb);
    for &f in &profile.factors {
        let scale = profile.discount * f;
        for bus in &grid.buses {
            pd.push(scale * bus.pd);
            qd.push(scale * bus.qd);
        }
    }

    let base = grid.base_mva;
    let mut uc = Vec::with_capacity(ng);
    let mut cost_c2 = Vec::with_capacity(ng);
    let mut cost_c1 = Vec::with_capacity(ng);
    for (g, gen) in grid.generators.iter().enumerate() {
        let ramp = 0.10 * gen.pmax;
        let mut p = UcParams {
            ramp_up: ramp,
            ramp_down: ramp,
            startup_ramp: gen.pmin.max(ramp),
            shutdown_ramp: gen.pmin.max(ramp),
            op_cost: gen.c0,
            su_cost: gen.startup_cost,
            sd_cost: gen.shutdown_cost,
            ..UcParams::default()
        };
        overrides.defaults.apply(&mut p);
        if let Some(o) = overrides.per_gen.get(&g) {
            o.apply(&mut p);
        }
        if p.min_up > horizon || p.min_down > horizon {
            return Err(Error::Scenario(format!(
                "generator {g}: minimum up/down time ({}/{}) exceeds horizon {horizon}",
                p.min_up, p.min_down
            )));
        }
        if p.min_up == 0 || p.min_down == 0 {
            return Err(Error::Scenario(format!("generator {g}: minimum up/down time must be at least 1")));
        }
        if p.ramp_up < 0.0 || p.ramp_down < 0.0 || p.startup_ramp < 0.0 || p.shutdown_ramp < 0.0 {
            return Err(Error::Scenario(format!("generator {g}: negative ramp")));
        }
        if p.forced_on > horizon || p.forced_off > horizon {
            return Err(Error::Scenario(format!("generator {g}: initial obligation exceeds horizon")));
        }
        if (p.forced_on > 0 && !p.initial_on) || (p.forced_off > 0 && p.initial_on) {
            return Err(Error::Scenario(format!(
                "generator {g}: initial obligation inconsistent with initial status"
            )));
        }
        uc.push(p);
        cost_c2.push(gen.c2 * base * base);
        cost_c1.push(gen.c1 * base);
    }

    let first_period_demand: f64 = (0..nb).map(|i| pd[i]).sum();
    let capacity: f64 = grid.generators.iter().map(|g| g.pmax).sum();
    let mut initial_dispatch = Vec::with_capacity(ng);
    for (g, gen) in grid.generators.iter().enumerate() {
        let p0 = if let Some(v) = overrides.per_gen.get(&g).and_then(|o| o.initial_dispatch) {
            v
        } else if let Some(v) = overrides.defaults.initial_dispatch {
            v
        } else if uc[g].initial_on && capacity > 0.0 {
            (first_period_demand * gen.pmax / capacity).clamp(gen.pmin, gen.pmax)
        } else {
            0.0
        };
        initial_dispatch.push(p0);
    }

    Ok(ScheduleProblem {
        grid,
        horizon,
        pd,
        qd,
        uc,
        initial_dispatch,
        cost_c2,
        cost_c1,
    })
}

/// Threshold a relaxed dispatch into a commitment schedule, then repair it
/// to the nearest feasible schedule with one DP pass per generator (stage
/// costs penalize deviation from the thresholded schedule).
///
/// `dispatch` is period-major per (period, generator). The result always
/// satisfies the commitment constraints.
pub fn warm_start_uc(problem: &ScheduleProblem, dispatch: &[f64], threshold: f64) -> Result<Vec<u8>> {
    let horizon = problem.horizon;
    let ng = problem.n_gens();
    if dispatch.len() != horizon * ng {
        return Err(Error::Dimension(format!(
            "dispatch has {} entries, expected {}",
            dispatch.len(),
            horizon * ng
        )));
    }
    let mut schedule = vec![0u8; horizon * ng];
    for g in 0..ng {
        let raw: Vec<u8> = (0..horizon)
            .map(|t| (dispatch[t * ng + g] > threshold) as u8)
            .collect();
        let costs = ucdp::StageCost::from_fn(horizon, |t, _, cur| if cur == raw[t] { 0.0 } else { 1.0 });
        let sol = ucdp::dp_solve(&costs, &problem.uc[g])?;
        for t in 0..horizon {
            schedule[t * ng + g] = sol.schedule[t];
        }
    }
    Ok(schedule)
}

/// Scenario file contents (TOML).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub horizon: Option<usize>,
    pub discount: Option<f64>,
    /// Path to a demand-factor file, one factor per line; relative paths
    /// resolve against the scenario file location.
    pub profile_csv: Option<String>,
    pub defaults: Option<UcOverride>,
    /// Per-generator overrides keyed by zero-based generator index.
    pub generators: Option<BTreeMap<String, UcOverride>>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Scenario(format!("scenario file: {e}")))
    }

    pub fn overrides(&self) -> Result<UcOverrides> {
        let mut per_gen = BTreeMap::new();
        if let Some(gens) = &self.generators {
            for (k, v) in gens {
                let idx: usize = k
                    .parse()
                    .map_err(|_| Error::Scenario(format!("bad generator index '{k}'")))?;
                per_gen.insert(idx, v.clone());
            }
        }
        Ok(UcOverrides {
            defaults: self.defaults.clone().unwrap_or_default(),
            per_gen,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_matpower;
    use crate::ucdp::check_schedule;

    const CASE9: &str = include_str!("../../../cases/case9.m");

    fn case9_problem(horizon: usize) -> ScheduleProblem {
        let grid = parse_matpower(CASE9).unwrap();
        let profile = default_profile(horizon).unwrap();
        build_problem(grid, &profile, &UcOverrides::default()).unwrap()
    }

    #[test]
    fn demand_scaling_uses_discount_and_factor() {
        let grid = parse_matpower(CASE9).unwrap();
        let profile = DemandProfile {
            factors: vec![1.0, 0.5],
            discount: 0.7,
        };
        let p = build_problem(grid, &profile, &UcOverrides::default()).unwrap();
        let bus5 = p.grid.bus_index(5).unwrap();
        assert!((p.demand_p(0, bus5) - 0.7 * 0.9).abs() < 1e-15);
        assert!((p.demand_p(1, bus5) - 0.35 * 0.9).abs() < 1e-15);
        assert!((p.demand_q(0, bus5) - 0.7 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn identity_scaling_reproduces_base_case() {
        let grid = parse_matpower(CASE9).unwrap();
        let base_pd: Vec<f64> = grid.buses.iter().map(|b| b.pd).collect();
        let profile = DemandProfile {
            factors: vec![1.0],
            discount: 1.0,
        };
        let overrides = UcOverrides {
            defaults: UcOverride { min_up: Some(1), min_down: Some(1), ..Default::default() },
            ..Default::default()
        };
        let p = build_problem(grid, &profile, &overrides).unwrap();
        for (i, &pd) in base_pd.iter().enumerate() {
            assert_eq!(p.demand_p(0, i), pd);
        }
    }

    #[test]
    fn demand_scaling_is_linear_in_discount() {
        let grid = parse_matpower(CASE9).unwrap();
        let single = DemandProfile { factors: vec![0.8; 3], discount: 0.35 };
        let double = DemandProfile { factors: vec![0.8; 3], discount: 0.7 };
        let a = build_problem(grid.clone(), &single, &UcOverrides::default()).unwrap();
        let b = build_problem(grid, &double, &UcOverrides::default()).unwrap();
        for (x, y) in a.pd.iter().zip(&b.pd) {
            assert!((2.0 * x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn ramp_defaults_are_ten_percent_of_capacity() {
        let p = case9_problem(4);
        // generator 1 has Pmax 300 MW = 3.0 pu
        assert!((p.uc[1].ramp_up - 0.30).abs() < 1e-15);
        assert!((p.uc[1].ramp_down - 0.30).abs() < 1e-15);
        // startup ramp covers at least Pmin
        assert!(p.uc[1].startup_ramp >= p.grid.generators[1].pmin);
    }

    #[test]
    fn default_profile_shape() {
        let p = default_profile(24).unwrap();
        assert_eq!(p.factors.len(), 24);
        let max = p.factors.iter().cloned().fold(f64::MIN, f64::max);
        let min = p.factors.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - 1.0).abs() < 1e-12);
        assert!(min >= 0.6, "min factor {min}");
        // deterministic and 24-periodic
        let q = default_profile(48).unwrap();
        for t in 0..24 {
            assert_eq!(p.factors[t], q.factors[t]);
            assert_eq!(q.factors[t], q.factors[t + 24]);
        }
        assert!(default_profile(0).is_err());
    }

    #[test]
    fn nonpositive_factor_rejected() {
        let grid = parse_matpower(CASE9).unwrap();
        let profile = DemandProfile { factors: vec![1.0, 0.0], discount: 0.7 };
        assert!(build_problem(grid, &profile, &UcOverrides::default()).is_err());
    }

    #[test]
    fn min_up_beyond_horizon_rejected() {
        let grid = parse_matpower(CASE9).unwrap();
        let profile = default_profile(2).unwrap();
        let overrides = UcOverrides {
            defaults: UcOverride { min_up: Some(3), ..Default::default() },
            ..Default::default()
        };
        assert!(build_problem(grid, &profile, &overrides).is_err());
    }

    #[test]
    fn warm_start_all_positive_is_all_on() {
        let p = case9_problem(3);
        let dispatch = vec![0.5; 3 * 3];
        let u = warm_start_uc(&p, &dispatch, 1e-3).unwrap();
        assert!(u.iter().all(|&v| v == 1));
    }

    #[test]
    fn warm_start_all_zero_initially_off_stays_off() {
        let grid = parse_matpower(CASE9).unwrap();
        let profile = default_profile(3).unwrap();
        let overrides = UcOverrides {
            defaults: UcOverride { initial_on: Some(false), ..Default::default() },
            ..Default::default()
        };
        let p = build_problem(grid, &profile, &overrides).unwrap();
        let dispatch = vec![0.0; 3 * 3];
        let u = warm_start_uc(&p, &dispatch, 1e-3).unwrap();
        assert!(u.iter().all(|&v| v == 0));
    }

    #[test]
    fn warm_start_repair_matches_hamming_brute_force() {
        // One generator, T = 3, dispatch on only in the middle period, with
        // a 2-period minimum up time starting from off.
        let grid = parse_matpower(CASE9).unwrap();
        let profile = default_profile(3).unwrap();
        let mut per_gen = BTreeMap::new();
        for g in 0..3 {
            per_gen.insert(
                g,
                UcOverride {
                    min_up: Some(2),
                    initial_on: Some(false),
                    initial_dispatch: Some(0.0),
                    ..Default::default()
                },
            );
        }
        let p = build_problem(grid, &profile, &UcOverrides { defaults: Default::default(), per_gen }).unwrap();
        let mut dispatch = vec![0.0; 3 * 3];
        dispatch[1 * 3 + 0] = 0.6; // generator 0 on at period 2 only
        let u = warm_start_uc(&p, &dispatch, 1e-3).unwrap();
        let got: Vec<u8> = (0..3).map(|t| u[t * 3 + 0]).collect();
        check_schedule(&got, &p.uc[0]).unwrap();
        // brute force: minimal Hamming distance to (0,1,0) over feasible schedules
        let raw = [0u8, 1, 0];
        let mut best = usize::MAX;
        for mask in 0..8u8 {
            let s: Vec<u8> = (0..3).map(|t| (mask >> (2 - t)) & 1).collect();
            if check_schedule(&s, &p.uc[0]).is_ok() {
                let d = s.iter().zip(&raw).filter(|(a, b)| a != b).count();
                best = best.min(d);
            }
        }
        let got_dist = got.iter().zip(&raw).filter(|(a, b)| a != b).count();
        assert_eq!(got_dist, best);
    }

    #[test]
    fn initial_dispatch_covers_first_period_demand() {
        let p = case9_problem(24);
        let total0: f64 = (0..p.n_buses()).map(|i| p.demand_p(0, i)).sum();
        let sum_p0: f64 = p.initial_dispatch.iter().sum();
        // proportional split reproduces the demand when no clamp binds
        assert!((sum_p0 - total0).abs() < 1e-12, "{sum_p0} vs {total0}");
        for (g, gen) in p.grid.generators.iter().enumerate() {
            assert!(p.initial_dispatch[g] >= gen.pmin && p.initial_dispatch[g] <= gen.pmax);
        }
    }

    #[test]
    fn scenario_toml_round_trip() {
        let text = r#"
horizon = 6
discount = 0.5
[defaults]
min_up = 3
[generators.1]
initial_on = false
forced_off = 2
"#;
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.horizon, Some(6));
        let ov = cfg.overrides().unwrap();
        assert_eq!(ov.defaults.min_up, Some(3));
        assert_eq!(ov.per_gen.get(&1).unwrap().forced_off, Some(2));
        assert!(ScenarioConfig::parse("horizon = \"x\"").is_err());
    }

    #[test]
    fn profile_csv_parsing() {
        let factors = parse_profile_csv("0.8\n# comment\n1.0\n0.9\n").unwrap();
        assert_eq!(factors, vec![0.8, 1.0, 0.9]);
        assert!(parse_profile_csv("abc\n").is_err());
        assert!(parse_profile_csv("# nothing\n").is_err());
    }
}
