//! MATPOWER case parsing and the static per-unit network model.
//!
//! A [`GridCase`] holds buses, branches, and generators in per-unit with
//! precomputed two-port branch admittances. Demands, limits, and shunts are
//! divided by the system MVA base at parse time; generation cost coefficients
//! are kept in their file basis ($/MWh) and converted where the time-expanded
//! problem is built.

use nalgebra::Complex;
use serde::Serialize;

use crate::error::{Error, Result};

/// One network bus. Demand, shunt, and voltage bounds are per-unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bus {
    /// External bus number from the case file.
    pub id: usize,
    pub base_kv: f64,
    /// Base-case real power demand (per-unit).
    pub pd: f64,
    /// Base-case reactive power demand (per-unit).
    pub qd: f64,
    /// Shunt conductance (per-unit).
    pub gs: f64,
    /// Shunt susceptance (per-unit).
    pub bs: f64,
    /// Voltage magnitude bounds (per-unit).
    pub vmin: f64,
    pub vmax: f64,
    pub is_reference: bool,
}

/// Two-port admittance entries of the branch pi-model, per-unit.
///
/// `g_ff + j b_ff` is the self admittance seen from the from side, `g_ft + j
/// b_ft` the transfer admittance from- to to-side, and so on. Tap ratio and
/// phase shift are folded in on the from side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPortAdmittance {
    pub g_ff: f64,
    pub b_ff: f64,
    pub g_ft: f64,
    pub b_ft: f64,
    pub g_tt: f64,
    pub b_tt: f64,
    pub g_tf: f64,
    pub b_tf: f64,
}

/// One transmission line or transformer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    /// External bus numbers.
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series resistance and reactance (per-unit).
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance (per-unit).
    pub b: f64,
    /// Off-nominal tap ratio as parsed; 0 means nominal.
    pub tap: f64,
    /// Phase shift as parsed (degrees).
    pub shift_deg: f64,
    /// Long-term MVA rating as parsed; 0 means unlimited.
    pub rate_a_mva: f64,
    /// Apparent-power limit used by the solver (per-unit, after the
    /// unlimited-rating substitution).
    pub rate_limit: f64,
    pub angmin_deg: f64,
    pub angmax_deg: f64,
    pub adm: TwoPortAdmittance,
}

/// One generator with box bounds (per-unit) and a quadratic cost curve.
///
/// Cost coefficients stay in the file basis: `c2` in $/MW^2 h, `c1` in $/MWh,
/// `c0` in $/h.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generator {
    /// External number of the bus this generator sits at.
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub startup_cost: f64,
    pub shutdown_cost: f64,
}

/// Which end of a branch touches a bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BranchEnd {
    From,
    To,
}

/// A validated per-unit network model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    /// Dense index of the reference bus.
    pub reference_bus: usize,
    /// Generators at each bus, by dense bus index.
    pub gens_at_bus: Vec<Vec<usize>>,
    /// Incident branch ends at each bus, by dense bus index.
    pub branches_at_bus: Vec<Vec<(usize, BranchEnd)>>,
}

impl GridCase {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Dense index of an external bus number.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Case summary for reports and the `check` subcommand.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "base_mva": self.base_mva,
            "buses": self.n_buses(),
            "branches": self.n_branches(),
            "generators": self.n_generators(),
            "reference_bus": self.buses[self.reference_bus].id,
        })
    }
}

/// Parse options. `unlimited_rate_factor` replaces a zero MVA rating with
/// `factor * base_MVA` so every line carries a finite limit.
#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub unlimited_rate_factor: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            unlimited_rate_factor: 10.0,
        }
    }
}

/// Two-port admittance of a branch from its primitive parameters.
///
/// `shift` is in radians; a `tap` of zero is treated as nominal (1.0).
pub fn admittance_of(r: f64, x: f64, b: f64, tap: f64, shift: f64) -> Result<TwoPortAdmittance> {
    if r * r + x * x == 0.0 {
        return Err(Error::Validation("degenerate branch: r = x = 0".into()));
    }
    let tap = if tap == 0.0 { 1.0 } else { tap };
    if tap <= 0.0 {
        return Err(Error::Validation(format!("nonpositive tap ratio {tap}")));
    }
    let ys = Complex::new(1.0, 0.0) / Complex::new(r, x);
    let charge = Complex::new(0.0, b / 2.0);
    let tap_c = Complex::from_polar(tap, shift);
    let y_tt = ys + charge;
    let y_ff = y_tt / (tap * tap);
    let y_ft = -ys / tap_c.conj();
    let y_tf = -ys / tap_c;
    let adm = TwoPortAdmittance {
        g_ff: y_ff.re,
        b_ff: y_ff.im,
        g_ft: y_ft.re,
        b_ft: y_ft.im,
        g_tt: y_tt.re,
        b_tt: y_tt.im,
        g_tf: y_tf.re,
        b_tf: y_tf.im,
    };
    let entries = [
        adm.g_ff, adm.b_ff, adm.g_ft, adm.b_ft, adm.g_tt, adm.b_tt, adm.g_tf, adm.b_tf,
    ];
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite admittance entry".into()));
    }
    Ok(adm)
}

/// Parse MATPOWER `.m` case text into a validated [`GridCase`].
pub fn parse_matpower(text: &str) -> Result<GridCase> {
    parse_matpower_with(text, &ParseOptions::default())
}

pub fn parse_matpower_with(text: &str, opts: &ParseOptions) -> Result<GridCase> {
    let base_mva = parse_scalar(text, "mpc.baseMVA")?;
    if !(base_mva > 0.0) {
        return Err(Error::Validation(format!("baseMVA must be positive, got {base_mva}")));
    }
    let bus_rows = parse_matrix(text, "mpc.bus")?;
    let gen_rows = parse_matrix(text, "mpc.gen")?;
    let branch_rows = parse_matrix(text, "mpc.branch")?;
    let cost_rows = parse_matrix(text, "mpc.gencost")?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for (i, row) in bus_rows.iter().enumerate() {
        if row.len() < 13 {
            return Err(Error::Parse(format!(
                "mpc.bus row {} has {} columns, expected at least 13",
                i + 1,
                row.len()
            )));
        }
        buses.push(Bus {
            id: row[0] as usize,
            base_kv: row[9],
            pd: row[2] / base_mva,
            qd: row[3] / base_mva,
            gs: row[4] / base_mva,
            bs: row[5] / base_mva,
            vmax: row[11],
            vmin: row[12],
            is_reference: row[1] as i64 == 3,
        });
    }

    let mut generators = Vec::new();
    let mut kept_gen_rows = Vec::new();
    for (i, row) in gen_rows.iter().enumerate() {
        if row.len() < 10 {
            return Err(Error::Parse(format!(
                "mpc.gen row {} has {} columns, expected at least 10",
                i + 1,
                row.len()
            )));
        }
        if row[7] <= 0.0 {
            continue; // out of service
        }
        kept_gen_rows.push(i);
        generators.push(Generator {
            bus: row[0] as usize,
            qmax: row[3] / base_mva,
            qmin: row[4] / base_mva,
            pmax: row[8] / base_mva,
            pmin: row[9] / base_mva,
            c2: 0.0,
            c1: 0.0,
            c0: 0.0,
            startup_cost: 0.0,
            shutdown_cost: 0.0,
        });
    }

    // MATPOWER allows 2*ngen gencost rows (reactive costs in the second
    // half); only the real-power rows are used.
    if cost_rows.len() < gen_rows.len() {
        return Err(Error::Parse(format!(
            "mpc.gencost has {} rows for {} generators",
            cost_rows.len(),
            gen_rows.len()
        )));
    }
    for (g, &i) in kept_gen_rows.iter().enumerate() {
        let row = &cost_rows[i];
        if row.len() < 4 {
            return Err(Error::Parse(format!("mpc.gencost row {} too short", i + 1)));
        }
        let model = row[0] as i64;
        if model != 2 {
            return Err(Error::Parse(format!(
                "mpc.gencost row {}: only polynomial cost model 2 is supported, got {model}",
                i + 1
            )));
        }
        let ncost = row[3] as usize;
        if row.len() < 4 + ncost {
            return Err(Error::Parse(format!(
                "mpc.gencost row {}: {ncost} coefficients declared, {} present",
                i + 1,
                row.len() - 4
            )));
        }
        if ncost > 3 {
            return Err(Error::Parse(format!(
                "mpc.gencost row {}: polynomial degree {} exceeds 2",
                i + 1,
                ncost.saturating_sub(1)
            )));
        }
        let coeffs = &row[4..4 + ncost];
        let gen = &mut generators[g];
        gen.startup_cost = row[1];
        gen.shutdown_cost = row[2];
        match ncost {
            3 => {
                gen.c2 = coeffs[0];
                gen.c1 = coeffs[1];
                gen.c0 = coeffs[2];
            }
            2 => {
                gen.c1 = coeffs[0];
                gen.c0 = coeffs[1];
            }
            1 => gen.c0 = coeffs[0],
            _ => return Err(Error::Parse(format!("mpc.gencost row {}: empty polynomial", i + 1))),
        }
    }

    let mut branches = Vec::new();
    for (i, row) in branch_rows.iter().enumerate() {
        if row.len() < 11 {
            return Err(Error::Parse(format!(
                "mpc.branch row {} has {} columns, expected at least 11",
                i + 1,
                row.len()
            )));
        }
        if row[10] <= 0.0 {
            continue; // out of service
        }
        let (r, x, b, tap, shift_deg) = (row[2], row[3], row[4], row[8], row[9]);
        let adm = admittance_of(r, x, b, tap, shift_deg.to_radians()).map_err(|e| {
            Error::Validation(format!("mpc.branch row {}: {e}", i + 1))
        })?;
        let rate_a_mva = row[5];
        let rate_limit = if rate_a_mva > 0.0 {
            rate_a_mva / base_mva
        } else {
            opts.unlimited_rate_factor
        };
        branches.push(Branch {
            from_bus: row[0] as usize,
            to_bus: row[1] as usize,
            r,
            x,
            b,
            tap,
            shift_deg,
            rate_a_mva,
            rate_limit,
            angmin_deg: if row.len() > 11 { row[11] } else { -360.0 },
            angmax_deg: if row.len() > 12 { row[12] } else { 360.0 },
            adm,
        });
    }

    assemble_case(base_mva, buses, branches, generators)
}

fn assemble_case(
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
) -> Result<GridCase> {
    let violations = validate(&buses, &branches, &generators);
    if let Some(first) = violations.first() {
        return Err(Error::Validation(first.clone()));
    }
    let reference_bus = buses.iter().position(|b| b.is_reference).expect("validated");
    let bus_index = |id: usize| buses.iter().position(|b| b.id == id).expect("validated");
    let mut gens_at_bus = vec![Vec::new(); buses.len()];
    for (g, gen) in generators.iter().enumerate() {
        gens_at_bus[bus_index(gen.bus)].push(g);
    }
    let mut branches_at_bus = vec![Vec::new(); buses.len()];
    for (l, br) in branches.iter().enumerate() {
        branches_at_bus[bus_index(br.from_bus)].push((l, BranchEnd::From));
        branches_at_bus[bus_index(br.to_bus)].push((l, BranchEnd::To));
    }
    Ok(GridCase {
        base_mva,
        buses,
        branches,
        generators,
        reference_bus,
        gens_at_bus,
        branches_at_bus,
    })
}

/// All invariant violations in the element lists, for `check` reporting.
pub fn validate(buses: &[Bus], branches: &[Branch], generators: &[Generator]) -> Vec<String> {
    let mut out = Vec::new();
    let refs: Vec<usize> = buses.iter().filter(|b| b.is_reference).map(|b| b.id).collect();
    match refs.len() {
        0 => out.push("no reference bus".to_string()),
        1 => {}
        _ => out.push(format!("multiple reference buses: {refs:?}")),
    }
    for b in buses {
        if !(b.vmin > 0.0 && b.vmin <= b.vmax) {
            out.push(format!(
                "bus {}: voltage bounds violated (Vmin {} Vmax {})",
                b.id, b.vmin, b.vmax
            ));
        }
        for (name, v) in [("Pd", b.pd), ("Qd", b.qd), ("Gs", b.gs), ("Bs", b.bs)] {
            if !v.is_finite() {
                out.push(format!("bus {}: non-finite {name}", b.id));
            }
        }
    }
    let bus_exists = |id: usize| buses.iter().any(|b| b.id == id);
    for (i, br) in branches.iter().enumerate() {
        if br.from_bus == br.to_bus {
            out.push(format!("branch {}: from and to bus are both {}", i + 1, br.from_bus));
        }
        for id in [br.from_bus, br.to_bus] {
            if !bus_exists(id) {
                out.push(format!("branch {}: unknown bus {id}", i + 1));
            }
        }
        if !(br.rate_limit > 0.0) {
            out.push(format!("branch {}: nonpositive rate limit", i + 1));
        }
    }
    for (g, gen) in generators.iter().enumerate() {
        if !bus_exists(gen.bus) {
            out.push(format!("generator {}: unknown bus {}", g + 1, gen.bus));
        }
        if gen.pmin > gen.pmax {
            out.push(format!("generator {}: Pmin {} > Pmax {}", g + 1, gen.pmin, gen.pmax));
        }
        if gen.qmin > gen.qmax {
            out.push(format!("generator {}: Qmin {} > Qmax {}", g + 1, gen.qmin, gen.qmax));
        }
        if gen.c2 < 0.0 {
            out.push(format!("generator {}: negative quadratic cost {}", g + 1, gen.c2));
        }
    }
    out
}

/// Serialize a case back to MATPOWER text. Together with [`parse_matpower`]
/// this is stable: parsing the output reproduces the same `GridCase`.
pub fn to_matpower(case: &GridCase) -> String {
    use std::fmt::Write;
    let b = case.base_mva;
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = case{}", case.n_buses());
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {b};");
    let _ = writeln!(s, "mpc.bus = [");
    for bus in &case.buses {
        let btype = if bus.is_reference {
            3
        } else if case.gens_at_bus[case.bus_index(bus.id).unwrap()].is_empty() {
            1
        } else {
            2
        };
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t1\t0\t{}\t1\t{}\t{};",
            bus.id,
            btype,
            bus.pd * b,
            bus.qd * b,
            bus.gs * b,
            bus.bs * b,
            bus.base_kv,
            bus.vmax,
            bus.vmin
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &case.generators {
        let _ = writeln!(
            s,
            "\t{}\t0\t0\t{}\t{}\t1\t{}\t1\t{}\t{}\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;",
            g.bus,
            g.qmax * b,
            g.qmin * b,
            b,
            g.pmax * b,
            g.pmin * b
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "mpc.branch = [");
    for br in &case.branches {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t{}\t{}\t1\t{}\t{};",
            br.from_bus,
            br.to_bus,
            br.r,
            br.x,
            br.b,
            br.rate_a_mva,
            br.tap,
            br.shift_deg,
            br.angmin_deg,
            br.angmax_deg
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "mpc.gencost = [");
    for g in &case.generators {
        let _ = writeln!(
            s,
            "\t2\t{}\t{}\t3\t{}\t{}\t{};",
            g.startup_cost, g.shutdown_cost, g.c2, g.c1, g.c0
        );
    }
    let _ = writeln!(s, "];");
    s
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_scalar(text: &str, name: &str) -> Result<f64> {
    for line in text.lines() {
        let line = strip_comment(line).trim();
        if let Some(rest) = line.strip_prefix(name) {
            let rest = rest.trim_start();
            if let Some(rhs) = rest.strip_prefix('=') {
                let token = rhs.trim().trim_end_matches(';').trim();
                return token
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("non-numeric value for {name}: '{token}'")));
            }
        }
    }
    Err(Error::Parse(format!("missing {name}")))
}

fn parse_matrix(text: &str, name: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    let header = format!("{name} = [");
    let mut found = false;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut pending: Vec<f64> = Vec::new();
    for line in lines.by_ref() {
        let stripped = strip_comment(line).trim();
        let compact: String = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
        if compact.starts_with(&header) || compact == format!("{name} =[") || compact == format!("{name}= [") {
            found = true;
            break;
        }
        // single-line `mpc.bus = [ ... ];` form
        if let Some(rest) = compact.strip_prefix(&header) {
            if let Some(body) = rest.strip_suffix("];") {
                for (rno, row_text) in body.split(';').enumerate() {
                    if row_text.trim().is_empty() {
                        continue;
                    }
                    rows.push(parse_row(row_text, name, rno + 1)?);
                }
                return Ok(rows);
            }
        }
    }
    if !found {
        return Err(Error::Parse(format!("missing {name}")));
    }
    for line in lines {
        let stripped = strip_comment(line).trim();
        if stripped.starts_with("];") || stripped == "]" {
            break;
        }
        if stripped.is_empty() {
            continue;
        }
        let terminated = stripped.ends_with(';');
        let body = stripped.trim_end_matches(';');
        for tok in body.split_whitespace() {
            pending.push(tok.parse::<f64>().map_err(|_| {
                Error::Parse(format!(
                    "{name} row {}, column {}: non-numeric entry '{tok}'",
                    rows.len() + 1,
                    pending.len() + 1
                ))
            })?);
        }
        if terminated && !pending.is_empty() {
            rows.push(std::mem::take(&mut pending));
        }
    }
    if !pending.is_empty() {
        rows.push(pending);
    }
    Ok(rows)
}

fn parse_row(row_text: &str, name: &str, rno: usize) -> Result<Vec<f64>> {
    row_text
        .split_whitespace()
        .enumerate()
        .map(|(c, tok)| {
            tok.parse::<f64>().map_err(|_| {
                Error::Parse(format!("{name} row {rno}, column {}: non-numeric entry '{tok}'", c + 1))
            })
        })
        .collect()
}
