//! Planning instance: network, fleet, loads, grid tie and representative days.
//!
//! Instances are stored in physical units (kW, kVA, $/kWh). [`PlanningInstance::to_per_unit`]
//! produces the normalized copy the planner and the frequency model work on.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::InstanceError;

/// Hours in a representative day.
pub const HOURS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    #[serde(default)]
    pub is_pcc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineAsset {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Apparent-power rating in kVA (p.u. once normalized).
    pub s_max: f64,
    pub built_initially: bool,
    /// Annualized reinforcement cost.
    pub invest_cost: f64,
    pub candidate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeneratorKind {
    #[serde(rename = "SG")]
    Synchronous,
    #[serde(rename = "CIG_VSM")]
    Vsm,
    #[serde(rename = "CIG_Droop")]
    Droop,
    #[serde(rename = "CIG_GridFeeding")]
    GridFeeding,
}

impl GeneratorKind {
    pub fn is_converter(self) -> bool {
        self != GeneratorKind::Synchronous
    }

    /// Which of the dynamic parameters `(m, d, k, r, f, t)` this kind carries.
    fn dynamic_fields(self) -> [bool; 6] {
        match self {
            GeneratorKind::Synchronous => [true, true, true, true, true, true],
            GeneratorKind::Vsm => [true, true, false, false, false, true],
            GeneratorKind::Droop => [false, false, true, true, false, true],
            GeneratorKind::GridFeeding => [false; 6],
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GeneratorKind::Synchronous => "SG",
            GeneratorKind::Vsm => "CIG_VSM",
            GeneratorKind::Droop => "CIG_Droop",
            GeneratorKind::GridFeeding => "CIG_GridFeeding",
        };
        f.write_str(s)
    }
}

/// A generating unit. Dynamic constants `m`, `d` and `k` are on the unit's
/// own rating in a physical instance and on the system base after
/// normalization; `r`, `f` and `t` are base-independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorAsset {
    pub id: String,
    pub node: u32,
    pub kind: GeneratorKind,
    /// Rated active power in kW.
    pub capacity: f64,
    /// Reactive limits follow `|q| <= tan(acos(power_factor)) * p_max`.
    pub power_factor: f64,
    pub marginal_cost: f64,
    pub invest_cost: f64,
    pub existing: bool,
    /// kW per hour.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_up: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_down: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub daily_capacity_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

impl GeneratorAsset {
    fn dynamic_values(&self) -> [Option<f64>; 6] {
        [self.m, self.d, self.k, self.r, self.f, self.t]
    }

    pub fn reactive_limit(&self, p_max: f64) -> f64 {
        let pf = self.power_factor.clamp(1e-9, 1.0);
        p_max * pf.acos().tan()
    }
}

/// A load point. Hourly demand is `nominal_kva` times the day's load
/// multiplier, split into a constant part and a flexible share whose hourly
/// value may move within `[flex_min, flex_max]` times its nominal value while
/// the daily energy is preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub node: u32,
    pub nominal_kva: f64,
    pub power_factor: f64,
    pub flexible_share: f64,
    pub flex_min: f64,
    pub flex_max: f64,
    /// Per unit of flexible energy served.
    pub shift_penalty: f64,
    /// Per unit of energy left unserved after islanding.
    pub disconnection_penalty: f64,
}

impl LoadSpec {
    pub fn is_flexible(&self) -> bool {
        self.flexible_share > 0.0
    }

    pub fn reactive_ratio(&self) -> f64 {
        self.power_factor.clamp(1e-9, 1.0).acos().tan()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInterface {
    pub import_price: f64,
    pub export_price: f64,
    pub import_cap: f64,
    pub export_cap: f64,
    pub import_q_cap: f64,
    pub export_q_cap: f64,
    /// Nominal frequency in Hz.
    pub f0: f64,
    /// System base in kVA.
    pub s_base: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageBand {
    pub min: f64,
    pub max: f64,
}

/// Frequency limits after islanding, as magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityLimits {
    /// Hz/s.
    pub rocof: f64,
    /// Hz.
    pub nadir: f64,
    /// Hz.
    pub ss: f64,
    /// Extra system damping from frequency-sensitive load, system base.
    #[serde(default)]
    pub load_damping: f64,
}

/// A weighted cluster centroid. `centroid` is feature-major: 24 hourly load
/// multipliers for each load (in instance order), then 24 hourly capacity
/// factors for each converter-interfaced generator (in instance order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeDay {
    pub weight: f64,
    pub member_count: usize,
    pub centroid: Vec<f64>,
}

impl RepresentativeDay {
    pub fn feature(&self, index: usize) -> &[f64] {
        &self.centroid[index * HOURS..(index + 1) * HOURS]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningInstance {
    pub name: String,
    #[serde(default)]
    pub per_unit: bool,
    pub grid: GridInterface,
    pub voltage: VoltageBand,
    pub limits: SecurityLimits,
    pub nodes: Vec<Node>,
    pub lines: Vec<LineAsset>,
    pub generators: Vec<GeneratorAsset>,
    pub loads: Vec<LoadSpec>,
    #[serde(default)]
    pub days: Vec<RepresentativeDay>,
}

/// Violations found by [`PlanningInstance::validate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            f.write_str(v)?;
        }
        Ok(())
    }
}

/// Lines oriented away from the PCC.
#[derive(Debug, Clone)]
pub struct Topology {
    pub pcc: usize,
    /// `(parent, child)` node positions per line.
    pub ends: Vec<(usize, usize)>,
    /// Line feeding each node; `None` at the PCC.
    pub parent_line: Vec<Option<usize>>,
    pub child_lines: Vec<Vec<usize>>,
}

impl PlanningInstance {
    pub fn node_index(&self) -> HashMap<u32, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect()
    }

    /// Indices into `generators` of converter-interfaced units, in the order
    /// their capacity factors appear in day centroids.
    pub fn converter_units(&self) -> Vec<usize> {
        (0..self.generators.len())
            .filter(|&g| self.generators[g].kind.is_converter())
            .collect()
    }

    pub fn feature_count(&self) -> usize {
        self.loads.len() + self.converter_units().len()
    }

    /// Feature names in centroid order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.loads.iter().map(|l| format!("load_{}", l.node)).collect();
        for g in self.converter_units() {
            names.push(format!("pv_{}", self.generators[g].id));
        }
        names
    }

    /// Commitment vector with existing units on and candidates off.
    pub fn existing_commitment(&self) -> Vec<bool> {
        self.generators.iter().map(|g| g.existing).collect()
    }

    /// Breadth-first orientation from the PCC over lines that are built or
    /// may be built.
    pub fn topology(&self) -> Result<Topology, InstanceError> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(InstanceError::Invalid(report));
        }
        let index = self.node_index();
        let n = self.nodes.len();
        let pcc = self.nodes.iter().position(|n| n.is_pcc).expect("validated");
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (l, line) in self.lines.iter().enumerate() {
            let (a, b) = (index[&line.from], index[&line.to]);
            adjacency[a].push((l, b));
            adjacency[b].push((l, a));
        }
        let mut ends = vec![(0, 0); self.lines.len()];
        let mut parent_line = vec![None; n];
        let mut child_lines = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([pcc]);
        seen[pcc] = true;
        while let Some(u) = queue.pop_front() {
            for &(l, w) in &adjacency[u] {
                if !seen[w] {
                    seen[w] = true;
                    ends[l] = (u, w);
                    parent_line[w] = Some(l);
                    child_lines[u].push(l);
                    queue.push_back(w);
                }
            }
        }
        Ok(Topology {
            pcc,
            ends,
            parent_line,
            child_lines,
        })
    }

    /// Lists every broken invariant; an empty report means well-formed.
    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::default();
        let mut ids = HashSet::new();
        for node in &self.nodes {
            if !ids.insert(node.id) {
                rep.push(format!("duplicate node id {}", node.id));
            }
        }
        match self.nodes.iter().filter(|n| n.is_pcc).count() {
            0 => rep.push("no PCC node"),
            1 => {}
            _ => rep.push("multiple PCC"),
        }
        self.check_lines(&ids, &mut rep);
        self.check_generators(&ids, &mut rep);
        self.check_loads(&ids, &mut rep);
        self.check_grid(&mut rep);
        self.check_days(&mut rep);
        rep
    }

    fn check_lines(&self, ids: &HashSet<u32>, rep: &mut ValidationReport) {
        let position: HashMap<u32, usize> =
            self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut radial = true;
        for (l, line) in self.lines.iter().enumerate() {
            let label = format!("line {} ({}-{})", l + 1, line.from, line.to);
            if !ids.contains(&line.from) || !ids.contains(&line.to) {
                rep.push(format!("{label} references an unknown node"));
                continue;
            }
            if line.from == line.to {
                rep.push(format!("{label} is a self-loop"));
                radial = false;
                continue;
            }
            if !(line.r >= 0.0 && line.x >= 0.0) {
                rep.push(format!("{label} has negative impedance"));
            }
            if !(line.s_max > 0.0) {
                rep.push(format!("{label} has non-positive rating"));
            }
            if !(line.invest_cost >= 0.0) {
                rep.push(format!("{label} has negative cost"));
            }
            let (a, b) = (
                find(&mut parent, position[&line.from]),
                find(&mut parent, position[&line.to]),
            );
            if a == b {
                radial = false;
            } else {
                parent[a] = b;
            }
        }
        if !radial {
            rep.push("non-radial");
        }
        if !self.nodes.is_empty() {
            let root = find(&mut parent, 0);
            for i in 1..self.nodes.len() {
                if find(&mut parent, i) != root {
                    rep.push(format!("node {} is disconnected", self.nodes[i].id));
                }
            }
        }
    }

    fn check_generators(&self, ids: &HashSet<u32>, rep: &mut ValidationReport) {
        let mut names = HashSet::new();
        const FIELDS: [&str; 6] = ["m", "d", "k", "r", "f", "t"];
        for g in &self.generators {
            let label = format!("generator {}", g.id);
            if !names.insert(g.id.as_str()) {
                rep.push(format!("duplicate {label}"));
            }
            if !ids.contains(&g.node) {
                rep.push(format!("{label} references unknown node {}", g.node));
            }
            if !(g.capacity > 0.0) {
                rep.push(format!("{label} has non-positive capacity"));
            }
            if !(g.power_factor > 0.0 && g.power_factor <= 1.0) {
                rep.push(format!("{label} has power factor outside (0, 1]"));
            }
            if !(g.invest_cost >= 0.0 && g.marginal_cost >= 0.0) {
                rep.push(format!("{label} has a negative cost"));
            }
            let expected = g.kind.dynamic_fields();
            for ((name, want), have) in FIELDS.iter().zip(expected).zip(g.dynamic_values()) {
                match (want, have) {
                    (true, None) => rep.push(format!("{label} ({}) is missing {name}", g.kind)),
                    (false, Some(_)) => {
                        rep.push(format!("{label} ({}) must not define {name}", g.kind))
                    }
                    _ => {}
                }
            }
            for v in [g.m, g.d].into_iter().flatten() {
                if !(v >= 0.0) {
                    rep.push(format!("{label} has negative inertia or damping"));
                }
            }
            if let Some(r) = g.r {
                if !(r > 0.0 && r <= 1.0) {
                    rep.push(format!("{label} droop r outside (0, 1]"));
                }
            }
            if let Some(f) = g.f {
                if !(0.0..1.0).contains(&f) {
                    rep.push(format!("{label} turbine fraction f outside [0, 1)"));
                }
            }
            if let Some(t) = g.t {
                if !(t > 0.0) {
                    rep.push(format!("{label} has non-positive time constant"));
                }
            }
            let sg_only = [g.ramp_up, g.ramp_down, g.daily_capacity_factor];
            if g.kind == GeneratorKind::Synchronous {
                if sg_only.iter().any(Option::is_none) {
                    rep.push(format!("{label} needs ramp limits and a daily capacity factor"));
                }
            } else if sg_only.iter().any(Option::is_some) {
                rep.push(format!("{label} is not synchronous but has ramp or energy limits"));
            }
        }
    }

    fn check_loads(&self, ids: &HashSet<u32>, rep: &mut ValidationReport) {
        let energy_price = self.grid.import_price.max(self.grid.export_price);
        let max_mc = self
            .generators
            .iter()
            .map(|g| g.marginal_cost)
            .fold(energy_price, f64::max);
        for l in &self.loads {
            let label = format!("load at node {}", l.node);
            if !ids.contains(&l.node) {
                rep.push(format!("{label} references an unknown node"));
            }
            if !(l.nominal_kva >= 0.0) {
                rep.push(format!("{label} has negative demand"));
            }
            if !(l.power_factor > 0.0 && l.power_factor <= 1.0) {
                rep.push(format!("{label} has power factor outside (0, 1]"));
            }
            if !(0.0..=1.0).contains(&l.flexible_share) {
                rep.push(format!("{label} flexible share outside [0, 1]"));
            }
            if !(0.0 <= l.flex_min && l.flex_min <= 1.0 && l.flex_max >= 1.0) {
                rep.push(format!("{label} flexible bounds must bracket the nominal profile"));
            }
            if !(l.disconnection_penalty > l.shift_penalty) {
                rep.push(format!("{label} disconnection penalty must exceed the shift penalty"));
            }
            if l.is_flexible() && !(l.shift_penalty > max_mc) {
                rep.push(format!("{label} shift penalty must exceed energy prices"));
            }
            if !l.is_flexible() && !(l.disconnection_penalty > max_mc) {
                rep.push(format!("{label} disconnection penalty must exceed energy prices"));
            }
        }
    }

    fn check_grid(&self, rep: &mut ValidationReport) {
        let g = &self.grid;
        if !(g.import_price >= 0.0 && g.export_price >= 0.0) {
            rep.push("negative exchange price");
        }
        if g.export_price > g.import_price {
            rep.push("export price exceeds import price");
        }
        for (name, cap) in [
            ("import_cap", g.import_cap),
            ("export_cap", g.export_cap),
            ("import_q_cap", g.import_q_cap),
            ("export_q_cap", g.export_q_cap),
        ] {
            if !(cap >= 0.0) {
                rep.push(format!("{name} is negative"));
            }
        }
        if !(g.f0 > 0.0 && g.f0.is_finite()) {
            rep.push("nominal frequency must be positive");
        }
        if !(g.s_base > 0.0 && g.s_base.is_finite()) {
            rep.push("system base must be positive");
        }
        let v = self.voltage;
        if !(0.0 < v.min && v.min <= 1.0 && 1.0 <= v.max) {
            rep.push("voltage band must contain 1.0");
        }
        let s = self.limits;
        if !(s.rocof > 0.0 && s.nadir > 0.0 && s.ss > 0.0) {
            rep.push("security limits must be positive");
        }
        if !(s.load_damping >= 0.0) {
            rep.push("load damping must be non-negative");
        }
    }

    fn check_days(&self, rep: &mut ValidationReport) {
        let len = self.feature_count() * HOURS;
        for (o, day) in self.days.iter().enumerate() {
            if day.centroid.len() != len {
                rep.push(format!(
                    "day {} has {} profile values, expected {len}",
                    o + 1,
                    day.centroid.len()
                ));
            }
            if !(day.weight > 0.0) {
                rep.push(format!("day {} has non-positive weight", o + 1));
            }
            if day.centroid.iter().any(|v| !v.is_finite() || *v < 0.0) {
                rep.push(format!("day {} has negative or non-finite profile values", o + 1));
            }
        }
    }

    /// Divides power quantities by the system base, converts prices to
    /// currency per p.u.-hour and moves `m`, `d`, `k` onto the system base.
    pub fn to_per_unit(&self) -> Result<PlanningInstance, InstanceError> {
        if self.per_unit {
            return Err(InstanceError::AlreadyNormalized);
        }
        if !(self.grid.s_base > 0.0) {
            return Err(InstanceError::Invalid(ValidationReport {
                violations: vec!["system base must be positive".into()],
            }));
        }
        Ok(self.rescale(self.grid.s_base, true))
    }

    /// Inverse of [`to_per_unit`](Self::to_per_unit).
    pub fn from_per_unit(&self) -> Result<PlanningInstance, InstanceError> {
        if !self.per_unit {
            return Err(InstanceError::NotNormalized);
        }
        Ok(self.rescale(self.grid.s_base, false))
    }

    fn rescale(&self, base: f64, forward: bool) -> PlanningInstance {
        let power = |v: f64| if forward { v / base } else { v * base };
        let price = |v: f64| if forward { v * base } else { v / base };
        let mut out = self.clone();
        out.per_unit = forward;
        for line in &mut out.lines {
            line.s_max = power(line.s_max);
        }
        for g in &mut out.generators {
            // Share of the system base, taken from the physical rating.
            let share = if forward { g.capacity / base } else { g.capacity };
            let to_system = |v: f64| if forward { v * share } else { v / share };
            g.m = g.m.map(to_system);
            g.d = g.d.map(to_system);
            g.k = g.k.map(to_system);
            g.capacity = power(g.capacity);
            g.ramp_up = g.ramp_up.map(power);
            g.ramp_down = g.ramp_down.map(power);
            g.marginal_cost = price(g.marginal_cost);
        }
        for l in &mut out.loads {
            l.nominal_kva = power(l.nominal_kva);
            l.shift_penalty = price(l.shift_penalty);
            l.disconnection_penalty = price(l.disconnection_penalty);
        }
        let g = &mut out.grid;
        g.import_price = price(g.import_price);
        g.export_price = price(g.export_price);
        g.import_cap = power(g.import_cap);
        g.export_cap = power(g.export_cap);
        g.import_q_cap = power(g.import_q_cap);
        g.export_q_cap = power(g.export_q_cap);
        out
    }

    /// Serializes to TOML.
    pub fn to_toml(&self) -> Result<String, InstanceError> {
        toml::to_string(self).map_err(|e| InstanceError::Serialize(e.to_string()))
    }

    /// Parses TOML without validating.
    pub fn from_toml(text: &str) -> Result<PlanningInstance, InstanceError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((1, 1));
            InstanceError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}
